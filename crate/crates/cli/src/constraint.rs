//! Parser for linear budget constraints such as `2*a1 + 3*a2 >= 1`.

use anyhow::{anyhow, bail, Context, Result};
use tailagg::Constraint;

/// Parses `sum_i l_i * a_i >= L` (or `=`, treated as the binding form).
/// Terms may appear in any order; missing coefficients default to 1 and
/// absent indices get `l_i = 0`.
pub fn parse_linear(text: &str, dim: usize) -> Result<Constraint> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let (lhs, rhs) = compact
        .split_once(">=")
        .or_else(|| compact.split_once('='))
        .ok_or_else(|| anyhow!("constraint needs '>=' or '=': {text}"))?;
    let level: f64 = rhs.parse().with_context(|| format!("bad constraint level '{rhs}'"))?;
    let mut l = vec![0.0; dim];
    let mut seen = vec![false; dim];
    for term in split_terms(lhs)? {
        let (coef, var) = match term.rsplit_once('*') {
            Some((c, v)) => (c.parse::<f64>().with_context(|| format!("bad coefficient '{c}'"))?, v),
            None => (1.0, term.as_str()),
        };
        let idx: usize = var
            .strip_prefix('a')
            .and_then(|s| s.parse().ok())
            .filter(|i| (1..=dim).contains(i))
            .ok_or_else(|| anyhow!("unknown variable '{var}' (expected a1..a{dim})"))?;
        if seen[idx - 1] {
            bail!("variable a{idx} appears twice");
        }
        seen[idx - 1] = true;
        l[idx - 1] = coef;
    }
    if !seen.iter().any(|s| *s) {
        bail!("constraint has no terms: {text}");
    }
    Ok(Constraint::Linear { l, level })
}

fn split_terms(lhs: &str) -> Result<Vec<String>> {
    let mut terms = Vec::new();
    let mut cur = String::new();
    for (i, ch) in lhs.char_indices() {
        let after_exponent = i > 0 && matches!(lhs.as_bytes()[i - 1], b'e' | b'E') && cur.chars().any(|c| c.is_ascii_digit());
        if (ch == '+' || ch == '-') && !cur.is_empty() && !after_exponent {
            terms.push(std::mem::take(&mut cur));
        }
        if ch != '+' {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        terms.push(cur);
    }
    if terms.iter().any(|t| t.is_empty() || t == "-") {
        bail!("malformed constraint '{lhs}'");
    }
    Ok(terms
        .into_iter()
        .map(|t| match t.strip_prefix('-') {
            Some(rest) if !rest.contains('*') => format!("-1*{rest}"),
            _ => t,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(text: &str, dim: usize) -> (Vec<f64>, f64) {
        match parse_linear(text, dim).unwrap() {
            Constraint::Linear { l, level } => (l, level),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_budget_form() {
        assert_eq!(linear("2*a1+3*a2>=1", 2), (vec![2.0, 3.0], 1.0));
        assert_eq!(linear(" 3 * a2 + 2*a1 >= 1 ", 2), (vec![2.0, 3.0], 1.0));
        assert_eq!(linear("a1 + 0.5*a3 = 2", 3), (vec![1.0, 0.0, 0.5], 2.0));
        assert_eq!(linear("1e-1*a1+2*a2>=1", 2), (vec![0.1, 2.0], 1.0));
    }

    #[test]
    fn keeps_signs() {
        assert_eq!(linear("2*a1-a2>=1", 2), (vec![2.0, -1.0], 1.0));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_linear("2*a1+3*a2", 2).is_err());
        assert!(parse_linear("2*b1>=1", 2).is_err());
        assert!(parse_linear("2*a3>=1", 2).is_err());
        assert!(parse_linear("a1+a1>=1", 2).is_err());
        assert!(parse_linear("2*a1>=x", 2).is_err());
    }
}
