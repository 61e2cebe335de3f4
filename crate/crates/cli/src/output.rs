//! Rendering of command results and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    PrettyTable,
}

/// Serializes `rows` as CSV. Floats use the shortest representation that
/// parses back to the same bits.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Four significant figures, fixed notation for moderate magnitudes.
pub fn sig4(v: f64) -> String {
    if !v.is_finite() || v == 0.0 {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..4).contains(&mag) {
        format!("{v:.*}", (3 - mag).max(0) as usize)
    } else {
        format!("{v:.3e}")
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().map(sig4).unwrap_or_default(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

/// Aligned plain-text table of flat records.
pub fn pretty_table<T: Serialize>(rows: &[T]) -> Result<String> {
    let values: Vec<Value> = rows.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?;
    let Some(Value::Object(first)) = values.first() else {
        return Ok(String::new());
    };
    let headers: Vec<String> = first.keys().cloned().collect();
    let body: Vec<Vec<String>> = values
        .iter()
        .map(|v| headers.iter().map(|h| v.get(h).map(cell).unwrap_or_default()).collect())
        .collect();
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| body.iter().map(|r| r[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
    };
    let mut out = line(&headers);
    out.push('\n');
    for r in &body {
        out.push_str(&line(r));
        out.push('\n');
    }
    Ok(out)
}

/// Prints a command result: the JSON document, or its tabular rows.
pub fn emit<T: Serialize>(format: Format, doc: &Value, rows: &[T]) -> Result<()> {
    let text = match format {
        Format::Json => serde_json::to_string_pretty(doc)? + "\n",
        Format::Csv => to_csv(rows)?,
        Format::PrettyTable => pretty_table(rows)?,
    };
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_matches_table_style() {
        assert_eq!(sig4(0.021880), "0.02188");
        assert_eq!(sig4(1.027164), "1.027");
        assert_eq!(sig4(4.9238587e-12), "4.924e-12");
        assert_eq!(sig4(1000.0), "1000");
        assert_eq!(sig4(12345.0), "1.234e4");
        assert_eq!(sig4(20.0), "20.00");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("tailagg-out-{}", std::process::id()));
        let p = dir.join("x.csv");
        write_atomic(&p, b"a").unwrap();
        write_atomic(&p, b"b").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(dir).unwrap();
    }
}
