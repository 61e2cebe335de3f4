//! Command-line front end for the `tailagg` library.

pub mod app;
pub mod constraint;
pub mod output;
pub mod tables;
