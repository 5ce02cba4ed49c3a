//! Plain CSV tables with a header row.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One column; `None` marks a quantity that is absent and is written as
/// empty cells.
pub struct Column<'a> {
    pub name: &'a str,
    pub values: Option<&'a [f64]>,
}

pub fn render(columns: &[Column]) -> Result<String> {
    let n = columns.iter().find_map(|c| c.values.map(|v| v.len())).unwrap_or(0);
    for c in columns {
        if let Some(v) = c.values {
            if v.len() != n {
                return Err(Error::Format(format!(
                    "column `{}` has {} rows, expected {n}",
                    c.name,
                    v.len()
                )));
            }
        }
    }
    let mut out = String::new();
    let header: Vec<&str> = columns.iter().map(|c| c.name).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..n {
        for (k, c) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            if let Some(v) = c.values {
                let _ = write!(out, "{:e}", v[r]);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(columns: &[Column], path: &Path) -> Result<()> {
    super::write_file(path, render(columns)?.as_bytes())
}
