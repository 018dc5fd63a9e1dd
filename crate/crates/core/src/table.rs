//! Two-column CSV tables (`r,sigma`, `r,rho`).

use crate::error::{Error, Result};

/// Parses a two-column numeric CSV whose first line must equal `header`.
pub fn parse_two_column(text: &str, header: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        Some((_, first)) => {
            return Err(Error::Parse { line: 1, msg: format!("expected header `{header}`, found `{}`", first.trim()) })
        }
        None => return Err(Error::Parse { line: 1, msg: format!("missing header `{header}`") }),
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let parse = |c: Option<&str>| -> Result<f64> {
            c.map(str::trim)
                .ok_or_else(|| Error::Parse { line: line_no, msg: "expected two columns".into() })?
                .parse::<f64>()
                .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })
        };
        let x = parse(cols.next())?;
        let y = parse(cols.next())?;
        if cols.next().is_some() {
            return Err(Error::Parse { line: line_no, msg: "expected two columns".into() });
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Parse { line: line_no, msg: "non-finite value".into() });
        }
        if let Some(&prev) = xs.last() {
            if x <= prev {
                return Err(Error::Parse { line: line_no, msg: "radii must be strictly increasing".into() });
            }
        }
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 4 {
        return Err(Error::Parse { line: xs.len() + 1, msg: "need at least four rows".into() });
    }
    Ok((xs, ys))
}
