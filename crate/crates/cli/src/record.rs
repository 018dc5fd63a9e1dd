//! Run artifacts: sample CSV, final-field CSV and the JSON sidecar.

use std::path::Path;

use densflow_core::{RunRecord, Sample};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::CliError;

pub const RUN_HEADER: &str = "t,sup,mass,interface";
pub const FIELD_HEADER: &str = "r,u";

/// 17 significant digits: lossless for `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn run_csv(samples: &[Sample]) -> String {
    let mut out = String::with_capacity(80 * (samples.len() + 1));
    out.push_str(RUN_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&[num(s.t), num(s.sup), num(s.mass), num(s.interface)].join(","));
        out.push('\n');
    }
    out
}

pub fn field_csv(centers: &[f64], field: &[f64]) -> String {
    let mut out = String::from(FIELD_HEADER);
    out.push('\n');
    for (r, u) in centers.iter().zip(field) {
        out.push_str(&format!("{},{}\n", num(*r), num(*u)));
    }
    out
}

fn parse_rows(text: &str, header: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let width = header.split(',').count();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(CliError::Parse { line: 1, msg: format!("expected header `{header}`, found `{}`", h.trim()) })
        }
        None => return Err(CliError::Parse { line: 1, msg: "empty file".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Parse { line: i + 1, msg: e.to_string() })?;
        if row.len() != width {
            return Err(CliError::Parse { line: i + 1, msg: format!("expected {width} fields, found {}", row.len()) });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_run_csv(text: &str) -> Result<Vec<Sample>, CliError> {
    Ok(parse_rows(text, RUN_HEADER)?
        .into_iter()
        .map(|r| Sample { t: r[0], sup: r[1], mass: r[2], interface: r[3] })
        .collect())
}

pub fn parse_field_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    Ok(parse_rows(text, FIELD_HEADER)?.into_iter().map(|r| (r[0], r[1])).unzip())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    pub interface_near_boundary: bool,
    pub flagged_from_index: Option<usize>,
    pub flagged_from_time: Option<f64>,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub config: Config,
    pub config_digest: String,
    pub r_max: f64,
    pub n_cells: usize,
    pub steps: u64,
    pub samples: usize,
    pub flags: RunFlags,
}

impl RunSidecar {
    pub fn new(config: &Config, record: &RunRecord) -> Self {
        Self {
            config: config.clone(),
            config_digest: config.digest(),
            r_max: record.r_max,
            n_cells: record.n_cells,
            steps: record.steps,
            samples: record.samples.len(),
            flags: RunFlags {
                interface_near_boundary: record.is_flagged(),
                flagged_from_index: record.flagged_from,
                flagged_from_time: record.flagged_from.map(|k| record.samples[k].t),
            },
        }
    }
}

/// Writes `<stem>.csv`, `<stem>.json` and, for the primary run,
/// `field_final.csv` into `dir`.
pub fn write_run(
    dir: &Path,
    stem: &str,
    config: &Config,
    record: &RunRecord,
    with_field: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), run_csv(&record.samples))?;
    let sidecar = serde_json::to_string_pretty(&RunSidecar::new(config, record)).expect("sidecar serializes");
    std::fs::write(dir.join(format!("{stem}.json")), sidecar + "\n")?;
    if with_field {
        std::fs::write(dir.join("field_final.csv"), field_csv(&record.centers, &record.final_field))?;
    }
    Ok(())
}

pub fn read_run_csv(path: &Path) -> Result<Vec<Sample>, CliError> {
    parse_run_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<Sample> {
        vec![
            Sample { t: 0.0, sup: 1.0, mass: std::f64::consts::PI, interface: 1.0 },
            Sample { t: 1e-3, sup: 0.999_999_999_999_9, mass: 2.718_281_828_459_1, interface: 1.000_000_000_000_000_2 },
            Sample { t: 1.234_567_890_123_456_7e5, sup: 5e-324, mass: 1.0 / 3.0, interface: 2.0f64.sqrt() },
        ]
    }

    #[test]
    fn run_csv_round_trip_is_exact() {
        let s = samples();
        let back = parse_run_csv(&run_csv(&s)).unwrap();
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.sup.to_bits(), b.sup.to_bits());
            assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            assert_eq!(a.interface.to_bits(), b.interface.to_bits());
        }
    }

    #[test]
    fn missing_header_is_line_one() {
        let body: String = run_csv(&samples()).lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_run_csv(&body), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn bad_row_reports_its_line() {
        let text = format!("{RUN_HEADER}\n1,2,3,4\n1,2,x,4\n");
        assert!(matches!(parse_run_csv(&text), Err(CliError::Parse { line: 3, .. })));
        let text = format!("{RUN_HEADER}\n1,2,3\n");
        assert!(matches!(parse_run_csv(&text), Err(CliError::Parse { line: 2, .. })));
    }

    #[test]
    fn field_round_trip() {
        let (r, u) = (vec![0.5, 1.5], vec![0.25, 0.0]);
        assert_eq!(parse_field_csv(&field_csv(&r, &u)).unwrap(), (r, u));
    }
}
