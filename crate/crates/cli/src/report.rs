//! Report emission. Everything written here is a pure function of the plan:
//! keys are sorted, floats are rounded to 12 significant digits, and no
//! timing or host information goes into the files.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::plan::ExperimentPlan;
use crate::CliError;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to 12 significant digits; the result prints in its shortest form.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// CSV cell for a float.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        round_sig(x).to_string()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn normalize(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap());
            *v = serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        Value::Object(map) => map.values_mut().for_each(normalize),
        _ => {}
    }
}

pub fn build_report<T: Serialize>(plan: &ExperimentPlan, result: &T) -> Result<Value, CliError> {
    let result = serde_json::to_value(result).map_err(|e| CliError::Io(format!("serializing result: {e}")))?;
    let mut report = json!({
        "software": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "plan": plan,
        "seeds": {
            "master_seed": plan.seed.master_seed,
            "experiment_tag": plan.seed.experiment_tag,
            "replicas": plan.seed.replicas,
            "calibration": plan.seed.calibration,
        },
        "result": result,
    });
    normalize(&mut report);
    Ok(report)
}

pub fn write_json(path: &str, report: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{path}: {e}")))
}

/// A table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &str) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{path}: {e}"));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{path}: {e}")))
    }
}

/// Coordinates as one CSV cell, e.g. `3;-1`.
pub fn fmt_point(coords: &[i32]) -> String {
    coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

pub fn print_summary(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}
