//! Stable text formats: residual reports, Ψ files and variety solution lists.
//!
//! Output is JSON with a fixed key order and every float written with 17
//! significant digits, so identical inputs give byte-identical files and
//! parsing recovers every float exactly.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde_json::Value;
use thiserror::Error;

use crate::catalog::{CheckRecord, ResidualReport};
use crate::variety::{CubicForm, VarietyError, VarietyPoint};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing or mistyped field '{0}'")]
    Field(String),
    #[error(transparent)]
    Variety(#[from] VarietyError),
}

pub type Result<T> = std::result::Result<T, ReportError>;

/// Float with 17 significant digits; non-finite values become `null`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".into()
    }
}

fn fmt_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_params(p: &BTreeMap<String, f64>) -> String {
    let items: Vec<String> = p.iter().map(|(k, v)| format!("{}: {}", fmt_str(k), fmt_f64(*v))).collect();
    format!("{{{}}}", items.join(", "))
}

pub fn report_to_string(r: &ResidualReport) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    writeln!(s, "  \"version\": {},", fmt_str(&r.version)).unwrap();
    writeln!(s, "  \"seed\": {},", r.seed).unwrap();
    writeln!(s, "  \"system\": {},", fmt_str(&r.system)).unwrap();
    writeln!(s, "  \"params\": {},", fmt_params(&r.params)).unwrap();
    s.push_str("  \"checks\": [\n");
    for (i, c) in r.checks.iter().enumerate() {
        write!(
            s,
            "    {{\"name\": {}, \"equation\": {}, \"max_residual\": {}, \"tolerance\": {}, \"pass\": {}}}",
            fmt_str(&c.name),
            fmt_str(&c.equation),
            fmt_f64(c.max_residual),
            fmt_f64(c.tolerance),
            c.pass
        )
        .unwrap();
        s.push_str(if i + 1 < r.checks.len() { ",\n" } else { "\n" });
    }
    s.push_str("  ],\n  \"points\": [\n");
    for (i, p) in r.points.iter().enumerate() {
        write!(s, "    {}", fmt_vec(p)).unwrap();
        s.push_str(if i + 1 < r.points.len() { ",\n" } else { "\n" });
    }
    s.push_str("  ]\n}\n");
    s
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| ReportError::Field(key.into()))
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Null => Ok(f64::NAN),
        _ => v.as_f64().ok_or_else(|| ReportError::Field(key.into())),
    }
}

fn as_str(v: &Value, key: &str) -> Result<String> {
    v.as_str().map(str::to_string).ok_or_else(|| ReportError::Field(key.into()))
}

fn as_vec(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| ReportError::Field(key.into()))?
        .iter()
        .map(|x| as_f64(x, key))
        .collect()
}

pub fn report_from_str(src: &str) -> Result<ResidualReport> {
    let v: Value = serde_json::from_str(src)?;
    let params = field(&v, "params")?
        .as_object()
        .ok_or_else(|| ReportError::Field("params".into()))?
        .iter()
        .map(|(k, x)| Ok((k.clone(), as_f64(x, "params")?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let checks = field(&v, "checks")?
        .as_array()
        .ok_or_else(|| ReportError::Field("checks".into()))?
        .iter()
        .map(|c| {
            Ok(CheckRecord {
                name: as_str(field(c, "name")?, "name")?,
                equation: as_str(field(c, "equation")?, "equation")?,
                max_residual: as_f64(field(c, "max_residual")?, "max_residual")?,
                tolerance: as_f64(field(c, "tolerance")?, "tolerance")?,
                pass: field(c, "pass")?.as_bool().ok_or_else(|| ReportError::Field("pass".into()))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points = field(&v, "points")?
        .as_array()
        .ok_or_else(|| ReportError::Field("points".into()))?
        .iter()
        .map(|p| as_vec(p, "points"))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport {
        version: as_str(field(&v, "version")?, "version")?,
        seed: field(&v, "seed")?.as_u64().ok_or_else(|| ReportError::Field("seed".into()))?,
        system: as_str(field(&v, "system")?, "system")?,
        params,
        checks,
        points,
    })
}

/// `{"dim": n, "packed": [...]}`.
pub fn psi_to_string(f: &CubicForm) -> String {
    format!("{{\"dim\": {}, \"packed\": {}}}\n", f.dim(), fmt_vec(f.packed()))
}

pub fn psi_from_str(src: &str) -> Result<CubicForm> {
    let v: Value = serde_json::from_str(src)?;
    let dim = field(&v, "dim")?.as_u64().ok_or_else(|| ReportError::Field("dim".into()))? as usize;
    let packed = as_vec(field(&v, "packed")?, "packed")?;
    Ok(CubicForm::new(dim, packed)?)
}

/// Header data of a variety solution list.
#[derive(Debug, Clone, PartialEq)]
pub struct VarietyRun {
    pub version: String,
    pub seed: u64,
    pub dim: usize,
    pub scalar_curvature: f64,
    pub starts: usize,
}

pub fn solutions_to_string(run: &VarietyRun, points: &[VarietyPoint]) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    writeln!(s, "  \"version\": {},", fmt_str(&run.version)).unwrap();
    writeln!(s, "  \"seed\": {},", run.seed).unwrap();
    writeln!(s, "  \"dim\": {},", run.dim).unwrap();
    writeln!(s, "  \"scalar_curvature\": {},", fmt_f64(run.scalar_curvature)).unwrap();
    writeln!(s, "  \"starts\": {},", run.starts).unwrap();
    s.push_str("  \"solutions\": [\n");
    for (i, p) in points.iter().enumerate() {
        write!(
            s,
            "    {{\"packed\": {}, \"residual\": {}, \"fingerprint\": {}}}",
            fmt_vec(p.form.packed()),
            fmt_f64(p.residual_norm),
            fmt_vec(&p.fingerprint)
        )
        .unwrap();
        s.push_str(if i + 1 < points.len() { ",\n" } else { "\n" });
    }
    s.push_str("  ]\n}\n");
    s
}

/// Cubic forms of a solution list, in file order.
pub fn solutions_from_str(src: &str) -> Result<Vec<CubicForm>> {
    let v: Value = serde_json::from_str(src)?;
    let dim = field(&v, "dim")?.as_u64().ok_or_else(|| ReportError::Field("dim".into()))? as usize;
    field(&v, "solutions")?
        .as_array()
        .ok_or_else(|| ReportError::Field("solutions".into()))?
        .iter()
        .map(|s| Ok(CubicForm::new(dim, as_vec(field(s, "packed")?, "packed")?)?))
        .collect()
}
