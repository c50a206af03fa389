//! Report shapes, manifests and the field table.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::chern::{csv_err, ChernReport, RefinedChern};
use crate::error::Result;
use crate::field::sample_field;
use crate::models::ModelSpec;
use crate::zeros::{EulerReport, ZeroKind};

/// Settings and timing that accompany every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub model: Option<Value>,
    pub settings: BTreeMap<String, Value>,
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

pub fn model_echo(model: &ModelSpec) -> Value {
    json!({
        "name": model.name,
        "params": model.params,
        "hermitian": model.hermitian,
        "domain": model.domain,
        "expected_chi": model.expected_chi,
        "warnings": model.warnings,
    })
}

impl RunManifest {
    pub fn new(subcommand: &str, model: Option<&ModelSpec>, threads: Option<usize>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_owned(),
            model: model.map(model_echo),
            settings: BTreeMap::new(),
            threads,
            outputs: Vec::new(),
            duration_s: 0.0,
        }
    }

    pub fn setting<T: Serialize + ?Sized>(mut self, name: &str, value: &T) -> Self {
        self.settings.insert(
            name.to_owned(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::from)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

pub fn zeros_json(report: &EulerReport) -> Value {
    let zeros: Vec<Value> = report
        .zeros
        .iter()
        .map(|z| {
            json!({
                "kx": z.k0.kx,
                "ky": z.k0.ky,
                "kind": z.kind,
                "index": z.index,
                "jac_det": z.jac_det,
                "degree": z.degree,
                "behaves_as": z.behaves_as,
                "residual": z.refine_residual,
                "on_boundary": z.on_boundary,
                "on_corner": z.on_corner,
            })
        })
        .collect();
    json!({
        "part": report.part,
        "zeros": zeros,
        "index_sum": report.index_sum,
        "chi": report.chi,
        "excluded": report.excluded,
        "fractional_breakdown": report.fractional_breakdown,
    })
}

pub fn euler_json(model: &ModelSpec, report: &EulerReport) -> Value {
    let mut v = zeros_json(report);
    let kinds = [
        ZeroKind::Source,
        ZeroKind::Sink,
        ZeroKind::Saddle,
        ZeroKind::Degenerate,
        ZeroKind::SingularEnergy,
    ];
    let label = |k: ZeroKind| {
        serde_json::to_value(k)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    };
    let counts: BTreeMap<String, usize> = kinds
        .into_iter()
        .map(|k| (label(k), report.count(k)))
        .collect();
    let flow: BTreeMap<String, usize> = kinds[..3]
        .iter()
        .map(|&k| (label(k), report.count_behaving(k)))
        .collect();
    let extra = json!({
        "model": model.name,
        "params": model.params,
        "kind_counts": counts,
        "flow_counts": flow,
        "expected_chi": report.expected_chi,
        "matches_expected": report.matches_expected,
        "warnings": report.warnings,
        "diagnostics": report.diagnostics,
    });
    if let (Value::Object(base), Value::Object(extra)) = (&mut v, extra) {
        base.extend(extra);
    }
    v
}

pub fn chern_json(
    model: &ModelSpec,
    quadrature: Option<&RefinedChern>,
    lattice: Option<&ChernReport>,
) -> Value {
    let c_int = quadrature
        .map(|q| q.report.c_int)
        .unwrap_or_else(|| lattice.and_then(|l| l.c_int));
    json!({
        "model": model.name,
        "params": model.params,
        "hermitian": model.hermitian,
        "c_int": c_int,
        "quadrature": quadrature,
        "lattice": lattice,
        "methods_agree": match (quadrature, lattice) {
            (Some(q), Some(l)) => Some(q.report.c_int == l.c_int),
            _ => None,
        },
    })
}

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "nan".to_owned()
    }
}

/// kx, ky, vx_re, vx_im, vy_re, vy_im, e_re, e_im on the node mesh, ky-major.
/// Velocities at gap closures are written as `nan`.
pub fn write_field_csv<W: Write>(out: W, model: &ModelSpec, grid_n: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "kx", "ky", "vx_re", "vx_im", "vy_re", "vy_im", "e_re", "e_im",
    ])
    .map_err(csv_err)?;
    for s in sample_field(model, grid_n) {
        let (vx, vy) = match s.velocity {
            Some(v) => (v.vx, v.vy),
            None => (f64::NAN.into(), f64::NAN.into()),
        };
        w.write_record([
            num(s.k.kx),
            num(s.k.ky),
            num(vx.re),
            num(vx.im),
            num(vy.re),
            num(vy.im),
            num(s.energy.re),
            num(s.energy.im),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
