//! One-shot regeneration of all figure tables.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::output::{self, RunManifest};
use crate::chern::{self, SweepAxis, SweepOptions};
use crate::error::Result;
use crate::field::Part;
use crate::models::{builtin_nh_torus, builtin_sphere, builtin_torus, ModelSpec, ParamSet};
use crate::zeros::{euler_characteristic_with, ZeroSearchOptions};

#[derive(Debug, Clone, Serialize)]
pub struct ReproduceOptions {
    pub grid_n: usize,
    pub field_grid_n: usize,
    pub chern_mesh_n: usize,
    pub sweep_n: usize,
    pub sweep_mesh_n: usize,
    pub sweep_max_mesh_n: usize,
    pub sweep_grid_n: usize,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            grid_n: 64,
            field_grid_n: 64,
            chern_mesh_n: 256,
            sweep_n: 9,
            sweep_mesh_n: 64,
            sweep_max_mesh_n: 256,
            sweep_grid_n: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub expected: i32,
    pub actual: Option<i32>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceSummary {
    pub chi_sphere: Option<i32>,
    pub chi_torus: Option<i32>,
    pub chi_nh_torus_re: Option<i32>,
    pub chi_nh_torus_im: Option<i32>,
    pub c_sphere: Option<i32>,
    pub assertions: Vec<Assertion>,
    pub all_pass: bool,
    pub files: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_owned());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

fn figure_field(
    w: &mut Writer,
    stem: &str,
    model: &ModelSpec,
    opts: &ReproduceOptions,
) -> Result<()> {
    output::write_field_csv(
        w.file(&format!("{stem}_field.csv"))?,
        model,
        opts.field_grid_n,
    )
}

/// Euler report for one part, or `None` with the failure written in place of the report.
fn figure_zeros(
    w: &mut Writer,
    name: &str,
    model: &ModelSpec,
    part: Part,
    grid_n: usize,
) -> Result<Option<i32>> {
    match euler_characteristic_with(model, part, &ZeroSearchOptions::with_grid(grid_n)) {
        Ok(report) => {
            w.json(name, &output::euler_json(model, &report))?;
            Ok(Some(report.chi))
        }
        Err(e) => {
            w.json(name, &json!({ "part": part, "error": e.to_string() }))?;
            Ok(None)
        }
    }
}

fn check(name: &str, expected: i32, actual: Option<i32>) -> Assertion {
    Assertion {
        name: name.to_owned(),
        expected,
        actual,
        pass: actual == Some(expected),
    }
}

pub fn reproduce(
    out_dir: &Path,
    opts: &ReproduceOptions,
    threads: Option<usize>,
) -> Result<ReproduceSummary> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        dir: out_dir,
        files: Vec::new(),
    };

    let sphere = builtin_sphere(5.0, 1.0)?;
    figure_field(&mut w, "fig1_sphere", &sphere, opts)?;
    let chi_sphere = figure_zeros(
        &mut w,
        "fig1_sphere_zeros.json",
        &sphere,
        Part::Re,
        opts.grid_n,
    )?;

    let torus = builtin_torus(2.0, 1.0, 1.0)?;
    figure_field(&mut w, "fig2_torus", &torus, opts)?;
    let chi_torus = figure_zeros(
        &mut w,
        "fig2_torus_zeros.json",
        &torus,
        Part::Re,
        opts.grid_n,
    )?;

    let n = opts.sweep_n;
    let sweep_opts = SweepOptions {
        mesh_n: opts.sweep_mesh_n,
        max_mesh_n: opts.sweep_max_mesh_n,
        grid_n: opts.sweep_grid_n,
        imag_shift: true,
    };
    let axes = [
        SweepAxis::linspace("r", 0.2, 1.8, n),
        SweepAxis::linspace("a", 0.2, 1.8, n),
    ];
    let points = chern::sweep("torus", &ParamSet::new().with("R", 2.0), &axes, &sweep_opts)?;
    chern::write_sweep_csv(w.file("fig3_torus_sweep.csv")?, &points)?;

    let delta = [0.5, 0.5, 0.2];
    let nh = builtin_nh_torus(2.0, 1.0, 0.5, delta)?;
    figure_field(&mut w, "fig4_nh_torus", &nh, opts)?;
    let chi_nh_re = figure_zeros(
        &mut w,
        "fig4_nh_torus_zeros_re.json",
        &nh,
        Part::Re,
        opts.grid_n,
    )?;
    let chi_nh_im = figure_zeros(
        &mut w,
        "fig4_nh_torus_zeros_im.json",
        &nh,
        Part::Im,
        opts.grid_n,
    )?;

    let nh_base = ParamSet::new()
        .with("R", 2.0)
        .with("delta_x", delta[0])
        .with("delta_y", delta[1])
        .with("delta_z", delta[2]);
    let nh_axes = [
        SweepAxis::linspace("r", 0.2, 1.8, n),
        SweepAxis::linspace("c", 0.2, 1.8, n),
    ];
    let nh_points = chern::sweep("nh_torus", &nh_base, &nh_axes, &sweep_opts)?;
    chern::write_sweep_csv(w.file("fig5_nh_torus_sweep.csv")?, &nh_points)?;

    let c_sphere = chern::chern_quadrature(&sphere, opts.chern_mesh_n)?.c_int;

    let assertions = vec![
        check("chi_sphere", 2, chi_sphere),
        check("chi_torus", 0, chi_torus),
        check("chi_nh_torus_re", 0, chi_nh_re),
        check("c_sphere", 1, c_sphere),
    ];
    let all_pass = assertions.iter().all(|a| a.pass);
    w.files.push("summary.json".into());
    let summary = ReproduceSummary {
        chi_sphere,
        chi_torus,
        chi_nh_torus_re: chi_nh_re,
        chi_nh_torus_im: chi_nh_im,
        c_sphere,
        assertions,
        all_pass,
        files: w.files.clone(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(std::io::Error::from)?;
    fs::write(out_dir.join("summary.json"), text + "\n")?;

    let mut manifest = RunManifest::new("reproduce", None, threads).setting("options", opts);
    manifest.outputs = summary.files.clone();
    manifest.duration_s = started.elapsed().as_secs_f64();
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(summary)
}
