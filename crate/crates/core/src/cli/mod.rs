//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad input or I/O failure, 2 numerical failure
//! (non-convergence, ill-conditioned loops) or failed `reproduce` assertions.

mod output;
mod reproduce;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chern::{self, SweepAxis, SweepOptions};
use crate::dos;
use crate::error::Error;
use crate::field::{Band, Part};
use crate::models::{self, ModelSpec, ParamSet};
use crate::zeros::{self, ZeroSearchOptions};

pub use output::{chern_json, euler_json, zeros_json, RunManifest};
pub use reproduce::{reproduce, ReproduceOptions, ReproduceSummary};

#[derive(Debug, Parser)]
#[command(
    name = "bloch-topo",
    version,
    about = "Velocity-field zeros, Euler characteristics and Chern numbers of two-band Bloch models"
)]
pub struct Cli {
    /// Worker threads (falls back to BLOCH_TOPO_THREADS)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Locate and classify zeros of a velocity field
    Zeros(FieldRun),
    /// Poincaré-Hopf index sum of a velocity field
    Euler(FieldRun),
    /// Chern number by quadrature and, for Hermitian models, the lattice method
    Chern(ChernRun),
    /// Chern numbers and Euler characteristics over a parameter grid
    Sweep(SweepRun),
    /// Velocity field tables
    Field {
        #[command(subcommand)]
        action: FieldAction,
    },
    /// Density-of-states histogram
    Dos(DosRun),
    /// Regenerate every figure table and check the headline invariants
    Reproduce(ReproduceRun),
}

#[derive(Debug, Subcommand)]
pub enum FieldAction {
    /// Write kx, ky, v and E on a node mesh as CSV
    Export(ExportRun),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartArg {
    Re,
    Im,
}

impl From<PartArg> for Part {
    fn from(p: PartArg) -> Self {
        match p {
            PartArg::Re => Part::Re,
            PartArg::Im => Part::Im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BandArg {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChernMethodArg {
    Quadrature,
    Lattice,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Built-in model: sphere, torus or nh_torus
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    pub model: Option<String>,

    /// JSON model description
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long = "R", conflicts_with = "config")]
    pub big_r: Option<f64>,

    #[arg(long = "r", conflicts_with = "config")]
    pub r: Option<f64>,

    /// Shift parameter (`--c` is accepted as an alias)
    #[arg(long = "a", visible_alias = "c", conflicts_with = "config")]
    pub a: Option<f64>,

    #[arg(long, conflicts_with = "config")]
    pub delta_x: Option<f64>,

    #[arg(long, conflicts_with = "config")]
    pub delta_y: Option<f64>,

    #[arg(long, conflicts_with = "config")]
    pub delta_z: Option<f64>,

    /// Whether the constant enters the imaginary part of hx (nh_torus only)
    #[arg(long, conflicts_with = "config")]
    pub imag_shift: Option<bool>,
}

impl ModelArgs {
    fn flags(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("R", self.big_r),
            ("r", self.r),
            ("a", self.a),
            ("delta_x", self.delta_x),
            ("delta_y", self.delta_y),
            ("delta_z", self.delta_z),
        ]
    }

    /// Parameters given on the command line, with figure defaults for the rest.
    pub fn params(&self, model: &str) -> Result<ParamSet, Error> {
        let names = models::builtin_param_names(model)?;
        let mut params = ParamSet::new();
        for (flag, value) in self.flags() {
            let name = if flag == "a" && model == "nh_torus" {
                "c"
            } else {
                flag
            };
            match value {
                Some(v) if names.contains(&name) => params.insert(name, v),
                Some(_) => {
                    return Err(Error::UnknownParameter {
                        model: model.to_owned(),
                        name: flag.to_owned(),
                    })
                }
                None => {}
            }
        }
        for name in names {
            if params.get(name).is_none() {
                params.insert(name, default_param(model, name));
            }
        }
        Ok(params)
    }

    pub fn build(&self) -> Result<ModelSpec, Error> {
        let model = self.build_quiet()?;
        for w in &model.warnings {
            log::warn!("{w}");
        }
        Ok(model)
    }

    fn build_quiet(&self) -> Result<ModelSpec, Error> {
        if let Some(path) = &self.config {
            return models::load_model_config(path);
        }
        let model = self.model.as_deref().unwrap_or_default();
        if self.imag_shift.is_some() && model != "nh_torus" {
            return Err(Error::UnknownParameter {
                model: model.to_owned(),
                name: "imag_shift".into(),
            });
        }
        models::build_builtin(model, &self.params(model)?, self.imag_shift.unwrap_or(true))
    }
}

/// Figure parameters: sphere (5, 1), torus (2, 1, 1), nh torus (2, 1, 0.5, (0.5, 0.5, 0.2)).
fn default_param(model: &str, name: &str) -> f64 {
    match (model, name) {
        ("sphere", "r") => 5.0,
        ("sphere", "a") => 1.0,
        (_, "R") => 2.0,
        (_, "r") => 1.0,
        ("torus", "a") => 1.0,
        ("nh_torus", "c") => 0.5,
        ("nh_torus", "delta_z") => 0.2,
        (_, _) => 0.5,
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Manifest path (defaults to `<out>.manifest.json` when --out is given)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FieldRun {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "re")]
    pub part: PartArg,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ChernRun {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 256)]
    pub mesh_n: usize,
    /// Double the quadrature mesh up to this size until it converges
    #[arg(long)]
    pub max_mesh_n: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: ChernMethodArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepRun {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Swept parameter as name=lo:hi:n (repeatable; first is slowest)
    #[arg(long = "sweep", required = true, value_parser = parse_sweep_axis)]
    pub axes: Vec<SweepAxis>,
    #[arg(long, default_value_t = 128)]
    pub mesh_n: usize,
    #[arg(long)]
    pub max_mesh_n: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub grid_n: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExportRun {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DosRun {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "re")]
    pub part: PartArg,
    #[arg(long, value_enum, default_value = "upper")]
    pub band: BandArg,
    #[arg(long, default_value_t = 256)]
    pub mesh_n: usize,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceRun {
    /// Output directory
    #[arg(long, default_value = "reproduce_out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    /// Quadrature mesh for the sphere Chern number
    #[arg(long, default_value_t = 256)]
    pub mesh_n: usize,
    /// Points per sweep axis
    #[arg(long, default_value_t = 9)]
    pub sweep_n: usize,
}

fn parse_sweep_axis(s: &str) -> Result<SweepAxis, String> {
    let err = || format!("expected name=lo:hi:n, got `{s}`");
    let (name, range) = s.split_once('=').ok_or_else(err)?;
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(err());
    };
    let lo: f64 = lo.parse().map_err(|_| err())?;
    let hi: f64 = hi.parse().map_err(|_| err())?;
    let n: usize = n.parse().map_err(|_| err())?;
    if n == 0 || name.is_empty() {
        return Err(err());
    }
    Ok(SweepAxis::linspace(name, lo, hi, n))
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Assertions(Vec<String>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Assertions(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Assertions(failed) => {
                write!(f, "reproduce assertions failed: {}", failed.join(", "))
            }
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<Option<usize>, CliError> {
    let threads = match threads {
        Some(n) => Some(n),
        None => match std::env::var("BLOCH_TOPO_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                CliError::Usage(format!(
                    "BLOCH_TOPO_THREADS must be a positive integer, got `{v}`"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool may already exist when run() is called more than once in a process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(threads)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn manifest_path(output: &OutputArgs) -> Option<PathBuf> {
    output.manifest.clone().or_else(|| {
        output.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn write_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn finish(
    output: &OutputArgs,
    mut manifest: RunManifest,
    started: Instant,
) -> Result<(), CliError> {
    if let Some(path) = manifest_path(output) {
        manifest.outputs = output.out.iter().map(|p| p.display().to_string()).collect();
        manifest.duration_s = started.elapsed().as_secs_f64();
        manifest.write(&path)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = configure_threads(cli.threads)?;
    let started = Instant::now();
    match cli.command {
        Command::Zeros(run) => {
            let model = run.model.build()?;
            let opts = ZeroSearchOptions::with_grid(run.grid_n);
            let report = zeros::euler_characteristic_with(&model, run.part.into(), &opts)?;
            write_json(
                &mut *open_out(run.output.out.as_deref())?,
                &output::zeros_json(&report),
            )?;
            let m = RunManifest::new("zeros", Some(&model), threads).setting("zero_search", &opts);
            finish(&run.output, m, started)
        }
        Command::Euler(run) => {
            let model = run.model.build()?;
            let opts = ZeroSearchOptions::with_grid(run.grid_n);
            let report = zeros::euler_characteristic_with(&model, run.part.into(), &opts)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_json(
                &mut *open_out(run.output.out.as_deref())?,
                &output::euler_json(&model, &report),
            )?;
            let m = RunManifest::new("euler", Some(&model), threads).setting("zero_search", &opts);
            finish(&run.output, m, started)
        }
        Command::Chern(run) => {
            let model = run.model.build()?;
            let max_mesh = run.max_mesh_n.unwrap_or(run.mesh_n);
            let quadrature = match run.method {
                ChernMethodArg::Lattice => None,
                _ => Some(chern::chern_quadrature_refined(
                    &model, run.mesh_n, max_mesh,
                )?),
            };
            let lattice = match run.method {
                ChernMethodArg::Quadrature => None,
                ChernMethodArg::Lattice => Some(chern::chern_lattice(&model, run.mesh_n)?),
                ChernMethodArg::Both if model.hermitian => {
                    match chern::chern_lattice(&model, run.mesh_n) {
                        Ok(r) => Some(r),
                        Err(Error::Gapless { .. }) => None,
                        Err(e) => return Err(e.into()),
                    }
                }
                ChernMethodArg::Both => None,
            };
            let value = output::chern_json(&model, quadrature.as_ref(), lattice.as_ref());
            write_json(&mut *open_out(run.output.out.as_deref())?, &value)?;
            let m = RunManifest::new("chern", Some(&model), threads)
                .setting("mesh_n", &run.mesh_n)
                .setting("max_mesh_n", &max_mesh)
                .setting("gap_tol", &chern::GAP_TOL)
                .setting("round_tol", &chern::ROUND_TOL)
                .setting("convergence_tol", &chern::CONVERGENCE_TOL);
            finish(&run.output, m, started)
        }
        Command::Sweep(run) => {
            let family = match (&run.model.model, &run.model.config) {
                (Some(m), _) => m.clone(),
                (None, _) => {
                    return Err(CliError::Usage(
                        "sweep needs --model (config files are not swept)".into(),
                    ))
                }
            };
            let base = run.model.params(&family)?;
            // `a` and `c` name the same parameter; store axes under the model's own name.
            let axes: Vec<SweepAxis> = run
                .axes
                .iter()
                .map(|axis| {
                    let name = match (family.as_str(), axis.name.as_str()) {
                        ("nh_torus", "a") => "c",
                        ("sphere" | "torus", "c") => "a",
                        (_, other) => other,
                    };
                    SweepAxis {
                        name: name.to_owned(),
                        values: axis.values.clone(),
                    }
                })
                .collect();
            let opts = SweepOptions {
                mesh_n: run.mesh_n,
                max_mesh_n: run.max_mesh_n.unwrap_or(run.mesh_n),
                grid_n: run.grid_n,
                imag_shift: run.model.imag_shift.unwrap_or(true),
            };
            let points = chern::sweep(&family, &base, &axes, &opts)?;
            chern::write_sweep_csv(open_out(run.output.out.as_deref())?, &points)?;
            let m = RunManifest::new("sweep", None, threads)
                .setting("family", &family)
                .setting("base_params", &base)
                .setting("axes", &axes)
                .setting("options", &opts)
                .setting("gap_tol", &chern::GAP_TOL)
                .setting("round_tol", &chern::ROUND_TOL);
            finish(&run.output, m, started)
        }
        Command::Field {
            action: FieldAction::Export(run),
        } => {
            let model = run.model.build()?;
            if run.grid_n < 2 {
                return Err(CliError::Usage("--grid-n must be at least 2".into()));
            }
            output::write_field_csv(open_out(run.output.out.as_deref())?, &model, run.grid_n)?;
            let m = RunManifest::new("field export", Some(&model), threads)
                .setting("grid_n", &run.grid_n);
            finish(&run.output, m, started)
        }
        Command::Dos(run) => {
            let model = run.model.build()?;
            let band = match run.band {
                BandArg::Upper => Band::Upper,
                BandArg::Lower => Band::Lower,
            };
            let hist =
                dos::dos_histogram_band(&model, run.part.into(), band, run.mesh_n, run.bins)?;
            for w in &hist.warnings {
                eprintln!("warning: {w}");
            }
            dos::write_dos_csv(open_out(run.output.out.as_deref())?, &hist)?;
            let m = RunManifest::new("dos", Some(&model), threads)
                .setting("mesh_n", &run.mesh_n)
                .setting("bins", &run.bins)
                .setting("part", &Part::from(run.part))
                .setting("band", &band);
            finish(&run.output, m, started)
        }
        Command::Reproduce(run) => {
            let opts = ReproduceOptions {
                grid_n: run.grid_n,
                chern_mesh_n: run.mesh_n,
                sweep_n: run.sweep_n,
                ..ReproduceOptions::default()
            };
            let summary = reproduce(&run.out, &opts, threads)?;
            let failed: Vec<String> = summary
                .assertions
                .iter()
                .filter(|a| !a.pass)
                .map(|a| a.name.clone())
                .collect();
            let mut stdout = io::stdout().lock();
            write_json(
                &mut stdout,
                &json!({ "out_dir": run.out.display().to_string(), "all_pass": summary.all_pass }),
            )?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Assertions(failed))
            }
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
