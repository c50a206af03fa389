//! Berry curvature, Chern numbers and parameter sweeps.
//!
//! The Chern number is `C = (1/2π) ∫ Ω d²k` with `Ω = ½ ĥ·(∂ĥ/∂kx × ∂ĥ/∂ky)`.
//! For complex `h` the same expression is evaluated with bilinear products,
//! so `C` becomes complex. The quadrature follows a branch of `sqrt(h·h)`
//! that is continuous over the mesh; where the principal branch has a cut
//! inside the chart, `ĥ` and `Ω` flip sign across it and the principal value
//! alone would not integrate to an invariant. Hermitian models also get a
//! lattice (plaquette Berry phase) estimate that is integer by construction.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{band_energy, gap_squared, tangent_basis, Part, DEFAULT_SINGULAR_TOL};
use crate::mesh;
use crate::models::{build_builtin, Axis, BrillouinPoint, HVector, ModelSpec, ParamSet};
use crate::zeros::euler_characteristic;

pub const GAP_TOL: f64 = 1e-6;
pub const ROUND_TOL: f64 = 0.05;

fn complex_object<S: Serializer>(c: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("Complex", 2)?;
    st.serialize_field("re", &c.re)?;
    st.serialize_field("im", &c.im)?;
    st.end()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureSample {
    pub k: BrillouinPoint,
    #[serde(serialize_with = "complex_object")]
    pub omega: Complex64,
}

/// Curvature on the principal branch of `sqrt(h·h)`. Switching branch negates it.
pub fn berry_curvature(model: &ModelSpec, k: BrillouinPoint) -> Result<CurvatureSample> {
    let h = model.h(k);
    let hh = h.dot(&h);
    if !(hh.norm() > DEFAULT_SINGULAR_TOL) {
        return Err(Error::Singular {
            k,
            hh_norm: hh.norm(),
        });
    }
    let s = band_energy(model, k).e_plus;
    let t = tangent_basis(model, k);
    let unit = h.scale(s.inv());
    // ∂ĥ = ∂h/s − h (h·∂h)/s³
    let s3 = s * s * s;
    let d_unit = |dh: &HVector| dh.scale(s.inv()) - h.scale(h.dot(dh) / s3);
    let omega = unit.dot(&d_unit(&t.d_kx).cross(&d_unit(&t.d_ky))) * 0.5;
    Ok(CurvatureSample { k, omega })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChernMethod {
    Quadrature,
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChernReport {
    pub method: ChernMethod,
    pub mesh_n: usize,
    #[serde(serialize_with = "complex_object")]
    pub c_raw: Complex64,
    pub c_int: Option<i32>,
    pub gapless: bool,
    /// Minimum of `|h·h|^(1/2)` over the mesh, refined locally.
    pub min_gap: f64,
    pub min_gap_location: BrillouinPoint,
    /// Mesh samples where the continuous branch is minus the principal one.
    pub branch_flips: usize,
    /// False when no branch of `sqrt(h·h)` is continuous on the mesh
    /// (odd winding of `h·h`, or too coarse a mesh); `c_int` is then withheld.
    pub branch_consistent: bool,
}

fn gap(model: &ModelSpec, k: BrillouinPoint) -> f64 {
    gap_squared(model, k).sqrt()
}

/// Pattern search on the gap from the best mesh points.
fn refine_gap(model: &ModelSpec, starts: &[BrillouinPoint], step0: f64) -> (BrillouinPoint, f64) {
    let domain = &model.domain;
    let clamp = |k: BrillouinPoint| {
        let k = domain.canonical(k);
        let (xlo, xhi) = domain.range(Axis::X);
        let (ylo, yhi) = domain.range(Axis::Y);
        BrillouinPoint::new(
            if domain.kx_periodic {
                k.kx
            } else {
                k.kx.clamp(xlo, xhi)
            },
            if domain.ky_periodic {
                k.ky
            } else {
                k.ky.clamp(ylo, yhi)
            },
        )
    };
    let dirs = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    starts
        .par_iter()
        .map(|&start| {
            let mut k = start;
            let mut best = gap(model, k);
            let mut step = step0;
            for _ in 0..4000 {
                if step < 1e-15 || best == 0.0 {
                    break;
                }
                let found = dirs.iter().find_map(|&(dx, dy)| {
                    let cand = clamp(k.offset(dx * step, dy * step));
                    let g = gap(model, cand);
                    (g < best).then_some((cand, g))
                });
                match found {
                    Some((c, g)) => {
                        k = c;
                        best = g;
                    }
                    None => step *= 0.5,
                }
            }
            (k, best)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((starts[0], f64::INFINITY), |acc, x| {
            if x.1 < acc.1 {
                x
            } else {
                acc
            }
        })
}

/// Minimum gap over mesh nodes and cell midpoints, refined from the smallest samples.
pub fn min_gap(model: &ModelSpec, mesh_n: usize) -> (BrillouinPoint, f64) {
    let d = &model.domain;
    let mut points = mesh::node_mesh(d, mesh_n);
    points.extend(mesh::product(
        &mesh::axis_midpoints(d, Axis::X, mesh_n),
        &mesh::axis_midpoints(d, Axis::Y, mesh_n),
    ));
    let mut gaps: Vec<(BrillouinPoint, f64)> =
        points.par_iter().map(|&k| (k, gap(model, k))).collect();
    gaps.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.kx.total_cmp(&b.0.kx))
            .then(a.0.ky.total_cmp(&b.0.ky))
    });
    let starts: Vec<_> = gaps.iter().take(8).map(|g| g.0).collect();
    let step = d.width(Axis::X).min(d.width(Axis::Y)) / mesh_n as f64;
    let refined = refine_gap(model, &starts, step);
    if refined.1 < gaps[0].1 {
        refined
    } else {
        gaps[0]
    }
}

fn rounded(c: Complex64, gapless: bool) -> Option<i32> {
    let n = c.re.round();
    (!gapless && (c - n).norm() < ROUND_TOL).then_some(n as i32)
}

/// Same branch when the two values are less than a quarter turn apart.
fn same_branch(a: Complex64, b: Complex64) -> Option<bool> {
    let p = (a * b.conj()).re;
    if p > 0.0 {
        Some(true)
    } else if p < 0.0 {
        Some(false)
    } else {
        None
    }
}

/// Signs that make `sign·e` continuous along a row, starting from `+1`.
fn row_signs(energies: &[Complex64]) -> Option<Vec<f64>> {
    let mut signs = Vec::with_capacity(energies.len());
    let mut sign = 1.0;
    signs.push(sign);
    for w in energies.windows(2) {
        if !same_branch(w[1], w[0])? {
            sign = -sign;
        }
        signs.push(sign);
    }
    Some(signs)
}

struct RowSum {
    omega: Complex64,
    flipped: usize,
    /// Sign of the next row relative to this one, `None` if columns disagree.
    to_next: Option<f64>,
    consistent: bool,
}

fn quadrature_row(
    model: &ModelSpec,
    xs: &[f64],
    ky: f64,
    ky_next: Option<f64>,
    kx_periodic: bool,
) -> RowSum {
    let energy = |ky: f64| -> Vec<Complex64> {
        xs.iter()
            .map(|&kx| band_energy(model, BrillouinPoint::new(kx, ky)).e_plus)
            .collect()
    };
    let here = energy(ky);
    let signs = row_signs(&here);
    let wrap_ok = |e: &[Complex64], s: &[f64]| {
        !kx_periodic || same_branch(e[e.len() - 1] * s[s.len() - 1], e[0] * s[0]) == Some(true)
    };
    let mut consistent = signs.as_ref().is_some_and(|s| wrap_ok(&here, s));
    let ones = vec![1.0; xs.len()];
    let signs = signs.unwrap_or(ones);
    let to_next = ky_next.and_then(|ky_next| {
        let next = energy(ky_next);
        let next_signs = row_signs(&next)?;
        let mut rel = None;
        for i in 0..xs.len() {
            let r = if same_branch(next[i] * next_signs[i], here[i] * signs[i])? {
                1.0
            } else {
                -1.0
            };
            match rel {
                None => rel = Some(r),
                Some(x) if x != r => return None,
                _ => {}
            }
        }
        rel
    });
    if ky_next.is_some() && to_next.is_none() {
        consistent = false;
    }
    let omega = xs
        .iter()
        .zip(&signs)
        .map(|(&kx, &sign)| {
            berry_curvature(model, BrillouinPoint::new(kx, ky))
                .map(|c| c.omega * sign)
                .unwrap_or_else(|_| Complex64::new(f64::NAN, f64::NAN))
        })
        .sum();
    RowSum {
        omega,
        flipped: signs.iter().filter(|&&s| s < 0.0).count(),
        to_next,
        consistent,
    }
}

/// Composite midpoint rule over the whole chart.
pub fn chern_quadrature(model: &ModelSpec, mesh_n: usize) -> Result<ChernReport> {
    if mesh_n < 32 {
        return Err(Error::Precondition(format!(
            "chern quadrature needs mesh_n >= 32, got {mesh_n}"
        )));
    }
    let d = &model.domain;
    let xs = mesh::axis_midpoints(d, Axis::X, mesh_n);
    let ys = mesh::axis_midpoints(d, Axis::Y, mesh_n);
    let cell = d.area() / (mesh_n * mesh_n) as f64;
    let rows: Vec<RowSum> = (0..ys.len())
        .into_par_iter()
        .map(|j| {
            let next = match ys.get(j + 1) {
                Some(&y) => Some(y),
                None if d.ky_periodic => Some(ys[0]),
                None => None,
            };
            quadrature_row(model, &xs, ys[j], next, d.kx_periodic)
        })
        .collect();

    // Chain the row signs; the last link only closes the loop on a periodic axis.
    let mut consistent = rows.iter().all(|r| r.consistent);
    let mut sign = 1.0;
    let mut total = Complex64::new(0.0, 0.0);
    let mut flipped = 0usize;
    for (j, row) in rows.iter().enumerate() {
        total += row.omega * sign;
        flipped += if sign > 0.0 {
            row.flipped
        } else {
            xs.len() - row.flipped
        };
        match row.to_next {
            Some(rel) => sign *= rel,
            None => {
                if j + 1 < rows.len() {
                    consistent = false;
                }
            }
        }
    }
    if d.ky_periodic && sign < 0.0 {
        consistent = false;
    }
    // Keep the branch that agrees with the principal one on most of the mesh.
    let samples = xs.len() * ys.len();
    if 2 * flipped > samples {
        total = -total;
        flipped = samples - flipped;
    }
    let c_raw = total * (cell / (2.0 * PI));
    let (loc, g) = min_gap(model, mesh_n);
    let gapless = g < GAP_TOL || !c_raw.is_finite();
    Ok(ChernReport {
        method: ChernMethod::Quadrature,
        mesh_n,
        c_raw,
        c_int: if consistent {
            rounded(c_raw, gapless)
        } else {
            None
        },
        gapless,
        min_gap: g,
        min_gap_location: loc,
        branch_flips: flipped,
        branch_consistent: consistent,
    })
}

/// Successive quadrature estimates closer than this count as converged.
pub const CONVERGENCE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinedChern {
    pub report: ChernReport,
    /// `|c(n) − c(n/2)|` at the final mesh, absent when no doubling was done.
    pub last_change: Option<f64>,
    pub converged: bool,
}

/// Doubles the quadrature mesh from `mesh_n` until successive estimates agree
/// within [`CONVERGENCE_TOL`] or `max_mesh_n` is reached. Gapless points are
/// not refined.
pub fn chern_quadrature_refined(
    model: &ModelSpec,
    mesh_n: usize,
    max_mesh_n: usize,
) -> Result<RefinedChern> {
    let mut report = chern_quadrature(model, mesh_n)?;
    let mut last_change = None;
    let mut converged = false;
    while !report.gapless && report.mesh_n * 2 <= max_mesh_n {
        let next = chern_quadrature(model, report.mesh_n * 2)?;
        let change = (next.c_raw - report.c_raw).norm();
        report = next;
        last_change = Some(change);
        if change < CONVERGENCE_TOL {
            converged = true;
            break;
        }
    }
    Ok(RefinedChern {
        report,
        last_change,
        converged,
    })
}

type Mat2 = [[Complex64; 2]; 2];

/// Lower-band projector `(1 − ĥ·σ)/2`.
fn lower_projector(h: [f64; 3]) -> Mat2 {
    let n = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
    let [x, y, z] = h.map(|c| c / n);
    let c = Complex64::new;
    [
        [c(0.5 * (1.0 - z), 0.0), c(-0.5 * x, 0.5 * y)],
        [c(-0.5 * x, -0.5 * y), c(0.5 * (1.0 + z), 0.0)],
    ]
}

fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Plaquette Berry phases of the lower-band projector.
pub fn chern_lattice(model: &ModelSpec, mesh_n: usize) -> Result<ChernReport> {
    if !model.hermitian {
        return Err(Error::NotHermitian(model.name.clone()));
    }
    if mesh_n < 8 {
        return Err(Error::Precondition(format!(
            "lattice Chern needs mesh_n >= 8, got {mesh_n}"
        )));
    }
    let d = &model.domain;
    let nx = if d.kx_periodic { mesh_n } else { mesh_n + 1 };
    let ny = if d.ky_periodic { mesh_n } else { mesh_n + 1 };
    let xs = mesh::axis_nodes(d, Axis::X, nx);
    let ys = mesh::axis_nodes(d, Axis::Y, ny);
    let nodes: Vec<(f64, BrillouinPoint, Mat2)> = mesh::product(&xs, &ys)
        .into_par_iter()
        .map(|k| (gap(model, k), k, lower_projector(model.h(k).re())))
        .collect();
    let (g, loc, _) = nodes
        .iter()
        .fold((f64::INFINITY, nodes[0].1, ()), |acc, n| {
            if n.0 < acc.0 {
                (n.0, n.1, ())
            } else {
                acc
            }
        });
    if g < GAP_TOL {
        return Err(Error::Gapless { min_gap: g });
    }
    let at = |i: usize, j: usize| &nodes[(j % ny) * nx + (i % nx)].2;
    let cells_x = if d.kx_periodic { nx } else { nx - 1 };
    let cells_y = if d.ky_periodic { ny } else { ny - 1 };
    let flux: f64 = (0..cells_y)
        .into_par_iter()
        .map(|j| {
            (0..cells_x)
                .map(|i| {
                    let loop_ = matmul(
                        &matmul(at(i, j), at(i + 1, j)),
                        &matmul(at(i + 1, j + 1), at(i, j + 1)),
                    );
                    (loop_[0][0] + loop_[1][1]).arg()
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let c = -flux / (2.0 * PI);
    let n = c.round();
    Ok(ChernReport {
        method: ChernMethod::Lattice,
        mesh_n,
        c_raw: Complex64::new(n, 0.0),
        c_int: Some(n as i32),
        gapless: false,
        min_gap: g,
        min_gap_location: loc,
        branch_flips: 0,
        branch_consistent: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        let values = match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| (lo * (n - 1 - i) as f64 + hi * i as f64) / (n - 1) as f64)
                .collect(),
        };
        Self {
            name: name.to_owned(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub mesh_n: usize,
    /// Upper bound for quadrature mesh doubling; equal to `mesh_n` disables it.
    pub max_mesh_n: usize,
    pub grid_n: usize,
    pub imag_shift: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub params: ParamSet,
    pub chern: Option<ChernReport>,
    pub converged: bool,
    pub c_lattice: Option<i32>,
    pub chi_re: Option<i32>,
    pub chi_im: Option<i32>,
    pub errors: Vec<String>,
}

impl PhasePoint {
    pub fn error(&self) -> Option<String> {
        (!self.errors.is_empty()).then(|| self.errors.join("; "))
    }
}

pub fn sweep_point(family: &str, params: ParamSet, opts: &SweepOptions) -> PhasePoint {
    let mut point = PhasePoint {
        params,
        chern: None,
        converged: false,
        c_lattice: None,
        chi_re: None,
        chi_im: None,
        errors: Vec::new(),
    };
    let model = match build_builtin(family, &point.params, opts.imag_shift) {
        Ok(m) => m,
        Err(e) => {
            point.errors.push(e.to_string());
            return point;
        }
    };
    let mut lattice_mesh = opts.mesh_n;
    match chern_quadrature_refined(&model, opts.mesh_n, opts.max_mesh_n.max(opts.mesh_n)) {
        Ok(c) => {
            lattice_mesh = c.report.mesh_n;
            point.converged = c.converged;
            point.chern = Some(c.report);
        }
        Err(e) => point.errors.push(format!("chern: {e}")),
    }
    if model.hermitian {
        match chern_lattice(&model, lattice_mesh) {
            Ok(c) => point.c_lattice = c.c_int,
            Err(Error::Gapless { .. }) => {}
            Err(e) => point.errors.push(format!("lattice: {e}")),
        }
    }
    match euler_characteristic(&model, Part::Re, opts.grid_n) {
        Ok(r) => point.chi_re = Some(r.chi),
        Err(e) => point.errors.push(format!("chi_re: {e}")),
    }
    if !model.hermitian {
        match euler_characteristic(&model, Part::Im, opts.grid_n) {
            Ok(r) => point.chi_im = Some(r.chi),
            Err(e) => point.errors.push(format!("chi_im: {e}")),
        }
    }
    point
}

/// Cartesian product of the axes over `base`, rows sorted lexicographically by axis values.
pub fn sweep(
    family: &str,
    base: &ParamSet,
    axes: &[SweepAxis],
    opts: &SweepOptions,
) -> Result<Vec<PhasePoint>> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Precondition(
            "sweep needs at least one non-empty axis".into(),
        ));
    }
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    combos.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(combos
        .into_par_iter()
        .map(|values| {
            let mut params = base.clone();
            for (axis, v) in axes.iter().zip(values) {
                params.insert(&axis.name, v);
            }
            sweep_point(family, params, opts)
        })
        .collect())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[PhasePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<String> = points
        .first()
        .map(|p| p.params.names().map(str::to_owned).collect())
        .unwrap_or_default();
    let mut header = names.clone();
    header.extend(
        [
            "c_re",
            "c_im",
            "c_int",
            "gapless",
            "min_gap",
            "chi_re",
            "chi_im",
            "error",
            "c_lattice",
            "mesh_n",
            "converged",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for p in points {
        let mut row: Vec<String> = names.iter().map(|n| opt(p.params.get(n))).collect();
        let c = p.chern.as_ref();
        row.push(opt(c.map(|c| c.c_raw.re)));
        row.push(opt(c.map(|c| c.c_raw.im)));
        row.push(opt(c.and_then(|c| c.c_int)));
        row.push(opt(c.map(|c| c.gapless)));
        row.push(opt(c.map(|c| c.min_gap)));
        row.push(opt(p.chi_re));
        row.push(opt(p.chi_im));
        row.push(p.error().unwrap_or_default());
        row.push(opt(p.c_lattice));
        row.push(opt(c.map(|c| c.mesh_n)));
        row.push(p.converged.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
