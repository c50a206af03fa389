//! Zero modes of a real planar field and their Poincaré-Hopf index sum.
//!
//! The search runs in four stages:
//!
//! 1. a coarse node scan that seeds candidates at local minima of `|v|` and at
//!    cells where both components change sign;
//! 2. damped Newton refinement with a finite-difference Jacobian, falling back
//!    to component-wise quadrisection of the seeding cell;
//! 3. deduplication on the quotient torus, so a zero sitting on an edge or
//!    corner of the chart is counted once;
//! 4. classification by the sign of the Jacobian determinant, with the
//!    winding number on a small loop as the index wherever the Jacobian is
//!    unusable (degenerate zeros, energy singularities).

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, FailedCandidate, Result};
use crate::field::{self, fd_jacobian, gap_squared, Part, DEFAULT_SINGULAR_TOL};
use crate::models::{Axis, BrillouinPoint, BzDomain, ModelSpec};

const TAU: f64 = 2.0 * PI;

/// A real vector field on a BZ chart.
pub trait PlanarField: Sync {
    fn domain(&self) -> &BzDomain;

    fn eval(&self, k: BrillouinPoint) -> Result<[f64; 2]>;

    /// Non-negative measure that vanishes where the field is singular
    /// (for band velocities, `|h·h|`). Fields without singularities return infinity.
    fn singular_measure(&self, _k: BrillouinPoint) -> f64 {
        f64::INFINITY
    }

    fn singular_tol(&self) -> f64 {
        DEFAULT_SINGULAR_TOL
    }
}

/// `Re v` or `Im v` of a model's band velocity.
#[derive(Debug, Clone, Copy)]
pub struct VelocityPart<'a> {
    pub model: &'a ModelSpec,
    pub part: Part,
    pub singular_tol: f64,
}

impl<'a> VelocityPart<'a> {
    pub fn new(model: &'a ModelSpec, part: Part) -> Self {
        Self {
            model,
            part,
            singular_tol: DEFAULT_SINGULAR_TOL,
        }
    }
}

impl PlanarField for VelocityPart<'_> {
    fn domain(&self) -> &BzDomain {
        &self.model.domain
    }

    fn eval(&self, k: BrillouinPoint) -> Result<[f64; 2]> {
        Ok(field::velocity_with(self.model, k, self.singular_tol)?.component(self.part))
    }

    fn singular_measure(&self, k: BrillouinPoint) -> f64 {
        gap_squared(self.model, k)
    }

    fn singular_tol(&self) -> f64 {
        self.singular_tol
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroSearchOptions {
    pub grid_n: usize,
    /// Newton stops once `|v| < refine_tol`.
    pub refine_tol: f64,
    pub max_newton_iter: usize,
    /// Roots closer than this on the quotient torus are merged.
    pub dedup_radius: f64,
    /// Below this `|det J|` the Jacobian sign is not trusted.
    pub degenerate_tol: f64,
    pub max_bisections: usize,
    pub loop_radius: f64,
    pub loop_samples: usize,
    /// Shift of the scan window along periodic axes.
    pub window_offset: (f64, f64),
}

impl Default for ZeroSearchOptions {
    fn default() -> Self {
        Self {
            grid_n: 64,
            refine_tol: 1e-10,
            max_newton_iter: 50,
            dedup_radius: 1e-4 * TAU,
            degenerate_tol: 1e-8,
            max_bisections: 60,
            loop_radius: 1e-3 * TAU,
            loop_samples: 256,
            window_offset: (0.0, 0.0),
        }
    }
}

impl ZeroSearchOptions {
    pub fn with_grid(grid_n: usize) -> Self {
        Self {
            grid_n,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroKind {
    Source,
    Sink,
    Saddle,
    Degenerate,
    SingularEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroMode {
    pub k0: BrillouinPoint,
    pub kind: ZeroKind,
    pub index: i32,
    /// `None` where the Jacobian is undefined (energy singularities).
    pub jac_det: Option<f64>,
    /// Winding number on a small loop, when the loop is well conditioned.
    pub degree: Option<i32>,
    /// Flow type read off the loop for zeros without a usable Jacobian;
    /// equal to `kind` otherwise.
    pub behaves_as: Option<ZeroKind>,
    pub refine_residual: f64,
    pub on_boundary: bool,
    pub on_corner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedLocus {
    pub locus: String,
    pub k: Option<BrillouinPoint>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScanDiagnostics {
    pub seeds: usize,
    pub sign_change_cells: usize,
    /// Sign-change cells whose quadrisection found no sub-cell with a zero.
    pub rejected_cells: usize,
    /// Points where quadrisection converged onto a jump of the field rather than a zero.
    pub discontinuities: Vec<BrillouinPoint>,
    /// Local minima of `|v|` that did not refine to a zero.
    pub unconfirmed_minima: usize,
    /// Newton roots that left a non-periodic chart.
    pub outside_domain: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroScan {
    pub zeros: Vec<ZeroMode>,
    pub excluded: Vec<ExcludedLocus>,
    pub warnings: Vec<String>,
    pub diagnostics: ScanDiagnostics,
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    Regular { k: BrillouinPoint, residual: f64 },
    Singular { k: BrillouinPoint, measure: f64 },
}

impl Candidate {
    fn k(&self) -> BrillouinPoint {
        match *self {
            Candidate::Regular { k, .. } | Candidate::Singular { k, .. } => k,
        }
    }

    fn quality(&self) -> f64 {
        match *self {
            Candidate::Regular { residual, .. } => residual,
            Candidate::Singular { measure, .. } => measure,
        }
    }
}

enum SeedOutcome {
    Found(Candidate),
    Unconfirmed,
    Rejected,
    Discontinuity(BrillouinPoint),
    Failed(FailedCandidate),
}

#[derive(Debug, Clone, Copy)]
enum Seed {
    Minimum(BrillouinPoint),
    Cell { x0: f64, y0: f64, dx: f64, dy: f64 },
    SingularNode(BrillouinPoint),
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn eval_canonical<F: PlanarField + ?Sized>(field: &F, k: BrillouinPoint) -> Result<[f64; 2]> {
    field.eval(field.domain().canonical(k))
}

fn scan_axis(domain: &BzDomain, axis: Axis, n: usize, offset: f64) -> Vec<f64> {
    let (lo, hi) = domain.range(axis);
    if domain.periodic(axis) {
        let w = hi - lo;
        (0..n)
            .map(|i| lo + offset + w * i as f64 / n as f64)
            .collect()
    } else {
        let m = domain.excluded_boundary_margin;
        let (a, b) = (lo + m, hi - m);
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn sign_change(values: &[[f64; 2]]) -> bool {
    (0..2).all(|c| {
        let lo = values.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
        let hi = values
            .iter()
            .map(|v| v[c])
            .fold(f64::NEG_INFINITY, f64::max);
        lo <= 0.0 && hi >= 0.0
    })
}

fn newton<F: PlanarField + ?Sized>(
    field: &F,
    start: BrillouinPoint,
    opts: &ZeroSearchOptions,
) -> std::result::Result<(BrillouinPoint, f64), (BrillouinPoint, f64)> {
    let domain = field.domain();
    let steps = (domain.fd_step(Axis::X), domain.fd_step(Axis::Y));
    let max_step = domain.width(Axis::X).max(domain.width(Axis::Y));
    let mut k = domain.canonical(start);
    let Ok(mut v) = field.eval(k) else {
        return Err((k, f64::NAN));
    };
    for _ in 0..opts.max_newton_iter {
        let r = norm2(v);
        if r < opts.refine_tol {
            return Ok((k, r));
        }
        let Ok(jac) = fd_jacobian(|p| eval_canonical(field, p), k, steps) else {
            return Err((k, r));
        };
        let Some(step) = jac.solve(v) else {
            return Err((k, r));
        };
        if !(norm2(step) < max_step) {
            return Err((k, r));
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = domain.canonical(k.offset(-t * step[0], -t * step[1]));
            if let Ok(vc) = field.eval(cand) {
                if norm2(vc) < r {
                    accepted = Some((cand, vc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((kn, vn)) => {
                k = kn;
                v = vn;
            }
            None => return Err((k, r)),
        }
    }
    let r = norm2(v);
    if r < opts.refine_tol {
        Ok((k, r))
    } else {
        Err((k, r))
    }
}

enum Bisected {
    Point { k: BrillouinPoint, corner_norm: f64 },
    Singular(BrillouinPoint),
    NoZero,
}

/// Quadrisection of a cell, keeping the first sub-cell in which both
/// components still change sign.
fn bisect<F: PlanarField + ?Sized>(
    field: &F,
    cell: (f64, f64, f64, f64),
    opts: &ZeroSearchOptions,
) -> Bisected {
    let (mut x0, mut y0, mut dx, mut dy) = cell;
    let mut corner_norm = f64::INFINITY;
    for _ in 0..opts.max_bisections {
        let (hx, hy) = (0.5 * dx, 0.5 * dy);
        let mut grid = [[[0.0; 2]; 3]; 3];
        for (a, row) in grid.iter_mut().enumerate() {
            for (b, slot) in row.iter_mut().enumerate() {
                let k = BrillouinPoint::new(x0 + a as f64 * hx, y0 + b as f64 * hy);
                match eval_canonical(field, k) {
                    Ok(v) => *slot = v,
                    Err(_) => return Bisected::Singular(field.domain().canonical(k)),
                }
            }
        }
        let pick = [(0, 0), (1, 0), (0, 1), (1, 1)]
            .into_iter()
            .find(|&(a, b)| {
                sign_change(&[
                    grid[a][b],
                    grid[a + 1][b],
                    grid[a][b + 1],
                    grid[a + 1][b + 1],
                ])
            });
        let Some((a, b)) = pick else {
            return Bisected::NoZero;
        };
        corner_norm = [
            grid[a][b],
            grid[a + 1][b],
            grid[a][b + 1],
            grid[a + 1][b + 1],
        ]
        .iter()
        .map(|v| norm2(*v))
        .fold(0.0, f64::max);
        x0 += a as f64 * hx;
        y0 += b as f64 * hy;
        dx = hx;
        dy = hy;
        let scale = x0.abs().max(y0.abs()).max(1.0);
        if dx.max(dy) < 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    Bisected::Point {
        k: field
            .domain()
            .canonical(BrillouinPoint::new(x0 + 0.5 * dx, y0 + 0.5 * dy)),
        corner_norm,
    }
}

/// Pattern search on the singular measure, starting at a node where the field blew up.
fn refine_singular<F: PlanarField + ?Sized>(
    field: &F,
    start: BrillouinPoint,
    step0: f64,
) -> (BrillouinPoint, f64) {
    let domain = field.domain();
    let mut k = domain.canonical(start);
    let mut best = field.singular_measure(k);
    let mut step = step0;
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
    for _ in 0..2000 {
        if step < 1e-15 || best == 0.0 {
            break;
        }
        let mut improved = false;
        for (dx, dy) in dirs {
            let cand = domain.canonical(k.offset(dx * step, dy * step));
            let m = field.singular_measure(cand);
            if m < best {
                best = m;
                k = cand;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (k, best)
}

fn refine_seed<F: PlanarField + ?Sized>(
    field: &F,
    seed: Seed,
    opts: &ZeroSearchOptions,
) -> SeedOutcome {
    let domain = field.domain();
    match seed {
        Seed::SingularNode(k) => {
            let step = domain.width(Axis::X).min(domain.width(Axis::Y)) / opts.grid_n as f64;
            let (k, measure) = refine_singular(field, k, 0.5 * step);
            if measure <= field.singular_tol() {
                SeedOutcome::Found(Candidate::Singular { k, measure })
            } else {
                SeedOutcome::Failed(FailedCandidate {
                    kx: k.kx,
                    ky: k.ky,
                    residual: measure,
                })
            }
        }
        Seed::Minimum(k) => match newton(field, k, opts) {
            Ok((k, residual)) => SeedOutcome::Found(Candidate::Regular { k, residual }),
            Err(_) => SeedOutcome::Unconfirmed,
        },
        Seed::Cell { x0, y0, dx, dy } => {
            let centre = BrillouinPoint::new(x0 + 0.5 * dx, y0 + 0.5 * dy);
            if let Ok((k, residual)) = newton(field, centre, opts) {
                let near = domain.axis_delta(Axis::X, k.kx, centre.kx).abs() <= 1.5 * dx
                    && domain.axis_delta(Axis::Y, k.ky, centre.ky).abs() <= 1.5 * dy;
                if near {
                    return SeedOutcome::Found(Candidate::Regular { k, residual });
                }
            }
            match bisect(field, (x0, y0, dx, dy), opts) {
                Bisected::NoZero => SeedOutcome::Rejected,
                Bisected::Singular(k) => refine_seed(field, Seed::SingularNode(k), opts),
                Bisected::Point { k, corner_norm } => {
                    if let Ok((k, residual)) = newton(field, k, opts) {
                        return SeedOutcome::Found(Candidate::Regular { k, residual });
                    }
                    let measure = field.singular_measure(k);
                    if measure <= field.singular_tol() {
                        return SeedOutcome::Found(Candidate::Singular { k, measure });
                    }
                    let residual = eval_canonical(field, k).map(norm2).unwrap_or(f64::NAN);
                    if corner_norm > 1e3 * opts.refine_tol && residual > 1e3 * opts.refine_tol {
                        SeedOutcome::Discontinuity(k)
                    } else if residual < 1e3 * opts.refine_tol {
                        // Quadrisection got closer than Newton could polish.
                        SeedOutcome::Found(Candidate::Regular { k, residual })
                    } else {
                        SeedOutcome::Failed(FailedCandidate {
                            kx: k.kx,
                            ky: k.ky,
                            residual,
                        })
                    }
                }
            }
        }
    }
}

/// Winding number of `v/|v|` around a circle, shrinking the loop when it
/// passes too close to a zero or the winding is not near an integer.
pub fn loop_degree_of<F: PlanarField + ?Sized>(
    field: &F,
    k0: BrillouinPoint,
    radius: f64,
    samples: usize,
    refine_tol: f64,
) -> Result<i32> {
    let mut radius = radius;
    let mut last_reason = String::new();
    'attempt: for _ in 0..=6 {
        let mut angles = Vec::with_capacity(samples);
        for m in 0..samples {
            let theta = TAU * m as f64 / samples as f64;
            let p = k0.offset(radius * theta.cos(), radius * theta.sin());
            match eval_canonical(field, p) {
                Ok(v) if norm2(v) > refine_tol => angles.push(v[1].atan2(v[0])),
                Ok(_) => {
                    last_reason = format!("sample within tolerance of zero at radius {radius:.3e}");
                    radius *= 0.5;
                    continue 'attempt;
                }
                Err(e) => {
                    last_reason = format!("{e} at radius {radius:.3e}");
                    radius *= 0.5;
                    continue 'attempt;
                }
            }
        }
        let mut total: f64 = 0.0;
        let mut max_step: f64 = 0.0;
        for m in 0..samples {
            let d = angles[(m + 1) % samples] - angles[m];
            let mut d = (d + PI).rem_euclid(TAU) - PI;
            if d <= -PI {
                d += TAU;
            }
            total += d;
            max_step = max_step.max(d.abs());
        }
        let winding = total / TAU;
        let rounded = winding.round();
        if (winding - rounded).abs() <= 0.2 && max_step < 0.5 * PI {
            return Ok(rounded as i32);
        }
        last_reason = format!(
            "winding {winding:.3} with largest angular step {max_step:.3} at radius {radius:.3e}"
        );
        radius *= 0.5;
    }
    Err(Error::IllConditionedLoop {
        k: k0,
        reason: last_reason,
    })
}

/// Outward flux of `v/|v|` through a circle, averaged over the samples.
fn loop_flux<F: PlanarField + ?Sized>(
    field: &F,
    k0: BrillouinPoint,
    radius: f64,
    samples: usize,
) -> Option<f64> {
    let mut total = 0.0;
    for m in 0..samples {
        let theta = TAU * m as f64 / samples as f64;
        let (c, s) = (theta.cos(), theta.sin());
        let v = eval_canonical(field, k0.offset(radius * c, radius * s)).ok()?;
        let n = norm2(v);
        if !(n > 0.0) {
            return None;
        }
        total += (v[0] * c + v[1] * s) / n;
    }
    Some(total / samples as f64)
}

fn flow_from_loop<F: PlanarField + ?Sized>(
    field: &F,
    k0: BrillouinPoint,
    degree: i32,
    opts: &ZeroSearchOptions,
) -> Option<ZeroKind> {
    match degree {
        1 => loop_flux(field, k0, opts.loop_radius, opts.loop_samples).and_then(|f| {
            if f > 0.0 {
                Some(ZeroKind::Source)
            } else if f < 0.0 {
                Some(ZeroKind::Sink)
            } else {
                None
            }
        }),
        -1 => Some(ZeroKind::Saddle),
        _ => None,
    }
}

pub fn loop_degree(
    model: &ModelSpec,
    part: Part,
    k0: BrillouinPoint,
    radius: f64,
    samples: usize,
) -> Result<i32> {
    loop_degree_of(&VelocityPart::new(model, part), k0, radius, samples, 1e-10)
}

/// Number of chart images of a canonical point, per axis.
fn edge_images(domain: &BzDomain, k: BrillouinPoint) -> (u32, bool) {
    let tol = 1e-7;
    let mut images = 1;
    let mut on_edge = false;
    for (axis, v) in [(Axis::X, k.kx), (Axis::Y, k.ky)] {
        let (lo, hi) = domain.range(axis);
        if domain.periodic(axis) {
            if domain.axis_delta(axis, v, lo).abs() < tol {
                images *= 2;
                on_edge = true;
            }
        } else if (v - lo).abs() < tol || (v - hi).abs() < tol {
            on_edge = true;
        }
    }
    (images, on_edge)
}

fn cmp_point(a: &BrillouinPoint, b: &BrillouinPoint) -> Ordering {
    a.kx.total_cmp(&b.kx).then(a.ky.total_cmp(&b.ky))
}

fn dedup(domain: &BzDomain, mut cands: Vec<Candidate>, radius: f64) -> Vec<Candidate> {
    cands.sort_by(|a, b| cmp_point(&a.k(), &b.k()));
    let mut kept: Vec<Candidate> = Vec::new();
    for c in cands {
        match kept
            .iter_mut()
            .find(|q| domain.quotient_distance(q.k(), c.k()) < radius)
        {
            Some(q) => {
                let better = match (*q, c) {
                    (Candidate::Regular { .. }, Candidate::Singular { .. }) => true,
                    (Candidate::Singular { .. }, Candidate::Regular { .. }) => false,
                    _ => c.quality() < q.quality(),
                };
                if better {
                    *q = c;
                }
            }
            None => kept.push(c),
        }
    }
    kept.sort_by(|a, b| cmp_point(&a.k(), &b.k()));
    kept
}

fn boundary_strips(domain: &BzDomain) -> Vec<ExcludedLocus> {
    let m = domain.excluded_boundary_margin;
    if m <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (axis, name) in [(Axis::X, "kx"), (Axis::Y, "ky")] {
        if domain.periodic(axis) {
            continue;
        }
        let (lo, hi) = domain.range(axis);
        for (a, b, edge) in [(lo, lo + m, lo), (hi - m, hi, hi)] {
            out.push(ExcludedLocus {
                locus: format!("{name} in [{a:.6}, {b:.6}]"),
                k: None,
                reason: format!(
                    "chart edge {name} = {edge:.6}: tangent basis degenerates and zeros there are not counted"
                ),
            });
        }
    }
    out
}

/// Full zero search over a planar field.
pub fn scan_zeros<F: PlanarField + ?Sized>(
    field: &F,
    opts: &ZeroSearchOptions,
) -> Result<ZeroScan> {
    let n = opts.grid_n;
    if n < 16 {
        return Err(Error::Precondition(format!(
            "zero search needs grid_n >= 16, got {n}"
        )));
    }
    let domain = *field.domain();
    let xs = scan_axis(&domain, Axis::X, n, opts.window_offset.0);
    let ys = scan_axis(&domain, Axis::Y, n, opts.window_offset.1);
    let values: Vec<Vec<Option<[f64; 2]>>> = ys
        .par_iter()
        .map(|&ky| {
            xs.iter()
                .map(|&kx| eval_canonical(field, BrillouinPoint::new(kx, ky)).ok())
                .collect()
        })
        .collect();

    let max_norm = values
        .iter()
        .flatten()
        .flatten()
        .map(|v| norm2(*v))
        .fold(0.0, f64::max);
    if values.iter().flatten().all(Option::is_some) && max_norm < opts.refine_tol {
        return Err(Error::NonIsolated { max_norm });
    }

    let (px, py) = (domain.kx_periodic, domain.ky_periodic);
    let dx = xs.get(1).map_or(0.0, |x| x - xs[0]);
    let dy = ys.get(1).map_or(0.0, |y| y - ys[0]);
    let mut seeds = Vec::new();
    let mut diagnostics = ScanDiagnostics::default();

    for (j, row) in values.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if v.is_none() {
                seeds.push(Seed::SingularNode(BrillouinPoint::new(xs[i], ys[j])));
            }
        }
    }

    let cells_x = if px { n } else { n - 1 };
    let cells_y = if py { n } else { n - 1 };
    for j in 0..cells_y {
        for i in 0..cells_x {
            let corners = [
                values[j][i],
                values[j][(i + 1) % n],
                values[(j + 1) % n][i],
                values[(j + 1) % n][(i + 1) % n],
            ];
            // Cells touching a singular node are covered by that node's seed.
            let Some(corners) = corners.into_iter().collect::<Option<Vec<_>>>() else {
                continue;
            };
            if sign_change(&corners) {
                diagnostics.sign_change_cells += 1;
                seeds.push(Seed::Cell {
                    x0: xs[i],
                    y0: ys[j],
                    dx,
                    dy,
                });
            }
        }
    }

    let interior = |idx: usize, periodic: bool| periodic || (idx > 0 && idx + 1 < n);
    for j in 0..n {
        for i in 0..n {
            if !interior(i, px) || !interior(j, py) {
                continue;
            }
            let Some(here) = values[j][i] else { continue };
            let r = norm2(here);
            let mut is_min = true;
            'nb: for dj in [n - 1, 0, 1] {
                for di in [n - 1, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    match values[(j + dj) % n][(i + di) % n] {
                        Some(v) if norm2(v) >= r => {}
                        _ => {
                            is_min = false;
                            break 'nb;
                        }
                    }
                }
            }
            if is_min {
                seeds.push(Seed::Minimum(BrillouinPoint::new(xs[i], ys[j])));
            }
        }
    }
    diagnostics.seeds = seeds.len();

    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&s| refine_seed(field, s, opts))
        .collect();
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            SeedOutcome::Found(c) => candidates.push(c),
            SeedOutcome::Unconfirmed => diagnostics.unconfirmed_minima += 1,
            SeedOutcome::Rejected => diagnostics.rejected_cells += 1,
            SeedOutcome::Discontinuity(k) => diagnostics.discontinuities.push(k),
            SeedOutcome::Failed(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(Error::NonConvergence {
            candidates: failures,
        });
    }
    diagnostics.discontinuities.sort_by(cmp_point);
    diagnostics
        .discontinuities
        .dedup_by(|a, b| domain.quotient_distance(*a, *b) < opts.dedup_radius);

    let mut excluded = boundary_strips(&domain);
    let mut warnings = Vec::new();
    let mut zeros = Vec::new();
    for cand in dedup(&domain, candidates, opts.dedup_radius) {
        let k = cand.k();
        let outside = [(Axis::X, k.kx), (Axis::Y, k.ky)]
            .into_iter()
            .any(|(axis, v)| {
                let (lo, hi) = domain.range(axis);
                !domain.periodic(axis) && (v < lo || v > hi)
            });
        if outside {
            diagnostics.outside_domain += 1;
            continue;
        }
        if domain.in_excluded_strip(k) {
            excluded.push(ExcludedLocus {
                locus: format!("({:.6}, {:.6})", k.kx, k.ky),
                k: Some(k),
                reason: "zero inside an excluded chart-edge strip".into(),
            });
            continue;
        }
        match classify(field, cand, opts) {
            Ok(z) => zeros.push(z),
            Err(e) => {
                let msg = format!(
                    "zero near ({:.6}, {:.6}) has no well-defined index: {e}",
                    k.kx, k.ky
                );
                warnings.push(msg.clone());
                excluded.push(ExcludedLocus {
                    locus: format!("({:.6}, {:.6})", k.kx, k.ky),
                    k: Some(k),
                    reason: msg,
                });
            }
        }
    }
    if !diagnostics.discontinuities.is_empty() {
        warnings.push(format!(
            "field has {} jump discontinuities (square-root branch cuts); zero set may be incomplete",
            diagnostics.discontinuities.len()
        ));
    }
    Ok(ZeroScan {
        zeros,
        excluded,
        warnings,
        diagnostics,
    })
}

fn classify<F: PlanarField + ?Sized>(
    field: &F,
    cand: Candidate,
    opts: &ZeroSearchOptions,
) -> Result<ZeroMode> {
    let domain = field.domain();
    let k = cand.k();
    let (images, on_boundary) = edge_images(domain, k);
    let degree = || {
        loop_degree_of(
            field,
            k,
            opts.loop_radius,
            opts.loop_samples,
            opts.refine_tol,
        )
    };
    let base = ZeroMode {
        k0: k,
        kind: ZeroKind::Degenerate,
        index: 0,
        jac_det: None,
        degree: None,
        behaves_as: None,
        refine_residual: cand.quality(),
        on_boundary,
        on_corner: images == 4,
    };
    match cand {
        Candidate::Singular { .. } => {
            let d = degree()?;
            Ok(ZeroMode {
                kind: ZeroKind::SingularEnergy,
                index: d,
                degree: Some(d),
                behaves_as: flow_from_loop(field, k, d, opts),
                refine_residual: eval_canonical(field, k).map(norm2).unwrap_or(0.0),
                ..base
            })
        }
        Candidate::Regular { .. } => {
            let steps = (domain.fd_step(Axis::X), domain.fd_step(Axis::Y));
            let jac = fd_jacobian(|p| eval_canonical(field, p), k, steps)?;
            let det = jac.det();
            if !(det.abs() >= opts.degenerate_tol) {
                let d = degree()?;
                return Ok(ZeroMode {
                    index: d,
                    jac_det: Some(det),
                    degree: Some(d),
                    behaves_as: flow_from_loop(field, k, d, opts),
                    ..base
                });
            }
            let (kind, index) = if det < 0.0 {
                (ZeroKind::Saddle, -1)
            } else if jac.trace() > 0.0 {
                (ZeroKind::Source, 1)
            } else {
                (ZeroKind::Sink, 1)
            };
            Ok(ZeroMode {
                kind,
                index,
                jac_det: Some(det),
                degree: degree().ok(),
                behaves_as: Some(kind),
                ..base
            })
        }
    }
}

pub fn find_zeros(model: &ModelSpec, part: Part, grid_n: usize) -> Result<Vec<ZeroMode>> {
    Ok(scan_zeros(
        &VelocityPart::new(model, part),
        &ZeroSearchOptions::with_grid(grid_n),
    )?
    .zeros)
}

/// How one canonical zero is shared between chart images.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalShare {
    pub kx: f64,
    pub ky: f64,
    pub kind: ZeroKind,
    pub index: i32,
    /// Number of images in the closed chart rectangle (1, 2 on an edge, 4 at a corner).
    pub images: u32,
    /// Weight carried by each image, `1 / images`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerReport {
    pub part: Part,
    pub zeros: Vec<ZeroMode>,
    pub index_sum: i32,
    pub chi: i32,
    pub excluded: Vec<ExcludedLocus>,
    pub fractional_breakdown: Vec<FractionalShare>,
    pub expected_chi: Option<i32>,
    pub matches_expected: Option<bool>,
    pub warnings: Vec<String>,
    pub diagnostics: ScanDiagnostics,
}

impl EulerReport {
    pub fn count(&self, kind: ZeroKind) -> usize {
        self.zeros.iter().filter(|z| z.kind == kind).count()
    }

    /// Zeros whose local flow is of the given type, including singular ones.
    pub fn count_behaving(&self, kind: ZeroKind) -> usize {
        self.zeros
            .iter()
            .filter(|z| z.behaves_as == Some(kind))
            .count()
    }
}

pub fn euler_from_scan(
    domain: &BzDomain,
    part: Part,
    scan: ZeroScan,
    expected_chi: Option<i32>,
) -> EulerReport {
    let index_sum: i32 = scan.zeros.iter().map(|z| z.index).sum();
    let fractional_breakdown = scan
        .zeros
        .iter()
        .map(|z| {
            let (images, _) = edge_images(domain, z.k0);
            FractionalShare {
                kx: z.k0.kx,
                ky: z.k0.ky,
                kind: z.kind,
                index: z.index,
                images,
                weight: 1.0 / images as f64,
            }
        })
        .collect();
    let mut warnings = scan.warnings;
    if scan.excluded.iter().any(|e| e.k.is_some()) || domain.excluded_boundary_margin > 0.0 {
        warnings.push(
            "index sum omits excluded chart-edge loci; agreement with chi relies on their exclusion".into(),
        );
    }
    EulerReport {
        part,
        zeros: scan.zeros,
        index_sum,
        chi: index_sum,
        excluded: scan.excluded,
        fractional_breakdown,
        expected_chi,
        matches_expected: expected_chi.map(|c| c == index_sum),
        warnings,
        diagnostics: scan.diagnostics,
    }
}

pub fn euler_characteristic_with(
    model: &ModelSpec,
    part: Part,
    opts: &ZeroSearchOptions,
) -> Result<EulerReport> {
    let scan = scan_zeros(&VelocityPart::new(model, part), opts)?;
    Ok(euler_from_scan(
        &model.domain,
        part,
        scan,
        model.expected_chi,
    ))
}

pub fn euler_characteristic(model: &ModelSpec, part: Part, grid_n: usize) -> Result<EulerReport> {
    euler_characteristic_with(model, part, &ZeroSearchOptions::with_grid(grid_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        domain: BzDomain,
        m: [[f64; 2]; 2],
    }

    impl PlanarField for Linear {
        fn domain(&self) -> &BzDomain {
            &self.domain
        }
        fn eval(&self, k: BrillouinPoint) -> Result<[f64; 2]> {
            let [[a, b], [c, d]] = self.m;
            Ok([a * k.kx + b * k.ky, c * k.kx + d * k.ky])
        }
    }

    fn square() -> BzDomain {
        BzDomain::new((-1.0, 1.0), (-1.0, 1.0), false, false, 0.0).unwrap()
    }

    #[test]
    fn identity_has_degree_one() {
        let f = Linear {
            domain: square(),
            m: [[1.0, 0.0], [0.0, 1.0]],
        };
        assert_eq!(
            loop_degree_of(&f, BrillouinPoint::new(0.0, 0.0), 0.01, 256, 1e-10).unwrap(),
            1
        );
    }

    #[test]
    fn reflection_has_degree_minus_one() {
        let f = Linear {
            domain: square(),
            m: [[1.0, 0.0], [0.0, -1.0]],
        };
        assert_eq!(
            loop_degree_of(&f, BrillouinPoint::new(0.0, 0.0), 0.01, 256, 1e-10).unwrap(),
            -1
        );
    }

    #[test]
    fn rotation_is_a_source_like_centre() {
        // Pure rotation: det > 0, trace 0; index +1.
        let f = Linear {
            domain: square(),
            m: [[0.0, -1.0], [1.0, 0.0]],
        };
        let scan = scan_zeros(&f, &ZeroSearchOptions::with_grid(17)).unwrap();
        assert_eq!(scan.zeros.len(), 1);
        assert_eq!(scan.zeros[0].index, 1);
    }

    #[test]
    fn constant_field_has_no_zeros() {
        struct Constant(BzDomain);
        impl PlanarField for Constant {
            fn domain(&self) -> &BzDomain {
                &self.0
            }
            fn eval(&self, _k: BrillouinPoint) -> Result<[f64; 2]> {
                Ok([0.3, -1.0])
            }
        }
        let scan = scan_zeros(
            &Constant(BzDomain::torus()),
            &ZeroSearchOptions::with_grid(32),
        )
        .unwrap();
        assert!(scan.zeros.is_empty());
    }

    #[test]
    fn vanishing_field_is_not_isolated() {
        struct Zero(BzDomain);
        impl PlanarField for Zero {
            fn domain(&self) -> &BzDomain {
                &self.0
            }
            fn eval(&self, _k: BrillouinPoint) -> Result<[f64; 2]> {
                Ok([0.0, 0.0])
            }
        }
        let e =
            scan_zeros(&Zero(BzDomain::torus()), &ZeroSearchOptions::with_grid(32)).unwrap_err();
        assert!(matches!(e, Error::NonIsolated { .. }));
    }

    #[test]
    fn small_grid_is_rejected() {
        let f = Linear {
            domain: square(),
            m: [[1.0, 0.0], [0.0, 1.0]],
        };
        assert!(scan_zeros(&f, &ZeroSearchOptions::with_grid(8)).is_err());
    }

    #[test]
    fn ill_conditioned_loop() {
        // Winding 1/2 per loop cannot be rounded.
        struct Half(BzDomain);
        impl PlanarField for Half {
            fn domain(&self) -> &BzDomain {
                &self.0
            }
            fn eval(&self, k: BrillouinPoint) -> Result<[f64; 2]> {
                let theta = k.ky.atan2(k.kx).rem_euclid(TAU) * 0.5;
                Ok([theta.cos(), theta.sin()])
            }
        }
        let f = Half(square());
        let e = loop_degree_of(&f, BrillouinPoint::new(0.0, 0.0), 0.01, 256, 1e-10).unwrap_err();
        assert!(matches!(e, Error::IllConditionedLoop { .. }));
    }

    #[test]
    fn dedup_merges_periodic_images() {
        let d = BzDomain::torus();
        let cands = vec![
            Candidate::Regular {
                k: BrillouinPoint::new(-PI, -PI),
                residual: 1e-12,
            },
            Candidate::Regular {
                k: BrillouinPoint::new(PI - 1e-9, PI - 1e-9),
                residual: 1e-13,
            },
            Candidate::Regular {
                k: BrillouinPoint::new(0.0, 0.0),
                residual: 1e-12,
            },
        ];
        let kept = dedup(&d, cands, 1e-4);
        assert_eq!(kept.len(), 2);
    }
}
