//! Band energies, velocity fields and the manifold tangent basis.
//!
//! With `E± = ±sqrt(h·h)` the band velocity is `v = (h·∂h/∂kx, h·∂h/∂ky) / E+`,
//! evaluated with bilinear complex products so the same code covers
//! non-Hermitian `h`.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh;
pub use crate::models::TangentBasis;
use crate::models::{Axis, BrillouinPoint, ModelSpec};

/// Gap closures below this value of `|h·h|` are treated as singular.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-12;

/// Selects the real or imaginary part of a complex field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub fn of(self, c: Complex64) -> f64 {
        match self {
            Part::Re => c.re,
            Part::Im => c.im,
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Re => "re",
            Part::Im => "im",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandEnergy {
    pub e_plus: Complex64,
    pub e_minus: Complex64,
}

impl BandEnergy {
    pub fn band(&self, band: Band) -> Complex64 {
        match band {
            Band::Upper => self.e_plus,
            Band::Lower => self.e_minus,
        }
    }
}

/// Principal-branch `sqrt(h·h)`; for real `h` this is the non-negative norm.
pub fn band_energy(model: &ModelSpec, k: BrillouinPoint) -> BandEnergy {
    let h = model.h(k);
    let e_plus = if model.hermitian {
        Complex64::new(h.re().iter().map(|x| x * x).sum::<f64>().sqrt(), 0.0)
    } else {
        h.dot(&h).sqrt()
    };
    BandEnergy {
        e_plus,
        e_minus: -e_plus,
    }
}

/// `|h·h|`, the squared-energy gap measure used by the singularity checks.
pub fn gap_squared(model: &ModelSpec, k: BrillouinPoint) -> f64 {
    let h = model.h(k);
    h.dot(&h).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityVector {
    pub vx: Complex64,
    pub vy: Complex64,
}

impl VelocityVector {
    pub fn component(&self, part: Part) -> [f64; 2] {
        [part.of(self.vx), part.of(self.vy)]
    }
}

impl std::ops::Neg for VelocityVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            vx: -self.vx,
            vy: -self.vy,
        }
    }
}

/// Central-difference tangent basis of `h`.
pub fn fd_tangent_basis(model: &ModelSpec, k: BrillouinPoint) -> TangentBasis {
    let sx = model.domain.fd_step(Axis::X);
    let sy = model.domain.fd_step(Axis::Y);
    let d = |dx: f64, dy: f64, step: f64| {
        (model.h(k.offset(dx, dy)) - model.h(k.offset(-dx, -dy))) * (0.5 / step)
    };
    TangentBasis {
        d_kx: d(sx, 0.0, sx),
        d_ky: d(0.0, sy, sy),
    }
}

/// Analytic tangent basis when the model has one, finite differences otherwise.
pub fn tangent_basis(model: &ModelSpec, k: BrillouinPoint) -> TangentBasis {
    model
        .dh_analytic(k)
        .unwrap_or_else(|| fd_tangent_basis(model, k))
}

pub fn velocity(model: &ModelSpec, k: BrillouinPoint) -> Result<VelocityVector> {
    velocity_with(model, k, DEFAULT_SINGULAR_TOL)
}

pub fn velocity_with(
    model: &ModelSpec,
    k: BrillouinPoint,
    singular_tol: f64,
) -> Result<VelocityVector> {
    let h = model.h(k);
    let hh = h.dot(&h);
    if !(hh.norm() > singular_tol) {
        return Err(Error::Singular {
            k,
            hh_norm: hh.norm(),
        });
    }
    let e = band_energy(model, k).e_plus;
    let basis = tangent_basis(model, k);
    let v = VelocityVector {
        vx: h.dot(&basis.d_kx) / e,
        vy: h.dot(&basis.d_ky) / e,
    };
    if model.hermitian {
        return Ok(VelocityVector {
            vx: v.vx.re.into(),
            vy: v.vy.re.into(),
        });
    }
    Ok(v)
}

/// Velocity of a chosen band; the lower band is the negated upper one.
pub fn velocity_band(model: &ModelSpec, k: BrillouinPoint, band: Band) -> Result<VelocityVector> {
    let v = velocity(model, k)?;
    Ok(match band {
        Band::Upper => v,
        Band::Lower => -v,
    })
}

pub fn velocity_component(model: &ModelSpec, k: BrillouinPoint, part: Part) -> Result<[f64; 2]> {
    Ok(velocity(model, k)?.component(part))
}

/// `∂v_i/∂k_j`, row `i` is the field component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianMatrix(pub [[f64; 2]; 2]);

impl JacobianMatrix {
    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Solves `J x = rhs`, `None` when the matrix is numerically singular.
    pub fn solve(&self, rhs: [f64; 2]) -> Option<[f64; 2]> {
        let det = self.det();
        let [[a, b], [c, d]] = self.0;
        let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
        if !(det.abs() > 1e-14 * scale * scale) {
            return None;
        }
        Some([
            (d * rhs[0] - b * rhs[1]) / det,
            (a * rhs[1] - c * rhs[0]) / det,
        ])
    }
}

/// Symmetric-stencil Jacobian of an arbitrary real planar field.
pub fn fd_jacobian<F>(f: F, k: BrillouinPoint, steps: (f64, f64)) -> Result<JacobianMatrix>
where
    F: Fn(BrillouinPoint) -> Result<[f64; 2]>,
{
    let (sx, sy) = steps;
    let px = f(k.offset(sx, 0.0))?;
    let mx = f(k.offset(-sx, 0.0))?;
    let py = f(k.offset(0.0, sy))?;
    let my = f(k.offset(0.0, -sy))?;
    Ok(JacobianMatrix([
        [(px[0] - mx[0]) / (2.0 * sx), (py[0] - my[0]) / (2.0 * sy)],
        [(px[1] - mx[1]) / (2.0 * sx), (py[1] - my[1]) / (2.0 * sy)],
    ]))
}

pub fn jacobian(model: &ModelSpec, k: BrillouinPoint, part: Part) -> Result<JacobianMatrix> {
    let steps = (model.domain.fd_step(Axis::X), model.domain.fd_step(Axis::Y));
    fd_jacobian(|p| velocity_component(model, p, part), k, steps)
}

/// Points where the tangent vectors of `h` fail to span a plane.
pub const COMPATIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub grid_n: usize,
    /// Minimum of `|Re ∂h/∂kx × Re ∂h/∂ky|` over the mesh and where it occurs.
    pub min_norm: f64,
    pub min_location: BrillouinPoint,
    pub failures: Vec<BrillouinPoint>,
    /// The same for the imaginary tangent pair (non-Hermitian models only).
    pub min_norm_im: Option<f64>,
    pub failures_im: Option<Vec<BrillouinPoint>>,
    /// Largest `|∂h/∂kx · ∂h/∂ky|` seen; zero for an orthogonal parametrisation.
    pub max_abs_tangent_dot: f64,
}

fn real_cross_norm(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

pub fn compatibility_scan(model: &ModelSpec, grid_n: usize) -> Result<CompatibilityReport> {
    if grid_n < 8 {
        return Err(Error::Precondition(format!(
            "compatibility scan needs grid_n >= 8, got {grid_n}"
        )));
    }
    let points = mesh::node_mesh(&model.domain, grid_n);
    let samples: Vec<(BrillouinPoint, f64, f64, f64)> = points
        .par_iter()
        .map(|&k| {
            let t = tangent_basis(model, k);
            let re = real_cross_norm(t.d_kx.re(), t.d_ky.re());
            let im = real_cross_norm(t.d_kx.im(), t.d_ky.im());
            (k, re, im, t.d_kx.dot(&t.d_ky).norm())
        })
        .collect();

    let mut report = CompatibilityReport {
        grid_n,
        min_norm: f64::INFINITY,
        min_location: points[0],
        failures: Vec::new(),
        min_norm_im: None,
        failures_im: None,
        max_abs_tangent_dot: 0.0,
    };
    let mut min_im = f64::INFINITY;
    let mut failures_im = Vec::new();
    for &(k, re, im, dot) in &samples {
        if re < report.min_norm {
            report.min_norm = re;
            report.min_location = k;
        }
        if re < COMPATIBILITY_TOL {
            report.failures.push(k);
        }
        min_im = min_im.min(im);
        if im < COMPATIBILITY_TOL {
            failures_im.push(k);
        }
        report.max_abs_tangent_dot = report.max_abs_tangent_dot.max(dot);
    }
    if !model.hermitian {
        report.min_norm_im = Some(min_im);
        report.failures_im = Some(failures_im);
    }
    Ok(report)
}

/// One row of the `field export` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub k: BrillouinPoint,
    pub velocity: Option<VelocityVector>,
    pub energy: Complex64,
}

/// Samples energy and velocity on the `grid_n × grid_n` node mesh, ky-major.
pub fn sample_field(model: &ModelSpec, grid_n: usize) -> Vec<FieldSample> {
    mesh::node_mesh(&model.domain, grid_n)
        .par_iter()
        .map(|&k| FieldSample {
            k,
            velocity: velocity(model, k).ok(),
            energy: band_energy(model, k).e_plus,
        })
        .collect()
}

/// Is `b` the principal root continued from `a`, or did it flip sign?
pub(crate) fn branch_flipped(a: Complex64, b: Complex64) -> bool {
    (a + b).norm() < (a - b).norm()
}

/// Counts mesh edges across which the principal square root flips branch.
pub fn branch_cut_edges(model: &ModelSpec, grid_n: usize) -> usize {
    if model.hermitian {
        return 0;
    }
    let xs = mesh::axis_nodes(&model.domain, Axis::X, grid_n);
    let ys = mesh::axis_nodes(&model.domain, Axis::Y, grid_n);
    let e = |i: usize, j: usize| band_energy(model, BrillouinPoint::new(xs[i], ys[j])).e_plus;
    let nx = if model.domain.kx_periodic {
        grid_n
    } else {
        grid_n - 1
    };
    let ny = if model.domain.ky_periodic {
        grid_n
    } else {
        grid_n - 1
    };
    let mut count = 0;
    for j in 0..grid_n {
        for i in 0..grid_n {
            let here = e(i, j);
            if i < nx && branch_flipped(here, e((i + 1) % grid_n, j)) {
                count += 1;
            }
            if j < ny && branch_flipped(here, e(i, (j + 1) % grid_n)) {
                count += 1;
            }
        }
    }
    count
}
