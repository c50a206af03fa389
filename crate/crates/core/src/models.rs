//! Two-band models `H(k) = h(k)·σ` over a rectangular Brillouin zone.
//!
//! A [`ModelSpec`] bundles the `h`-field, its parameter set and the BZ chart
//! it lives on. Three built-ins are provided: the quantum sphere, the
//! quantum torus and its non-Hermitian deformation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrillouinPoint {
    pub kx: f64,
    pub ky: f64,
}

impl BrillouinPoint {
    pub const fn new(kx: f64, ky: f64) -> Self {
        Self { kx, ky }
    }

    pub fn offset(self, dkx: f64, dky: f64) -> Self {
        Self::new(self.kx + dkx, self.ky + dky)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Rectangular chart of the BZ with per-axis periodicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BzDomain {
    pub kx_range: (f64, f64),
    pub ky_range: (f64, f64),
    pub kx_periodic: bool,
    pub ky_periodic: bool,
    /// Width of the strips dropped next to non-periodic edges when scanning for zeros.
    pub excluded_boundary_margin: f64,
}

impl BzDomain {
    pub fn new(
        kx_range: (f64, f64),
        ky_range: (f64, f64),
        kx_periodic: bool,
        ky_periodic: bool,
        excluded_boundary_margin: f64,
    ) -> Result<Self> {
        let domain = Self {
            kx_range,
            ky_range,
            kx_periodic,
            ky_periodic,
            excluded_boundary_margin,
        };
        let (wx, wy) = (domain.width(Axis::X), domain.width(Axis::Y));
        if !(wx.is_finite() && wy.is_finite() && wx > 0.0 && wy > 0.0) {
            return Err(Error::Precondition(format!(
                "BZ interval widths must be positive, got {wx} and {wy}"
            )));
        }
        if !(excluded_boundary_margin >= 0.0 && excluded_boundary_margin < 0.5 * wx.min(wy)) {
            return Err(Error::Precondition(format!(
                "excluded boundary margin {excluded_boundary_margin} must lie in [0, {})",
                0.5 * wx.min(wy)
            )));
        }
        Ok(domain)
    }

    /// `[-π, π]²`, periodic in both axes.
    pub fn torus() -> Self {
        Self {
            kx_range: (-PI, PI),
            ky_range: (-PI, PI),
            kx_periodic: true,
            ky_periodic: true,
            excluded_boundary_margin: 0.0,
        }
    }

    /// Polar chart `kx ∈ [0, π]` (poles at the edges), azimuth `ky ∈ [0, 2π]` periodic.
    pub fn sphere() -> Self {
        Self {
            kx_range: (0.0, PI),
            ky_range: (0.0, TAU),
            kx_periodic: false,
            ky_periodic: true,
            excluded_boundary_margin: 0.02 * PI,
        }
    }

    pub fn range(&self, axis: Axis) -> (f64, f64) {
        match axis {
            Axis::X => self.kx_range,
            Axis::Y => self.ky_range,
        }
    }

    pub fn width(&self, axis: Axis) -> f64 {
        let (lo, hi) = self.range(axis);
        hi - lo
    }

    pub fn periodic(&self, axis: Axis) -> bool {
        match axis {
            Axis::X => self.kx_periodic,
            Axis::Y => self.ky_periodic,
        }
    }

    pub fn area(&self) -> f64 {
        self.width(Axis::X) * self.width(Axis::Y)
    }

    /// Central-difference step for an axis: `1e-5 × width / 2π`.
    pub fn fd_step(&self, axis: Axis) -> f64 {
        1e-5 * self.width(axis) / TAU
    }

    fn wrap(&self, axis: Axis, value: f64) -> f64 {
        if !self.periodic(axis) {
            return value;
        }
        let (lo, _) = self.range(axis);
        let w = self.width(axis);
        let r = lo + (value - lo).rem_euclid(w);
        if r >= lo + w {
            lo
        } else {
            r
        }
    }

    /// Maps periodic coordinates into the half-open fundamental interval.
    pub fn canonical(&self, k: BrillouinPoint) -> BrillouinPoint {
        BrillouinPoint::new(self.wrap(Axis::X, k.kx), self.wrap(Axis::Y, k.ky))
    }

    /// Signed separation `a - b` along an axis, taken modulo the period when periodic.
    pub fn axis_delta(&self, axis: Axis, a: f64, b: f64) -> f64 {
        let d = a - b;
        if !self.periodic(axis) {
            return d;
        }
        let w = self.width(axis);
        let d = d.rem_euclid(w);
        if d > 0.5 * w {
            d - w
        } else {
            d
        }
    }

    /// Euclidean distance on the quotient (periodic axes identified).
    pub fn quotient_distance(&self, a: BrillouinPoint, b: BrillouinPoint) -> f64 {
        self.axis_delta(Axis::X, a.kx, b.kx)
            .hypot(self.axis_delta(Axis::Y, a.ky, b.ky))
    }

    /// True when the point sits inside a strip excluded next to a non-periodic edge.
    pub fn in_excluded_strip(&self, k: BrillouinPoint) -> bool {
        let m = self.excluded_boundary_margin;
        [(Axis::X, k.kx), (Axis::Y, k.ky)]
            .into_iter()
            .any(|(axis, v)| {
                if self.periodic(axis) {
                    return false;
                }
                let (lo, hi) = self.range(axis);
                v < lo + m || v > hi - m
            })
    }
}

/// Named real parameters of a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(BTreeMap<String, f64>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_owned(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_owned(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Complex coefficient vector of `h·σ`. Dot and cross products are bilinear
/// (no conjugation), which is what the complex band energy needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HVector(pub [Complex64; 3]);

impl HVector {
    pub fn new(x: Complex64, y: Complex64, z: Complex64) -> Self {
        Self([x, y, z])
    }

    pub fn real(x: f64, y: f64, z: f64) -> Self {
        Self([x.into(), y.into(), z.into()])
    }

    pub fn from_parts(re: [f64; 3], im: [f64; 3]) -> Self {
        Self([0, 1, 2].map(|i| Complex64::new(re[i], im[i])))
    }

    pub fn zero() -> Self {
        Self::real(0.0, 0.0, 0.0)
    }

    pub fn dot(&self, other: &Self) -> Complex64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(&self, other: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = other.0;
        Self([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(self.0.map(|c| c * s))
    }

    pub fn re(&self) -> [f64; 3] {
        self.0.map(|c| c.re)
    }

    pub fn im(&self) -> [f64; 3] {
        self.0.map(|c| c.im)
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|c| c.im == 0.0)
    }

    /// Hermitian norm `sqrt(Σ|h_i|²)`.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Add for HVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self([0, 1, 2].map(|i| self.0[i] + rhs.0[i]))
    }
}

impl Sub for HVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self([0, 1, 2].map(|i| self.0[i] - rhs.0[i]))
    }
}

impl Mul<f64> for HVector {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self(self.0.map(|c| c * rhs))
    }
}

/// The manifold tangent vectors `∂h/∂kx`, `∂h/∂ky`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentBasis {
    pub d_kx: HVector,
    pub d_ky: HVector,
}

/// A k ↦ h map. Implementations must be pure.
pub trait HField: Send + Sync + fmt::Debug {
    fn h(&self, k: BrillouinPoint) -> HVector;

    /// Analytic tangent basis, when available.
    fn dh(&self, _k: BrillouinPoint) -> Option<TangentBasis> {
        None
    }
}

/// Adapts a closure into an [`HField`] (derivatives by finite differences).
pub struct FnField<F>(pub F);

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnField")
    }
}

impl<F> HField for FnField<F>
where
    F: Fn(BrillouinPoint) -> HVector + Send + Sync,
{
    fn h(&self, k: BrillouinPoint) -> HVector {
        (self.0)(k)
    }
}

#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub domain: BzDomain,
    pub params: ParamSet,
    pub hermitian: bool,
    /// Euler characteristic of the target manifold, when known.
    pub expected_chi: Option<i32>,
    /// Soft precondition violations (the model is still evaluable).
    pub warnings: Vec<String>,
    field: Arc<dyn HField>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("params", &self.params)
            .field("hermitian", &self.hermitian)
            .finish_non_exhaustive()
    }
}

/// Two specs are equal when they describe the same model with the same parameters.
impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.domain == other.domain
            && self.params == other.params
            && self.hermitian == other.hermitian
    }
}

impl ModelSpec {
    /// Wraps a user-supplied field. The `hermitian` flag is checked on a
    /// deterministic sample of BZ points.
    pub fn custom(
        name: impl Into<String>,
        domain: BzDomain,
        params: ParamSet,
        hermitian: bool,
        field: Arc<dyn HField>,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            domain,
            params,
            hermitian,
            expected_chi: None,
            warnings: Vec::new(),
            field,
        };
        if hermitian {
            let n = 16;
            for i in 0..n {
                for j in 0..n {
                    let k = spec.mesh_point(i, j, n);
                    if !spec.h(k).is_real() {
                        return Err(Error::Precondition(format!(
                            "model `{}` is flagged Hermitian but h({}, {}) is complex",
                            spec.name, k.kx, k.ky
                        )));
                    }
                }
            }
        }
        Ok(spec)
    }

    fn mesh_point(&self, i: usize, j: usize, n: usize) -> BrillouinPoint {
        let (x0, _) = self.domain.kx_range;
        let (y0, _) = self.domain.ky_range;
        BrillouinPoint::new(
            x0 + (i as f64 + 0.5) * self.domain.width(Axis::X) / n as f64,
            y0 + (j as f64 + 0.5) * self.domain.width(Axis::Y) / n as f64,
        )
    }

    pub fn h(&self, k: BrillouinPoint) -> HVector {
        self.field.h(k)
    }

    pub fn dh_analytic(&self, k: BrillouinPoint) -> Option<TangentBasis> {
        self.field.dh(k)
    }

    pub fn has_analytic_dh(&self) -> bool {
        self.field.dh(BrillouinPoint::new(0.0, 0.0)).is_some()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name)
    }

    fn with_expected_chi(mut self, chi: i32) -> Self {
        self.expected_chi = Some(chi);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereField {
    pub r: f64,
    pub a: f64,
}

impl HField for SphereField {
    fn h(&self, k: BrillouinPoint) -> HVector {
        let (sx, cx) = k.kx.sin_cos();
        let (sy, cy) = k.ky.sin_cos();
        HVector::real(self.r * sx * cy + self.a, self.r * sx * sy, self.r * cx)
    }

    fn dh(&self, k: BrillouinPoint) -> Option<TangentBasis> {
        let r = self.r;
        let (sx, cx) = k.kx.sin_cos();
        let (sy, cy) = k.ky.sin_cos();
        Some(TangentBasis {
            d_kx: HVector::real(r * cx * cy, r * cx * sy, -r * sx),
            d_ky: HVector::real(-r * sx * sy, r * sx * cy, 0.0),
        })
    }
}

/// Distance from the symmetry axis of the torus surface, and its ky-derivative.
fn torus_r0(big_r: f64, r: f64, ky: f64) -> (f64, f64) {
    let (sy, cy) = ky.sin_cos();
    let r0 = ((r * sy).powi(2) + (big_r + r * cy).powi(2)).sqrt();
    (r0, -big_r * r * sy / r0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusField {
    pub big_r: f64,
    pub r: f64,
    pub a: f64,
}

impl HField for TorusField {
    fn h(&self, k: BrillouinPoint) -> HVector {
        let (r0, _) = torus_r0(self.big_r, self.r, k.ky);
        let (sx, cx) = k.kx.sin_cos();
        HVector::real(r0 * cx + self.a, r0 * sx, self.r * k.ky.sin())
    }

    fn dh(&self, k: BrillouinPoint) -> Option<TangentBasis> {
        let (r0, dr0) = torus_r0(self.big_r, self.r, k.ky);
        let (sx, cx) = k.kx.sin_cos();
        Some(TangentBasis {
            d_kx: HVector::real(-r0 * sx, r0 * cx, 0.0),
            d_ky: HVector::real(dr0 * cx, dr0 * sx, self.r * k.ky.cos()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NhTorusField {
    pub big_r: f64,
    pub r: f64,
    pub c: f64,
    pub delta: [f64; 3],
    /// Adds the constant `c` to `Im hx` as well as `Re hx`.
    pub imag_shift: bool,
}

impl HField for NhTorusField {
    fn h(&self, k: BrillouinPoint) -> HVector {
        let (r0, _) = torus_r0(self.big_r, self.r, k.ky);
        let (sx, cx) = k.kx.sin_cos();
        let base = [r0 * cx, r0 * sx, self.r * k.ky.sin()];
        let shift_im = if self.imag_shift { self.c } else { 0.0 };
        HVector::from_parts(
            [base[0] + self.c, base[1], base[2]],
            [
                self.delta[0] * base[0] + shift_im,
                self.delta[1] * base[1],
                self.delta[2] * base[2],
            ],
        )
    }

    fn dh(&self, k: BrillouinPoint) -> Option<TangentBasis> {
        let (r0, dr0) = torus_r0(self.big_r, self.r, k.ky);
        let (sx, cx) = k.kx.sin_cos();
        let f = self.delta.map(|d| Complex64::new(1.0, d));
        Some(TangentBasis {
            d_kx: HVector::new(f[0] * (-r0 * sx), f[1] * (r0 * cx), 0.0.into()),
            d_ky: HVector::new(
                f[0] * (dr0 * cx),
                f[1] * (dr0 * sx),
                f[2] * (self.r * k.ky.cos()),
            ),
        })
    }
}

fn finite_params(model: &str, values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(Error::InvalidParameter {
                model: model.to_owned(),
                message: format!("{name} = {v} is not finite"),
            });
        }
    }
    Ok(())
}

fn soft_check(warnings: &mut Vec<String>, ok: bool, message: String) {
    if !ok {
        warnings.push(message);
    }
}

fn torus_radii(model: &str, big_r: f64, r: f64) -> Result<()> {
    if !(big_r > r && r > 0.0) {
        return Err(Error::InvalidParameter {
            model: model.to_owned(),
            message: format!("requires R > r > 0, got R = {big_r}, r = {r}"),
        });
    }
    Ok(())
}

pub fn builtin_sphere(r: f64, a: f64) -> Result<ModelSpec> {
    finite_params("sphere", &[("r", r), ("a", a)])?;
    if r <= 0.0 {
        return Err(Error::InvalidParameter {
            model: "sphere".into(),
            message: format!("requires r > 0, got r = {r}"),
        });
    }
    let mut warnings = Vec::new();
    soft_check(
        &mut warnings,
        a > 0.0,
        format!("sphere: a = {a} outside the nominal range a > 0"),
    );
    let mut spec = ModelSpec::custom(
        "sphere",
        BzDomain::sphere(),
        ParamSet::new().with("r", r).with("a", a),
        true,
        Arc::new(SphereField { r, a }),
    )?
    .with_expected_chi(2);
    spec.warnings = warnings;
    Ok(spec)
}

pub fn builtin_torus(big_r: f64, r: f64, a: f64) -> Result<ModelSpec> {
    finite_params("torus", &[("R", big_r), ("r", r), ("a", a)])?;
    torus_radii("torus", big_r, r)?;
    let mut warnings = Vec::new();
    soft_check(
        &mut warnings,
        a > 0.0 && a < r,
        format!("torus: a = {a} outside the nominal range 0 < a < r = {r}"),
    );
    let mut spec = ModelSpec::custom(
        "torus",
        BzDomain::torus(),
        ParamSet::new().with("R", big_r).with("r", r).with("a", a),
        true,
        Arc::new(TorusField { big_r, r, a }),
    )?
    .with_expected_chi(0);
    spec.warnings = warnings;
    Ok(spec)
}

pub fn builtin_nh_torus(big_r: f64, r: f64, c: f64, delta: [f64; 3]) -> Result<ModelSpec> {
    builtin_nh_torus_with(big_r, r, c, delta, true)
}

pub fn builtin_nh_torus_with(
    big_r: f64,
    r: f64,
    c: f64,
    delta: [f64; 3],
    imag_shift: bool,
) -> Result<ModelSpec> {
    finite_params(
        "nh_torus",
        &[
            ("R", big_r),
            ("r", r),
            ("c", c),
            ("delta_x", delta[0]),
            ("delta_y", delta[1]),
            ("delta_z", delta[2]),
        ],
    )?;
    torus_radii("nh_torus", big_r, r)?;
    let mut warnings = Vec::new();
    soft_check(
        &mut warnings,
        c > 0.0 && c < r,
        format!("nh_torus: c = {c} outside the nominal range 0 < c < r = {r}"),
    );
    let field = NhTorusField {
        big_r,
        r,
        c,
        delta,
        imag_shift,
    };
    // Whether h is actually real depends on δ and the imaginary shift.
    let hermitian = delta == [0.0; 3] && (!imag_shift || c == 0.0);
    let mut spec = ModelSpec::custom(
        "nh_torus",
        BzDomain::torus(),
        ParamSet::new()
            .with("R", big_r)
            .with("r", r)
            .with("c", c)
            .with("delta_x", delta[0])
            .with("delta_y", delta[1])
            .with("delta_z", delta[2]),
        hermitian,
        Arc::new(field),
    )?
    .with_expected_chi(0);
    spec.warnings = warnings;
    Ok(spec)
}

/// Parameter names each built-in takes, in canonical spelling.
pub fn builtin_param_names(model: &str) -> Result<&'static [&'static str]> {
    match model {
        "sphere" => Ok(&["r", "a"]),
        "torus" => Ok(&["R", "r", "a"]),
        "nh_torus" => Ok(&["R", "r", "c", "delta_x", "delta_y", "delta_z"]),
        other => Err(Error::UnknownModel(other.to_owned())),
    }
}

/// `a` and `c` name the same shift parameter.
fn alias_of(name: &str) -> Option<&'static str> {
    match name {
        "a" => Some("c"),
        "c" => Some("a"),
        _ => None,
    }
}

/// Builds a built-in from a parameter set, enforcing the exact parameter list.
pub fn build_builtin(model: &str, params: &ParamSet, imag_shift: bool) -> Result<ModelSpec> {
    let names = builtin_param_names(model)?;
    let mut resolved = BTreeMap::new();
    for (name, value) in params.iter() {
        let canonical = if names.contains(&name) {
            names.iter().find(|n| **n == name).copied()
        } else {
            alias_of(name).and_then(|alt| names.iter().find(|n| **n == alt).copied())
        };
        let Some(canonical) = canonical else {
            return Err(Error::UnknownParameter {
                model: model.to_owned(),
                name: name.to_owned(),
            });
        };
        if resolved.insert(canonical, value).is_some() {
            return Err(Error::InvalidParameter {
                model: model.to_owned(),
                message: format!("parameter `{canonical}` given twice (a and c are aliases)"),
            });
        }
    }
    let get = |n: &str| {
        resolved
            .get(n)
            .copied()
            .ok_or_else(|| Error::MissingParameter {
                model: model.to_owned(),
                name: n.to_owned(),
            })
    };
    match model {
        "sphere" => builtin_sphere(get("r")?, get("a")?),
        "torus" => builtin_torus(get("R")?, get("r")?, get("a")?),
        "nh_torus" => builtin_nh_torus_with(
            get("R")?,
            get("r")?,
            get("c")?,
            [get("delta_x")?, get("delta_y")?, get("delta_z")?],
            imag_shift,
        ),
        other => Err(Error::UnknownModel(other.to_owned())),
    }
}

fn default_true() -> bool {
    true
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub imag_shift: bool,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let mut params = ParamSet::new();
        for (k, v) in &self.params {
            params.insert(k, *v);
        }
        build_builtin(&self.model, &params, self.imag_shift)
    }
}

pub fn parse_model_config(text: &str, path: &Path) -> Result<ModelSpec> {
    let config: ModelConfig = serde_json::from_str(text).map_err(|e| Error::Config {
        path: path.to_owned(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    config.build()
}

pub fn load_model_config(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    parse_model_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: HVector, b: HVector, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn sphere_values() {
        let m = builtin_sphere(5.0, 1.0).unwrap();
        let h = m.h(BrillouinPoint::new(PI / 2.0, PI));
        assert!(close(h, HVector::real(-4.0, 0.0, 0.0), 1e-12), "{h:?}");
        let h = m.h(BrillouinPoint::new(PI / 2.0, PI / 2.0));
        assert!(close(h, HVector::real(1.0, 5.0, 0.0), 1e-12));
        let m = builtin_sphere(1.0, 1.0).unwrap();
        assert_eq!(
            m.h(BrillouinPoint::new(0.0, 0.0)),
            HVector::real(1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn torus_values() {
        let m = builtin_torus(2.0, 1.0, 1.0).unwrap();
        assert!(close(
            m.h(BrillouinPoint::new(0.0, 0.0)),
            HVector::real(4.0, 0.0, 0.0),
            1e-15
        ));
        assert!(m.h(BrillouinPoint::new(PI, PI)).norm() < 1e-15);
        // r0 = sqrt(1 + 4) at ky = -π/2.
        let m = builtin_torus(2.0, 1.0, 0.5).unwrap();
        let h = m.h(BrillouinPoint::new(PI / 2.0, -PI / 2.0));
        assert!(
            close(h, HVector::real(0.5, 5f64.sqrt(), -1.0), 1e-15),
            "{h:?}"
        );
    }

    #[test]
    fn nh_torus_values() {
        let m = builtin_nh_torus(2.0, 1.0, 0.5, [0.5, 0.5, 0.2]).unwrap();
        assert!(!m.hermitian);
        let h = m.h(BrillouinPoint::new(0.0, 0.0));
        let want = HVector::new(Complex64::new(3.5, 2.0), 0.0.into(), 0.0.into());
        assert!(close(h, want, 1e-15));
        let h = m.h(BrillouinPoint::new(PI / 2.0, 0.0));
        let want = HVector::from_parts([0.5, 3.0, 0.0], [0.5, 1.5, 0.0]);
        assert!(close(h, want, 1e-15), "{h:?}");
    }

    #[test]
    fn nh_torus_reduces_to_torus() {
        let nh = builtin_nh_torus(2.0, 1.0, 0.0, [0.0; 3]).unwrap();
        assert!(nh.hermitian);
        let t = builtin_torus(2.0, 1.0, 0.0).unwrap();
        for i in 0..20 {
            let k = BrillouinPoint::new(-3.0 + 0.3 * i as f64, 1.7 - 0.25 * i as f64);
            assert_eq!(nh.h(k), t.h(k));
        }
        let nh = builtin_nh_torus_with(2.0, 1.0, 0.4, [0.0; 3], false).unwrap();
        assert!(nh.hermitian);
        let t = builtin_torus(2.0, 1.0, 0.4).unwrap();
        let k = BrillouinPoint::new(0.3, -2.2);
        assert!(close(nh.h(k), t.h(k), 1e-15));
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            builtin_sphere(-1.0, 1.0),
            Err(Error::InvalidParameter { .. })
        ));
        let err = builtin_torus(1.0, 2.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("requires R > r"), "{err}");
        assert!(builtin_nh_torus(2.0, 0.0, 0.5, [0.0; 3]).is_err());
        assert!(builtin_torus(2.0, 1.0, f64::NAN).is_err());
        // Soft bounds only warn.
        let m = builtin_torus(2.0, 1.0, 1.0).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert!(builtin_sphere(5.0, 0.0).unwrap().warnings.len() == 1);
    }

    #[test]
    fn canonical_wraps_periodic_axes_only() {
        let d = BzDomain::sphere();
        let k = d.canonical(BrillouinPoint::new(4.0, TAU + 0.5));
        assert_eq!(k.kx, 4.0);
        assert!((k.ky - 0.5).abs() < 1e-15);
        let d = BzDomain::torus();
        let k = d.canonical(BrillouinPoint::new(PI, -PI - 0.25));
        assert!((k.kx + PI).abs() < 1e-15);
        assert!((k.ky - (PI - 0.25)).abs() < 1e-14);
        assert!(
            d.quotient_distance(BrillouinPoint::new(PI, PI), BrillouinPoint::new(-PI, -PI)) < 1e-15
        );
    }

    #[test]
    fn domain_validation() {
        assert!(BzDomain::new((0.0, 1.0), (0.0, 0.0), false, false, 0.0).is_err());
        assert!(BzDomain::new((0.0, 1.0), (0.0, 1.0), false, false, 0.5).is_err());
        assert!(BzDomain::new((0.0, 1.0), (0.0, 1.0), false, false, 0.1).is_ok());
    }

    #[test]
    fn custom_rejects_inconsistent_hermitian_flag() {
        #[derive(Debug)]
        struct Complexish;
        impl HField for Complexish {
            fn h(&self, _k: BrillouinPoint) -> HVector {
                HVector::from_parts([1.0, 0.0, 0.0], [0.1, 0.0, 0.0])
            }
        }
        let r = ModelSpec::custom(
            "c",
            BzDomain::torus(),
            ParamSet::new(),
            true,
            Arc::new(Complexish),
        );
        assert!(r.is_err());
    }

    #[test]
    fn config_round_trip() {
        let p = Path::new("inline.json");
        let m =
            parse_model_config(r#"{"model": "sphere", "params": {"r": 5, "a": 1}}"#, p).unwrap();
        assert_eq!(m, builtin_sphere(5.0, 1.0).unwrap());
        let m =
            parse_model_config(r#"{"model": "sphere", "params": {"r": 5, "c": 1}}"#, p).unwrap();
        assert_eq!(m, builtin_sphere(5.0, 1.0).unwrap());
        let m = parse_model_config(
            r#"{"model": "nh_torus", "params": {"R": 2, "r": 1, "c": 0.5,
                "delta_x": 0.5, "delta_y": 0.5, "delta_z": 0.2}, "imag_shift": false}"#,
            p,
        )
        .unwrap();
        assert_eq!(
            m.h(BrillouinPoint::new(0.0, 0.0)).0[0],
            Complex64::new(3.5, 1.5)
        );
    }

    #[test]
    fn config_errors() {
        let p = Path::new("inline.json");
        let e = parse_model_config(r#"{"model": "sphere", "params": {"r": -1, "a": 1}}"#, p);
        assert!(matches!(e, Err(Error::InvalidParameter { .. })));
        let e = parse_model_config(r#"{"model": "torus", "params": {"r": 1, "a": 1}}"#, p);
        assert!(matches!(e, Err(Error::MissingParameter { ref name, .. }) if name == "R"));
        let e = parse_model_config(
            r#"{"model": "torus", "params": {"R": 2, "r": 1, "a": 1, "q": 0}}"#,
            p,
        );
        assert!(matches!(e, Err(Error::UnknownParameter { .. })));
        let e = parse_model_config(r#"{"model": "klein", "params": {}}"#, p);
        assert!(matches!(e, Err(Error::UnknownModel(_))));
        let e = parse_model_config(
            r#"{"model": "sphere", "params": {"r": 1, "a": 1}, "x": 1}"#,
            p,
        );
        assert!(matches!(e, Err(Error::Config { .. })));
        let e = parse_model_config("{\n \"model\": \"sphere\",\n \"params\": {\"r\": }\n}", p)
            .unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = parse_model_config(
            r#"{"model": "sphere", "params": {"r": 1, "a": 1, "c": 1}}"#,
            p,
        );
        assert!(matches!(e, Err(Error::InvalidParameter { .. })));
    }
}
