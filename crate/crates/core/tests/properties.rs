//! Property tests against independent oracles.

use std::f64::consts::{PI, TAU};

use bloch_topo::chern::{chern_quadrature, min_gap};
use bloch_topo::dos::dos_histogram_band;
use bloch_topo::field::{band_energy, gap_squared, velocity, velocity_band, Band, Part};
use bloch_topo::models::{builtin_nh_torus, builtin_sphere, builtin_torus, Axis};
use bloch_topo::zeros::{
    euler_characteristic, euler_characteristic_with, loop_degree, scan_zeros, PlanarField,
    ZeroKind, ZeroSearchOptions,
};
use bloch_topo::{BrillouinPoint, BzDomain, ModelSpec, Result};
use num_complex::Complex64;
use proptest::prelude::*;

fn models() -> Vec<ModelSpec> {
    vec![
        builtin_sphere(5.0, 1.0).unwrap(),
        builtin_torus(2.0, 1.0, 0.5).unwrap(),
        builtin_nh_torus(2.0, 1.0, 0.5, [0.5, 0.5, 0.2]).unwrap(),
    ]
}

fn point_in(d: &BzDomain, u: f64, v: f64) -> BrillouinPoint {
    let (x0, x1) = d.range(Axis::X);
    let (y0, y1) = d.range(Axis::Y);
    BrillouinPoint::new(x0 + u * (x1 - x0), y0 + v * (y1 - y0))
}

/// Away from gap closures, branch cuts of the square root and chart edges.
fn regular(m: &ModelSpec, k: BrillouinPoint) -> bool {
    let hh = m.h(k).dot(&m.h(k));
    let step = 1e-3;
    hh.norm() > 1e-2
        && (hh.arg().abs() < PI - 0.05)
        && !m.domain.in_excluded_strip(k)
        && (m.domain.kx_periodic
            || (k.kx - m.domain.kx_range.0 > step && m.domain.kx_range.1 - k.kx > step))
}

/// Central differences of `E+` with a fixed step, independent of the library stencil.
fn fd_gradient(m: &ModelSpec, k: BrillouinPoint) -> [Complex64; 2] {
    let s = 1e-5;
    let e = |dx: f64, dy: f64| band_energy(m, k.offset(dx, dy)).e_plus;
    [
        (e(s, 0.0) - e(-s, 0.0)) / (2.0 * s),
        (e(0.0, s) - e(0.0, -s)) / (2.0 * s),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn velocity_matches_energy_gradient(u in 0.0..1.0f64, v in 0.0..1.0f64) {
        for m in models() {
            let k = point_in(&m.domain, u, v);
            prop_assume!(regular(&m, k));
            let got = velocity(&m, k).unwrap();
            let want = fd_gradient(&m, k);
            let diff = ((got.vx - want[0]).norm_sqr() + (got.vy - want[1]).norm_sqr()).sqrt();
            let scale = (got.vx.norm_sqr() + got.vy.norm_sqr()).sqrt().max(1e-3);
            prop_assert!(diff / scale < 1e-6, "{} at {:?}: rel {}", m.name, k, diff / scale);
        }
    }

    #[test]
    fn lower_band_velocity_is_negated(u in 0.0..1.0f64, v in 0.0..1.0f64) {
        for m in models() {
            let k = point_in(&m.domain, u, v);
            prop_assume!(gap_squared(&m, k) > 1e-6);
            let up = velocity_band(&m, k, Band::Upper).unwrap();
            let lo = velocity_band(&m, k, Band::Lower).unwrap();
            prop_assert_eq!(lo.vx, -up.vx);
            prop_assert_eq!(lo.vy, -up.vy);
        }
    }

    #[test]
    fn hermitian_models_are_real(u in 0.0..1.0f64, v in 0.0..1.0f64) {
        for m in models().into_iter().filter(|m| m.hermitian) {
            let k = point_in(&m.domain, u, v);
            prop_assert_eq!(m.h(k).im(), [0.0; 3]);
            if gap_squared(&m, k) > 1e-6 {
                let vel = velocity(&m, k).unwrap();
                prop_assert_eq!(vel.vx.im, 0.0);
                prop_assert_eq!(vel.vy.im, 0.0);
            }
        }
    }

    #[test]
    fn periodic_images_have_equal_h(u in 0.0..1.0f64, v in 0.0..1.0f64, nx in -2i32..=2, ny in -2i32..=2) {
        for m in models() {
            let k = point_in(&m.domain, u, v);
            let sx = if m.domain.kx_periodic { nx as f64 * m.domain.width(Axis::X) } else { 0.0 };
            let sy = if m.domain.ky_periodic { ny as f64 * m.domain.width(Axis::Y) } else { 0.0 };
            let a = m.h(m.domain.canonical(k));
            let b = m.h(m.domain.canonical(k.offset(sx, sy)));
            for (x, y) in a.re().iter().zip(b.re()).chain(a.im().iter().zip(b.im())) {
                prop_assert!((x - y).abs() < 1e-12, "{} {:?}", m.name, k);
            }
        }
    }

    #[test]
    fn torus_radius_is_even_in_ky(kx in -PI..PI, ky in -PI..PI, a in 0.0..1.5f64) {
        let m = builtin_torus(2.0, 1.0, a).unwrap();
        let (p, q) = (m.h(BrillouinPoint::new(kx, ky)), m.h(BrillouinPoint::new(kx, -ky)));
        prop_assert!((p.re()[0] - q.re()[0]).abs() < 1e-14);
        prop_assert!((p.re()[1] - q.re()[1]).abs() < 1e-14);
        prop_assert!((p.re()[2] + q.re()[2]).abs() < 1e-14);
    }

    #[test]
    fn hermitian_velocity_is_curl_free(u in 0.05..0.95f64, v in 0.05..0.95f64) {
        let side = 1e-2;
        let n = 64;
        for m in models().into_iter().filter(|m| m.hermitian) {
            let k0 = point_in(&m.domain, u, v);
            prop_assume!(gap_squared(&m, k0) > 1e-2);
            // Midpoint rule on the four edges, counter-clockwise.
            let mut circ = 0.0;
            for j in 0..n {
                let t = (j as f64 + 0.5) / n as f64 * side;
                let h = side / n as f64;
                let vx = |x: f64, y: f64| velocity(&m, k0.offset(x, y)).unwrap().vx.re;
                let vy = |x: f64, y: f64| velocity(&m, k0.offset(x, y)).unwrap().vy.re;
                circ += h * (vx(t, 0.0) + vy(side, t) - vx(t, side) - vy(0.0, t));
            }
            prop_assert!(circ.abs() < 1e-6 * side * side, "{}: {}", m.name, circ);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn loop_degree_is_jacobian_sign(a in 0.05..0.95f64, big_r in 1.5..3.0f64) {
        let m = builtin_torus(big_r, 1.0, a).unwrap();
        let report = euler_characteristic(&m, Part::Re, 32).unwrap();
        for z in &report.zeros {
            if let Some(det) = z.jac_det.filter(|_| z.kind != ZeroKind::Degenerate && z.kind != ZeroKind::SingularEnergy) {
                let d = loop_degree(&m, Part::Re, z.k0, 1e-3 * TAU, 256).unwrap();
                prop_assert_eq!(d, det.signum() as i32);
            }
        }
    }

    #[test]
    fn window_offset_leaves_zero_set_unchanged(ox in -PI..PI, oy in -PI..PI) {
        for m in [builtin_torus(2.0, 1.0, 0.6).unwrap(), builtin_sphere(5.0, 1.0).unwrap()] {
            let base = euler_characteristic_with(&m, Part::Re, &ZeroSearchOptions::with_grid(32)).unwrap();
            let opts = ZeroSearchOptions { window_offset: (ox, oy), ..ZeroSearchOptions::with_grid(32) };
            let moved = euler_characteristic_with(&m, Part::Re, &opts).unwrap();
            prop_assert_eq!(base.chi, moved.chi);
            prop_assert_eq!(base.zeros.len(), moved.zeros.len());
            for z in &base.zeros {
                let twin = moved.zeros.iter().find(|w| m.domain.quotient_distance(w.k0, z.k0) < 1e-7);
                prop_assert!(twin.is_some_and(|w| w.index == z.index), "{} lost {:?}", m.name, z.k0);
            }
        }
    }

    #[test]
    fn product_fields_recover_prescribed_zeros(
        spec in prop::collection::vec((-2.4..2.4f64, -2.4..2.4f64, any::<bool>()), 1..=5)
    ) {
        let min_sep = spec.iter().enumerate().flat_map(|(i, p)| spec[i + 1..].iter().map(move |q| {
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
        })).fold(f64::INFINITY, f64::min);
        prop_assume!(min_sep > 0.6);
        let field = ProductField::new(spec.clone());
        let scan = scan_zeros(&field, &ZeroSearchOptions::with_grid(64)).unwrap();
        prop_assert_eq!(scan.zeros.len(), spec.len());
        let want: i32 = spec.iter().map(|p| if p.2 { 1 } else { -1 }).sum();
        let got: i32 = scan.zeros.iter().map(|z| z.index).sum();
        prop_assert_eq!(got, want);
        for &(x, y, positive) in &spec {
            let z = scan.zeros.iter().find(|z| (z.k0.kx - x).hypot(z.k0.ky - y) < 1e-8);
            prop_assert!(z.is_some(), "missed ({x}, {y}) in {:?}", scan.zeros.iter().map(|z| z.k0).collect::<Vec<_>>());
            prop_assert_eq!(z.unwrap().index, if positive { 1 } else { -1 });
        }
    }

    #[test]
    fn dos_is_normalized_and_mirrored(a in 0.1..1.9f64, bins in 16usize..80) {
        let m = builtin_torus(2.0, 1.0, a).unwrap();
        let up = dos_histogram_band(&m, Part::Re, Band::Upper, 64, bins).unwrap();
        let lo = dos_histogram_band(&m, Part::Re, Band::Lower, 64, bins).unwrap();
        prop_assert!((up.total() - 1.0).abs() < 1e-9);
        prop_assert!((lo.total() - 1.0).abs() < 1e-9);
        let mirrored: Vec<f64> = up.bin_edges.iter().rev().map(|e| -e).collect();
        prop_assert_eq!(&lo.bin_edges, &mirrored);
        let reversed: Vec<f64> = up.counts.iter().rev().copied().collect();
        prop_assert_eq!(&lo.counts, &reversed);
    }
}

/// `Π (z - z_j)` or its conjugate factor per zero, as a real planar field.
struct ProductField {
    zeros: Vec<(f64, f64, bool)>,
    domain: BzDomain,
}

impl ProductField {
    fn new(zeros: Vec<(f64, f64, bool)>) -> Self {
        Self {
            zeros,
            domain: BzDomain::new((-PI, PI), (-PI, PI), false, false, 0.0).unwrap(),
        }
    }
}

impl PlanarField for ProductField {
    fn domain(&self) -> &BzDomain {
        &self.domain
    }

    fn eval(&self, k: BrillouinPoint) -> Result<[f64; 2]> {
        let z = Complex64::new(k.kx, k.ky);
        let w = self
            .zeros
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, &(x, y, positive)| {
                let f = z - Complex64::new(x, y);
                acc * if positive { f } else { f.conj() }
            });
        Ok([w.re, w.im])
    }
}

#[test]
fn deformation_keeps_chi() {
    for a in [0.2, 0.4, 0.6, 0.8] {
        let m = builtin_torus(2.0, 1.0, a).unwrap();
        assert_eq!(
            euler_characteristic(&m, Part::Re, 64).unwrap().chi,
            0,
            "torus a = {a}"
        );
    }
    for (r, a) in [(5.0, 1.0), (2.0, 0.5), (1.0, 0.3)] {
        let m = builtin_sphere(r, a).unwrap();
        assert_eq!(
            euler_characteristic(&m, Part::Re, 64).unwrap().chi,
            2,
            "sphere ({r}, {a})"
        );
    }
}

#[test]
fn chi_is_grid_stable() {
    for m in models() {
        let chis: Vec<i32> = [32, 64, 128]
            .iter()
            .map(|&n| euler_characteristic(&m, Part::Re, n).unwrap().chi)
            .collect();
        assert!(
            chis.windows(2).all(|w| w[0] == w[1]),
            "{}: {chis:?}",
            m.name
        );
    }
}

#[test]
fn gapped_chern_converges_with_mesh() {
    for m in [
        builtin_sphere(5.0, 1.0).unwrap(),
        builtin_torus(2.0, 1.0, 0.5).unwrap(),
        builtin_torus(2.0, 1.0, 1.5).unwrap(),
    ] {
        let a = chern_quadrature(&m, 128).unwrap().c_raw;
        let b = chern_quadrature(&m, 256).unwrap().c_raw;
        assert!((a - b).norm() < 1e-4, "{}: {a} vs {b}", m.name);
    }
}

#[test]
fn sphere_chern_does_not_depend_on_a() {
    for a in [0.5, 1.0, 2.0] {
        let m = builtin_sphere(5.0, a).unwrap();
        assert_eq!(chern_quadrature(&m, 128).unwrap().c_int, Some(1), "a = {a}");
    }
}

#[test]
fn hermitian_gap_closure_matches_oracle() {
    // The analytic gap for the torus is |a - (R - r)| at the corner when a < R.
    for a in [0.2, 0.6, 0.95] {
        let m = builtin_torus(2.0, 1.0, a).unwrap();
        let (_, g) = min_gap(&m, 128);
        assert!((g - (1.0 - a)).abs() < 1e-9, "a = {a}: {g}");
        assert!(gap_squared(&m, BrillouinPoint::new(PI, PI)).sqrt() - (1.0 - a) < 1e-12);
    }
}
