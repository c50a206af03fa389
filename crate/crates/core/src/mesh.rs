//! Sampling meshes over a [`BzDomain`].

use crate::models::{Axis, BrillouinPoint, BzDomain};

/// Grid nodes along one axis: periodic axes get `n` nodes in the half-open
/// fundamental interval, non-periodic axes `n` nodes including both ends.
pub fn axis_nodes(domain: &BzDomain, axis: Axis, n: usize) -> Vec<f64> {
    let (lo, hi) = domain.range(axis);
    if domain.periodic(axis) {
        let w = hi - lo;
        (0..n).map(|i| lo + w * i as f64 / n as f64).collect()
    } else if n == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Cell midpoints of an `n`-cell partition of the axis.
pub fn axis_midpoints(domain: &BzDomain, axis: Axis, n: usize) -> Vec<f64> {
    let (lo, hi) = domain.range(axis);
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// Row-major (ky outer, kx inner) product of two axis samplings.
pub fn product(xs: &[f64], ys: &[f64]) -> Vec<BrillouinPoint> {
    ys.iter()
        .flat_map(|&ky| xs.iter().map(move |&kx| BrillouinPoint::new(kx, ky)))
        .collect()
}

pub fn node_mesh(domain: &BzDomain, n: usize) -> Vec<BrillouinPoint> {
    product(
        &axis_nodes(domain, Axis::X, n),
        &axis_nodes(domain, Axis::Y, n),
    )
}
