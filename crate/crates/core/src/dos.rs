//! Density-of-states histograms of the band energy.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::chern::csv_err;
use crate::error::{Error, Result};
use crate::field::{band_energy, Band, Part};
use crate::mesh;
use crate::models::{Axis, BrillouinPoint, ModelSpec};
use crate::zeros::find_zeros;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DosHistogram {
    pub part: Part,
    pub band: Band,
    pub mesh_n: usize,
    pub bin_edges: Vec<f64>,
    /// Density per unit energy; `Σ counts·width = area/(2π)²`.
    pub counts: Vec<f64>,
    pub van_hove_bins: Vec<usize>,
    /// Energies of the velocity zeros used to mark `van_hove_bins`.
    pub zero_energies: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DosHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    pub fn total(&self) -> f64 {
        (0..self.bins())
            .map(|i| self.counts[i] * self.bin_width(i))
            .sum()
    }

    /// Left-closed bin containing `e`; the top edge belongs to the last bin.
    pub fn bin_of(&self, e: f64) -> Option<usize> {
        bin_index(&self.bin_edges, e)
    }
}

fn bin_index(edges: &[f64], e: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    if !(e >= lo && e <= hi) {
        return None;
    }
    let i = ((e - lo) / (hi - lo) * bins as f64).floor() as usize;
    let mut i = i.min(bins - 1);
    // Floor can land one bin off next to an edge.
    while i > 0 && e < edges[i] {
        i -= 1;
    }
    while i + 1 < bins && e >= edges[i + 1] {
        i += 1;
    }
    Some(i)
}

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| (lo * (bins - i) as f64 + hi * i as f64) / bins as f64)
        .collect()
}

fn band_value(model: &ModelSpec, k: BrillouinPoint, part: Part, band: Band) -> f64 {
    part.of(band_energy(model, k).band(band))
}

pub fn dos_histogram(
    model: &ModelSpec,
    part: Part,
    mesh_n: usize,
    bins: usize,
) -> Result<DosHistogram> {
    dos_histogram_band(model, part, Band::Upper, mesh_n, bins)
}

pub fn dos_histogram_band(
    model: &ModelSpec,
    part: Part,
    band: Band,
    mesh_n: usize,
    bins: usize,
) -> Result<DosHistogram> {
    if mesh_n < 64 || bins < 16 {
        return Err(Error::Precondition(format!(
            "dos needs mesh_n >= 64 and bins >= 16, got mesh_n = {mesh_n}, bins = {bins}"
        )));
    }
    let d = &model.domain;
    let xs = mesh::axis_midpoints(d, Axis::X, mesh_n);
    let ys = mesh::axis_midpoints(d, Axis::Y, mesh_n);
    let energies: Vec<f64> = ys
        .par_iter()
        .flat_map_iter(|&ky| {
            xs.iter()
                .map(move |&kx| band_value(model, BrillouinPoint::new(kx, ky), part, band))
        })
        .collect();
    let mut warnings = Vec::new();
    let zero_energies: Vec<f64> = match find_zeros(model, part, 64) {
        Ok(zeros) => zeros
            .iter()
            .map(|z| band_value(model, z.k0, part, band))
            .collect(),
        Err(e) => {
            warnings.push(format!("van Hove bins not marked: {e}"));
            Vec::new()
        }
    };
    // Band extrema are velocity zeros; keep them inside the binned range.
    let lo = energies
        .iter()
        .chain(&zero_energies)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = energies
        .iter()
        .chain(&zero_energies)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let bin_edges = edges(lo, hi, bins);
    let weight = d.area() / (mesh_n * mesh_n) as f64 / (4.0 * PI * PI);
    let mut mass = vec![0.0; bins];
    for &e in &energies {
        if let Some(i) = bin_index(&bin_edges, e) {
            mass[i] += weight;
        }
    }
    let counts = mass
        .iter()
        .enumerate()
        .map(|(i, m)| m / (bin_edges[i + 1] - bin_edges[i]))
        .collect();

    let mut van_hove_bins: Vec<usize> = zero_energies
        .iter()
        .filter_map(|&e| bin_index(&bin_edges, e))
        .collect();
    van_hove_bins.sort_unstable();
    van_hove_bins.dedup();
    Ok(DosHistogram {
        part,
        band,
        mesh_n,
        bin_edges,
        counts,
        van_hove_bins,
        zero_energies,
        warnings,
    })
}

pub fn write_dos_csv<W: Write>(out: W, hist: &DosHistogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "density", "is_van_hove"])
        .map_err(csv_err)?;
    for i in 0..hist.bins() {
        w.write_record([
            hist.bin_edges[i].to_string(),
            hist.bin_edges[i + 1].to_string(),
            hist.counts[i].to_string(),
            hist.van_hove_bins.contains(&i).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_sphere, builtin_torus, BzDomain, FnField, HVector, ParamSet};
    use std::sync::Arc;

    #[test]
    fn normalization() {
        let m = builtin_sphere(5.0, 1.0).unwrap();
        let h = dos_histogram(&m, Part::Re, 64, 32).unwrap();
        // The sphere chart has area 2π², so the total is 1/2.
        assert!((h.total() - 0.5).abs() < 1e-9);
        assert!(h.bin_edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hermitian_imaginary_part_is_one_bin() {
        let m = builtin_torus(2.0, 1.0, 0.5).unwrap();
        let h = dos_histogram(&m, Part::Im, 64, 16).unwrap();
        let full: Vec<_> = h
            .counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0.0)
            .collect();
        assert_eq!(full.len(), 1);
        assert_eq!(h.bin_of(0.0), Some(full[0].0));
        assert!((h.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_band_is_one_bin() {
        let m = ModelSpec::custom(
            "flat",
            BzDomain::torus(),
            ParamSet::new(),
            true,
            Arc::new(FnField(|_k: BrillouinPoint| HVector::real(0.0, 0.0, 2.0))),
        )
        .unwrap();
        let h = dos_histogram(&m, Part::Re, 64, 16).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0.0).count(), 1);
        assert_eq!(h.bin_edges[0], 1.5);
        assert!((h.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn van_hove_bins_flag_zero_energies() {
        let m = builtin_torus(2.0, 1.0, 1.0).unwrap();
        let h = dos_histogram(&m, Part::Re, 128, 64).unwrap();
        // Cone at 0, saddles at 2, maximum at 4.
        for e in [0.0, 4.0] {
            assert!(
                h.zero_energies.iter().any(|z| (z - e).abs() < 1e-9),
                "{:?}",
                h.zero_energies
            );
        }
        assert!(
            h.zero_energies
                .iter()
                .filter(|z| (*z - 2.0).abs() < 1e-9)
                .count()
                == 2
        );
        assert!(!h.van_hove_bins.is_empty());
    }

    #[test]
    fn saddle_bin_grows_with_resolution() {
        // Log divergence at the saddle energy.
        let m = builtin_torus(2.0, 1.0, 1.0).unwrap();
        let peak = |n: usize| {
            let h = dos_histogram(&m, Part::Re, n, n).unwrap();
            h.counts[h.bin_of(2.0).unwrap()]
        };
        let (a, b) = (peak(128), peak(256));
        assert!(b / a > 1.02, "{a} {b}");
    }

    #[test]
    fn small_inputs_rejected() {
        let m = builtin_sphere(5.0, 1.0).unwrap();
        assert!(dos_histogram(&m, Part::Re, 32, 16).is_err());
        assert!(dos_histogram(&m, Part::Re, 64, 8).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = builtin_torus(2.0, 1.0, 0.5).unwrap();
        let h = dos_histogram(&m, Part::Re, 64, 16).unwrap();
        let mut buf = Vec::new();
        write_dos_csv(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin_lo,bin_hi,density,is_van_hove\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
