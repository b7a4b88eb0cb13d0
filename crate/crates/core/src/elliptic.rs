//! Empirical verification that the gradient of the potential is controlled
//! in `L^4` by the `L^{4/3}` norm of the charge, uniformly in resolution,
//! together with the weak-Lebesgue machinery behind that bound.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::norms::{lp_norm, lp_norm_vec};
use crate::spectral::{self, Spectrum};
use crate::{poisson, rngstream};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::io::Write;

/// Ratios measured at one resolution.
#[derive(Debug, Clone, Serialize)]
pub struct ResolutionRatios {
    pub resolution: usize,
    pub ratios: Vec<f64>,
}

/// Outcome of [`elliptic_ratio_test`].
#[derive(Debug, Clone, Serialize)]
pub struct RatioReport {
    pub seed: u64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub per_resolution: Vec<ResolutionRatios>,
}

/// Draw a mean-zero random field with i.i.d. standard normal coefficients
/// on the modes `1 <= |k| <= nx/4`, conjugate-symmetrized so the field is
/// real. Deterministic per `(seed, sample_index)`.
pub fn random_band_limited(grid: Grid, seed: u64, sample_index: u64) -> Result<ScalarField> {
    grid.require_torus()?;
    let mut rng = rngstream::derive_rng(seed, sample_index);
    let mut spec = Spectrum::zeros(grid);
    let kmax = grid.nx as i64 / 4;
    let kmax2 = kmax * kmax;
    // canonical half-lattice: ky > 0, or ky = 0 and kx > 0
    for ky in 0..=kmax {
        for kx in -kmax..=kmax {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let k2 = kx * kx + ky * ky;
            if k2 < 1 || k2 > kmax2 {
                continue;
            }
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *spec.mode_mut(kx, ky) = num_complex::Complex::new(re, im) * 0.5;
            *spec.mode_mut(-kx, -ky) = num_complex::Complex::new(re, -im) * 0.5;
        }
    }
    Ok(spectral::inverse(&spec))
}

/// Ratio `||grad Phi||_{L^4} / ||rho||_{L^{4/3}}` for one charge field.
pub fn gradient_charge_ratio(rho: &ScalarField) -> Result<f64> {
    let phi = poisson::solve_poisson_periodic(rho)?;
    let grad = spectral::gradient(&phi)?;
    let num = lp_norm_vec(&grad, 4.0)?;
    let den = lp_norm(rho, 4.0 / 3.0)?;
    Ok(num / den)
}

/// Sample the ratio over seeded random charges at several resolutions.
/// The report carries every ratio; boundedness across resolutions is the
/// caller's assertion.
pub fn elliptic_ratio_test(
    n_samples: usize,
    resolutions: &[usize],
    seed: u64,
) -> Result<RatioReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if resolutions.is_empty() {
        return Err(Error::InvalidArgument(
            "resolution list must not be empty".into(),
        ));
    }
    let mut per_resolution = Vec::new();
    let mut max_ratio = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for (ri, &n) in resolutions.iter().enumerate() {
        let grid = Grid::torus(n, n)?;
        let mut ratios = Vec::with_capacity(n_samples);
        for s in 0..n_samples {
            // distinct stream per (resolution, sample)
            let rho = random_band_limited(grid, seed, (ri * n_samples + s) as u64)?;
            let r = gradient_charge_ratio(&rho)?;
            max_ratio = max_ratio.max(r);
            sum += r;
            ratios.push(r);
        }
        per_resolution.push(ResolutionRatios {
            resolution: n,
            ratios,
        });
    }
    Ok(RatioReport {
        seed,
        max_ratio,
        mean_ratio: sum / (n_samples * resolutions.len()) as f64,
        per_resolution,
    })
}

/// Write the per-sample ratios as CSV rows `resolution,sample_index,ratio`.
pub fn write_ratio_csv(report: &RatioReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "resolution,sample_index,ratio")?;
    for res in &report.per_resolution {
        for (s, r) in res.ratios.iter().enumerate() {
            writeln!(w, "{},{},{:.17e}", res.resolution, s, r)?;
        }
    }
    Ok(())
}

/// Write the JSON summary `{max_ratio, mean_ratio, seed}`.
pub fn write_ratio_json(report: &RatioReport, w: &mut impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Summary {
        max_ratio: f64,
        mean_ratio: f64,
        seed: u64,
    }
    let s = Summary {
        max_ratio: report.max_ratio,
        mean_ratio: report.mean_ratio,
        seed: report.seed,
    };
    serde_json::to_writer_pretty(&mut *w, &s)?;
    writeln!(w)?;
    Ok(())
}

/// Weak-Lebesgue quasinorm of a finitely supported lattice function under
/// counting measure: `sup_l l * #{|f| > l}^(1/p)`, computed exactly from
/// the sorted values.
pub fn weak_lebesgue_quasinorm(values: &[f64], p: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "weak quasinorm needs p > 0, got {p}"
        )));
    }
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut best = 0.0f64;
    for (i, a) in mags.iter().enumerate() {
        // the supremum over thresholds just below a sorted value a_i is
        // a_i * (i+1)^(1/p); ties resolve to the last index of the block
        best = best.max(a * ((i + 1) as f64).powf(1.0 / p));
    }
    Ok(best)
}

/// Weak `L^p` quasinorm of a grid field under the area measure.
pub fn weak_lp_field(f: &ScalarField, p: f64) -> Result<f64> {
    let counting = weak_lebesgue_quasinorm(&f.values, p)?;
    let cell = f.grid.spacing_x() * f.grid.spacing_y();
    Ok(counting * cell.powf(1.0 / p))
}

/// The multiplier operator `h_k -> |k|^{-1} h_k` with the mean removed.
pub fn riesz_order_multiplier(h: &ScalarField) -> Result<ScalarField> {
    let mut spec = spectral::forward(h)?;
    spec.apply_multiplier(|kx, ky| {
        let k2 = (kx * kx + ky * ky) as f64;
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / k2.sqrt()
        }
    });
    Ok(spectral::inverse(&spec))
}
