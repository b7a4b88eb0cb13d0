//! Fast trigonometric transforms and exact per-mode operators on the torus.
//!
//! Coefficients follow the Fourier-series convention
//! `f(x) = sum_k c_k exp(i k . x)` with integer wavenumbers, so differential
//! operators act as exact multipliers: `d/dx -> i kx`, `-Laplacian -> |k|^2`.
//! The Nyquist wavenumber `n/2` carries no sign information on an even grid;
//! first derivatives zero it, which differentiates the trigonometric
//! interpolant exactly at the nodes.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| match dir {
        FftDirection::Forward => p.borrow_mut().plan_fft_forward(n),
        FftDirection::Inverse => p.borrow_mut().plan_fft_inverse(n),
    })
}

/// Unnormalized 2D FFT over a row-major `ny` by `nx` complex array.
fn fft_2d(values: &mut [Complex<f64>], nx: usize, ny: usize, dir: FftDirection) {
    let row_fft = plan(nx, dir);
    for row in values.chunks_exact_mut(nx) {
        row_fft.process(row);
    }
    let col_fft = plan(ny, dir);
    let mut col = vec![Complex::new(0.0, 0.0); ny];
    for i in 0..nx {
        for j in 0..ny {
            col[j] = values[j * nx + i];
        }
        col_fft.process(&mut col);
        for j in 0..ny {
            values[j * nx + i] = col[j];
        }
    }
}

/// Fourier coefficients of a real torus field, row-major like the field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub grid: Grid,
    pub coeffs: Vec<Complex<f64>>,
}

/// Signed wavenumber of storage index `idx` on an axis of `n` points.
#[inline]
pub fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Spectrum {
        Spectrum {
            grid,
            coeffs: vec![Complex::new(0.0, 0.0); grid.len()],
        }
    }

    /// Coefficient at storage indices `(ii, jj)`.
    #[inline]
    pub fn at(&self, ii: usize, jj: usize) -> Complex<f64> {
        self.coeffs[jj * self.grid.nx + ii]
    }

    /// Coefficient of the integer mode `(kx, ky)`, reduced modulo the grid.
    pub fn mode(&self, kx: i64, ky: i64) -> Complex<f64> {
        let ii = kx.rem_euclid(self.grid.nx as i64) as usize;
        let jj = ky.rem_euclid(self.grid.ny as i64) as usize;
        self.coeffs[jj * self.grid.nx + ii]
    }

    /// Mutable coefficient of the integer mode `(kx, ky)`.
    pub fn mode_mut(&mut self, kx: i64, ky: i64) -> &mut Complex<f64> {
        let ii = kx.rem_euclid(self.grid.nx as i64) as usize;
        let jj = ky.rem_euclid(self.grid.ny as i64) as usize;
        &mut self.coeffs[jj * self.grid.nx + ii]
    }

    /// Apply a real multiplier `m(kx, ky)` to every coefficient in place.
    pub fn apply_multiplier(&mut self, m: impl Fn(i64, i64) -> f64) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for jj in 0..ny {
            let ky = wavenumber(jj, ny);
            for ii in 0..nx {
                let kx = wavenumber(ii, nx);
                self.coeffs[jj * nx + ii] *= m(kx, ky);
            }
        }
    }

    /// Sum of squared moduli, weighted for Parseval against the L2 norm:
    /// `||f||_{L2}^2 = (2 pi)^2 sum_k |c_k|^2`.
    pub fn parseval_l2_sq(&self) -> f64 {
        let sum: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        self.grid.area() * sum
    }
}

/// Forward transform of a real field into Fourier coefficients.
pub fn forward(f: &ScalarField) -> Result<Spectrum> {
    f.grid.require_torus()?;
    let mut coeffs: Vec<Complex<f64>> =
        f.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_2d(&mut coeffs, f.grid.nx, f.grid.ny, FftDirection::Forward);
    let scale = 1.0 / f.grid.len() as f64;
    for c in &mut coeffs {
        *c *= scale;
    }
    Ok(Spectrum {
        grid: f.grid,
        coeffs,
    })
}

/// Inverse transform back to a real field (imaginary residue discarded).
pub fn inverse(s: &Spectrum) -> ScalarField {
    let mut work = s.coeffs.clone();
    fft_2d(&mut work, s.grid.nx, s.grid.ny, FftDirection::Inverse);
    ScalarField {
        grid: s.grid,
        values: work.into_iter().map(|c| c.re).collect(),
    }
}

/// Zero every mode with `|kx| > nx/3` or `|ky| > ny/3` (2/3-rule truncation
/// for quadratic products).
pub fn dealias(s: &mut Spectrum) {
    let cutx = (s.grid.nx / 3) as i64;
    let cuty = (s.grid.ny / 3) as i64;
    s.apply_multiplier(|kx, ky| {
        if kx.abs() > cutx || ky.abs() > cuty {
            0.0
        } else {
            1.0
        }
    });
}

/// `Lambda^s f`: multiplies mode `k` by `|k|^s`; the mean maps to zero for
/// any `s != 0`. Negative `s` requires mean-zero input.
pub fn fractional_laplacian(f: &ScalarField, s: f64) -> Result<ScalarField> {
    f.grid.require_torus()?;
    let mut spec = forward(f)?;
    if s < 0.0 {
        let l2 = spec.parseval_l2_sq().sqrt();
        let mean = spec.coeffs[0].norm();
        if mean > 1e-12 * l2 {
            return Err(Error::Precondition(format!(
                "Lambda^{s} needs mean-zero input; |mean| = {mean:.3e}, ||f||_L2 = {l2:.3e}"
            )));
        }
    }
    spec.apply_multiplier(|kx, ky| {
        let k2 = (kx * kx + ky * ky) as f64;
        if k2 == 0.0 {
            if s == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            k2.powf(s / 2.0)
        }
    });
    Ok(inverse(&spec))
}

/// Spectral x-derivative; Nyquist column zeroed.
pub fn deriv_x(s: &Spectrum) -> Spectrum {
    deriv_axis(s, true)
}

/// Spectral y-derivative; Nyquist row zeroed.
pub fn deriv_y(s: &Spectrum) -> Spectrum {
    deriv_axis(s, false)
}

fn deriv_axis(s: &Spectrum, along_x: bool) -> Spectrum {
    let (nx, ny) = (s.grid.nx, s.grid.ny);
    let mut out = Spectrum::zeros(s.grid);
    for jj in 0..ny {
        let ky = wavenumber(jj, ny);
        for ii in 0..nx {
            let kx = wavenumber(ii, nx);
            let k = if along_x { kx } else { ky };
            let nyq = if along_x { nx / 2 } else { ny / 2 };
            let idx = jj * nx + ii;
            if k.unsigned_abs() as usize == nyq {
                continue;
            }
            out.coeffs[idx] = s.coeffs[idx] * Complex::new(0.0, k as f64);
        }
    }
    out
}

/// Spectral gradient of a torus field.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    let spec = forward(f)?;
    Ok(VectorField {
        x: inverse(&deriv_x(&spec)),
        y: inverse(&deriv_y(&spec)),
    })
}

/// Spectral divergence of a torus vector field.
pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    let sx = forward(&v.x)?;
    let sy = forward(&v.y)?;
    let mut out = deriv_x(&sx);
    let dy = deriv_y(&sy);
    for (a, b) in out.coeffs.iter_mut().zip(&dy.coeffs) {
        *a += b;
    }
    Ok(inverse(&out))
}

/// Leray-Hodge projection onto divergence-free fields:
/// per mode `v_hat <- v_hat - k (k . v_hat)/|k|^2`; the mean is untouched.
pub fn leray_project(v: &VectorField) -> Result<VectorField> {
    v.grid().require_torus()?;
    let mut sx = forward(&v.x)?;
    let mut sy = forward(&v.y)?;
    let (nx, ny) = (v.grid().nx, v.grid().ny);
    for jj in 0..ny {
        let ky = wavenumber(jj, ny) as f64;
        for ii in 0..nx {
            let kx = wavenumber(ii, nx) as f64;
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let idx = jj * nx + ii;
            let kdotv = kx * sx.coeffs[idx] + ky * sy.coeffs[idx];
            sx.coeffs[idx] -= kdotv * kx / k2;
            sy.coeffs[idx] -= kdotv * ky / k2;
        }
    }
    Ok(VectorField {
        x: inverse(&sx),
        y: inverse(&sy),
    })
}

/// Pointwise product of two fields with the result dealiased. Inputs are
/// used as sampled; callers keep them band-limited for exact quadrature.
pub fn dealiased_product(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    let raw = a.pointwise_mul(b);
    let mut spec = forward(&raw)?;
    dealias(&mut spec);
    Ok(inverse(&spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::lp_norm;

    fn torus(n: usize) -> Grid {
        Grid::torus(n, n).unwrap()
    }

    #[test]
    fn constant_field_concentrates_at_mode_zero() {
        let f = ScalarField::constant(torus(16), 3.5);
        let s = forward(&f).unwrap();
        assert!((s.coeffs[0].re - 3.5).abs() < 1e-13);
        assert!(s.coeffs[0].im.abs() < 1e-13);
        let tail: f64 = s.coeffs[1..].iter().map(|c| c.norm()).sum();
        assert!(tail < 1e-12);
    }

    #[test]
    fn cosine_splits_into_two_conjugate_modes() {
        let f = ScalarField::from_fn(torus(16), |x, _| x.cos());
        let s = forward(&f).unwrap();
        let plus = s.mode(1, 0);
        let minus = s.mode(-1, 0);
        assert!((plus.re - 0.5).abs() < 1e-13 && plus.im.abs() < 1e-13);
        assert!((minus.re - 0.5).abs() < 1e-13 && minus.im.abs() < 1e-13);
        let others: f64 = s
            .coeffs
            .iter()
            .enumerate()
            .filter(|(idx, _)| *idx != 1 && *idx != 15)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(others < 1e-12);
    }

    #[test]
    fn round_trip_is_exact_to_tolerance() {
        let g = torus(24);
        let f = ScalarField::from_fn(g, |x, y| {
            (2.0 * x).sin() * (3.0 * y).cos() + 0.3 * (x + 2.0 * y).cos() + 0.7
        });
        let back = inverse(&forward(&f).unwrap());
        let diff = back.sub(&f);
        let rel = lp_norm(&diff, 2.0).unwrap() / lp_norm(&f, 2.0).unwrap();
        assert!(rel < 1e-12, "round-trip error {rel:.3e}");
    }

    #[test]
    fn fractional_laplacian_matches_single_modes() {
        let g = torus(16);
        let f = ScalarField::from_fn(g, |x, _| x.cos());
        let out = fractional_laplacian(&f, 2.0).unwrap();
        let diff = out.sub(&f);
        assert!(lp_norm(&diff, f64::INFINITY).unwrap() < 1e-12);

        let f2 = ScalarField::from_fn(g, |_, y| (2.0 * y).sin());
        let out2 = fractional_laplacian(&f2, 1.0).unwrap();
        let mut expect = f2.clone();
        expect.scale(2.0);
        let diff2 = out2.sub(&expect);
        assert!(lp_norm(&diff2, f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn fractional_laplacian_identity_on_mean_zero() {
        let g = torus(16);
        let f = ScalarField::from_fn(g, |x, y| x.sin() + (x + y).cos());
        let out = fractional_laplacian(&f, 0.0).unwrap();
        let diff = out.sub(&f);
        assert!(lp_norm(&diff, f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn negative_order_rejects_nonzero_mean() {
        let f = ScalarField::constant(torus(16), 1.0);
        assert!(fractional_laplacian(&f, -1.0).is_err());
    }

    #[test]
    fn dealias_kills_high_modes_only() {
        let g = torus(12); // cutoff 4
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).cos() + (5.0 * y).sin());
        let mut s = forward(&f).unwrap();
        dealias(&mut s);
        let out = inverse(&s);
        let expect = ScalarField::from_fn(g, |x, _| (3.0 * x).cos());
        let diff = out.sub(&expect);
        assert!(lp_norm(&diff, f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn leray_fixes_divergence_free_fields() {
        let g = torus(16);
        let v = VectorField::from_fns(g, |_, y| -(y.sin()), |_, _| 0.0);
        let p = leray_project(&v).unwrap();
        let dx = p.x.sub(&v.x);
        let dy = p.y.sub(&v.y);
        assert!(lp_norm(&dx, f64::INFINITY).unwrap() < 1e-12);
        assert!(lp_norm(&dy, f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn leray_annihilates_gradients() {
        let g = torus(16);
        // grad(cos x) = (-sin x, 0)
        let v = VectorField::from_fns(g, |x, _| -(x.sin()), |_, _| 0.0);
        let p = leray_project(&v).unwrap();
        assert!(lp_norm(&p.x, f64::INFINITY).unwrap() < 1e-12);
        assert!(lp_norm(&p.y, f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn leray_matches_per_mode_formula() {
        let g = torus(16);
        let v = VectorField::from_fns(g, |_, y| y.cos(), |x, _| x.cos());
        let p = leray_project(&v).unwrap();
        // Mode (0, +-1) of v_x: k = (0, ky), P v_hat = (v_x, 0); mode (+-1, 0)
        // of v_y: P v_hat = (0, v_y). Both components are already orthogonal
        // to their wavevectors, so the field is invariant.
        let dx = p.x.sub(&v.x);
        let dy = p.y.sub(&v.y);
        assert!(lp_norm(&dx, f64::INFINITY).unwrap() < 1e-12);
        assert!(lp_norm(&dy, f64::INFINITY).unwrap() < 1e-12);

        // A mixed mode that is not: v = (cos y, cos y). k=(0,1): keep x part,
        // project y part to zero.
        let w = VectorField::from_fns(g, |_, y| y.cos(), |_, y| y.cos());
        let pw = leray_project(&w).unwrap();
        let ex = pw.x.sub(&w.x);
        assert!(lp_norm(&ex, f64::INFINITY).unwrap() < 1e-12);
        assert!(lp_norm(&pw.y, f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn spectral_gradient_of_cosine() {
        let g = torus(16);
        let f = ScalarField::from_fn(g, |x, _| x.cos());
        let grad = gradient(&f).unwrap();
        let expect = ScalarField::from_fn(g, |x, _| -(x.sin()));
        let diff = grad.x.sub(&expect);
        assert!(lp_norm(&diff, f64::INFINITY).unwrap() < 1e-12);
        assert!(lp_norm(&grad.y, f64::INFINITY).unwrap() < 1e-12);
    }
}
