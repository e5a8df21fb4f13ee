//! Morlet filter bank, wavelet invariants `S f(λ)` and their analytic
//! λ-derivatives, and the admissibility constants `Ψ_m`, `Θ_m`.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::quad;
use crate::signal_model::{Grid, PowerSpectrum};
use crate::{Error, Result};

/// Analytic-leaning Morlet wavelet
/// `ψ̂(ω) = c (e^{-(ω-ξ)²/2} - e^{-ξ²/2} e^{-ω²/2})`, with `c` chosen
/// numerically so that `(1/2π)∫|ψ̂|² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorletWavelet {
    pub xi: f64,
    pub c_norm: f64,
}

// |ψ̂|²/c² is a sum of three Gaussians a·e^{-(u-center)²}.
fn gaussian_terms(xi: f64) -> [(f64, f64); 3] {
    [
        (1.0, xi),
        (-2.0 * (-0.75 * xi * xi).exp(), 0.5 * xi),
        ((-xi * xi).exp(), 0.0),
    ]
}

/// Physicists' Hermite polynomial `H_n(t)`.
pub fn hermite(n: usize, t: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * t);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * t * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

impl MorletWavelet {
    pub const DEFAULT_XI: f64 = 3.0 * PI / 4.0;

    pub fn new(xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidParameter(format!("xi {xi} must be positive")));
        }
        let unit = MorletWavelet { xi, c_norm: 1.0 };
        let (lo, hi) = (-12.0, xi + 12.0);
        let knots: Vec<f64> = (0..=32).map(|i| lo + (hi - lo) * i as f64 / 32.0).collect();
        let mass = quad::integrate_split(|w| unit.psi_hat(w).powi(2), &knots, 1e-15)?;
        Ok(MorletWavelet {
            xi,
            c_norm: (2.0 * PI / mass).sqrt(),
        })
    }

    pub fn psi_hat(&self, w: f64) -> f64 {
        let xi = self.xi;
        self.c_norm * ((-0.5 * (w - xi).powi(2)).exp() - (-0.5 * (xi * xi + w * w)).exp())
    }

    /// Spatial form `ψ(x)`, the inverse transform of [`psi_hat`](Self::psi_hat).
    pub fn psi(&self, x: f64) -> Complex64 {
        let env = self.c_norm / (2.0 * PI).sqrt() * (-0.5 * x * x).exp();
        (Complex64::from_polar(1.0, self.xi * x) - (-0.5 * self.xi * self.xi).exp()) * env
    }

    /// `d^i/du^i |ψ̂(u)|²`.
    pub fn power_derivative(&self, i: usize, u: f64) -> f64 {
        let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        let s: f64 = gaussian_terms(self.xi)
            .iter()
            .map(|&(a, c)| a * hermite(i, u - c) * (-(u - c).powi(2)).exp())
            .sum();
        self.c_norm * self.c_norm * sign * s
    }

    /// `|ψ̂_λ(ω)|² = λ^{-1}|ψ̂(ω/λ)|²`.
    pub fn filter(&self, lambda: f64, w: f64) -> f64 {
        self.psi_hat(w / lambda).powi(2) / lambda
    }

    /// `λ^n dⁿ/dλⁿ |ψ̂_λ(ω)|²` in closed form:
    /// `(-1)^n λ^{-1} Σ_i C(n,i) n!/i! u^i g^{(i)}(u)` with `u = ω/λ`.
    pub fn filter_derivative(&self, n: usize, lambda: f64, w: f64) -> f64 {
        let u = w / lambda;
        let mut s = 0.0;
        for i in 0..=n {
            s += binomial(n, i) * factorial(n) / factorial(i)
                * u.powi(i as i32)
                * self.power_derivative(i, u);
        }
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * s / lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub voices_per_octave: usize,
}

impl LambdaSpec {
    /// `λξ` from one frequency step up to the top of the grid, 16 voices
    /// per octave.
    pub fn for_grid(grid: &Grid, xi: f64) -> Self {
        LambdaSpec {
            lambda_min: grid.d_omega() / xi,
            lambda_max: grid.omega_max() / xi,
            voices_per_octave: 16,
        }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut j = 0;
        loop {
            let l = self.lambda_min * 2f64.powf(j as f64 / self.voices_per_octave as f64);
            if l > self.lambda_max * (1.0 + 1e-12) {
                break;
            }
            out.push(l);
            j += 1;
        }
        out
    }
}

/// Discretized filters on the full frequency grid with the quadrature weight
/// `Δω/2π` folded in, so that `S = F·P` is a plain matrix product.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub wavelet: MorletWavelet,
    pub grid: Grid,
    pub lambdas: Vec<f64>,
    /// Rows the grid resolves: the discrete filter integrates to 1 and every
    /// stored derivative row to 0, each within [`IN_BAND_TOLERANCE`].
    pub in_band: Vec<bool>,
    /// Row `r`: `|ψ̂_{λ_r}(ω_k)|² Δω/2π`.
    pub matrix: Vec<Vec<f64>>,
    /// `derivatives[n-1]` row `r`: `λⁿ dⁿ/dλⁿ |ψ̂_λ(ω_k)|² Δω/2π` at `λ_r`.
    pub derivatives: Vec<Vec<Vec<f64>>>,
    pub k_max: usize,
}

pub const IN_BAND_TOLERANCE: f64 = 1e-6;

impl FilterBank {
    pub fn build(
        wavelet: MorletWavelet,
        grid: &Grid,
        spec: &LambdaSpec,
        k_max: usize,
    ) -> Result<Self> {
        if !(spec.lambda_min > 0.0) || spec.voices_per_octave == 0 {
            return Err(Error::InvalidParameter(format!("bad lambda spec {spec:?}")));
        }
        let lambdas = spec.lambdas();
        if lambdas.is_empty() {
            return Err(Error::EmptyBank(spec.lambda_min, spec.lambda_max));
        }
        let weight = grid.d_omega() / (2.0 * PI);
        let omegas = grid.omegas();
        let row = |n: usize, l: f64| -> Vec<f64> {
            omegas
                .iter()
                .map(|&w| {
                    if n == 0 {
                        wavelet.filter(l, w) * weight
                    } else {
                        wavelet.filter_derivative(n, l, w) * weight
                    }
                })
                .collect()
        };
        let matrix: Vec<Vec<f64>> = lambdas.par_iter().map(|&l| row(0, l)).collect();
        let derivatives: Vec<Vec<Vec<f64>>> = (1..=k_max)
            .map(|n| lambdas.par_iter().map(|&l| row(n, l)).collect())
            .collect();
        let in_band = (0..lambdas.len())
            .map(|r| {
                let mass: f64 = matrix[r].iter().sum();
                (mass - 1.0).abs() <= IN_BAND_TOLERANCE
                    && derivatives.iter().all(|d: &Vec<Vec<f64>>| {
                        d[r].iter().sum::<f64>().abs() <= IN_BAND_TOLERANCE
                    })
            })
            .collect();
        Ok(FilterBank {
            wavelet,
            grid: *grid,
            lambdas,
            in_band,
            matrix,
            derivatives,
            k_max,
        })
    }

    /// Default Morlet bank for a grid.
    pub fn standard(grid: &Grid, k_max: usize) -> Result<Self> {
        let wavelet = MorletWavelet::new(MorletWavelet::DEFAULT_XI)?;
        Self::build(
            wavelet,
            grid,
            &LambdaSpec::for_grid(grid, wavelet.xi),
            k_max,
        )
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Rows of `λⁿ dⁿ/dλⁿ F`; `n = 0` gives `F` itself.
    pub fn order(&self, n: usize) -> Result<&[Vec<f64>]> {
        if n == 0 {
            Ok(&self.matrix)
        } else if n <= self.k_max {
            Ok(&self.derivatives[n - 1])
        } else {
            Err(Error::BankOrder {
                requested: n,
                available: self.k_max,
            })
        }
    }

    /// Symmetrized row over `ω ≥ 0` (indices `center..len`):
    /// `(|ψ̂_λ(ω)|² + |ψ̂_λ(-ω)|²)·Δω/2π`.
    pub fn symmetrized_row(&self, r: usize) -> Vec<f64> {
        let row = &self.matrix[r];
        let c = self.grid.center();
        let n = self.grid.len();
        (c..n).map(|k| row[k] + row[n - k]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let weight = self.grid.d_omega() / (2.0 * PI);
        writeln!(w, "lambda,omega,value")?;
        for (l, row) in self.lambdas.iter().zip(&self.matrix) {
            for (k, v) in row.iter().enumerate() {
                writeln!(w, "{l},{},{}", self.grid.omega(k), v / weight)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletInvariants {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub in_band: Vec<bool>,
}

impl WaveletInvariants {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "lambda,value")?;
        for (l, v) in self.lambdas.iter().zip(&self.values) {
            writeln!(w, "{l},{v}")?;
        }
        Ok(())
    }
}

pub(crate) fn apply(rows: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(p).map(|(a, b)| a * b).sum())
        .collect()
}

/// `S(λ) = (1/2π) Σ_ω P(ω)|ψ̂_λ(ω)|² Δω`.
pub fn invariants(p: &PowerSpectrum, bank: &FilterBank) -> Result<WaveletInvariants> {
    invariant_derivative(p, bank, 0)
}

/// `λⁿ S^{(n)}(λ)` through the analytic derivative filters.
pub fn invariant_derivative(
    p: &PowerSpectrum,
    bank: &FilterBank,
    n: usize,
) -> Result<WaveletInvariants> {
    bank.grid.check_same(&p.grid)?;
    Ok(WaveletInvariants {
        lambdas: bank.lambdas.clone(),
        values: apply(bank.order(n)?, &p.values),
        in_band: bank.in_band.clone(),
    })
}

/// `Ψ_0..Ψ_k` and `Θ_0..Θ_k`:
/// `Ψ_m = (1/2π) Σ_i C(m,i) (m!/i!) ‖ω^i (Pψ)^{(i)}‖₁`, `Θ_m` the same with
/// `ω^{i-2}`.
pub fn admissibility_constants(wavelet: &MorletWavelet, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let xi = wavelet.xi;
    let c = wavelet.c_norm;
    // ψ̂(ω)/ω without cancellation near the origin
    let ratio = |w: f64| {
        let e = (-0.5 * (xi * xi + w * w)).exp();
        if w == 0.0 {
            c * e * xi
        } else {
            c * e * (xi * w).exp_m1() / w
        }
    };
    let dpsi = |w: f64| {
        c * (-(w - xi) * (-0.5 * (w - xi).powi(2)).exp() + w * (-0.5 * (xi * xi + w * w)).exp())
    };
    let knots: Vec<f64> = (0..=24)
        .map(|i| -14.0 + (xi + 28.0) * i as f64 / 24.0)
        .collect();
    let norm = |i: usize, shift: i32| -> Result<f64> {
        quad::integrate_split(
            |w| match i as i32 + shift {
                -2 => ratio(w).powi(2),
                -1 => (2.0 * ratio(w) * dpsi(w)).abs(),
                p => (w.powi(p) * wavelet.power_derivative(i, w)).abs(),
            },
            &knots,
            1e-11,
        )
    };
    let mut psi = Vec::with_capacity(k + 1);
    let mut theta = Vec::with_capacity(k + 1);
    let psi_norms: Vec<f64> = (0..=k).map(|i| norm(i, 0)).collect::<Result<_>>()?;
    let theta_norms: Vec<f64> = (0..=k).map(|i| norm(i, -2)).collect::<Result<_>>()?;
    for m in 0..=k {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..=m {
            let c = binomial(m, i) * factorial(m) / factorial(i);
            a += c * psi_norms[i];
            b += c * theta_norms[i];
        }
        psi.push(a / (2.0 * PI));
        theta.push(b / (2.0 * PI));
    }
    Ok((psi, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn morlet() -> MorletWavelet {
        MorletWavelet::new(MorletWavelet::DEFAULT_XI).unwrap()
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 0.3), 1.0);
        assert_eq!(hermite(3, 2.0), 8.0 * 8.0 - 12.0 * 2.0);
        assert!((hermite(4, 0.5) - (16.0 * 0.0625 - 48.0 * 0.25 + 12.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_and_unit_norm() {
        let m = morlet();
        assert_eq!(m.psi_hat(0.0), 0.0);
        let xi = m.xi;
        let closed = (2.0 * PI
            / (PI.sqrt() * (1.0 + (-xi * xi).exp() - 2.0 * (-0.75 * xi * xi).exp())))
        .sqrt();
        assert!((m.c_norm - closed).abs() < 1e-10 * closed);
        let mass = quad::integrate(|w| m.psi_hat(w).powi(2), -15.0, 20.0, 1e-14).unwrap();
        assert!((mass / (2.0 * PI) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn peak_near_xi() {
        let m = morlet();
        let mut best = (0.0, 0.0);
        for i in 0..20000 {
            let w = i as f64 * 1e-3;
            let v = m.psi_hat(w).abs();
            if v > best.1 {
                best = (w, v);
            }
        }
        assert!((best.0 - m.xi).abs() < 0.1, "{}", best.0);
    }

    fn d5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn power_derivatives_match_finite_differences() {
        let m = morlet();
        for i in 0..6 {
            for &u in &[-0.7, 0.4, 1.3, 2.2, 3.9] {
                let fd = d5(|x| m.power_derivative(i, x), u, 1e-3);
                let an = m.power_derivative(i + 1, u);
                assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "i={i} u={u}");
            }
        }
        assert!((m.power_derivative(0, 1.7) - m.psi_hat(1.7).powi(2)).abs() < 1e-12);
    }

    // D_{n+1} = λ d/dλ D_n - n D_n
    #[test]
    fn lambda_derivative_filters_match_finite_differences() {
        let m = morlet();
        for &l in &[0.6, 1.0, 3.7] {
            for &w in &[0.5, 1.8, 2.4, 4.0, 9.0] {
                let mut scale = 0.0f64;
                for n in 0..=5 {
                    scale = scale.max(m.filter_derivative(n, l, w).abs());
                }
                for n in 0..5 {
                    let dn = |x: f64| m.filter_derivative(n, x, w);
                    let fd = l * d5(dn, l, 1e-4 * l) - n as f64 * dn(l);
                    let an = m.filter_derivative(n + 1, l, w);
                    assert!((fd - an).abs() < 1e-7 * (1e-3 + scale), "n={n} l={l} w={w}");
                }
            }
        }
    }

    #[test]
    fn spatial_form_is_inverse_transform() {
        let m = morlet();
        for &x in &[0.0, 0.4, -1.1, 2.5] {
            let re = quad::integrate(|w| m.psi_hat(w) * (w * x).cos(), -15.0, 20.0, 1e-13).unwrap()
                / (2.0 * PI);
            let im = quad::integrate(|w| m.psi_hat(w) * (w * x).sin(), -15.0, 20.0, 1e-13).unwrap()
                / (2.0 * PI);
            let p = m.psi(x);
            assert!(
                (p.re - re).abs() < 1e-10 && (p.im - im).abs() < 1e-10,
                "x={x}"
            );
        }
    }

    #[test]
    fn bank_rows_and_symmetrization() {
        let g = Grid::standard();
        let bank = FilterBank::standard(&g, 4).unwrap();
        assert_eq!(bank.lambdas.len(), 145);
        let nearest = bank
            .lambdas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1.0).abs().partial_cmp(&(b.1 - 1.0).abs()).unwrap())
            .unwrap()
            .0;
        let mass: f64 = bank.matrix[nearest].iter().sum();
        assert!((mass - 1.0).abs() < 1e-6);
        assert!(bank.matrix.iter().flatten().all(|&v| v >= 0.0));
        let sym = bank.symmetrized_row(nearest);
        assert_eq!(sym.len(), g.len() / 2);
        assert!(bank.in_band.iter().filter(|&&b| b).count() > 80);
        assert!(!bank.in_band[0] && !bank.in_band[bank.len() - 1]);
    }

    #[test]
    fn delta_invariants_are_one() {
        let g = Grid::standard();
        let bank = FilterBank::standard(&g, 2).unwrap();
        let p = PowerSpectrum {
            grid: g,
            values: vec![1.0; g.len()],
        };
        let s = invariants(&p, &bank).unwrap();
        let d1 = invariant_derivative(&p, &bank, 1).unwrap();
        let d2 = invariant_derivative(&p, &bank, 2).unwrap();
        for r in 0..bank.len() {
            if bank.in_band[r] {
                assert!((s.values[r] - 1.0).abs() < 1e-6);
                assert!(d1.values[r].abs() < 1e-6 && d2.values[r].abs() < 1e-6);
            }
        }
        let band = bank.in_band.iter().filter(|&&b| b).count();
        let wider = FilterBank::standard(&g, 4).unwrap();
        assert!(wider.in_band.iter().filter(|&&b| b).count() <= band);
        assert!(matches!(
            invariant_derivative(&p, &bank, 4),
            Err(Error::BankOrder {
                requested: 4,
                available: 2
            })
        ));
    }

    #[test]
    fn admissibility_table() {
        let (psi, theta) = admissibility_constants(&morlet(), 8).unwrap();
        assert!((psi[0] - 1.0).abs() < 1e-8, "{}", psi[0]);
        for m in 1..=8 {
            assert!(psi[m] > psi[m - 1]);
        }
        // factorial-type growth: Ψ_m / Ψ_{m-1} increasing in m
        for m in 2..=8 {
            assert!(psi[m] / psi[m - 1] > psi[m - 1] / psi[m - 2] * 0.9);
        }
        assert!(theta.iter().all(|t| t.is_finite() && *t > 0.0));
    }
}
