//! Dilation moment algebra (`B_i`, `T`, `E`, order heuristic) and empirical
//! estimation of the noise level and of the dilation moments.

use std::collections::BTreeMap;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::quad;
use crate::signal_model::{Grid, SpectralSummary, TauDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    Oracle,
    EmpiricalOrder2,
    EmpiricalOrder4,
}

/// `η² = Var τ` and the normalized moments `C_i = E[τ^i] / η^i` (even `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DilationMoments {
    pub eta_sq: f64,
    pub c: BTreeMap<usize, f64>,
    pub source: MomentSource,
    pub warnings: Vec<String>,
}

impl DilationMoments {
    pub fn new(eta_sq: f64, c: BTreeMap<usize, f64>, source: MomentSource) -> Self {
        DilationMoments {
            eta_sq,
            c,
            source,
            warnings: Vec::new(),
        }
    }

    /// Uniform law on `[-√3η, √3η]`: `C_{2m} = 3^m / (2m + 1)`.
    pub fn uniform(eta: f64, max_order: usize) -> Self {
        let c = (1..=max_order / 2)
            .map(|m| (2 * m, 3f64.powi(m as i32) / (2 * m + 1) as f64))
            .collect();
        Self::new(eta * eta, c, MomentSource::Oracle)
    }

    /// No dilation: `η = 0`, `C_2 = 1` by convention and higher `C_i = 0`.
    pub fn zero(max_order: usize) -> Self {
        let c = (1..=max_order / 2)
            .map(|m| (2 * m, if m == 1 { 1.0 } else { 0.0 }))
            .collect();
        Self::new(0.0, c, MomentSource::Oracle)
    }

    /// Exact moments of a normal law with standard deviation `eta` conditioned
    /// on `|τ| ≤ 1/2`.
    pub fn truncated_gaussian(eta: f64, max_order: usize) -> Result<Self> {
        if eta == 0.0 {
            return Ok(Self::zero(max_order));
        }
        let density = |t: f64| (-0.5 * (t / eta).powi(2)).exp();
        let raw = |i: i32| quad::integrate(|t| t.powi(i) * density(t), -0.5, 0.5, 1e-15);
        let z = raw(0)?;
        let eta_sq = raw(2)? / z;
        let mut c = BTreeMap::new();
        for m in 1..=max_order / 2 {
            let i = 2 * m as i32;
            c.insert(2 * m, raw(i)? / z / eta_sq.powi(m as i32));
        }
        Ok(Self::new(eta_sq, c, MomentSource::Oracle))
    }

    pub fn oracle(tau: TauDistribution, eta: f64, max_order: usize) -> Result<Self> {
        match tau {
            TauDistribution::Uniform => Ok(Self::uniform(eta, max_order)),
            TauDistribution::TruncatedGaussian => Self::truncated_gaussian(eta, max_order),
            TauDistribution::Zero => Ok(Self::zero(max_order)),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta_sq.sqrt()
    }

    /// `C_i`, with `C_0 = 1`.
    pub fn c(&self, i: usize) -> Result<f64> {
        if i == 0 {
            return Ok(1.0);
        }
        self.c.get(&i).copied().ok_or(Error::MissingMoment(i))
    }

    /// `E[τ^i] = C_i η^i`.
    pub fn raw(&self, i: usize) -> Result<f64> {
        Ok(self.c(i)? * self.eta_sq.powi(i as i32 / 2))
    }

    pub fn max_order(&self) -> usize {
        self.c.keys().next_back().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasingConstants {
    /// `B_i` for even `i`, `B_0 = 1`.
    pub b: BTreeMap<usize, f64>,
    pub t: f64,
    pub e: f64,
    pub k_tilde: usize,
}

impl UnbiasingConstants {
    /// `B_i` up to `k`, `T`, `E` for that order and the order heuristic over
    /// `psi` (`Ψ_0, Ψ_1, ...`).
    pub fn new(moments: &DilationMoments, k: usize, psi: &[f64]) -> Result<Self> {
        let b = b_constants(moments, k)?;
        let (t, e) = te_constants(moments, &b, k)?;
        let k_tilde = order_heuristic(psi, e, moments.eta());
        Ok(UnbiasingConstants { b, t, e, k_tilde })
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Solves `C_i/i! - Σ_{even j<i} B_j C_{i-j}/(i-j)! - B_i = 0` for even `i ≤ k`,
/// starting from `B_0 = 1` (which contributes nothing for `j = 0`).
pub fn b_constants(moments: &DilationMoments, k: usize) -> Result<BTreeMap<usize, f64>> {
    if k % 2 == 1 {
        return Err(Error::InvalidParameter(format!("order {k} must be even")));
    }
    let mut b = BTreeMap::new();
    b.insert(0, 1.0);
    for i in (2..=k).step_by(2) {
        let mut v = moments.c(i)? / factorial(i);
        for j in (2..i).step_by(2) {
            v -= b[&j] * moments.c(i - j)? / factorial(i - j);
        }
        b.insert(i, v);
    }
    Ok(b)
}

/// Left-hand side of the defining recursion for each `B_i`, `i ≥ 2`.
pub fn b_residuals(moments: &DilationMoments, b: &BTreeMap<usize, f64>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (&i, &bi) in b.range(2..) {
        let mut r = moments.c(i)? / factorial(i) - bi;
        for j in (2..i).step_by(2) {
            r -= b[&j] * moments.c(i - j)? / factorial(i - j);
        }
        out.push(r);
    }
    Ok(out)
}

/// `T = max_{even i ≤ k} C_i^{1/i}` and
/// `E = max_{even i ≤ k, 0 ≤ j ≤ k+2-i} (T^j |B_i| / j!)^{1/(i+j)}`, the
/// `(0, 0)` term counting as 1.
pub fn te_constants(
    moments: &DilationMoments,
    b: &BTreeMap<usize, f64>,
    k: usize,
) -> Result<(f64, f64)> {
    let mut t = 1.0f64;
    for i in (2..=k).step_by(2) {
        t = t.max(moments.c(i)?.powf(1.0 / i as f64));
    }
    let mut e = 1.0f64;
    for i in (0..=k).step_by(2) {
        let bi = *b.get(&i).ok_or(Error::MissingMoment(i))?;
        for j in 0..=(k + 2 - i) {
            if i + j == 0 {
                continue;
            }
            e = e.max((t.powi(j as i32) * bi.abs() / factorial(j)).powf(1.0 / (i + j) as f64));
        }
    }
    Ok((t, e))
}

/// `k·Ψ_{k+2}(2Eη)^{k+2}` for even `k ≥ 2` while `Ψ_{k+2}` is tabulated.
pub fn heuristic_objective(psi: &[f64], e: f64, eta: f64) -> Vec<(usize, f64)> {
    (2..)
        .step_by(2)
        .take_while(|k| k + 2 < psi.len())
        .map(|k| {
            (
                k,
                k as f64 * psi[k + 2] * (2.0 * e * eta).powi(k as i32 + 2),
            )
        })
        .collect()
}

/// Even `k ≥ 2` minimizing [`heuristic_objective`]; ties go to the smaller
/// order, so `η = 0` gives 2.
pub fn order_heuristic(psi: &[f64], e: f64, eta: f64) -> usize {
    let mut best = (2, f64::INFINITY);
    for (k, v) in heuristic_objective(psi, e, eta) {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEstimate {
    pub sigma_sq: f64,
    /// Set when the mean spectrum still decays across the tail band, a sign
    /// that signal energy leaks into it.
    pub warning: Option<String>,
}

/// Bins with `2^{ℓ-1}π ≤ |ω| ≤ 2^ℓπ`.
pub fn tail_band(grid: &Grid) -> Vec<usize> {
    let half = 0.5 * grid.omega_max();
    (0..grid.len())
        .filter(|&k| grid.omega(k).abs() >= half - 1e-12)
        .collect()
}

/// Mean of the empirical mean power spectrum over the upper half band.
pub fn estimate_sigma(summary: &SpectralSummary) -> Result<SigmaEstimate> {
    let grid = &summary.grid;
    if grid.level() < 1 {
        return Err(Error::InvalidParameter(
            "sigma estimation needs level ≥ 1".into(),
        ));
    }
    let tail = tail_band(grid);
    let p = &summary.mean_power;
    let sigma_sq = tail.iter().map(|&k| p[k]).sum::<f64>() / tail.len() as f64;

    // compare the innermost and outermost eighths of the positive tail
    let pos: Vec<usize> = tail
        .iter()
        .copied()
        .filter(|&k| grid.omega(k) > 0.0)
        .collect();
    let w = (pos.len() / 8).max(1);
    let inner = pos[..w].iter().map(|&k| p[k]).sum::<f64>() / w as f64;
    let outer = pos[pos.len() - w..].iter().map(|&k| p[k]).sum::<f64>() / w as f64;
    let warning = (inner > 1.1 * outer + 1e-12)
        .then(|| format!("mean spectrum decays across the tail band ({inner:.3e} vs {outer:.3e})"));
    Ok(SigmaEstimate { sigma_sq, warning })
}

/// Order-4 moment system in `(e, q) = (η², C₄η⁴)`:
/// `CV₀ = e + 3q - 3e²`, `CV₁ = 4e + 25q - 33e²`.
/// Eliminating `q` gives `24e² + 13e - (25CV₀ - 3CV₁) = 0`.
pub fn solve_order4(cv0: f64, cv1: f64) -> Option<(f64, f64)> {
    let d = 25.0 * cv0 - 3.0 * cv1;
    if !(d > 0.0) {
        return None;
    }
    let e = 2.0 * d / (13.0 + (169.0 + 96.0 * d).sqrt());
    let q = (cv0 - e + 3.0 * e * e) / 3.0;
    (e > 0.0 && q >= 0.0).then_some((e, q / (e * e)))
}

/// `(CV₀, CV₁)` implied by `(η², C₄)` through the order-4 expansion.
pub fn order4_cv(eta_sq: f64, c4: f64) -> (f64, f64) {
    let (e, q) = (eta_sq, c4 * eta_sq * eta_sq);
    (e + 3.0 * q - 3.0 * e * e, 4.0 * e + 25.0 * q - 33.0 * e * e)
}

/// Unbiased sample variance over squared sample mean.
pub fn squared_cv(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Ok(var / (mean * mean))
}

fn moments_from_cv(cv0: f64, cv1: f64, order: usize) -> Result<DilationMoments> {
    let mut c = BTreeMap::new();
    c.insert(2, 1.0);
    match order {
        2 => Ok(DilationMoments::new(
            cv0.max(0.0),
            c,
            MomentSource::EmpiricalOrder2,
        )),
        4 => match solve_order4(cv0, cv1) {
            Some((e, c4)) => {
                c.insert(4, c4);
                Ok(DilationMoments::new(e, c, MomentSource::EmpiricalOrder4))
            }
            None => {
                let mut m = DilationMoments::new(cv0.max(0.0), c, MomentSource::EmpiricalOrder2);
                m.warnings.push(format!(
                    "order-4 system has no positive root (CV0 {cv0:.3e}, CV1 {cv1:.3e}); \
                     using order 2"
                ));
                Ok(m)
            }
        },
        _ => Err(Error::Unsupported(format!(
            "empirical moments of order {order}"
        ))),
    }
}

/// Moments from `α_m(y_j) = ∫_0^{2^ℓπ} ω^m |ŷ_j|² dω` of noiseless dilated
/// observations. `order` is 2 (`η̃² = CV₀`) or 4.
pub fn estimate_dilation_moments_dilmra(
    summary: &SpectralSummary,
    order: usize,
) -> Result<DilationMoments> {
    let a0: Vec<f64> = summary.alpha.iter().map(|a| a[0]).collect();
    let a1: Vec<f64> = summary.alpha.iter().map(|a| a[1]).collect();
    moments_from_cv(squared_cv(&a0)?, squared_cv(&a1)?, order)
}

/// `g_m = ∬_{[0, 2^ℓπ]²} (2σ²/N) ξ^m ω^m sin(N(ξ-ω)/2)/(ξ-ω) dω dξ`, the
/// variance of `∫_0^{2^ℓπ} ω^m ε̂(ω) dω` for white noise on a box of length
/// `N` with `E|ε̂(ω)|² = σ²`. Composite midpoint rule with `resolution²`
/// cells; the diagonal uses the limit `σ² ξ^{2m}`.
pub fn g_m_integral(m: u32, grid: &Grid, sigma: f64, resolution: usize) -> f64 {
    if sigma == 0.0 || resolution == 0 {
        return 0.0;
    }
    let n = grid.box_size();
    let top = grid.omega_max();
    let h = top / resolution as f64;
    let nodes: Vec<f64> = (0..resolution).map(|i| (i as f64 + 0.5) * h).collect();
    let pw: Vec<f64> = nodes.iter().map(|w| w.powi(m as i32)).collect();
    // the kernel depends only on i - j
    let kernel: Vec<f64> = (0..resolution)
        .map(|d| {
            if d == 0 {
                1.0
            } else {
                let s = d as f64 * h;
                2.0 / n * (0.5 * n * s).sin() / s
            }
        })
        .collect();
    let mut total = 0.0;
    for i in 0..resolution {
        let mut row = 0.0;
        for j in 0..resolution {
            row += pw[j] * kernel[i.abs_diff(j)];
        }
        total += pw[i] * row;
    }
    sigma * sigma * total * h * h
}

/// Variance of the grid statistic `β_m = Σ_{ω_k ≥ 0} ω_k^m ε̂_k Δω` under white
/// noise: the grid coefficients are uncorrelated with `E|ε̂_k|² = σ²`.
pub fn g_m_grid(m: u32, grid: &Grid, sigma: f64) -> f64 {
    let dw = grid.d_omega();
    let s: f64 = (grid.center()..grid.len())
        .map(|k| grid.omega(k).powi(2 * m as i32))
        .sum();
    sigma * sigma * dw * dw * s
}

/// `E|z - Ez|²` estimate with the `M - 1` normalization.
fn complex_variance(z: &[Complex64]) -> (f64, Complex64) {
    let m = z.len() as f64;
    let mean = z.iter().sum::<Complex64>() / m;
    let var = z.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (m - 1.0);
    (var, mean)
}

/// Noise correction applied by [`estimate_dilation_moments_noisy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseCorrection {
    /// [`g_m_integral`] at the given resolution.
    Integral { resolution: usize },
    /// [`g_m_grid`].
    Grid,
}

impl Default for NoiseCorrection {
    fn default() -> Self {
        NoiseCorrection::Integral { resolution: 2048 }
    }
}

/// Moments from `β_m(y_j) = ∫_0^{2^ℓπ} ω^m ŷ_j dω` of untranslated noisy
/// dilated observations: `CV_m = (Var β_m - g_m) / |E β_m|²`.
pub fn estimate_dilation_moments_noisy(
    summary: &SpectralSummary,
    sigma: f64,
    order: usize,
    correction: NoiseCorrection,
) -> Result<DilationMoments> {
    if summary.count < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: summary.count,
        });
    }
    let mut cv = [0.0; 2];
    let mut clamped = Vec::new();
    for m in 0..2 {
        let z: Vec<Complex64> = summary.beta.iter().map(|b| b[m]).collect();
        let (var, mean) = complex_variance(&z);
        let g = match correction {
            NoiseCorrection::Integral { resolution } => {
                g_m_integral(m as u32, &summary.grid, sigma, resolution)
            }
            NoiseCorrection::Grid => g_m_grid(m as u32, &summary.grid, sigma),
        };
        let corrected = var - g;
        if corrected < 0.0 {
            clamped.push(m);
        }
        cv[m] = corrected.max(0.0) / mean.norm_sqr();
    }
    if clamped.is_empty() {
        moments_from_cv(cv[0], cv[1], order)
    } else {
        let mut out = moments_from_cv(cv[0], cv[1], 2.min(order))?;
        out.warnings.push(format!(
            "noise correction exceeds the variance for m in {clamped:?}"
        ));
        Ok(out)
    }
}

/// Exact `CV_m` of a noiseless dilated band-limited signal,
/// `Var[(1-τ)^{-(m+1)}] / E[(1-τ)^{-(m+1)}]²`, by quadrature over the law of τ.
pub fn exact_cv(tau: TauDistribution, eta: f64, m: u32) -> Result<f64> {
    let p = -(m as i32 + 1);
    let (lo, hi, dens): (f64, f64, Box<dyn Fn(f64) -> f64>) = match tau {
        TauDistribution::Zero => return Ok(0.0),
        TauDistribution::Uniform => {
            let a = 3f64.sqrt() * eta;
            (-a, a, Box::new(move |_| 1.0 / (2.0 * a)))
        }
        TauDistribution::TruncatedGaussian => {
            let z = quad::integrate(|t| (-0.5 * (t / eta).powi(2)).exp(), -0.5, 0.5, 1e-15)?;
            (
                -0.5,
                0.5,
                Box::new(move |t| (-0.5 * (t / eta).powi(2)).exp() / z),
            )
        }
    };
    if eta == 0.0 {
        return Ok(0.0);
    }
    let e1 = quad::integrate(|t| (1.0 - t).powi(p) * dens(t), lo, hi, 1e-14)?;
    let e2 = quad::integrate(|t| (1.0 - t).powi(2 * p) * dens(t), lo, hi, 1e-14)?;
    Ok(e2 / (e1 * e1) - 1.0)
}

/// `(quantity, true_value, estimate, order, M)` rows.
pub fn write_moment_report<W: Write>(
    mut w: W,
    estimate: &DilationMoments,
    truth: Option<&DilationMoments>,
    m: usize,
) -> io::Result<()> {
    let order = match estimate.source {
        MomentSource::EmpiricalOrder4 => 4,
        MomentSource::EmpiricalOrder2 => 2,
        MomentSource::Oracle => estimate.max_order(),
    };
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    writeln!(w, "quantity,true_value,estimate,order,M")?;
    writeln!(
        w,
        "eta_sq,{},{},{order},{m}",
        fmt(truth.map(|t| t.eta_sq)),
        estimate.eta_sq
    )?;
    for (&i, &ci) in estimate.c.range(4..) {
        let t = truth.and_then(|t| t.c.get(&i).copied());
        writeln!(w, "C{i},{},{ci},{order},{m}", fmt(t))?;
    }
    Ok(())
}
