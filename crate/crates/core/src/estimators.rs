//! Unbiased estimators of the power spectrum and of the wavelet invariants
//! under additive noise, random dilations, or both.

use std::io::{self, Write};

use crate::moments::{b_constants, DilationMoments};
use crate::signal_model::{Grid, Model, PowerSpectrum, SpectralSummary};
use crate::wavelet::{apply, FilterBank};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Power spectrum on the ω grid.
    Ps,
    /// Wavelet invariants on the λ grid.
    Wsc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSource {
    /// Known noise standard deviation.
    Oracle(f64),
    /// Upper-half-band mean of the empirical spectrum.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentChoice {
    Oracle,
    EmpiricalOrder2,
    EmpiricalOrder4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Closed-form λ-derivative filters.
    #[default]
    Analytic,
    /// Stencils along `ln λ` applied to the invariants.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub representation: Representation,
    pub k: usize,
    pub sigma_source: SigmaSource,
    pub moment_source: MomentChoice,
    pub derivative_mode: DerivativeMode,
}

impl EstimatorConfig {
    pub fn ps(k: usize) -> Self {
        EstimatorConfig {
            representation: Representation::Ps,
            k,
            sigma_source: SigmaSource::Empirical,
            moment_source: MomentChoice::Oracle,
            derivative_mode: DerivativeMode::Analytic,
        }
    }

    pub fn wsc(k: usize) -> Self {
        EstimatorConfig {
            representation: Representation::Wsc,
            ..Self::ps(k)
        }
    }

    /// Short id such as `PS k=0` or `WSC k=4`.
    pub fn label(&self) -> String {
        let r = match self.representation {
            Representation::Ps => "PS",
            Representation::Wsc => "WSC",
        };
        format!("{r} k={}", self.k)
    }

    pub fn check(&self, model: Model) -> Result<()> {
        if self.k % 2 == 1 {
            return Err(Error::InvalidParameter(format!(
                "order {} must be even",
                self.k
            )));
        }
        if self.representation == Representation::Ps && self.k > 0 {
            if model.has_noise() {
                return Err(Error::Unsupported(format!(
                    "power spectrum unbiasing of order {} needs a noiseless model",
                    self.k
                )));
            }
            if self.k > 4 {
                return Err(Error::Unsupported(format!(
                    "power spectrum stencils stop at order 4, got {}",
                    self.k
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub config: EstimatorConfig,
    pub model: Model,
    /// ω for PS, λ for WSC.
    pub axis: Vec<f64>,
    /// NaN wherever `mask` is false.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub count: usize,
    pub sigma_sq: f64,
    pub moments: Option<DilationMoments>,
}

impl EstimatorOutput {
    /// PS output as a spectrum; masked bins become 0.
    pub fn to_power_spectrum(&self, grid: &Grid) -> Result<PowerSpectrum> {
        if self.config.representation != Representation::Ps || self.axis.len() != grid.len() {
            return Err(Error::GridMismatch(
                "not a power spectrum on this grid".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(PowerSpectrum {
            grid: *grid,
            values,
        })
    }

    pub fn valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, &m))| m)
            .map(|(i, (&v, _))| (i, v))
    }

    /// `#`-prefixed metadata lines, then `axis_value,estimate,mask`.
    pub fn write_csv<W: Write>(&self, mut w: W, eta: f64, seed: u64) -> io::Result<()> {
        writeln!(w, "# model={:?}", self.model)?;
        writeln!(w, "# estimator={}", self.config.label())?;
        writeln!(w, "# M={}", self.count)?;
        writeln!(w, "# sigma={}", self.sigma_sq.sqrt())?;
        writeln!(w, "# eta={eta}")?;
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "axis_value,estimate,mask")?;
        for ((a, v), m) in self.axis.iter().zip(&self.values).zip(&self.mask) {
            writeln!(w, "{a},{v},{}", u8::from(*m))?;
        }
        Ok(())
    }
}

const STENCIL_1: [f64; 7] = [
    -1.0 / 60.0,
    3.0 / 20.0,
    -0.75,
    0.0,
    0.75,
    -3.0 / 20.0,
    1.0 / 60.0,
];
const STENCIL_2: [f64; 7] = [
    1.0 / 90.0,
    -3.0 / 20.0,
    1.5,
    -49.0 / 18.0,
    1.5,
    -3.0 / 20.0,
    1.0 / 90.0,
];
const STENCIL_3: [f64; 7] = [0.125, -1.0, 1.625, 0.0, -1.625, 1.0, -0.125];
const STENCIL_4: [f64; 7] = [-1.0 / 6.0, 2.0, -6.5, 28.0 / 3.0, -6.5, 2.0, -1.0 / 6.0];

/// Centered 7-point derivative of order `n ∈ {1, 2, 3, 4}` on a uniform axis
/// with spacing `h`. Accuracy is `h⁶` for `n ≤ 2` and `h⁴` for `n ≥ 3`. The
/// three points at each end are masked.
pub fn fd_derivative(samples: &[f64], h: f64, n: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let stencil = match n {
        1 => &STENCIL_1,
        2 => &STENCIL_2,
        3 => &STENCIL_3,
        4 => &STENCIL_4,
        _ => return Err(Error::Unsupported(format!("derivative order {n}"))),
    };
    let len = samples.len();
    if len < 7 {
        return Err(Error::TooFewSamples {
            needed: 7,
            got: len,
        });
    }
    let scale = h.powi(n as i32);
    let mut out = vec![f64::NAN; len];
    let mut mask = vec![false; len];
    for i in 3..len - 3 {
        out[i] = stencil
            .iter()
            .zip(&samples[i - 3..=i + 3])
            .map(|(c, v)| c * v)
            .sum::<f64>()
            / scale;
        mask[i] = true;
    }
    Ok((out, mask))
}

fn require_moments(moments: Option<&DilationMoments>, k: usize) -> Result<&DilationMoments> {
    moments.ok_or_else(|| {
        Error::InvalidParameter(format!("order {k} unbiasing needs dilation moments"))
    })
}

/// `(1/M) Σ_j P y_j − σ̃²` for `k = 0`; for `k ≥ 2` (noiseless dilation model)
/// the mean spectrum minus `Σ_i B_i η^i ω^i ∂_ω^i` of itself, with stencil
/// derivatives.
pub fn estimate_ps(
    summary: &SpectralSummary,
    config: &EstimatorConfig,
    model: Model,
    sigma_sq: f64,
    moments: Option<&DilationMoments>,
) -> Result<EstimatorOutput> {
    if config.representation != Representation::Ps {
        return Err(Error::InvalidParameter(
            "estimate_ps needs a PS config".into(),
        ));
    }
    config.check(model)?;
    let grid = &summary.grid;
    let mean = &summary.mean_power;
    let noise = if model.has_noise() { sigma_sq } else { 0.0 };
    let mut values: Vec<f64> = mean.iter().map(|p| p - noise).collect();
    let mut mask = vec![true; values.len()];
    let mut used = None;
    if config.k > 0 {
        let m = require_moments(moments, config.k)?;
        let b = b_constants(m, config.k)?;
        let eta = m.eta();
        for i in (2..=config.k).step_by(2) {
            let (d, dm) = fd_derivative(mean, grid.d_omega(), i)?;
            let coef = b[&i] * eta.powi(i as i32);
            for (kk, v) in values.iter_mut().enumerate() {
                *v -= coef * grid.omega(kk).powi(i as i32) * d[kk];
                mask[kk] &= dm[kk];
            }
        }
        used = Some(m.clone());
    }
    for (v, m) in values.iter_mut().zip(&mask) {
        if !m {
            *v = f64::NAN;
        }
    }
    Ok(EstimatorOutput {
        config: *config,
        model,
        axis: grid.omegas(),
        values,
        mask,
        count: summary.count,
        sigma_sq: noise,
        moments: used,
    })
}

/// `λⁿ ∂_λⁿ S` from samples on the log-spaced λ grid, via `θ = ∂_{ln λ}`:
/// `λ²∂² = θ² − θ`, `λ⁴∂⁴ = θ⁴ − 6θ³ + 11θ² − 6θ`.
fn log_axis_derivative(s: &[f64], lambdas: &[f64], n: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let h = (lambdas[1] / lambdas[0]).ln();
    let coefs: &[(usize, f64)] = match n {
        2 => &[(2, 1.0), (1, -1.0)],
        4 => &[(4, 1.0), (3, -6.0), (2, 11.0), (1, -6.0)],
        _ => {
            return Err(Error::Unsupported(format!(
                "finite-difference λ-derivative of order {n}"
            )))
        }
    };
    let mut out = vec![0.0; s.len()];
    let mut mask = vec![true; s.len()];
    for &(p, c) in coefs {
        let (d, m) = fd_derivative(s, h, p)?;
        for i in 0..s.len() {
            out[i] += c * d[i];
            mask[i] &= m[i];
        }
    }
    Ok((out, mask))
}

/// `S̃f(λ) = S ȳ(λ) − Σ_i B_i η^i λ^i ∂_λ^i S ȳ(λ) − σ̃²` where `S ȳ` is the bank
/// applied to the mean power spectrum; `σ̃²` is only removed when the model
/// has noise. Out-of-band λ are masked.
pub fn estimate_wsc(
    summary: &SpectralSummary,
    config: &EstimatorConfig,
    model: Model,
    sigma_sq: f64,
    moments: Option<&DilationMoments>,
    bank: &FilterBank,
) -> Result<EstimatorOutput> {
    if config.representation != Representation::Wsc {
        return Err(Error::InvalidParameter(
            "estimate_wsc needs a WSC config".into(),
        ));
    }
    config.check(model)?;
    bank.grid.check_same(&summary.grid)?;
    let mean = &summary.mean_power;
    let base = apply(&bank.matrix, mean);
    let noise = if model.has_noise() { sigma_sq } else { 0.0 };
    let mut values: Vec<f64> = base.iter().map(|s| s - noise).collect();
    let mut mask = bank.in_band.clone();
    let mut used = None;
    if config.k > 0 {
        let m = require_moments(moments, config.k)?;
        let b = b_constants(m, config.k)?;
        let eta = m.eta();
        for i in (2..=config.k).step_by(2) {
            let coef = b[&i] * eta.powi(i as i32);
            let d = match config.derivative_mode {
                DerivativeMode::Analytic => apply(bank.order(i)?, mean),
                DerivativeMode::FiniteDifference => {
                    if bank.len() < 2 {
                        return Err(Error::TooFewSamples {
                            needed: 7,
                            got: bank.len(),
                        });
                    }
                    let (d, dm) = log_axis_derivative(&base, &bank.lambdas, i)?;
                    for (a, b) in mask.iter_mut().zip(dm) {
                        *a &= b;
                    }
                    d
                }
            };
            for (v, dv) in values.iter_mut().zip(&d) {
                *v -= coef * dv;
            }
        }
        used = Some(m.clone());
    }
    for (v, m) in values.iter_mut().zip(&mask) {
        if !m {
            *v = f64::NAN;
        }
    }
    Ok(EstimatorOutput {
        config: *config,
        model,
        axis: bank.lambdas.clone(),
        values,
        mask,
        count: summary.count,
        sigma_sq: noise,
        moments: used,
    })
}
