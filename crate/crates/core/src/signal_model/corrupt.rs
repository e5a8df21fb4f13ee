use std::borrow::Cow;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Grid, Signal, SignalSample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Random translations plus additive noise.
    Classic,
    /// Random translations and dilations, no noise.
    Dilation,
    /// Random translations, dilations and additive noise.
    NoisyDilation,
}

impl Model {
    pub fn has_noise(&self) -> bool {
        !matches!(self, Model::Dilation)
    }

    pub fn has_dilation(&self) -> bool {
        !matches!(self, Model::Classic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauDistribution {
    /// Uniform on `[-√3η, √3η]`, so `Var τ = η²`.
    Uniform,
    /// Normal with standard deviation η, conditioned on `|τ| ≤ 1/2`.
    TruncatedGaussian,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Translation {
    Zero,
    Uniform { half_width: f64 },
}

impl Translation {
    /// Widest uniform range that keeps every dilated window inside the box
    /// for any `|τ| ≤ 1/2`.
    pub fn support_safe(grid: &Grid) -> Self {
        Translation::Uniform {
            half_width: grid.box_size() / 8.0,
        }
    }
}

/// How the dilations of a batch are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauSampling {
    #[default]
    Independent,
    /// One uniform draw in each of M equal-probability strata. Same marginal
    /// law, much smaller Monte Carlo variance for smooth statistics.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionParams {
    pub model: Model,
    pub sigma: f64,
    pub eta: f64,
    pub tau: TauDistribution,
    pub translation: Translation,
    pub tau_sampling: TauSampling,
    pub seed: u64,
}

impl CorruptionParams {
    pub fn classic(sigma: f64, translation: Translation, seed: u64) -> Self {
        CorruptionParams {
            model: Model::Classic,
            sigma,
            eta: 0.0,
            tau: TauDistribution::Zero,
            translation,
            tau_sampling: TauSampling::Independent,
            seed,
        }
    }

    pub fn dilation(eta: f64, translation: Translation, seed: u64) -> Self {
        CorruptionParams {
            model: Model::Dilation,
            sigma: 0.0,
            eta,
            tau: TauDistribution::Uniform,
            translation,
            tau_sampling: TauSampling::Independent,
            seed,
        }
    }

    pub fn noisy_dilation(sigma: f64, eta: f64, translation: Translation, seed: u64) -> Self {
        CorruptionParams {
            model: Model::NoisyDilation,
            sigma,
            eta,
            tau: TauDistribution::Uniform,
            translation,
            tau_sampling: TauSampling::Independent,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!(
                "sigma {} must be finite and nonnegative",
                self.sigma
            ));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be finite and nonnegative", self.eta));
        }
        match self.model {
            Model::Dilation if self.sigma != 0.0 => {
                return bad("the dilation model has no additive noise".into())
            }
            Model::Classic if self.eta != 0.0 => {
                return bad("the classic model has no dilations".into())
            }
            _ => {}
        }
        if self.tau == TauDistribution::Uniform && 3f64.sqrt() * self.eta > 0.5 {
            return bad(format!(
                "uniform dilations with eta {} exceed |τ| ≤ 1/2",
                self.eta
            ));
        }
        if self.tau_sampling == TauSampling::Stratified && self.tau != TauDistribution::Uniform {
            return bad("stratified sampling is only defined for uniform dilations".into());
        }
        if let Translation::Uniform { half_width } = self.translation {
            if !(half_width >= 0.0) {
                return bad(format!(
                    "translation half width {half_width} must be nonnegative"
                ));
            }
        }
        Ok(())
    }

    fn tau_half_width(&self) -> f64 {
        3f64.sqrt() * self.eta
    }

    fn draw_tau<R: Rng>(&self, rng: &mut R) -> f64 {
        if !self.model.has_dilation() || self.eta == 0.0 {
            return 0.0;
        }
        match self.tau {
            TauDistribution::Zero => 0.0,
            TauDistribution::Uniform => {
                let a = self.tau_half_width();
                rng.gen_range(-a..=a)
            }
            TauDistribution::TruncatedGaussian => {
                let normal = Normal::new(0.0, self.eta).expect("eta is finite");
                loop {
                    let t: f64 = normal.sample(rng);
                    if t.abs() <= 0.5 {
                        return t;
                    }
                }
            }
        }
    }

    fn draw_shift<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.translation {
            Translation::Zero => 0.0,
            Translation::Uniform { half_width } if half_width > 0.0 => {
                rng.gen_range(-half_width..=half_width)
            }
            Translation::Uniform { .. } => 0.0,
        }
    }
}

/// One corrupted sample with its hidden nuisance parameters. The hidden
/// values are kept for test oracles only; no estimator reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub signal: SignalSample,
    pub hidden_tau: f64,
    pub hidden_t: f64,
}

/// Evaluates `(1-τ)^{-1} f((x - t)/(1-τ)) + ε(x)` on the grid.
///
/// The dilation and shift act on the closed form, so there is no
/// interpolation error. The noise is i.i.d. Gaussian with per-sample variance
/// `σ²/(NΔx)`, which makes `E|ε̂(ω)|² = σ²` at every grid frequency.
pub fn corrupt_with<R: Rng>(
    signal: &Signal,
    grid: &Grid,
    sigma: f64,
    tau: f64,
    t: f64,
    rng: &mut R,
) -> Result<Observation> {
    if tau.abs() > 0.5 {
        return Err(Error::InvalidParameter(format!(
            "|τ| = {} exceeds 1/2",
            tau.abs()
        )));
    }
    let scale = 1.0 - tau;
    let window = grid.box_size() / 4.0;
    if t.abs() + scale * window > grid.box_size() / 2.0 + 1e-12 {
        return Err(Error::Support(format!(
            "shift {t} with dilation {tau} leaves [-N/2, N/2]"
        )));
    }
    let mut values: Vec<f64> = (0..grid.len())
        .map(|i| signal.eval_windowed((grid.x(i) - t) / scale, window) / scale)
        .collect();
    if sigma > 0.0 {
        let std = sigma / (grid.box_size() * grid.dx()).sqrt();
        let normal = Normal::new(0.0, std).expect("sigma is finite");
        for v in values.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    Ok(Observation {
        signal: SignalSample {
            grid: *grid,
            values,
        },
        hidden_tau: tau,
        hidden_t: t,
    })
}

/// Single draw from the corruption model.
pub fn corrupt<R: Rng>(
    signal: &Signal,
    grid: &Grid,
    params: &CorruptionParams,
    rng: &mut R,
) -> Result<Observation> {
    params.validate()?;
    let tau = params.draw_tau(rng);
    let t = params.draw_shift(rng);
    corrupt_with(signal, grid, params.sigma, tau, t, rng)
}

/// Deterministic source of the `j`-th observation of a batch of `m`.
///
/// Observation `j` uses its own ChaCha stream keyed by `(seed, j)`, so any
/// subset can be generated in any order or in parallel with identical
/// results.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub signal: Signal,
    pub grid: Grid,
    pub params: CorruptionParams,
    pub m: usize,
}

impl Sampler {
    pub fn new(signal: Signal, grid: Grid, params: CorruptionParams, m: usize) -> Result<Self> {
        params.validate()?;
        if m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1".into()));
        }
        let window = grid.box_size() / 4.0;
        let max_t = match params.translation {
            Translation::Zero => 0.0,
            Translation::Uniform { half_width } => half_width,
        };
        let max_scale = if params.model.has_dilation() && params.eta > 0.0 {
            match params.tau {
                TauDistribution::Zero => 1.0,
                TauDistribution::Uniform => 1.0 + params.tau_half_width(),
                TauDistribution::TruncatedGaussian => 1.5,
            }
        } else {
            1.0
        };
        if max_t + max_scale * window > grid.box_size() / 2.0 + 1e-12 {
            return Err(Error::Support(format!(
                "translations up to {max_t} can push the signal out of the box"
            )));
        }
        Ok(Sampler {
            signal,
            grid,
            params,
            m,
        })
    }

    pub fn rng(&self, j: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_stream(j as u64);
        rng
    }

    pub fn observation(&self, j: usize) -> Result<Observation> {
        let mut rng = self.rng(j);
        let tau = match self.params.tau_sampling {
            TauSampling::Independent => self.params.draw_tau(&mut rng),
            TauSampling::Stratified => {
                if !self.params.model.has_dilation() {
                    0.0
                } else {
                    let a = self.params.tau_half_width();
                    let u: f64 = rng.gen();
                    a * (2.0 * (j as f64 + u) / self.m as f64 - 1.0)
                }
            }
        };
        let t = self.params.draw_shift(&mut rng);
        corrupt_with(
            &self.signal,
            &self.grid,
            self.params.sigma,
            tau,
            t,
            &mut rng,
        )
    }
}

/// `m` independent observations, generated in parallel.
pub fn sample_observations(
    signal: &Signal,
    grid: &Grid,
    params: &CorruptionParams,
    m: usize,
) -> Result<Vec<Observation>> {
    let sampler = Sampler::new(*signal, *grid, *params, m)?;
    (0..m)
        .into_par_iter()
        .map(|j| sampler.observation(j))
        .collect()
}

/// Anything that can hand out observation samples by index.
pub trait ObservationSource: Sync {
    fn grid(&self) -> &Grid;
    fn count(&self) -> usize;
    fn values(&self, j: usize) -> Result<Cow<'_, [f64]>>;
}

impl ObservationSource for Sampler {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn count(&self) -> usize {
        self.m
    }
    fn values(&self, j: usize) -> Result<Cow<'_, [f64]>> {
        Ok(Cow::Owned(self.observation(j)?.signal.values))
    }
}

/// Observations already in memory. All must share one grid.
pub struct ObservationSlice<'a> {
    grid: Grid,
    items: &'a [Observation],
}

impl<'a> ObservationSlice<'a> {
    pub fn new(items: &'a [Observation]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidParameter("no observations".into()))?;
        let grid = first.signal.grid;
        for o in items {
            grid.check_same(&o.signal.grid)?;
        }
        Ok(ObservationSlice { grid, items })
    }
}

impl ObservationSource for ObservationSlice<'_> {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn count(&self) -> usize {
        self.items.len()
    }
    fn values(&self, j: usize) -> Result<Cow<'_, [f64]>> {
        Ok(Cow::Borrowed(&self.items[j].signal.values))
    }
}
