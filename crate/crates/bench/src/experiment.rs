use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mra_core::em_baseline::{self, EmGrid, EmState};
use mra_core::estimators::{estimate_ps, estimate_wsc, MomentChoice};
use mra_core::inversion::{recover_ps, InversionOptions};
use mra_core::moments::{
    estimate_dilation_moments_dilmra, estimate_dilation_moments_noisy, estimate_sigma,
    DilationMoments, NoiseCorrection,
};
use mra_core::signal_model::{
    sigma_for_snr, snr, CorruptionParams, FourierPlan, Grid, Model, ObservationSlice,
    PowerSpectrum, Sampler, Signal, SpectralSummary, TauDistribution,
};
use mra_core::wavelet::{admissibility_constants, FilterBank, MorletWavelet};

use crate::config::{EstimatorId, ExperimentConfig, SigmaSourceName};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub replicate: usize,
    pub l2_error: f64,
    pub wall_ms: f64,
    /// Identifies the config and code version; written to the metadata file.
    #[serde(skip)]
    pub hash: String,
}

/// Per-replicate noise and moment estimates, for the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub replicate: usize,
    pub sigma_sq: f64,
    pub eta_sq: f64,
    pub c4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub estimates: Vec<EstimateRow>,
    pub sigma: f64,
    pub snr: f64,
    pub hash: String,
}

/// `√(Σ_k (a_k − b_k)² Δω)` over the whole grid.
pub fn l2_error(estimate: &PowerSpectrum, truth: &PowerSpectrum) -> Result<f64, BenchError> {
    if estimate.grid != truth.grid || estimate.values.len() != truth.values.len() {
        return Err(BenchError::Core(mra_core::Error::GridMismatch(
            "estimate and truth live on different grids".into(),
        )));
    }
    let s: f64 = estimate
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((s * truth.grid.d_omega()).sqrt())
}

/// SHA-256 of the canonical config text and the crate version, hex.
pub fn metadata_hash(config: &ExperimentConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.to_toml().as_bytes());
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `(M, replicate)` unit.
pub fn unit_seed(seed: u64, m: usize, replicate: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(m as u64)) ^ replicate as u64)
}

fn tau_half_width(tau: TauDistribution, eta: f64) -> f64 {
    match tau {
        TauDistribution::Uniform => 3f64.sqrt() * eta,
        TauDistribution::TruncatedGaussian => (2.5 * eta).min(0.45),
        TauDistribution::Zero => 0.0,
    }
}

struct Shared {
    signal: Signal,
    grid: Grid,
    model: Model,
    sigma: f64,
    truth: PowerSpectrum,
    bank: Option<FilterBank>,
    psi: Vec<f64>,
    ids: Vec<EstimatorId>,
    options: InversionOptions,
}

fn noise_sigma(config: &ExperimentConfig, signal: &Signal, grid: &Grid) -> Result<f64, BenchError> {
    Ok(match (config.sigma, config.snr) {
        (Some(s), _) => s,
        (None, Some(r)) => sigma_for_snr(signal, grid, r)?,
        (None, None) => 0.0,
    })
}

/// Runs every `(M, replicate)` unit in parallel and returns rows ordered by
/// M, replicate and the configured estimator order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, BenchError> {
    config.validate()?;
    let signal = config.signal()?;
    let grid = Grid::new(config.box_size, config.level)?;
    let sigma = noise_sigma(config, &signal, &grid)?;
    let ids = config.estimator_ids()?;
    let max_k = ids
        .iter()
        .map(|id| match id {
            EstimatorId::Wsc(k) => *k,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    let bank = if ids.iter().any(|id| matches!(id, EstimatorId::Wsc(_))) {
        Some(FilterBank::standard(&grid, max_k)?)
    } else {
        None
    };
    let wavelet = MorletWavelet::new(MorletWavelet::DEFAULT_XI)?;
    let (psi, _) = admissibility_constants(&wavelet, 10)?;
    let shared = Shared {
        signal,
        grid,
        model: config.model(),
        sigma,
        truth: signal.true_power_spectrum(&grid),
        bank,
        psi,
        ids,
        options: InversionOptions {
            grad_tol: config.grad_tol,
            max_iters: config.max_iters,
            ..InversionOptions::default()
        },
    };
    let hash = metadata_hash(config);
    let units: Vec<(usize, usize)> = config
        .m
        .iter()
        .flat_map(|&m| (0..config.replicates).map(move |r| (m, r)))
        .collect();
    let results: Vec<(Vec<ResultRow>, EstimateRow)> = units
        .par_iter()
        .map(|&(m, r)| run_unit(config, &shared, m, r, &hash))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for (rs, e) in results {
        rows.extend(rs);
        estimates.push(e);
    }
    Ok(ExperimentOutput {
        rows,
        estimates,
        sigma,
        snr: snr(&signal, &grid, sigma),
        hash,
    })
}

fn run_unit(
    config: &ExperimentConfig,
    shared: &Shared,
    m: usize,
    replicate: usize,
    hash: &str,
) -> Result<(Vec<ResultRow>, EstimateRow), BenchError> {
    let grid = shared.grid;
    let seed = unit_seed(config.seed, m, replicate);
    let mut params = CorruptionParams {
        model: shared.model,
        sigma: shared.sigma,
        eta: config.eta,
        tau: config.tau.into(),
        translation: config.translation(grid.box_size()),
        tau_sampling: config.tau_sampling(),
        seed,
    };
    if !shared.model.has_dilation() {
        params.tau = TauDistribution::Zero;
    }
    let start = Instant::now();
    let sampler = Sampler::new(shared.signal, grid, params, m)?;
    let summary = SpectralSummary::compute(&sampler)?;
    let sigma_sq = match config.sigma_source {
        SigmaSourceName::Oracle => shared.sigma * shared.sigma,
        SigmaSourceName::Empirical if shared.model.has_noise() => {
            estimate_sigma(&summary)?.sigma_sq
        }
        SigmaSourceName::Empirical => 0.0,
    };
    let choice: MomentChoice = config.moment_source.into();
    let moments = moments_for(config, shared, &summary, sigma_sq, choice, m)?;
    let shared_ms = start.elapsed().as_secs_f64() * 1e3;

    let init_cfg = EstimatorId::Ps(0).estimator_config(choice).unwrap();
    let init =
        estimate_ps(&summary, &init_cfg, shared.model, sigma_sq, None)?.to_power_spectrum(&grid)?;
    let mut rows = Vec::new();
    for id in &shared.ids {
        let t = Instant::now();
        let err = match id {
            EstimatorId::Ps(_) => {
                let c = id.estimator_config(choice).unwrap();
                let out = estimate_ps(&summary, &c, shared.model, sigma_sq, moments.as_ref())?;
                l2_error(&out.to_power_spectrum(&grid)?, &shared.truth)?
            }
            EstimatorId::Wsc(_) => {
                let c = id.estimator_config(choice).unwrap();
                let bank = shared.bank.as_ref().expect("bank built for WSC");
                let out =
                    estimate_wsc(&summary, &c, shared.model, sigma_sq, moments.as_ref(), bank)?;
                let dc = init.values[grid.center()];
                let res = recover_ps(&out, dc, bank, &init, &shared.options)?;
                l2_error(&res.ps_estimate, &shared.truth)?
            }
            EstimatorId::Em => run_em_unit(config, shared, m, seed)?,
        };
        let ms = t.elapsed().as_secs_f64() * 1e3 + shared_ms;
        rows.push(ResultRow {
            estimator: id.label(),
            m,
            replicate,
            l2_error: err,
            wall_ms: if config.timing { ms } else { 0.0 },
            hash: hash.to_string(),
        });
    }
    let est = EstimateRow {
        m,
        replicate,
        sigma_sq,
        eta_sq: moments.as_ref().map_or(0.0, |d| d.eta_sq),
        c4: moments.as_ref().and_then(|d| d.c.get(&4).copied()),
    };
    Ok((rows, est))
}

fn moments_for(
    config: &ExperimentConfig,
    shared: &Shared,
    summary: &SpectralSummary,
    sigma_sq: f64,
    choice: MomentChoice,
    _m: usize,
) -> Result<Option<DilationMoments>, BenchError> {
    if !shared.model.has_dilation() {
        return Ok(None);
    }
    let max_order = 2 * (shared.psi.len() / 2).max(2);
    Ok(Some(match choice {
        MomentChoice::Oracle => DilationMoments::oracle(config.tau.into(), config.eta, max_order)?,
        MomentChoice::EmpiricalOrder2 | MomentChoice::EmpiricalOrder4 => {
            let order = if choice == MomentChoice::EmpiricalOrder2 {
                2
            } else {
                4
            };
            if shared.model.has_noise() {
                estimate_dilation_moments_noisy(
                    summary,
                    sigma_sq.sqrt(),
                    order,
                    NoiseCorrection::default(),
                )?
            } else {
                estimate_dilation_moments_dilmra(summary, order)?
            }
        }
    }))
}

/// EM on the reduced grid with at most `em_max_m` observations, scored by the
/// power spectrum of its estimate against the truth on that grid.
fn run_em_unit(
    config: &ExperimentConfig,
    shared: &Shared,
    m: usize,
    seed: u64,
) -> Result<f64, BenchError> {
    let grid = Grid::new(config.em_box_size, config.em_level)?;
    let count = m.min(config.em_max_m).max(2);
    let tau: TauDistribution = if shared.model.has_dilation() {
        config.tau.into()
    } else {
        TauDistribution::Zero
    };
    let params = CorruptionParams {
        model: shared.model,
        sigma: shared.sigma,
        eta: config.eta,
        tau,
        translation: config.translation(grid.box_size()),
        tau_sampling: config.tau_sampling(),
        seed: splitmix(seed ^ 0xe3),
    };
    let obs = mra_core::signal_model::sample_observations(&shared.signal, &grid, &params, count)?;
    let sample_sigma = match config.sigma_source {
        SigmaSourceName::Oracle => shared.sigma,
        SigmaSourceName::Empirical if shared.model.has_noise() => {
            let summary = SpectralSummary::compute(&ObservationSlice::new(&obs)?)?;
            estimate_sigma(&summary)?.sigma_sq.sqrt()
        }
        SigmaSourceName::Empirical => 0.0,
    };
    // per-sample noise standard deviation on this grid
    let per_sample = sample_sigma / (grid.box_size() * grid.dx()).sqrt();
    let n_tau = if shared.model.has_dilation() {
        config.em_n_tau
    } else {
        1
    };
    let em_grid = EmGrid::full(
        grid.len(),
        grid.box_size(),
        tau_half_width(tau, config.eta),
        n_tau,
    )?;
    let data: Vec<Vec<f64>> = obs.into_iter().map(|o| o.signal.values).collect();
    let init = EmState::uniform(em_baseline::mean_observation(&data), &em_grid);
    let (state, _) = em_baseline::run_em(
        &data,
        per_sample,
        &em_grid,
        init,
        config.em_max_iters,
        config.em_tol,
    )?;
    let plan = FourierPlan::new(&grid);
    let estimate = PowerSpectrum {
        grid,
        values: plan.power(&state.f),
    };
    l2_error(&estimate, &shared.signal.true_power_spectrum(&grid))
}
