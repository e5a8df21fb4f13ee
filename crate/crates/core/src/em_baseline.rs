//! Expectation-maximization baseline over discrete circular shifts and a
//! discrete dilation grid, for small grids.
//!
//! Templates are `S_ℓ D_q f` with `S_ℓ` a circular shift by `ℓ` samples and
//! `D_q` the band-limited dilation by `τ_q`. Both are linear in `f`, so the
//! M-step for `f` is an exact weighted least-squares solve.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::{Error, Result};

/// Discrete latent grids and the precomputed dilation matrices.
#[derive(Debug, Clone)]
pub struct EmGrid {
    pub n: usize,
    /// Box length; sample `i` sits at `(i - n/2)·box/n`.
    pub box_size: f64,
    pub shifts: Vec<usize>,
    pub taus: Vec<f64>,
    dilations: Vec<DMatrix<f64>>,
}

/// `(D f)(x_i) = (1-τ)^{-1} f(x_i/(1-τ))` with `f` the trigonometric
/// interpolant of its samples; zero where `x_i/(1-τ)` leaves the box.
pub fn dilation_matrix(n: usize, box_size: f64, tau: f64) -> DMatrix<f64> {
    let h = box_size / n as f64;
    let s = 1.0 - tau;
    let x = |i: usize| (i as f64 - (n / 2) as f64) * h;
    DMatrix::from_fn(n, n, |i, m| {
        let u = x(i) / s;
        if u.abs() > 0.5 * box_size {
            return 0.0;
        }
        // Dirichlet kernel with the Nyquist term split evenly
        let d = 2.0 * PI * (u - x(m)) / box_size;
        let mut k = 1.0;
        for f in 1..n / 2 {
            k += 2.0 * (f as f64 * d).cos();
        }
        k += ((n / 2) as f64 * d).cos();
        k / (n as f64 * s)
    })
}

impl EmGrid {
    pub fn new(n: usize, box_size: f64, shifts: Vec<usize>, taus: Vec<f64>) -> Result<Self> {
        if n < 2 || n % 2 == 1 {
            return Err(Error::Sizing(format!(
                "EM grid size {n} must be even and ≥ 2"
            )));
        }
        if shifts.is_empty() || taus.is_empty() {
            return Err(Error::InvalidParameter("empty latent grid".into()));
        }
        if let Some(&s) = shifts.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidParameter(format!("shift {s} outside 0..{n}")));
        }
        if let Some(t) = taus.iter().find(|t| !(t.abs() < 0.5)) {
            return Err(Error::InvalidParameter(format!(
                "dilation {t} outside (-1/2, 1/2)"
            )));
        }
        let dilations = taus
            .iter()
            .map(|&t| dilation_matrix(n, box_size, t))
            .collect();
        Ok(EmGrid {
            n,
            box_size,
            shifts,
            taus,
            dilations,
        })
    }

    /// All `n` shifts and `n_tau` dilations spaced evenly on `[-a, a]`.
    pub fn full(n: usize, box_size: f64, tau_half_width: f64, n_tau: usize) -> Result<Self> {
        let taus = if n_tau == 1 {
            vec![0.0]
        } else {
            (0..n_tau)
                .map(|q| tau_half_width * (2.0 * q as f64 / (n_tau - 1) as f64 - 1.0))
                .collect()
        };
        Self::new(n, box_size, (0..n).collect(), taus)
    }

    pub fn template(&self, f: &[f64], shift: usize, q: usize) -> Vec<f64> {
        let d = &self.dilations[q] * DVector::from_column_slice(f);
        let n = self.n;
        (0..n).map(|i| d[(i + n - shift) % n]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub f: Vec<f64>,
    pub rho_t: Vec<f64>,
    pub rho_tau: Vec<f64>,
    /// Marginal log-likelihood of the observations under this state, up to
    /// an additive constant; NaN until evaluated.
    pub log_likelihood: f64,
}

impl EmState {
    pub fn uniform(f: Vec<f64>, grid: &EmGrid) -> Self {
        let nt = grid.shifts.len();
        let nq = grid.taus.len();
        EmState {
            f,
            rho_t: vec![1.0 / nt as f64; nt],
            rho_tau: vec![1.0 / nq as f64; nq],
            log_likelihood: f64::NAN,
        }
    }
}

/// Posterior weights `w[j][ℓ·n_tau + q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmWeights {
    pub n_shift: usize,
    pub n_tau: usize,
    pub w: Vec<Vec<f64>>,
    /// Marginal log-likelihood of the state the weights were computed from.
    pub log_likelihood: f64,
}

impl EmWeights {
    pub fn get(&self, j: usize, l: usize, q: usize) -> f64 {
        self.w[j][l * self.n_tau + q]
    }
}

/// Posterior over `(ℓ, q)` for every observation,
/// `w ∝ exp(-‖S_ℓ D_q f - y_j‖²/(2σ²)) ρ_t(ℓ) ρ_τ(q)`. With `σ = 0` each
/// observation is assigned to its best template.
pub fn e_step(state: &EmState, obs: &[Vec<f64>], sigma: f64, grid: &EmGrid) -> Result<EmWeights> {
    let n = grid.n;
    if state.f.len() != n || obs.iter().any(|y| y.len() != n) {
        return Err(Error::GridMismatch(
            "EM signal and observation lengths differ".into(),
        ));
    }
    let nt = grid.shifts.len();
    let nq = grid.taus.len();
    let dilated: Vec<Vec<f64>> = (0..nq).map(|q| grid.template(&state.f, 0, q)).collect();
    let norms: Vec<f64> = dilated
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum())
        .collect();
    let log_prior: Vec<f64> = (0..nt * nq)
        .map(|i| state.rho_t[i / nq].ln() + state.rho_tau[i % nq].ln())
        .collect();

    let per_obs: Vec<(Vec<f64>, f64)> = obs
        .par_iter()
        .map(|y| {
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let mut dist = vec![0.0; nt * nq];
            for (li, &l) in grid.shifts.iter().enumerate() {
                for q in 0..nq {
                    let d = &dilated[q];
                    // ⟨S_ℓ d, y⟩ = Σ_i d_{i-ℓ} y_i
                    let mut cross = 0.0;
                    for i in 0..n {
                        cross += d[(i + n - l) % n] * y[i];
                    }
                    dist[li * nq + q] = (norms[q] + yy - 2.0 * cross).max(0.0);
                }
            }
            if sigma == 0.0 {
                let mut best = 0;
                for i in 1..dist.len() {
                    if dist[i] < dist[best] && log_prior[i].is_finite() {
                        best = i;
                    }
                }
                let mut w = vec![0.0; dist.len()];
                w[best] = 1.0;
                return (w, f64::NAN);
            }
            let s2 = 2.0 * sigma * sigma;
            let logits: Vec<f64> = dist
                .iter()
                .zip(&log_prior)
                .map(|(d, p)| p - d / s2)
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut w: Vec<f64> = logits.iter().map(|v| (v - top).exp()).collect();
            let z: f64 = w.iter().sum();
            for v in &mut w {
                *v /= z;
            }
            (w, top + z.ln())
        })
        .collect();
    let log_likelihood = per_obs.iter().map(|p| p.1).sum();
    let w = per_obs.into_iter().map(|p| p.0).collect();
    Ok(EmWeights {
        n_shift: nt,
        n_tau: nq,
        w,
        log_likelihood,
    })
}

/// Exact maximizer of the expected complete-data log-likelihood:
/// `[Σ_q W_q D_qᵀD_q] f = Σ_q D_qᵀ Σ_{j,ℓ} w S_ℓᵀ y_j`, with
/// `W_q = Σ_{j,ℓ} w`, and the prior masses renormalized.
pub fn m_step(weights: &EmWeights, obs: &[Vec<f64>], grid: &EmGrid) -> Result<EmState> {
    let n = grid.n;
    let nt = weights.n_shift;
    let nq = weights.n_tau;
    let mut rho_t = vec![0.0; nt];
    let mut rho_tau = vec![0.0; nq];
    // back-shifted weighted observation sums per q
    let mut pulled = vec![vec![0.0; n]; nq];
    for (j, y) in obs.iter().enumerate() {
        for (li, &l) in grid.shifts.iter().enumerate() {
            for q in 0..nq {
                let w = weights.get(j, li, q);
                if w == 0.0 {
                    continue;
                }
                rho_t[li] += w;
                rho_tau[q] += w;
                for i in 0..n {
                    pulled[q][i] += w * y[(i + l) % n];
                }
            }
        }
    }
    let total: f64 = rho_t.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("EM weights carry no mass".into()));
    }
    let mut lhs = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for q in 0..nq {
        if rho_tau[q] == 0.0 {
            continue;
        }
        let d = &grid.dilations[q];
        lhs += rho_tau[q] * d.transpose() * d;
        rhs += d.transpose() * DVector::from_column_slice(&pulled[q]);
    }
    let ridge = 1e-12 * (lhs.trace() / n as f64).max(1e-300);
    for i in 0..n {
        lhs[(i, i)] += ridge;
    }
    let f = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("singular EM normal equations".into()))?;
    for v in &mut rho_t {
        *v /= total;
    }
    let tq: f64 = rho_tau.iter().sum();
    for v in &mut rho_tau {
        *v /= tq;
    }
    Ok(EmState {
        f: f.iter().copied().collect(),
        rho_t,
        rho_tau,
        log_likelihood: f64::NAN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmTraceEntry {
    pub iter: usize,
    pub log_likelihood: f64,
    pub wall_ms: f64,
}

/// Writes `iter,Q,wall_ms`, with the marginal log-likelihood in the `Q` column.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[EmTraceEntry]) -> io::Result<()> {
    writeln!(w, "iter,Q,wall_ms")?;
    for t in trace {
        writeln!(w, "{},{},{}", t.iter, t.log_likelihood, t.wall_ms)?;
    }
    Ok(())
}

/// Mean of the observations, the default starting point.
pub fn mean_observation(obs: &[Vec<f64>]) -> Vec<f64> {
    let n = obs.first().map_or(0, |y| y.len());
    let mut f = vec![0.0; n];
    for y in obs {
        for (a, b) in f.iter_mut().zip(y) {
            *a += b;
        }
    }
    f.iter().map(|v| v / obs.len().max(1) as f64).collect()
}

/// Alternates E and M steps until the relative log-likelihood gain drops
/// below `tol` or `max_iters` is reached. The trace holds the
/// log-likelihood of each visited state.
pub fn run_em(
    obs: &[Vec<f64>],
    sigma: f64,
    grid: &EmGrid,
    init: EmState,
    max_iters: usize,
    tol: f64,
) -> Result<(EmState, Vec<EmTraceEntry>)> {
    if obs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let start = Instant::now();
    let mut state = init;
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for iter in 0..max_iters {
        let weights = e_step(&state, obs, sigma, grid)?;
        state.log_likelihood = weights.log_likelihood;
        trace.push(EmTraceEntry {
            iter,
            log_likelihood: weights.log_likelihood,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        let ll = weights.log_likelihood;
        if iter > 0 && ll.is_finite() && (ll - prev).abs() <= tol * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
        state = m_step(&weights, obs, grid)?;
    }
    if state.log_likelihood.is_nan() && sigma > 0.0 {
        state.log_likelihood = e_step(&state, obs, sigma, grid)?.log_likelihood;
    }
    Ok((state, trace))
}

/// Relative L² distance to `truth` after the best circular alignment.
pub fn aligned_relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len();
    let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    (0..n)
        .map(|s| {
            (0..n)
                .map(|i| (estimate[(i + s) % n] - truth[i]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
        / norm
}
