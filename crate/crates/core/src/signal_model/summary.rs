use num_complex::Complex64;
use rayon::prelude::*;

use super::{FourierPlan, Grid, ObservationSource};
use crate::{Error, Result};

const BLOCK: usize = 64;

/// One-pass reduction of a batch of observations: the mean power spectrum and
/// the per-observation spectral integrals used for moment estimation.
///
/// The reduction runs over fixed blocks of 64 observations that are summed in
/// index order, so the result is bit-identical for any thread count.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub grid: Grid,
    pub count: usize,
    /// `(1/M) Σ_j |ŷ_j(ω_k)|²`
    pub mean_power: Vec<f64>,
    /// `α_m(y_j) = ∫_0^{2^ℓπ} ω^m |ŷ_j(ω)|² dω` for `m = 0, 1`.
    pub alpha: Vec<[f64; 2]>,
    /// `β_m(y_j) = ∫_0^{2^ℓπ} ω^m ŷ_j(ω) dω` for `m = 0, 1`.
    pub beta: Vec<[Complex64; 2]>,
}

struct Block {
    power_sum: Vec<f64>,
    alpha: Vec<[f64; 2]>,
    beta: Vec<[Complex64; 2]>,
}

impl SpectralSummary {
    pub fn compute(source: &dyn ObservationSource) -> Result<Self> {
        let grid = *source.grid();
        let m = source.count();
        if m == 0 {
            return Err(Error::InvalidParameter("no observations".into()));
        }
        let plan = FourierPlan::new(&grid);
        let n = grid.len();
        let c = grid.center();
        let dw = grid.d_omega();
        let blocks: Vec<Block> = (0..m.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| -> Result<Block> {
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(m);
                let mut power_sum = vec![0.0; n];
                let mut alpha = Vec::with_capacity(hi - lo);
                let mut beta = Vec::with_capacity(hi - lo);
                for j in lo..hi {
                    let y = source.values(j)?;
                    let spec = plan.forward(&y);
                    let mut a = [0.0; 2];
                    let mut z = [Complex64::new(0.0, 0.0); 2];
                    for (k, s) in spec.iter().enumerate() {
                        let p = s.norm_sqr();
                        power_sum[k] += p;
                        if k >= c {
                            let w = grid.omega(k);
                            a[0] += p * dw;
                            a[1] += w * p * dw;
                            z[0] += s * dw;
                            z[1] += s * (w * dw);
                        }
                    }
                    alpha.push(a);
                    beta.push(z);
                }
                Ok(Block {
                    power_sum,
                    alpha,
                    beta,
                })
            })
            .collect::<Result<_>>()?;
        let mut total = vec![0.0; n];
        let mut alpha = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        for b in blocks {
            for (t, p) in total.iter_mut().zip(&b.power_sum) {
                *t += p;
            }
            alpha.extend(b.alpha);
            beta.extend(b.beta);
        }
        let inv = 1.0 / m as f64;
        let mean_power = total.into_iter().map(|t| t * inv).collect();
        Ok(SpectralSummary {
            grid,
            count: m,
            mean_power,
            alpha,
            beta,
        })
    }

    /// Summary of the union of two batches.
    pub fn merge(&self, other: &SpectralSummary) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let m = self.count + other.count;
        let (wa, wb) = (self.count as f64 / m as f64, other.count as f64 / m as f64);
        let mean_power = self
            .mean_power
            .iter()
            .zip(&other.mean_power)
            .map(|(a, b)| wa * a + wb * b)
            .collect();
        let mut alpha = self.alpha.clone();
        alpha.extend_from_slice(&other.alpha);
        let mut beta = self.beta.clone();
        beta.extend_from_slice(&other.beta);
        Ok(SpectralSummary {
            grid: self.grid,
            count: m,
            mean_power,
            alpha,
            beta,
        })
    }
}
