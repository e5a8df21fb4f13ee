use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Grid;

/// Riemann-sum Fourier transform on a [`Grid`]:
/// `f̂(ω_k) = Σ_i f(x_i) e^{-iω_k x_i} Δx`.
///
/// With `x_i = x_0 + iΔx` and `ω_k = ω_0 + kΔω` this is a DFT with the sign
/// pattern `(-1)^{i+k}` and the constant phase `e^{-iω_0 x_0}`.
#[derive(Clone)]
pub struct FourierPlan {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    phase: Complex64,
}

impl FourierPlan {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.len());
        let inverse = planner.plan_fft_inverse(grid.len());
        let phase = Complex64::from_polar(1.0, -grid.omega(0) * grid.x(0));
        FourierPlan {
            grid: *grid,
            forward,
            inverse,
            phase,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Complex64::new(alternate(i) * v, 0.0))
            .collect();
        self.forward.process(&mut buf);
        let scale = self.phase * self.grid.dx();
        for (k, z) in buf.iter_mut().enumerate() {
            *z *= scale * alternate(k);
        }
        buf
    }

    /// Inverse of [`forward`](Self::forward):
    /// `f(x_i) = (1/2π) Σ_k f̂(ω_k) e^{iω_k x_i} Δω`.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(k, &z)| z * alternate(k))
            .collect();
        self.inverse.process(&mut buf);
        let scale = self.phase.conj() / (self.grid.len() as f64 * self.grid.dx());
        for (i, z) in buf.iter_mut().enumerate() {
            *z *= scale * alternate(i);
        }
        buf
    }

    pub fn power(&self, values: &[f64]) -> Vec<f64> {
        self.forward(values).iter().map(|z| z.norm_sqr()).collect()
    }
}

fn alternate(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
