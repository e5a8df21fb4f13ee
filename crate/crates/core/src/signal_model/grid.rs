use std::f64::consts::PI;

use crate::{Error, Result};

/// Uniform spatial grid on `[-N/2, N/2)` with step `2^-level`, paired with the
/// frequency grid on `[-2^level π, 2^level π)` with step `2π/N`.
///
/// Both axes are half-open, so index `len/2` holds `x = 0` and `ω = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    box_size: f64,
    level: u32,
    len: usize,
}

impl Grid {
    pub fn new(box_size: f64, level: u32) -> Result<Self> {
        if !(box_size.is_finite() && box_size > 0.0) {
            return Err(Error::Sizing(format!(
                "box size {box_size} must be positive"
            )));
        }
        let count = box_size * f64::powi(2.0, level as i32);
        let len = count.round();
        if (count - len).abs() > 1e-9 * count.max(1.0) {
            return Err(Error::Sizing(format!("N·2^ℓ = {count} is not an integer")));
        }
        let len = len as usize;
        if len < 2 || !len.is_multiple_of(2) {
            return Err(Error::Sizing(format!(
                "point count {len} must be even and at least 2"
            )));
        }
        Ok(Grid {
            box_size,
            level,
            len,
        })
    }

    /// The 1024-point grid used throughout the experiments (N = 32, ℓ = 5).
    pub fn standard() -> Self {
        Grid::new(32.0, 5).expect("standard grid is valid")
    }

    pub fn box_size(&self) -> f64 {
        self.box_size
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dx(&self) -> f64 {
        self.box_size / self.len as f64
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / self.box_size
    }

    /// Largest resolved frequency `2^ℓ π`.
    pub fn omega_max(&self) -> f64 {
        PI * f64::powi(2.0, self.level as i32)
    }

    /// Index of `x = 0` and `ω = 0`.
    pub fn center(&self) -> usize {
        self.len / 2
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.box_size + i as f64 * self.dx()
    }

    pub fn omega(&self, k: usize) -> f64 {
        -self.omega_max() + k as f64 * self.d_omega()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.x(i)).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.omega(k)).collect()
    }

    /// Index of `-ω_k`, or `None` for the unpaired endpoint `-2^ℓ π`.
    pub fn mirror(&self, k: usize) -> Option<usize> {
        if k == 0 {
            None
        } else {
            Some(self.len - k)
        }
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(N={}, ℓ={}) vs (N={}, ℓ={})",
                self.box_size, self.level, other.box_size, other.level
            )))
        }
    }
}
