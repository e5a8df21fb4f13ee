use std::f64::consts::PI;
use std::fmt;

use super::{Grid, PowerSpectrum, SignalSample};
use crate::{Error, Result};

/// Closed-form test signals. Each is evaluated on `[-N/4, N/4]` and zero
/// elsewhere on the grid.
#[derive(Clone, Copy)]
pub enum Signal {
    /// `e^{-5x²} cos(8x)`
    F1,
    /// `e^{-5x²} cos(16x)`
    F2,
    /// `e^{-5x²} cos(32x)`
    F3,
    /// `1.175 cos(32x) 1(|x| ≤ 0.2)`
    F4,
    /// `0.299 e^{-0.04x²} cos(30x + 1.5x²)`
    F5,
    /// `(2.304/π) cos(35x) sin(3x)/(3x)`
    F6,
    /// `e^{-5x²} cos(freq·x)`
    Gabor { freq: f64 },
    /// `e^{-x²/(2 width²)}`, a signal with a real positive transform.
    Gaussian { width: f64 },
    /// User supplied closed form without an analytic power spectrum.
    Custom {
        name: &'static str,
        f: fn(f64) -> f64,
    },
}

impl PartialEq for Signal {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Signal::Custom { name: a, .. }, Signal::Custom { name: b, .. }) => a == b,
            (Signal::Custom { .. }, _) | (_, Signal::Custom { .. }) => false,
            _ => self.name() == other.name(),
        }
    }
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

pub const NAMED: [Signal; 6] = [
    Signal::F1,
    Signal::F2,
    Signal::F3,
    Signal::F4,
    Signal::F5,
    Signal::F6,
];

fn gabor(x: f64, freq: f64) -> f64 {
    (-5.0 * x * x).exp() * (freq * x).cos()
}

// Transform of e^{-5x²}cos(bx), real and even in ω.
fn gabor_hat(w: f64, freq: f64) -> f64 {
    0.5 * (PI / 5.0).sqrt()
        * ((-(w - freq).powi(2) / 20.0).exp() + (-(w + freq).powi(2) / 20.0).exp())
}

// ∫_{-a}^{a} e^{-iux} dx
fn box_hat(u: f64, a: f64) -> f64 {
    if u.abs() < 1e-12 {
        2.0 * a
    } else {
        2.0 * (u * a).sin() / u
    }
}

impl Signal {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "f1" => Ok(Signal::F1),
            "f2" => Ok(Signal::F2),
            "f3" => Ok(Signal::F3),
            "f4" => Ok(Signal::F4),
            "f5" => Ok(Signal::F5),
            "f6" => Ok(Signal::F6),
            _ => Err(Error::UnknownSignal(name.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Signal::F1 => "f1".into(),
            Signal::F2 => "f2".into(),
            Signal::F3 => "f3".into(),
            Signal::F4 => "f4".into(),
            Signal::F5 => "f5".into(),
            Signal::F6 => "f6".into(),
            Signal::Gabor { freq } => format!("gabor({freq})"),
            Signal::Gaussian { width } => format!("gaussian({width})"),
            Signal::Custom { name, .. } => (*name).into(),
        }
    }

    pub fn formula(&self) -> &'static str {
        match self {
            Signal::F1 => "exp(-5x^2) cos(8x)",
            Signal::F2 => "exp(-5x^2) cos(16x)",
            Signal::F3 => "exp(-5x^2) cos(32x)",
            Signal::F4 => "1.175 cos(32x) 1(|x| <= 0.2)",
            Signal::F5 => "0.299 exp(-0.04x^2) cos(30x + 1.5x^2)",
            Signal::F6 => "(2.304/pi) cos(35x) sinc(3x)",
            Signal::Gabor { .. } => "exp(-5x^2) cos(freq x)",
            Signal::Gaussian { .. } => "exp(-x^2 / (2 width^2))",
            Signal::Custom { .. } => "custom",
        }
    }

    /// The closed form, ignoring the `[-N/4, N/4]` window.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Signal::F1 => gabor(x, 8.0),
            Signal::F2 => gabor(x, 16.0),
            Signal::F3 => gabor(x, 32.0),
            Signal::F4 => {
                if x.abs() <= 0.2 {
                    1.175 * (32.0 * x).cos()
                } else {
                    0.0
                }
            }
            Signal::F5 => 0.299 * (-0.04 * x * x).exp() * (30.0 * x + 1.5 * x * x).cos(),
            Signal::F6 => {
                let s = if x == 0.0 {
                    1.0
                } else {
                    (3.0 * x).sin() / (3.0 * x)
                };
                2.304 / PI * (35.0 * x).cos() * s
            }
            Signal::Gabor { freq } => gabor(x, freq),
            Signal::Gaussian { width } => (-x * x / (2.0 * width * width)).exp(),
            Signal::Custom { f, .. } => f(x),
        }
    }

    /// Closed form restricted to `[-half_width, half_width]`.
    pub fn eval_windowed(&self, x: f64, half_width: f64) -> f64 {
        if x.abs() <= half_width {
            self.eval(x)
        } else {
            0.0
        }
    }

    /// Samples on the grid, zero outside `[-N/4, N/4]`.
    pub fn sample(&self, grid: &Grid) -> SignalSample {
        let hw = grid.box_size() / 4.0;
        let values = (0..grid.len())
            .map(|i| self.eval_windowed(grid.x(i), hw))
            .collect();
        SignalSample {
            grid: *grid,
            values,
        }
    }

    /// Continuous power spectrum `|f̂(ω)|²` when a closed form exists.
    ///
    /// Only signals whose mass outside `[-N/4, N/4]` is negligible on the
    /// standard grid (Gabor atoms, F4, narrow Gaussians) have one.
    pub fn power_spectrum_at(&self, w: f64) -> Option<f64> {
        let hat = match *self {
            Signal::F1 => gabor_hat(w, 8.0),
            Signal::F2 => gabor_hat(w, 16.0),
            Signal::F3 => gabor_hat(w, 32.0),
            Signal::Gabor { freq } => gabor_hat(w, freq),
            Signal::F4 => 0.5 * 1.175 * (box_hat(w - 32.0, 0.2) + box_hat(w + 32.0, 0.2)),
            Signal::Gaussian { width } => {
                width * (2.0 * PI).sqrt() * (-0.5 * width * width * w * w).exp()
            }
            _ => return None,
        };
        Some(hat * hat)
    }

    /// Reference power spectrum on the grid: the closed form where one exists,
    /// otherwise the grid transform of the windowed samples.
    pub fn true_power_spectrum(&self, grid: &Grid) -> PowerSpectrum {
        if self.power_spectrum_at(0.0).is_some() {
            let values = (0..grid.len())
                .map(|k| self.power_spectrum_at(grid.omega(k)).unwrap())
                .collect();
            PowerSpectrum {
                grid: *grid,
                values,
            }
        } else {
            super::power_spectrum(&super::fourier(&self.sample(grid)))
        }
    }

    /// Mean power `(1/N)∫f²` of the windowed signal by grid quadrature.
    pub fn mean_power(&self, grid: &Grid) -> f64 {
        let s = self.sample(grid);
        s.values.iter().map(|v| v * v).sum::<f64>() * grid.dx() / grid.box_size()
    }
}

/// Signal-to-noise ratio `((1/N)∫f²) / σ²`; infinite when `σ = 0`.
pub fn snr(signal: &Signal, grid: &Grid, sigma: f64) -> f64 {
    let p = signal.mean_power(grid);
    if sigma == 0.0 {
        if p == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        p / (sigma * sigma)
    }
}

/// Noise level achieving the requested SNR.
pub fn sigma_for_snr(signal: &Signal, grid: &Grid, snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SNR {snr} must be positive"
        )));
    }
    Ok((signal.mean_power(grid) / snr).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    #[test]
    fn point_values() {
        assert_eq!(Signal::F3.eval(0.0), 1.0);
        assert_eq!(Signal::F4.eval(0.25), 0.0);
        assert!((Signal::F4.eval(0.0) - 1.175).abs() < 1e-15);
        assert!((Signal::F6.eval(0.0) - 2.304 / PI).abs() < 1e-15);
    }

    #[test]
    fn names_round_trip() {
        for s in NAMED {
            assert_eq!(Signal::from_name(&s.name()).unwrap(), s);
        }
        assert!(matches!(
            Signal::from_name("f9"),
            Err(Error::UnknownSignal(_))
        ));
    }

    #[test]
    fn f1_norm_matches_quadrature() {
        let g = Grid::standard();
        let s = Signal::F1.sample(&g);
        let grid_norm: f64 = s.values.iter().map(|v| v * v).sum::<f64>() * g.dx();
        let exact = quad::integrate(
            |x| (-10.0 * x * x).exp() * (8.0 * x).cos().powi(2),
            -8.0,
            8.0,
            1e-14,
        )
        .unwrap();
        assert!((grid_norm - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn named_signals_have_comparable_energy() {
        let g = Grid::standard();
        let e3 = Signal::F3.mean_power(&g);
        for s in [Signal::F4, Signal::F5, Signal::F6] {
            let e = s.mean_power(&g);
            assert!((e / e3 - 1.0).abs() < 0.05, "{s:?}: {e} vs {e3}");
        }
    }

    #[test]
    fn snr_reference_values() {
        let g = Grid::standard();
        let a = snr(&Signal::F2, &g, 0.125);
        assert!((a - 0.56).abs() <= 0.01, "{a}");
        let b = snr(&Signal::F2, &g, 0.0625);
        assert!((b - 2.2).abs() <= 0.05, "{b}");
        let zero = Signal::Custom {
            name: "zero",
            f: |_| 0.0,
        };
        assert_eq!(snr(&zero, &g, 0.1), 0.0);
        assert!(snr(&Signal::F2, &g, 0.0).is_infinite());
        let s = sigma_for_snr(&Signal::F2, &g, a).unwrap();
        assert!((s - 0.125).abs() < 1e-12);
    }

    #[test]
    fn analytic_spectrum_matches_grid_transform() {
        let g = Grid::standard();
        for s in [
            Signal::F1,
            Signal::F2,
            Signal::F3,
            Signal::Gaussian { width: 0.7 },
        ] {
            let exact = s.true_power_spectrum(&g);
            let grid = super::super::power_spectrum(&super::super::fourier(&s.sample(&g)));
            let peak = exact.values.iter().cloned().fold(0.0, f64::max);
            for (a, b) in exact.values.iter().zip(&grid.values) {
                assert!((a - b).abs() <= 1e-10 * peak);
            }
        }
    }

    #[test]
    fn f4_spectrum_close_to_grid_transform() {
        // The indicator edge costs O(Δx) in the Riemann sum.
        let g = Grid::standard();
        let exact = Signal::F4.true_power_spectrum(&g);
        let grid = super::super::power_spectrum(&super::super::fourier(&Signal::F4.sample(&g)));
        let peak = exact.values.iter().cloned().fold(0.0, f64::max);
        let worst = exact
            .values
            .iter()
            .zip(&grid.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.1 * peak, "{worst} vs {peak}");
    }
}
