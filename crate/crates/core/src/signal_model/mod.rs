//! Grids, closed-form test signals, the three corruption models and the
//! continuous-Fourier convention shared by every other module.

mod corrupt;
mod fourier;
mod grid;
mod signals;
mod summary;

use std::io::{self, Write};

use num_complex::Complex64;

pub use corrupt::{
    corrupt, corrupt_with, sample_observations, CorruptionParams, Model, Observation,
    ObservationSlice, ObservationSource, Sampler, TauDistribution, TauSampling, Translation,
};
pub use fourier::FourierPlan;
pub use grid::Grid;
pub use signals::{sigma_for_snr, snr, Signal, NAMED};
pub use summary::SpectralSummary;

/// Real samples `f(x_i)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSample {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Complex samples `f̂(ω_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

/// `|f̂(ω_k)|²` on the frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub grid: Grid,
    pub values: Vec<f64>,
}

pub fn fourier(signal: &SignalSample) -> Spectrum {
    let plan = FourierPlan::new(&signal.grid);
    Spectrum {
        grid: signal.grid,
        values: plan.forward(&signal.values),
    }
}

pub fn power_spectrum(spec: &Spectrum) -> PowerSpectrum {
    PowerSpectrum {
        grid: spec.grid,
        values: spec.values.iter().map(|z| z.norm_sqr()).collect(),
    }
}

pub fn write_signal_csv<W: Write>(mut w: W, s: &SignalSample) -> io::Result<()> {
    writeln!(w, "x,value")?;
    for (i, v) in s.values.iter().enumerate() {
        writeln!(w, "{},{}", s.grid.x(i), v)?;
    }
    Ok(())
}

pub fn write_observations_csv<W: Write>(mut w: W, obs: &[Observation]) -> io::Result<()> {
    writeln!(w, "j,x,value")?;
    for (j, o) in obs.iter().enumerate() {
        for (i, v) in o.signal.values.iter().enumerate() {
            writeln!(w, "{j},{},{v}", o.signal.grid.x(i))?;
        }
    }
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(mut w: W, s: &Spectrum) -> io::Result<()> {
    writeln!(w, "omega,re,im")?;
    for (k, z) in s.values.iter().enumerate() {
        writeln!(w, "{},{},{}", s.grid.omega(k), z.re, z.im)?;
    }
    Ok(())
}

pub fn write_power_csv<W: Write>(mut w: W, p: &PowerSpectrum) -> io::Result<()> {
    writeln!(w, "omega,power")?;
    for (k, v) in p.values.iter().enumerate() {
        writeln!(w, "{},{}", p.grid.omega(k), v)?;
    }
    Ok(())
}
