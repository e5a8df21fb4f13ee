use num_complex::Complex64;

use mra_core::moments::{
    b_constants, b_residuals, estimate_dilation_moments_dilmra, estimate_dilation_moments_noisy,
    estimate_sigma, exact_cv, g_m_grid, g_m_integral, order4_cv, DilationMoments, MomentSource,
    NoiseCorrection,
};
use mra_core::signal_model::{
    sigma_for_snr, CorruptionParams, Grid, Sampler, Signal, SpectralSummary, TauDistribution,
    Translation,
};

fn zero_signal() -> Signal {
    Signal::Custom {
        name: "zero",
        f: |_| 0.0,
    }
}

fn summary(signal: Signal, params: CorruptionParams, m: usize) -> SpectralSummary {
    SpectralSummary::compute(&Sampler::new(signal, Grid::standard(), params, m).unwrap()).unwrap()
}

#[test]
fn sigma_is_zero_without_noise() {
    let grid = Grid::standard();
    let s = summary(
        Signal::F2,
        CorruptionParams::classic(0.0, Translation::support_safe(&grid), 1),
        50,
    );
    let est = estimate_sigma(&s).unwrap();
    assert!(est.sigma_sq <= 1e-8);
}

#[test]
fn sigma_of_pure_noise_is_within_three_standard_errors() {
    let sigma = 0.125;
    let m = 1000;
    let s = summary(
        zero_signal(),
        CorruptionParams::classic(sigma, Translation::Zero, 2),
        m,
    );
    let est = estimate_sigma(&s).unwrap();
    // each tail bin is an average of M exponentials with mean σ²; pairs ±ω
    // are conjugate, so roughly half the bins are independent
    let bins = mra_core::moments::tail_band(&s.grid).len() as f64;
    let se = sigma * sigma / (m as f64 * bins / 2.0).sqrt();
    assert!(
        (est.sigma_sq - sigma * sigma).abs() <= 3.0 * se,
        "{} vs {}",
        est.sigma_sq,
        sigma * sigma
    );
    assert!(est.warning.is_none());
}

#[test]
fn sigma_at_low_snr_is_within_two_percent() {
    let grid = Grid::standard();
    let sigma = sigma_for_snr(&Signal::F2, &grid, 0.56).unwrap();
    let s = summary(
        Signal::F2,
        CorruptionParams::classic(sigma, Translation::support_safe(&grid), 3),
        10_000,
    );
    let est = estimate_sigma(&s).unwrap();
    assert!((est.sigma_sq / (sigma * sigma) - 1.0).abs() <= 0.02);
}

#[test]
fn no_dilation_gives_zero_eta() {
    let grid = Grid::standard();
    let s = summary(
        Signal::F3,
        CorruptionParams::classic(0.0, Translation::support_safe(&grid), 4),
        256,
    );
    let m = estimate_dilation_moments_dilmra(&s, 2).unwrap();
    assert!(m.eta_sq.abs() < 1e-20, "{}", m.eta_sq);
    assert_eq!(m.source, MomentSource::EmpiricalOrder2);
}

#[test]
fn uniform_cv_series_value() {
    let eta: f64 = 0.12;
    let cv0 = exact_cv(TauDistribution::Uniform, eta, 0).unwrap();
    // η² + (3C₄ − 3)η⁴ with C₄ = 9/5, plus higher order terms
    let series = eta.powi(2) + (3.0 * 1.8 - 3.0) * eta.powi(4);
    assert!((cv0 - 0.0148978).abs() < 5e-5, "{cv0}");
    assert!((cv0 - series).abs() < 2e-5);
    let (c0, _) = order4_cv(eta * eta, 1.8);
    assert!((c0 - series).abs() < 1e-15);
}

#[test]
fn b_recursion_residuals_vanish() {
    for m in [
        DilationMoments::uniform(0.1, 10),
        DilationMoments::truncated_gaussian(0.15, 10).unwrap(),
        DilationMoments::zero(10),
    ] {
        let b = b_constants(&m, 10).unwrap();
        assert!(b_residuals(&m, &b).unwrap().iter().all(|r| r.abs() < 1e-12));
        assert_eq!(b[&2], 0.5);
    }
}

fn unbiasing_error(eta: f64, k: usize) -> f64 {
    // L(λ) = e^{-(λ-2)²}; compare E L((1-τ)λ) − Σ B_i η^i λ^i L^{(i)}(λ) with L
    let a = 3f64.sqrt() * eta;
    let l = |x: f64| (-(x - 2.0) * (x - 2.0)).exp();
    let d = |n: usize, x: f64| {
        let u = x - 2.0;
        let p = match n {
            2 => 4.0 * u * u - 2.0,
            4 => 16.0 * u.powi(4) - 48.0 * u * u + 12.0,
            _ => unreachable!(),
        };
        p * (-u * u).exp()
    };
    let m = DilationMoments::uniform(eta, 4);
    let b = b_constants(&m, 4).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=40 {
        let x = 1.0 + i as f64 * 0.05;
        let mean =
            mra_core::quad::integrate(|t| l((1.0 - t) * x), -a, a, 1e-15).unwrap() / (2.0 * a);
        let mut est = mean;
        for j in (2..=k).step_by(2) {
            est -= b[&j] * eta.powi(j as i32) * x.powi(j as i32) * d(j, x);
        }
        worst = worst.max((est - l(x)).abs());
    }
    worst
}

#[test]
fn unbiasing_error_orders() {
    // halving η divides the k = 0 error by 2² and the k = 2 error by 2⁴
    let ratio = |k| unbiasing_error(0.04, k) / unbiasing_error(0.02, k);
    let slope = |k| f64::log2(ratio(k));
    assert!((slope(0) - 2.0).abs() < 0.2, "{}", slope(0));
    assert!((slope(2) - 4.0).abs() < 0.3, "{}", slope(2));
    // The order-4 correction as defined subtracts λ²∂² and λ⁴∂⁴ terms only;
    // the mixed η⁴λ²∂² contribution of the order-2 term is left in place, so
    // the residual stays O(η⁴) instead of O(η⁶).
    assert!((slope(4) - 4.0).abs() < 0.3, "{}", slope(4));
}

#[test]
fn g0_scales_with_sigma_squared_and_vanishes_without_noise() {
    let grid = Grid::standard();
    assert_eq!(g_m_integral(0, &grid, 0.0, 512), 0.0);
    assert_eq!(g_m_grid(1, &grid, 0.0), 0.0);
    let a = g_m_integral(0, &grid, 0.0625, 512);
    let b = g_m_integral(0, &grid, 0.125, 512);
    assert!((b - 4.0 * a).abs() <= 1e-14 * b);
}

#[test]
fn g0_matches_monte_carlo_variance() {
    let grid = Grid::standard();
    let sigma = 0.0625;
    let m = 100_000;
    let s = summary(
        zero_signal(),
        CorruptionParams::classic(sigma, Translation::Zero, 5),
        m,
    );
    let z: Vec<Complex64> = s.beta.iter().map(|b| b[0]).collect();
    let mean = z.iter().sum::<Complex64>() / m as f64;
    let d: Vec<f64> = z.iter().map(|v| (v - mean).norm_sqr()).collect();
    let var = d.iter().sum::<f64>() / (m - 1) as f64;
    let var_of_d = d.iter().map(|x| (x - var).powi(2)).sum::<f64>() / (m - 1) as f64;
    let se = (var_of_d / m as f64).sqrt();
    let grid_value = g_m_grid(0, &grid, sigma);
    let integral = g_m_integral(0, &grid, sigma, 2048);
    assert!(
        (var - grid_value).abs() <= 3.0 * se,
        "MC {var} ± {se} vs grid {grid_value}"
    );
    assert!(
        (var - integral).abs() <= 3.0 * se,
        "MC {var} ± {se} vs integral {integral}"
    );
}

#[test]
fn noisy_estimator_without_noise_matches_the_noiseless_one() {
    let params = CorruptionParams::dilation(0.1, Translation::Zero, 6);
    let s = summary(Signal::F3, params, 4096);
    let a = estimate_dilation_moments_dilmra(&s, 2).unwrap();
    let b = estimate_dilation_moments_noisy(&s, 0.0, 2, NoiseCorrection::default()).unwrap();
    // both are consistent for η²; their Monte Carlo spread at this M is a few percent
    assert!(
        (a.eta_sq / b.eta_sq - 1.0).abs() < 0.05,
        "{} vs {}",
        a.eta_sq,
        b.eta_sq
    );
    assert!((b.eta_sq / 0.01 - 1.0).abs() < 0.1);
}

#[test]
fn noisy_estimator_without_dilation_is_near_zero() {
    let sigma = 0.03125;
    let m = 1 << 14;
    let s = summary(
        Signal::F3,
        CorruptionParams::classic(sigma, Translation::Zero, 7),
        m,
    );
    let est = estimate_dilation_moments_noisy(&s, sigma, 2, NoiseCorrection::default()).unwrap();
    let z: Vec<Complex64> = s.beta.iter().map(|b| b[0]).collect();
    let mean = z.iter().sum::<Complex64>() / m as f64;
    // the variance correction has error O(g_0/√M) relative to |Eβ|²
    let scale = g_m_grid(0, &s.grid, sigma) / mean.norm_sqr() / (m as f64).sqrt();
    assert!(est.eta_sq <= 5.0 * scale, "{} vs {scale}", est.eta_sq);
}

#[test]
fn noisy_estimator_recovers_eta() {
    let sigma = 0.03125;
    let eta = 0.12;
    let s = summary(
        Signal::F3,
        CorruptionParams::noisy_dilation(sigma, eta, Translation::Zero, 8),
        1 << 15,
    );
    let est = estimate_dilation_moments_noisy(&s, sigma, 2, NoiseCorrection::default()).unwrap();
    assert!(
        (est.eta_sq / (eta * eta) - 1.0).abs() <= 0.1,
        "{}",
        est.eta_sq
    );
}
