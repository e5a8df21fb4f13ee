use num_complex::Complex64;

use mra_core::estimators::{
    estimate_ps, estimate_wsc, DerivativeMode, EstimatorConfig, MomentChoice,
};
use mra_core::moments::{estimate_sigma, DilationMoments};
use mra_core::quad;
use mra_core::signal_model::{
    fourier, power_spectrum, sample_observations, CorruptionParams, Grid, Model, ObservationSlice,
    PowerSpectrum, Sampler, Signal, SpectralSummary, Translation,
};
use mra_core::wavelet::{invariants, FilterBank};

fn exact_summary(grid: &Grid, p: impl Fn(f64) -> f64) -> SpectralSummary {
    SpectralSummary {
        grid: *grid,
        count: 1,
        mean_power: grid.omegas().into_iter().map(p).collect(),
        alpha: vec![[0.0; 2]],
        beta: vec![[Complex64::new(0.0, 0.0); 2]],
    }
}

// E P((1-τ)ω) for uniform τ with variance η²
fn dilation_average(p: impl Fn(f64) -> f64, eta: f64, w: f64) -> f64 {
    let a = 3f64.sqrt() * eta;
    quad::integrate(|t| p((1.0 - t) * w), -a, a, 1e-16).unwrap() / (2.0 * a)
}

#[test]
fn translated_noiseless_data_reproduce_the_power_spectrum() {
    let grid = Grid::standard();
    let params = CorruptionParams::classic(0.0, Translation::support_safe(&grid), 1);
    let s = SpectralSummary::compute(&Sampler::new(Signal::F2, grid, params, 64).unwrap()).unwrap();
    let out = estimate_ps(&s, &EstimatorConfig::ps(0), Model::Classic, 0.0, None).unwrap();
    let truth = power_spectrum(&fourier(&Signal::F2.sample(&grid)));
    let peak = truth.values.iter().copied().fold(0.0, f64::max);
    for (a, b) in out.values.iter().zip(&truth.values) {
        assert!((a - b).abs() <= 1e-10 * peak);
    }
    assert_eq!(out.config.label(), "PS k=0");
}

#[test]
fn no_dilation_no_noise_leaves_invariants_untouched() {
    let grid = Grid::standard();
    let bank = FilterBank::standard(&grid, 4).unwrap();
    let p = Signal::F3.true_power_spectrum(&grid);
    let s = exact_summary(&grid, |w| Signal::F3.power_spectrum_at(w).unwrap());
    let zero = DilationMoments::zero(4);
    let exact = invariants(&p, &bank).unwrap();
    for k in [0, 2, 4] {
        let out = estimate_wsc(
            &s,
            &EstimatorConfig::wsc(k),
            Model::Dilation,
            0.0,
            Some(&zero),
            &bank,
        )
        .unwrap();
        for (r, (a, b)) in out.values.iter().zip(&exact.values).enumerate() {
            if bank.in_band[r] {
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            } else {
                assert!(a.is_nan() && !out.mask[r]);
            }
        }
    }
}

#[test]
fn pure_noise_invariants_are_near_zero() {
    let grid = Grid::standard();
    let sigma = 0.125;
    let m = 2000;
    let params = CorruptionParams::classic(sigma, Translation::Zero, 2);
    let zero = Signal::Custom {
        name: "zero",
        f: |_| 0.0,
    };
    let s = SpectralSummary::compute(&Sampler::new(zero, grid, params, m).unwrap()).unwrap();
    let sigma_sq = estimate_sigma(&s).unwrap().sigma_sq;
    let bank = FilterBank::standard(&grid, 0).unwrap();
    let out = estimate_wsc(
        &s,
        &EstimatorConfig::wsc(0),
        Model::Classic,
        sigma_sq,
        None,
        &bank,
    )
    .unwrap();
    let bound = 5.0 * sigma * sigma * 3f64.sqrt() / (m as f64).sqrt();
    for (_, v) in out.valid() {
        assert!(v.abs() <= bound, "{v} vs {bound}");
    }
}

#[test]
fn estimators_are_linear_in_the_batch() {
    let grid = Grid::standard();
    let params = CorruptionParams::dilation(0.08, Translation::support_safe(&grid), 3);
    let obs = sample_observations(&Signal::F1, &grid, &params, 300).unwrap();
    let sum = |o| SpectralSummary::compute(&ObservationSlice::new(o).unwrap()).unwrap();
    let (a, b) = (sum(&obs[..100]), sum(&obs[100..]));
    let merged = a.merge(&b).unwrap();
    let moments = DilationMoments::uniform(0.08, 4);
    let bank = FilterBank::standard(&grid, 4).unwrap();
    let cfg = EstimatorConfig::wsc(4);
    let est = |s: &SpectralSummary| {
        estimate_wsc(s, &cfg, Model::Dilation, 0.0, Some(&moments), &bank).unwrap()
    };
    let (ea, eb, em) = (est(&a), est(&b), est(&merged));
    for ((x, y), z) in ea.valid().zip(eb.valid()).zip(em.valid()) {
        let w = (x.1 + 2.0 * y.1) / 3.0;
        assert!((z.1 - w).abs() <= 1e-12 * w.abs().max(1e-6));
    }
    let ps = |s: &SpectralSummary| {
        estimate_ps(
            s,
            &EstimatorConfig::ps(2),
            Model::Dilation,
            0.0,
            Some(&moments),
        )
        .unwrap()
    };
    let (pa, pb, pm) = (ps(&a), ps(&b), ps(&merged));
    // stencil roundoff scales with the peak, not with each bin
    let peak = pm.valid().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    for ((x, y), z) in pa.valid().zip(pb.valid()).zip(pm.valid()) {
        let w = (x.1 + 2.0 * y.1) / 3.0;
        assert!((z.1 - w).abs() <= 1e-12 * peak);
    }
}

fn wsc_bias(eta: f64, k: usize, mode: DerivativeMode) -> f64 {
    let grid = Grid::standard();
    let bank = FilterBank::standard(&grid, 4).unwrap();
    let f = Signal::F3;
    let truth = invariants(&f.true_power_spectrum(&grid), &bank).unwrap();
    let s = exact_summary(&grid, |w| {
        dilation_average(|u| f.power_spectrum_at(u).unwrap(), eta, w)
    });
    let mut cfg = EstimatorConfig::wsc(k);
    cfg.derivative_mode = mode;
    let m = DilationMoments::uniform(eta, 4);
    let out = estimate_wsc(&s, &cfg, Model::Dilation, 0.0, Some(&m), &bank).unwrap();
    out.valid()
        .map(|(r, v)| (v - truth.values[r]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn exact_dilation_average_bias_orders() {
    // with E P((1-τ)ω) supplied exactly, the residual bias is deterministic
    let slope = |k| {
        (wsc_bias(0.06, k, DerivativeMode::Analytic) / wsc_bias(0.03, k, DerivativeMode::Analytic))
            .log2()
    };
    assert!((slope(0) - 2.0).abs() < 0.3, "{}", slope(0));
    assert!((slope(2) - 4.0).abs() < 0.4, "{}", slope(2));
    assert!(
        wsc_bias(0.06, 2, DerivativeMode::Analytic)
            < 0.1 * wsc_bias(0.06, 0, DerivativeMode::Analytic)
    );
}

#[test]
fn finite_difference_mode_agrees_with_analytic_filters() {
    let a = wsc_bias(0.06, 2, DerivativeMode::Analytic);
    let f = wsc_bias(0.06, 2, DerivativeMode::FiniteDifference);
    let b0 = wsc_bias(0.06, 0, DerivativeMode::Analytic);
    assert!((a - f).abs() < 0.05 * b0, "{a} vs {f}");
}

#[test]
fn narrow_high_frequency_bump_defeats_power_spectrum_unbiasing() {
    // a sharp spectral peak far from the origin: ω²∂² terms blow up for PS,
    // while the invariants are smooth in λ
    let grid = Grid::standard();
    let eta = 0.04;
    let (c, s) = (60.0, 0.6);
    let bump = move |w: f64| (-(w.abs() - c).powi(2) / (2.0 * s * s)).exp();
    let truth = PowerSpectrum {
        grid,
        values: grid.omegas().into_iter().map(bump).collect(),
    };
    let summary = exact_summary(&grid, |w| dilation_average(bump, eta, w));
    let m = DilationMoments::uniform(eta, 4);
    let ps = estimate_ps(
        &summary,
        &EstimatorConfig::ps(2),
        Model::Dilation,
        0.0,
        Some(&m),
    )
    .unwrap();
    let ps_err = ps
        .valid()
        .map(|(k, v)| (v - truth.values[k]).abs())
        .fold(0.0, f64::max);
    let bank = FilterBank::standard(&grid, 2).unwrap();
    let st = invariants(&truth, &bank).unwrap();
    let wsc = estimate_wsc(
        &summary,
        &EstimatorConfig::wsc(2),
        Model::Dilation,
        0.0,
        Some(&m),
        &bank,
    )
    .unwrap();
    let peak = st.values.iter().copied().fold(0.0, f64::max);
    let wsc_err = wsc
        .valid()
        .map(|(r, v)| (v - st.values[r]).abs())
        .fold(0.0, f64::max)
        / peak;
    assert!(ps_err > 0.3, "PS relative error {ps_err}");
    assert!(wsc_err < 0.05, "WSC relative error {wsc_err}");
}

#[test]
fn configuration_rules() {
    assert!(EstimatorConfig::ps(2).check(Model::Classic).is_err());
    assert!(EstimatorConfig::ps(2).check(Model::NoisyDilation).is_err());
    assert!(EstimatorConfig::ps(2).check(Model::Dilation).is_ok());
    assert!(EstimatorConfig::ps(6).check(Model::Dilation).is_err());
    assert!(EstimatorConfig::wsc(3).check(Model::Dilation).is_err());
    assert!(EstimatorConfig::wsc(4).check(Model::NoisyDilation).is_ok());
    let mut c = EstimatorConfig::wsc(2);
    c.moment_source = MomentChoice::EmpiricalOrder4;
    assert_eq!(c.label(), "WSC k=2");
    // missing moments surface as an error, not a silent k = 0 estimate
    let grid = Grid::standard();
    let s = exact_summary(&grid, |_| 1.0);
    let bank = FilterBank::standard(&grid, 4).unwrap();
    let m2 = DilationMoments::uniform(0.1, 2);
    assert!(estimate_wsc(
        &s,
        &EstimatorConfig::wsc(4),
        Model::Dilation,
        0.0,
        Some(&m2),
        &bank
    )
    .is_err());
    assert!(estimate_wsc(
        &s,
        &EstimatorConfig::wsc(2),
        Model::Dilation,
        0.0,
        None,
        &bank
    )
    .is_err());
}

#[test]
fn estimator_csv_has_metadata_then_rows() {
    let grid = Grid::standard();
    let s = exact_summary(&grid, |w| Signal::F1.power_spectrum_at(w).unwrap());
    let out = estimate_ps(&s, &EstimatorConfig::ps(0), Model::Classic, 0.0, None).unwrap();
    let mut buf = Vec::new();
    out.write_csv(&mut buf, 0.0, 5).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[..6].iter().all(|l| l.starts_with('#')));
    assert_eq!(lines[6], "axis_value,estimate,mask");
    assert_eq!(lines.len(), 7 + grid.len());
}
