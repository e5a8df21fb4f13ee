//! Recovery of a power spectrum from (unbiased) wavelet invariants by
//! quasi-Newton minimization over the nonnegative frequencies.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::estimators::{EstimatorOutput, Representation};
use crate::signal_model::{FourierPlan, Grid, PowerSpectrum, SignalSample};
use crate::wavelet::FilterBank;
use crate::{Error, Result};

/// Targets and symmetrized filters for the loss
/// `Σ_λ (⟨g², w_λ⟩ − S̃(λ))² + (g(0)² − P̃(0))²`.
#[derive(Debug, Clone)]
pub struct InversionProblem {
    pub grid: Grid,
    /// Symmetrized filter rows over `ω ≥ 0`, in-band λ only.
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub target_dc: f64,
}

impl InversionProblem {
    /// Uses the λ where both the bank and `mask` are valid.
    pub fn new(bank: &FilterBank, targets: &[f64], mask: &[bool], target_dc: f64) -> Result<Self> {
        if targets.len() != bank.len() || mask.len() != bank.len() {
            return Err(Error::GridMismatch(format!(
                "{} targets for {} filters",
                targets.len(),
                bank.len()
            )));
        }
        let mut rows = Vec::new();
        let mut kept = Vec::new();
        for r in 0..bank.len() {
            if mask[r] && bank.in_band[r] {
                rows.push(bank.symmetrized_row(r));
                kept.push(targets[r]);
            }
        }
        if rows.is_empty() {
            return Err(Error::InvalidParameter(
                "no valid λ in the inversion targets".into(),
            ));
        }
        if kept.iter().any(|v| !v.is_finite()) || !target_dc.is_finite() {
            return Err(Error::InvalidParameter(
                "non-finite inversion target".into(),
            ));
        }
        Ok(InversionProblem {
            grid: bank.grid,
            rows,
            targets: kept,
            target_dc,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.len() - self.grid.center()
    }

    /// Residuals `⟨g², w_λ⟩ − S̃(λ)` followed by the DC residual.
    pub fn residuals(&self, g: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(row, t)| row.iter().zip(g).map(|(w, gi)| w * gi * gi).sum::<f64>() - t)
            .collect();
        r.push(g[0] * g[0] - self.target_dc);
        r
    }

    /// Loss and its gradient `4g(ω)Σ_λ w_λ(ω) r_λ + 4g(0) r_dc e₀`.
    pub fn loss_and_gradient(&self, g: &[f64]) -> (f64, Vec<f64>) {
        let r = self.residuals(g);
        let loss = r.iter().map(|v| v * v).sum();
        let mut grad = vec![0.0; g.len()];
        for (row, rl) in self.rows.iter().zip(&r) {
            for ((gr, w), gi) in grad.iter_mut().zip(row).zip(g) {
                *gr += 4.0 * gi * w * rl;
            }
        }
        grad[0] += 4.0 * g[0] * r[r.len() - 1];
        (loss, grad)
    }

    pub fn loss(&self, g: &[f64]) -> f64 {
        self.residuals(g).iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    pub max_iters: usize,
    /// Stop once `‖∇‖_∞ ≤ grad_tol·(1 + loss)`.
    pub grad_tol: f64,
    pub backtrack: f64,
    pub armijo: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            backtrack: 0.5,
            armijo: 1e-4,
        }
    }
}

impl InversionOptions {
    pub fn strict() -> Self {
        InversionOptions {
            grad_tol: 1e-8,
            ..Self::default()
        }
    }

    /// No gradient stop: always spends the full iteration budget. The
    /// `(1 + loss)` rule is absolute, so for spectra with losses far below 1
    /// it stops long before the loss has dropped by many orders.
    pub fn exhaustive() -> Self {
        InversionOptions {
            grad_tol: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub g_star: Vec<f64>,
    /// `g*²` extended evenly to the full grid.
    pub ps_estimate: PowerSpectrum,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

impl InversionResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "omega,ps_estimate")?;
        for (k, v) in self.ps_estimate.values.iter().enumerate() {
            writeln!(w, "{},{v}", self.ps_estimate.grid.omega(k))?;
        }
        Ok(())
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,loss,grad_norm")?;
        for t in &self.trace {
            writeln!(w, "{},{},{}", t.iter, t.loss, t.grad_norm)?;
        }
        Ok(())
    }
}

/// `P(ω) = g(|ω|)²` on the full grid.
pub fn extend_even(grid: &Grid, g: &[f64]) -> PowerSpectrum {
    let c = grid.center();
    let values = (0..grid.len())
        .map(|k| {
            let i = k.abs_diff(c);
            // the most negative frequency has no positive partner; reuse the last bin
            let i = i.min(g.len() - 1);
            g[i] * g[i]
        })
        .collect();
    PowerSpectrum {
        grid: *grid,
        values,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Dense BFGS on the inverse Hessian with Armijo backtracking.
pub fn minimize(
    problem: &InversionProblem,
    init: &[f64],
    opts: &InversionOptions,
) -> InversionResult {
    let n = init.len();
    let mut g = init.to_vec();
    let (mut loss, mut grad) = problem.loss_and_gradient(&g);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![TraceEntry {
        iter: 0,
        loss,
        grad_norm: inf_norm(&grad),
    }];
    let mut converged = false;
    let mut first = true;
    for iter in 1..=opts.max_iters {
        if inf_norm(&grad) <= opts.grad_tol * (1.0 + loss) {
            converged = true;
            break;
        }
        let gv = DVector::from_column_slice(&grad);
        let mut dir = -(&h * &gv);
        let mut slope = dir.dot(&gv);
        if !(slope < 0.0) {
            // lost positive definiteness; restart from steepest descent
            h = DMatrix::identity(n, n);
            dir = -gv.clone();
            slope = dir.dot(&gv);
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial: Vec<f64> = g
                .iter()
                .zip(dir.iter())
                .map(|(a, d)| a + step * d)
                .collect();
            let l = problem.loss(&trial);
            if l <= loss + opts.armijo * step * slope {
                accepted = Some((trial, l));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((next, _)) = accepted else { break };
        let (next_loss, next_grad) = problem.loss_and_gradient(&next);
        let s = DVector::from_iterator(n, next.iter().zip(&g).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, next_grad.iter().zip(&grad).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if first {
                h *= sy / y.dot(&y);
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h.ger(-rho, &hy, &s, 1.0);
            h.ger(-rho, &s, &hy, 1.0);
            h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
        }
        g = next;
        loss = next_loss;
        grad = next_grad;
        trace.push(TraceEntry {
            iter,
            loss,
            grad_norm: inf_norm(&grad),
        });
    }
    if !converged && inf_norm(&grad) <= opts.grad_tol * (1.0 + loss) {
        converged = true;
    }
    let ps_estimate = extend_even(&problem.grid, &g);
    InversionResult {
        g_star: g,
        ps_estimate,
        trace,
        converged,
    }
}

/// `ĝ⁰ = √max(P, 0)` over `ω ≥ 0`.
pub fn initial_guess(init: &PowerSpectrum) -> Vec<f64> {
    let c = init.grid.center();
    init.values[c..].iter().map(|p| p.max(0.0).sqrt()).collect()
}

/// Fits `g*` to WSC targets, starting from the root of `init_ps` (typically the
/// PS k=0 estimate), and returns `P̃_S f = g*²`.
pub fn recover_ps(
    target: &EstimatorOutput,
    target_dc: f64,
    bank: &FilterBank,
    init_ps: &PowerSpectrum,
    opts: &InversionOptions,
) -> Result<InversionResult> {
    if target.config.representation != Representation::Wsc {
        return Err(Error::InvalidParameter(
            "inversion targets must be WSC invariants".into(),
        ));
    }
    bank.grid.check_same(&init_ps.grid)?;
    let problem = InversionProblem::new(bank, &target.values, &target.mask, target_dc)?;
    Ok(minimize(&problem, &initial_guess(init_ps), opts))
}

/// Inverse transform of `√P` for spectra whose transform is real and
/// nonnegative. Returns the real part and the largest imaginary residual.
pub fn recover_signal(ps: &PowerSpectrum) -> (SignalSample, f64) {
    let plan = FourierPlan::new(&ps.grid);
    let root: Vec<Complex64> = ps
        .values
        .iter()
        .map(|p| Complex64::new(p.max(0.0).sqrt(), 0.0))
        .collect();
    let f = plan.inverse(&root);
    let imag = f.iter().fold(0.0, |m: f64, z| m.max(z.im.abs()));
    (
        SignalSample {
            grid: ps.grid,
            values: f.iter().map(|z| z.re).collect(),
        },
        imag,
    )
}

/// Regularized linear least squares for `P` itself,
/// `min ‖W P − S̃‖² + (P(0) − P̃(0))² + μ‖P‖²`. No sign constraint; kept as a
/// diagnostic next to [`recover_ps`].
pub fn tikhonov_ps(problem: &InversionProblem, mu: f64) -> Result<PowerSpectrum> {
    let n = problem.dim();
    let m = problem.rows.len() + 1;
    let mut w = DMatrix::<f64>::zeros(m, n);
    for (i, row) in problem.rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w[(i, j)] = *v;
        }
    }
    w[(m - 1, 0)] = 1.0;
    let mut rhs = DVector::from_column_slice(&problem.targets).resize_vertically(m, 0.0);
    rhs[m - 1] = problem.target_dc;
    let mut normal = w.transpose() * &w;
    for i in 0..n {
        normal[(i, i)] += mu;
    }
    let p = normal
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter(format!("normal matrix singular for mu {mu}")))?
        .solve(&(w.transpose() * rhs));
    let c = problem.grid.center();
    let values = (0..problem.grid.len())
        .map(|k| {
            let i = k.abs_diff(c);
            p[i.min(n - 1)]
        })
        .collect();
    Ok(PowerSpectrum {
        grid: problem.grid,
        values,
    })
}
