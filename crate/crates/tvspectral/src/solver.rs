//! First-order primal-dual denoising solver for TV regularization with L1
//! or L2 data fidelity.
//!
//! The saddle-point form couples the primal image `u` with a dual vector
//! field `g` constrained to the pointwise unit ball. One iteration performs
//! a projected dual ascent step, a proximal primal descent step (soft
//! shrinkage toward the data for L1, a weighted average for L2) and an
//! extrapolation step. The regularization weight enters only through the
//! primal proximal step, so the dual projection stays on the unit ball.

use crate::error::{Error, Result};
use crate::grid::{tv_energy, ScalarField, VectorField};

/// Data fidelity of the denoising energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Sum of absolute residuals; contrast invariant.
    L1,
    /// Half the sum of squared residuals (ROF).
    L2,
}

impl Fidelity {
    pub fn as_str(self) -> &'static str {
        match self {
            Fidelity::L1 => "l1",
            Fidelity::L2 => "l2",
        }
    }
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Fidelity::L1),
            "l2" => Ok(Fidelity::L2),
            other => Err(Error::MalformedConfig(format!(
                "unknown fidelity {other:?} (expected l1 or l2)"
            ))),
        }
    }
}

/// Step sizes and iteration budget for the primal-dual iteration.
///
/// The steps must satisfy `tau * sigma * 8 <= 1` for the forward-difference
/// stencil, whose squared operator norm is bounded by 8.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    tau: f64,
    sigma: f64,
    theta: f64,
    max_its: usize,
    rel_tol: f64,
}

/// Slack on the step-size product check; the reference settings sit exactly
/// on the boundary tau*sigma*8 = 1.
const STEP_RULE_SLACK: f64 = 1e-9;

/// Floor for relative-change denominators.
const CHANGE_EPS: f64 = 1e-12;

/// Cadence of the non-finite divergence check.
const DIVERGENCE_CHECK_EVERY: usize = 500;

/// Cadence of observer callbacks in [`solve_denoise_observed`].
pub const OBSERVE_EVERY: usize = 100;

impl SolverConfig {
    pub fn new(tau: f64, sigma: f64, theta: f64, max_its: usize, rel_tol: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) || !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step sizes must be positive, got tau={tau}, sigma={sigma}"
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidConfig(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if tau * sigma * 8.0 > 1.0 + STEP_RULE_SLACK {
            return Err(Error::InvalidConfig(format!(
                "tau*sigma*8 = {} exceeds 1; the iteration may diverge",
                tau * sigma * 8.0
            )));
        }
        if max_its == 0 {
            return Err(Error::InvalidConfig("max_its must be positive".into()));
        }
        if !(rel_tol.is_finite() && rel_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must be nonnegative, got {rel_tol}"
            )));
        }
        Ok(Self {
            tau,
            sigma,
            theta,
            max_its,
            rel_tol,
        })
    }

    /// Cheaper settings used by the test suite and `--profile test`:
    /// 5000 iterations with early stopping at 1e-8 relative change.
    pub fn test_profile() -> Self {
        Self::new(0.2, 0.625, 1.0, 5000, 1e-8).expect("valid profile")
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn max_its(&self) -> usize {
        self.max_its
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }
}

impl Default for SolverConfig {
    /// Reference settings: tau 0.2, sigma 0.625, theta 1, 50000 iterations,
    /// no early stopping.
    fn default() -> Self {
        Self::new(0.2, 0.625, 1.0, 50_000, 0.0).expect("valid defaults")
    }
}

/// Energy split of a denoising solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub fidelity_term: f64,
    pub tv_term: f64,
    pub total: f64,
    pub iterations_used: usize,
}

/// Result of [`solve_denoise`]: primal solution, dual certificate and energy.
#[derive(Debug, Clone)]
pub struct DenoiseSolution {
    pub u: ScalarField,
    pub dual: VectorField,
    pub report: EnergyReport,
}

/// Pointwise projection onto the unit Euclidean ball.
pub fn project_dual(g: &VectorField) -> VectorField {
    let mut gx = g.x_comp().to_vec();
    let mut gy = g.y_comp().to_vec();
    for (x, y) in gx.iter_mut().zip(gy.iter_mut()) {
        let mag = x.hypot(*y);
        if mag > 1.0 {
            *x /= mag;
            *y /= mag;
        }
    }
    VectorField::from_raw(g.width(), g.height(), gx, gy)
}

/// Soft shrinkage of `arg` toward `f` with dead zone `threshold`; ties
/// `|arg - f| = threshold` map to `f`, where both branches agree.
pub fn prox_l1_data(arg: &ScalarField, f: &ScalarField, threshold: f64) -> Result<ScalarField> {
    arg.same_shape(f)?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "shrinkage threshold must be positive, got {threshold}"
        )));
    }
    let values = arg
        .values()
        .iter()
        .zip(f.values())
        .map(|(&a, &fv)| shrink_l1(a, fv, threshold))
        .collect();
    Ok(ScalarField::from_raw(arg.width(), arg.height(), values))
}

#[inline]
fn shrink_l1(arg: f64, f: f64, threshold: f64) -> f64 {
    let d = arg - f;
    if d > threshold {
        arg - threshold
    } else if d < -threshold {
        arg + threshold
    } else {
        f
    }
}

/// Resolvent of the scaled quadratic fidelity: `(arg + ratio * f) / (1 + ratio)`.
pub fn prox_l2_data(arg: &ScalarField, f: &ScalarField, ratio: f64) -> Result<ScalarField> {
    arg.same_shape(f)?;
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "prox ratio must be positive, got {ratio}"
        )));
    }
    let values = arg
        .values()
        .iter()
        .zip(f.values())
        .map(|(&a, &fv)| (a + ratio * fv) / (1.0 + ratio))
        .collect();
    Ok(ScalarField::from_raw(arg.width(), arg.height(), values))
}

/// Denoising energy of `u` for data `f` and TV weight `alpha`.
pub fn energy(u: &ScalarField, f: &ScalarField, alpha: f64, fidelity: Fidelity) -> Result<EnergyReport> {
    u.same_shape(f)?;
    check_alpha(alpha)?;
    let fidelity_term = match fidelity {
        Fidelity::L1 => u
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - b).abs())
            .sum(),
        Fidelity::L2 => {
            0.5 * u
                .values()
                .iter()
                .zip(f.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        }
    };
    let tv_term = alpha * tv_energy(u);
    Ok(EnergyReport {
        fidelity_term,
        tv_term,
        total: fidelity_term + tv_term,
        iterations_used: 0,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "regularization weight must be positive, got {alpha}"
        )));
    }
    Ok(())
}

/// Run the primal-dual iteration until `max_its` or until both the primal
/// and the dual relative change drop below `rel_tol` (0 disables early
/// stopping). `warm` seeds the iteration; without it both variables start
/// at zero.
pub fn solve_denoise(
    f: &ScalarField,
    alpha: f64,
    fidelity: Fidelity,
    config: &SolverConfig,
    warm: Option<(&ScalarField, &VectorField)>,
) -> Result<DenoiseSolution> {
    solve_denoise_observed(f, alpha, fidelity, config, warm, |_, _| {})
}

/// Like [`solve_denoise`] but invokes `observer(iteration, u)` after every
/// [`OBSERVE_EVERY`]-th iteration, for convergence diagnostics.
pub fn solve_denoise_observed(
    f: &ScalarField,
    alpha: f64,
    fidelity: Fidelity,
    config: &SolverConfig,
    warm: Option<(&ScalarField, &VectorField)>,
    mut observer: impl FnMut(usize, &ScalarField),
) -> Result<DenoiseSolution> {
    check_alpha(alpha)?;
    let (w, h) = (f.width(), f.height());
    let n = w * h;

    let (mut u, mut gx, mut gy) = match warm {
        Some((u0, g0)) => {
            f.same_shape(u0)?;
            if g0.width() != w || g0.height() != h {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    actual: (g0.width(), g0.height()),
                });
            }
            (
                u0.values().to_vec(),
                g0.x_comp().to_vec(),
                g0.y_comp().to_vec(),
            )
        }
        None => (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
    };
    let mut ubar = u.clone();

    let fv = f.values();
    let (tau, sigma, theta) = (config.tau, config.sigma, config.theta);
    let threshold = tau / alpha;
    let ratio = tau / alpha;
    let rel_tol = config.rel_tol;

    let mut iterations = 0;
    for it in 0..config.max_its {
        // Dual ascent on the extrapolated iterate, projected onto the unit
        // ball. Change accumulators feed the stopping rule.
        let mut dual_change = 0.0;
        let mut dual_base = 0.0;
        for i in 0..h {
            let row = i * w;
            for j in 0..w {
                let idx = row + j;
                let dx = if j < w - 1 { ubar[idx + 1] - ubar[idx] } else { 0.0 };
                let dy = if i < h - 1 { ubar[idx + w] - ubar[idx] } else { 0.0 };
                let mut tx = gx[idx] + sigma * dx;
                let mut ty = gy[idx] + sigma * dy;
                let mag = tx.hypot(ty);
                if mag > 1.0 {
                    tx /= mag;
                    ty /= mag;
                }
                dual_change += (tx - gx[idx]).abs() + (ty - gy[idx]).abs();
                dual_base += gx[idx].abs() + gy[idx].abs();
                gx[idx] = tx;
                gy[idx] = ty;
            }
        }

        // Primal proximal step on u + tau * div g, then extrapolation.
        let mut primal_change = 0.0;
        let mut primal_base = 0.0;
        for i in 0..h {
            let row = i * w;
            for j in 0..w {
                let idx = row + j;
                let mut div = 0.0;
                if j < w - 1 {
                    div += gx[idx];
                }
                if j > 0 {
                    div -= gx[idx - 1];
                }
                if i < h - 1 {
                    div += gy[idx];
                }
                if i > 0 {
                    div -= gy[idx - w];
                }
                let arg = u[idx] + tau * div;
                let next = match fidelity {
                    Fidelity::L1 => shrink_l1(arg, fv[idx], threshold),
                    Fidelity::L2 => (arg + ratio * fv[idx]) / (1.0 + ratio),
                };
                let old = u[idx];
                primal_change += (next - old).abs();
                primal_base += old.abs();
                u[idx] = next;
                ubar[idx] = next + theta * (next - old);
            }
        }

        iterations = it + 1;

        if iterations % DIVERGENCE_CHECK_EVERY == 0 && !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                iteration: iterations,
            });
        }
        if iterations % OBSERVE_EVERY == 0 {
            observer(iterations, &ScalarField::from_raw(w, h, u.clone()));
        }
        if rel_tol > 0.0
            && primal_change / primal_base.max(CHANGE_EPS) < rel_tol
            && dual_change / dual_base.max(CHANGE_EPS) < rel_tol
        {
            break;
        }
    }

    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged {
            iteration: iterations,
        });
    }

    let u = ScalarField::from_raw(w, h, u);
    let dual = VectorField::from_raw(w, h, gx, gy);
    let mut report = energy(&u, f, alpha, fidelity)?;
    report.iterations_used = iterations;
    Ok(DenoiseSolution { u, dual, report })
}
