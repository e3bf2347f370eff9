use std::sync::Arc;

use crate::error::Result;
use crate::grid::{Grid3, ScalarField};
use crate::problems::Problem;

use super::{initial_field, Discretization, Outcome, Recorder, Scheme, SolveReport, SolverConfig};

const DIVERGENCE_FACTOR: f64 = 1e6;

/// Relative slack for round-off when checking that a step did not raise the residual.
const CONTRACTION_SLACK: f64 = 1e-12;

/// One explicit step `u + α (S[u] - f)` on the interior.
pub fn parabolic_step(disc: &Discretization, u: &ScalarField, alpha: f64) -> ScalarField {
    let r = disc.residual(u);
    let mut next = u.clone();
    for (&p, ri) in disc.grid().interior_nodes().iter().zip(&r) {
        next.set(p, u.get(p) + alpha * ri);
    }
    next
}

/// Explicit pseudo-time iteration with step `parabolic_alpha_coeff * h^4`.
///
/// For the monotone scheme any increase of the residual stops the run with
/// [`Outcome::NonContraction`]. The naive scheme is not monotone and is only
/// checked for blow-up.
pub fn solve_parabolic(problem: &Problem, grid: Arc<Grid3>, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let disc = Discretization::new(problem, grid, config.scheme)?;
    let (u0, warm) = initial_field(problem, &disc, config)?;
    Ok(iterate(&disc, u0, config, warm))
}

pub(super) fn iterate(disc: &Discretization, mut u: ScalarField, config: &SolverConfig, warm: usize) -> SolveReport {
    let alpha = config.parabolic_alpha_coeff * disc.grid().h().powi(4);
    let target = config.tol * disc.residual_scale();
    let check_contraction = matches!(disc.scheme(), Scheme::Monotone { .. });
    let mut r = disc.residual(&u);
    let r0 = crate::sparse::norm_inf(&r);
    let mut prev = r0;
    let mut rec = Recorder::new(r0);
    let mut outcome = if r0 < target { Outcome::Converged } else { Outcome::MaxIterations };
    if outcome != Outcome::Converged {
        for it in 1..=config.max_iters {
            for (&p, ri) in disc.grid().interior_nodes().iter().zip(&r) {
                u.set(p, u.get(p) + alpha * ri);
            }
            r = disc.residual(&u);
            let norm = crate::sparse::norm_inf(&r);
            rec.residual_history.push(norm);
            if !norm.is_finite() || norm > DIVERGENCE_FACTOR * r0 {
                outcome = Outcome::Diverged;
                break;
            }
            if check_contraction && norm > prev * (1.0 + CONTRACTION_SLACK) {
                outcome = Outcome::NonContraction { iteration: it };
                break;
            }
            if norm < target {
                outcome = Outcome::Converged;
                break;
            }
            prev = norm;
        }
    }
    rec.finish(config, disc, outcome, u, warm)
}
