use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField};
use crate::naive::{jacobi_update, DiscriminantPolicy};
use crate::problems::Problem;

use super::{initial_field, roundoff_floor, Discretization, Outcome, Recorder, Scheme, SolveReport, SolverConfig};

const DIVERGENCE_FACTOR: f64 = 1e6;

/// Fixed-point iteration of the per-node smaller-root update (naive scheme).
///
/// Stops once the residual meets the scaled `tol`. A sweep that moves no node
/// by more than round-off ends the run as [`Outcome::Stalled`].
pub fn solve_jacobi(problem: &Problem, grid: Arc<Grid3>, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    if config.scheme != Scheme::Naive {
        return Err(Error::InvalidConfig("jacobi iteration requires the naive scheme".into()));
    }
    let disc = Discretization::new(problem, grid, Scheme::Naive)?;
    let (u0, warm) = initial_field(problem, &disc, config)?;
    Ok(iterate(&disc, u0, config, warm))
}

pub(super) fn iterate(disc: &Discretization, mut u: ScalarField, config: &SolverConfig, warm: usize) -> SolveReport {
    let target = config.tol * disc.residual_scale();
    let r0 = disc.residual_norm(&u);
    let mut rec = Recorder::new(r0);
    let mut outcome = if r0 < target { Outcome::Converged } else { Outcome::MaxIterations };
    if outcome != Outcome::Converged {
        for _ in 0..config.max_iters {
            // Clamp never errors
            let sweep = jacobi_update(&u, disc.f(), DiscriminantPolicy::Clamp).expect("clamping sweep");
            u = sweep.field;
            let r = disc.residual_norm(&u);
            rec.residual_history.push(r);
            if !r.is_finite() || r > DIVERGENCE_FACTOR * r0 {
                outcome = Outcome::Diverged;
                break;
            }
            if r < target {
                outcome = Outcome::Converged;
                break;
            }
            if sweep.max_update <= roundoff_floor(&u) {
                outcome = Outcome::Stalled;
                break;
            }
        }
    }
    rec.finish(config, disc, outcome, u, warm)
}

/// Sweeps until the naive residual drops below `tol` (absolute).
pub(super) fn warm_start(
    naive: &Discretization,
    mut u: ScalarField,
    tol: f64,
    max_iters: usize,
) -> Result<(ScalarField, usize)> {
    let r0 = naive.residual_norm(&u);
    let mut r = r0;
    let mut sweeps = 0;
    while r >= tol {
        if sweeps == max_iters {
            return Err(Error::NotConverged {
                method: "jacobi warm start",
                reason: format!("residual {r:e} after {sweeps} sweeps"),
            });
        }
        u = jacobi_update(&u, naive.f(), DiscriminantPolicy::Clamp)?.field;
        r = naive.residual_norm(&u);
        sweeps += 1;
        if !r.is_finite() || r > DIVERGENCE_FACTOR * r0.max(tol) {
            return Err(Error::NotConverged {
                method: "jacobi warm start",
                reason: format!("diverged after {sweeps} sweeps"),
            });
        }
    }
    Ok((u, sweeps))
}
