use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField};
use crate::problems::Problem;
use crate::sparse::{norm_inf, LinearSolver, SparseOperator};

use super::semi_implicit::poisson_operator;
use super::{initial_field, Discretization, Outcome, Recorder, SolveReport, SolverConfig};

/// Relative shifts tried, in order, when the Newton system cannot be solved.
const REGULARIZATION: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

/// Damped Newton iteration for either scheme.
pub fn solve_newton(problem: &Problem, grid: Arc<Grid3>, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let disc = Discretization::new(problem, grid, config.scheme)?;
    let (u0, warm) = initial_field(problem, &disc, config)?;
    iterate(&disc, u0, config, warm)
}

pub(super) fn iterate(
    disc: &Discretization,
    mut u: ScalarField,
    config: &SolverConfig,
    warm: usize,
) -> Result<SolveReport> {
    let target = config.tol * disc.residual_scale();
    let (mut r, mut jac) = disc.linearize(&u);
    let mut r_norm = norm_inf(&r);
    let mut rec = Recorder::new(r_norm);
    let mut outcome = Outcome::MaxIterations;
    let mut laplacian = None;
    for _ in 0..=config.max_iters {
        if r_norm < target {
            outcome = Outcome::Converged;
            break;
        }
        if !r_norm.is_finite() {
            outcome = Outcome::Diverged;
            break;
        }
        if rec.damping_history.len() == config.max_iters {
            break;
        }
        let v = newton_direction(disc, &jac, &r, &mut laplacian)?;
        let current = u.interior_values();
        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = current.iter().zip(&v).map(|(x, d)| x - alpha * d).collect();
            let trial = disc.field_from_interior(&trial);
            let (tr, tj) = disc.linearize(&trial);
            let tn = norm_inf(&tr);
            if tn < r_norm {
                break Some((trial, tr, tj, tn));
            }
            alpha *= 0.5;
            if alpha < config.damping_min {
                break None;
            }
        };
        match accepted {
            Some((trial, tr, tj, tn)) => {
                u = trial;
                r = tr;
                jac = tj;
                r_norm = tn;
                rec.residual_history.push(tn);
                rec.damping_history.push(alpha);
            }
            None => {
                outcome = Outcome::DampingFloor;
                break;
            }
        }
    }
    Ok(rec.finish(config, disc, outcome, u, warm))
}

/// Solves `J v = r`; if `J` is singular, retries with `J + μL` for a scaled
/// Laplacian `L`, which has the sign of an elliptic linearization.
fn newton_direction(
    disc: &Discretization,
    jac: &SparseOperator,
    r: &[f64],
    laplacian: &mut Option<SparseOperator>,
) -> Result<Vec<f64>> {
    let mut solver = LinearSolver::new(jac);
    let first = solver.solve_best_effort(r);
    if first.meets_contract() {
        return Ok(first.solution);
    }
    let lap = laplacian.get_or_insert_with(|| poisson_operator(disc.grid()));
    // typical coefficient of J in units of the Laplacian
    let h2 = disc.grid().h().powi(2);
    let scale = (solver.operator_norm_inf() * h2 / 12.0).max(1.0);
    let mut last = first;
    for eps in REGULARIZATION {
        log::warn!("newton system singular (residual {:e}); regularizing with {eps:e}", last.residual);
        let shifted = jac.add_scaled(lap, eps * scale);
        let out = LinearSolver::new(&shifted).solve_best_effort(r);
        if out.meets_contract() {
            return Ok(out.solution);
        }
        last = out;
    }
    Err(Error::SingularSystem {
        residual: last.residual,
        target: last.target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::solvers::{Init, Method, Scheme};

    fn config(scheme: Scheme) -> SolverConfig {
        SolverConfig {
            scheme,
            method: Method::Newton,
            max_iters: 50,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn quadratic_is_recovered_by_both_schemes() {
        let p = Problem::by_name("ex1").unwrap();
        for scheme in [Scheme::Naive, Scheme::Monotone { n_theta: 1 }, Scheme::Monotone { n_theta: 2 }] {
            let grid = Arc::new(Grid3::build(11, Domain::Cube, scheme.band_width()).unwrap());
            let rep = solve_newton(&p, grid.clone(), &config(scheme)).unwrap();
            assert!(rep.converged, "{scheme:?}: {:?}", rep.outcome);
            let err = rep.final_field.max_norm_error(&p.sample_exact(&grid).unwrap());
            assert!(err < 1e-13, "{scheme:?}: {err:e}");
        }
    }

    #[test]
    fn residual_history_strictly_decreases() {
        let p = Problem::by_name("ex2").unwrap();
        let grid = Arc::new(Grid3::build(9, Domain::Cube, 1).unwrap());
        let rep = solve_newton(&p, grid, &config(Scheme::Naive)).unwrap();
        assert!(rep.converged);
        for w in rep.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert_eq!(rep.damping_history.len(), rep.iterations);
        assert!(rep.damping_history.iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn zero_iteration_cap_reports_initial_state() {
        let p = Problem::by_name("ex2").unwrap();
        let grid = Arc::new(Grid3::build(7, Domain::Cube, 1).unwrap());
        let cfg = SolverConfig {
            init: Init::ExactPlusNoise { amplitude: 0.01 },
            max_iters: 0,
            ..config(Scheme::Naive)
        };
        let rep = solve_newton(&p, grid, &cfg).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.outcome, Outcome::MaxIterations);
        assert!(rep.into_result().is_err());
    }
}
