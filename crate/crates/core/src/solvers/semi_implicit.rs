use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField};
use crate::naive::hessian_unchecked;
use crate::problems::Problem;
use crate::sparse::{LinearSolver, SparseOperator};

use super::{initial_field, roundoff_floor, Discretization, Init, Outcome, Recorder, SolveReport, SolverConfig};

const AXES: [[i32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

/// Seven-point Laplacian on the interior unknowns; band neighbours drop out.
pub fn poisson_operator(grid: &Grid3) -> SparseOperator {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut op = SparseOperator::with_capacity(grid.num_unknowns(), 7 * grid.num_unknowns());
    for (row, &p) in grid.interior_nodes().iter().enumerate() {
        op.push(row, row, -6.0 * inv_h2);
        for axis in AXES {
            for off in [axis, axis.map(|c| -c)] {
                let q = (p as isize + grid.stride(off)) as usize;
                if let Some(col) = grid.unknown_index(q) {
                    op.push(row, col, inv_h2);
                }
            }
        }
    }
    op
}

/// Dirichlet solve of the discrete `Δu = rhs`, with data taken from `g`.
struct Poisson {
    solver: LinearSolver,
}

impl Poisson {
    fn new(grid: &Grid3) -> Self {
        Self {
            solver: LinearSolver::new(&poisson_operator(grid)),
        }
    }

    fn solve(&mut self, disc: &Discretization, rhs: &[f64]) -> Result<ScalarField> {
        let grid = disc.grid();
        let g = disc.g();
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let mut b = rhs.to_vec();
        for (row, &p) in grid.interior_nodes().iter().enumerate() {
            for axis in AXES {
                for off in [axis, axis.map(|c| -c)] {
                    let q = (p as isize + grid.stride(off)) as usize;
                    if grid.unknown_index(q).is_none() {
                        b[row] -= g.get(q) * inv_h2;
                    }
                }
            }
        }
        let x = self.solver.solve(&b)?;
        Ok(disc.field_from_interior(&x))
    }
}

fn check_nonnegative(disc: &Discretization) -> Result<()> {
    let f = disc.f();
    match disc.grid().interior_nodes().iter().find(|&&p| f.get(p) < 0.0) {
        Some(&p) => Err(Error::InvalidConfig(format!(
            "semi-implicit iteration needs f >= 0, found {} at node {p}",
            f.get(p)
        ))),
        None => Ok(()),
    }
}

/// Initial field solving `Δu = sqrt(2f)`.
pub(super) fn poisson_sqrt2f(disc: &Discretization) -> Result<ScalarField> {
    check_nonnegative(disc)?;
    let f = disc.f();
    let rhs: Vec<f64> = disc
        .grid()
        .interior_nodes()
        .iter()
        .map(|&p| (2.0 * f.get(p)).sqrt())
        .collect();
    Poisson::new(disc.grid()).solve(disc, &rhs)
}

/// Iterates `Δu_{n+1} = sqrt(|D²u_n|² + 2f)` until successive iterates agree
/// to `tol` and the residual meets the scaled `tol`.
pub fn solve_semi_implicit(
    problem: &Problem,
    grid: Arc<Grid3>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let disc = Discretization::new(problem, grid, config.scheme)?;
    check_nonnegative(&disc)?;
    let (mut u, warm) = match config.init {
        Init::PoissonSqrt2f => (poisson_sqrt2f(&disc)?, 0),
        _ => initial_field(problem, &disc, config)?,
    };
    let mut poisson = Poisson::new(disc.grid());
    let target = config.tol * disc.residual_scale();
    let f = disc.f();
    let mut rec = Recorder::new(disc.residual_norm(&u));
    let mut outcome = Outcome::MaxIterations;
    for _ in 0..config.max_iters {
        let rhs: Vec<f64> = disc
            .grid()
            .interior_nodes()
            .iter()
            .map(|&p| {
                let hs = hessian_unchecked(&u, p);
                (hs.frobenius_sq() + 2.0 * f.get(p)).max(0.0).sqrt()
            })
            .collect();
        let next = poisson.solve(&disc, &rhs)?;
        let change = next.max_norm_error(&u);
        u = next;
        let r = disc.residual_norm(&u);
        rec.residual_history.push(r);
        if !change.is_finite() {
            outcome = Outcome::Diverged;
            break;
        }
        if change < config.tol && r < target {
            outcome = Outcome::Converged;
            break;
        }
        if change <= roundoff_floor(&u) {
            outcome = Outcome::Stalled;
            break;
        }
    }
    Ok(rec.finish(config, &disc, outcome, u, warm))
}
