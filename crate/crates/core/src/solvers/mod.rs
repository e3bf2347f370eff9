//! Iterative solvers for the discrete Dirichlet problem.
//!
//! Residuals are measured in the max norm over interior nodes. The stopping
//! threshold `tol` is scaled by `max(1, max|f|)` so that right-hand sides
//! spanning many orders of magnitude share one setting; the warm-start
//! threshold is absolute.

mod jacobi;
mod newton;
mod parabolic;
mod semi_implicit;

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::directions::{generate_directions, DirectionSet};
use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField};
use crate::monotone::{jacobian_monotone, s2_monotone};
use crate::naive::{jacobian_naive, s2_naive};
use crate::problems::Problem;
use crate::sparse::SparseOperator;

pub use jacobi::solve_jacobi;
pub use newton::solve_newton;
pub use parabolic::{parabolic_step, solve_parabolic};
pub use semi_implicit::{poisson_operator, solve_semi_implicit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Naive,
    Monotone { n_theta: usize },
}

impl Scheme {
    /// Band width the scheme needs so that no stencil leaves the data region.
    pub fn band_width(&self) -> usize {
        match self {
            Scheme::Naive => 1,
            Scheme::Monotone { n_theta } => *n_theta,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scheme::Naive => "naive".into(),
            Scheme::Monotone { n_theta } => format!("monotone{n_theta}"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "naive" || s == "standard" {
            return Ok(Scheme::Naive);
        }
        let width = s
            .strip_prefix("monotone")
            .map(|w| w.trim_start_matches([':', '-', '(']).trim_end_matches(')'))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))?;
        let n_theta = if width.is_empty() {
            1
        } else {
            width
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad stencil width in `{s}`")))?
        };
        Ok(Scheme::Monotone { n_theta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jacobi,
    SemiImplicit,
    Newton,
    Parabolic,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Jacobi => "jacobi",
            Method::SemiImplicit => "semi_implicit",
            Method::Newton => "newton",
            Method::Parabolic => "parabolic",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "jacobi" => Method::Jacobi,
            "semi_implicit" | "semi-implicit" => Method::SemiImplicit,
            "newton" => Method::Newton,
            "parabolic" => Method::Parabolic,
            _ => return Err(Error::InvalidConfig(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Exact solution plus uniform noise of the given amplitude on interior nodes.
    ExactPlusNoise { amplitude: f64 },
    /// Jacobi sweeps on the naive scheme until the residual drops below
    /// `tol`, started from exact-plus-noise when an exact solution is
    /// known and from the Poisson initialization otherwise.
    JacobiWarmstart { tol: f64 },
    /// Solution of the discrete `Δu = sqrt(2f)` with the Dirichlet data.
    PoissonSqrt2f,
    /// Zero interior values.
    Zero,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub method: Method,
    pub tol: f64,
    pub max_iters: usize,
    pub damping_min: f64,
    /// `c` in the explicit step `α = c h^4`.
    pub parabolic_alpha_coeff: f64,
    pub init: Init,
    /// Amplitude of the uniform noise used when a warm start perturbs the exact solution.
    pub noise_amplitude: f64,
    pub seed: u64,
    /// Iteration cap for the Jacobi warm start.
    pub warmstart_max_iters: usize,
    /// Dirichlet band override. A band narrower than the stencil width makes
    /// the monotone scheme fall back to the triplets that fit near the boundary.
    pub band_width: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Naive,
            method: Method::Newton,
            tol: 1e-10,
            max_iters: 100,
            damping_min: 2f64.powi(-20),
            parabolic_alpha_coeff: 0.1,
            init: Init::JacobiWarmstart { tol: 1e-1 },
            noise_amplitude: 0.01,
            seed: 0,
            warmstart_max_iters: 50_000,
            band_width: None,
        }
    }
}

impl SolverConfig {
    /// Band used when building grids for this configuration.
    pub fn band_width(&self) -> usize {
        self.band_width.unwrap_or_else(|| self.scheme.band_width())
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            return Err(Error::InvalidConfig("damping_min must be in (0, 1]".into()));
        }
        if self.parabolic_alpha_coeff.is_nan() || self.parabolic_alpha_coeff <= 0.0 {
            return Err(Error::InvalidConfig("parabolic_alpha_coeff must be positive".into()));
        }
        if let Scheme::Monotone { n_theta } = self.scheme {
            if !(1..=crate::directions::MAX_STENCIL_WIDTH).contains(&n_theta) {
                return Err(Error::StencilWidth(n_theta));
            }
        }
        if self.band_width == Some(0) {
            return Err(Error::InvalidConfig("band_width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Outcome {
    Converged,
    MaxIterations,
    /// Residual grew past `1e6` times its initial value or became non-finite.
    Diverged,
    /// An explicit step increased the residual.
    NonContraction { iteration: usize },
    /// Newton backtracking fell below the smallest allowed step.
    DampingFloor,
    /// Iterates stopped changing at round-off level before the residual met the target.
    Stalled,
}

/// Change below which an iterate is treated as a round-off fixed point.
pub(crate) fn roundoff_floor(u: &ScalarField) -> f64 {
    let scale = u.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    16.0 * f64::EPSILON * scale
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub scheme: Scheme,
    pub iterations: usize,
    /// Max-norm residual `|S[u] - f|` of the initial field and after each iteration.
    pub residual_history: Vec<f64>,
    /// Accepted Newton step lengths.
    pub damping_history: Vec<f64>,
    pub outcome: Outcome,
    pub converged: bool,
    /// Threshold the final residual was compared against (`tol` times the scale).
    pub residual_target: f64,
    pub warmstart_iterations: usize,
    pub elapsed_secs: f64,
    #[serde(skip)]
    pub final_field: ScalarField,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Turns every non-converged outcome into an error.
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                method: self.method.name(),
                reason: format!(
                    "{:?} after {} iterations, residual {:e}",
                    self.outcome,
                    self.iterations,
                    self.final_residual()
                ),
            })
        }
    }
}

/// A scheme bound to a grid with its right-hand side and Dirichlet data.
#[derive(Clone, Debug)]
pub struct Discretization {
    grid: Arc<Grid3>,
    f: ScalarField,
    g: ScalarField,
    scheme: Scheme,
    dirs: Option<DirectionSet>,
    scale: f64,
}

impl Discretization {
    pub fn new(problem: &Problem, grid: Arc<Grid3>, scheme: Scheme) -> Result<Self> {
        let f = problem.sample_f(&grid);
        let g = problem.sample_g(&grid);
        Self::from_fields(f, g, scheme)
    }

    pub fn from_fields(f: ScalarField, g: ScalarField, scheme: Scheme) -> Result<Self> {
        assert!(f.same_grid(&g), "f and g live on different grids");
        let grid = f.grid().clone();
        let dirs = match scheme {
            Scheme::Naive => None,
            Scheme::Monotone { n_theta } => Some(generate_directions(n_theta)?),
        };
        let scale = grid
            .interior_nodes()
            .iter()
            .map(|&p| f.get(p).abs())
            .fold(1.0, f64::max);
        Ok(Self {
            grid,
            f,
            g,
            scheme,
            dirs,
            scale,
        })
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn g(&self) -> &ScalarField {
        &self.g
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn directions(&self) -> Option<&DirectionSet> {
        self.dirs.as_ref()
    }

    /// `max(1, max |f|)` over interior nodes.
    pub fn residual_scale(&self) -> f64 {
        self.scale
    }

    /// Same grid and data with another scheme.
    pub fn with_scheme(&self, scheme: Scheme) -> Result<Self> {
        Self::from_fields(self.f.clone(), self.g.clone(), scheme)
    }

    pub fn operator(&self, u: &ScalarField) -> ScalarField {
        match &self.dirs {
            None => s2_naive(u),
            Some(dirs) => s2_monotone(u, dirs).0,
        }
    }

    /// `S[u] - f` at interior nodes, in unknown order.
    pub fn residual(&self, u: &ScalarField) -> Vec<f64> {
        let s = self.operator(u);
        self.grid
            .interior_nodes()
            .iter()
            .map(|&p| s.get(p) - self.f.get(p))
            .collect()
    }

    pub fn residual_norm(&self, u: &ScalarField) -> f64 {
        crate::sparse::norm_inf(&self.residual(u))
    }

    /// Residual and Jacobian at `u`.
    pub fn linearize(&self, u: &ScalarField) -> (Vec<f64>, SparseOperator) {
        match &self.dirs {
            None => (self.residual(u), jacobian_naive(u)),
            Some(dirs) => {
                let (s, active) = s2_monotone(u, dirs);
                let r = self
                    .grid
                    .interior_nodes()
                    .iter()
                    .map(|&p| s.get(p) - self.f.get(p))
                    .collect();
                (r, jacobian_monotone(u, &active))
            }
        }
    }

    /// Field with Dirichlet data outside the interior and `interior` inside.
    pub fn field_from_interior(&self, interior: &[f64]) -> ScalarField {
        let mut u = self.g.clone();
        u.set_interior_values(interior);
        u
    }
}

/// Builds the initial field requested by `config`; returns it with the
/// number of warm-start sweeps spent.
pub fn initial_field(
    problem: &Problem,
    disc: &Discretization,
    config: &SolverConfig,
) -> Result<(ScalarField, usize)> {
    let grid = disc.grid().clone();
    let noisy = |amplitude: f64| -> Result<ScalarField> {
        let mut u = problem.sample_exact(&grid).ok_or_else(|| {
            Error::InvalidConfig(format!("problem {} has no exact solution", problem.name))
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for &p in grid.interior_nodes() {
            let v = u.get(p) + rng.random_range(-amplitude..=amplitude);
            u.set(p, v);
        }
        Ok(u)
    };
    match config.init {
        Init::ExactPlusNoise { amplitude } => Ok((noisy(amplitude)?, 0)),
        Init::Exact => Ok((noisy(0.0)?, 0)),
        Init::Zero => Ok((disc.field_from_interior(&vec![0.0; grid.num_unknowns()]), 0)),
        Init::PoissonSqrt2f => Ok((semi_implicit::poisson_sqrt2f(disc)?, 0)),
        Init::JacobiWarmstart { tol } => {
            let start = if problem.has_exact() {
                noisy(config.noise_amplitude)?
            } else {
                semi_implicit::poisson_sqrt2f(disc)?
            };
            let naive = disc.with_scheme(Scheme::Naive)?;
            jacobi::warm_start(&naive, start, tol, config.warmstart_max_iters)
        }
    }
}

/// Runs the solver selected by `config.method`.
pub fn solve(problem: &Problem, grid: Arc<Grid3>, config: &SolverConfig) -> Result<SolveReport> {
    match config.method {
        Method::Jacobi => solve_jacobi(problem, grid, config),
        Method::SemiImplicit => solve_semi_implicit(problem, grid, config),
        Method::Newton => solve_newton(problem, grid, config),
        Method::Parabolic => solve_parabolic(problem, grid, config),
    }
}

pub(crate) struct Recorder {
    start: Instant,
    pub residual_history: Vec<f64>,
    pub damping_history: Vec<f64>,
}

impl Recorder {
    pub fn new(initial_residual: f64) -> Self {
        Self {
            start: Instant::now(),
            residual_history: vec![initial_residual],
            damping_history: Vec::new(),
        }
    }

    pub fn finish(
        self,
        config: &SolverConfig,
        disc: &Discretization,
        outcome: Outcome,
        final_field: ScalarField,
        warmstart_iterations: usize,
    ) -> SolveReport {
        SolveReport {
            method: config.method,
            scheme: disc.scheme(),
            iterations: self.residual_history.len() - 1,
            residual_history: self.residual_history,
            damping_history: self.damping_history,
            converged: outcome == Outcome::Converged,
            outcome,
            residual_target: config.tol * disc.residual_scale(),
            warmstart_iterations,
            elapsed_secs: self.start.elapsed().as_secs_f64(),
            final_field,
        }
    }
}
