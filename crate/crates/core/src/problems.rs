//! Test problems: exact solutions where known, right-hand sides, boundary data
//! and domains.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Ball, Domain, Grid3, ScalarField};
use crate::naive::HessianSample;

/// Default centre for the radial examples.
pub const DEFAULT_CENTER: [f64; 3] = [0.5, 0.5, 0.5];

const KINK_RADIUS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ProblemKind {
    /// `x^2 - y^2/2 + 2 z^2`, `f = 2`.
    Quadratic,
    /// `exp(|x - x0|^2 / 2)`.
    ConvexRadial { center: [f64; 3] },
    /// `exp(2x^2 - y^2 + 4z^2)`.
    NonconvexExponential,
    /// `log(2 + |x|^2)`.
    LogRadial,
    /// `((|x - x0| - 0.2)^+)^2 / 2`, flat inside the ball of radius 0.2.
    NonsmoothConvex { center: [f64; 3] },
    /// `-sqrt(3 - |x|^2)`, singular at the corner (1, 1, 1).
    BlowUp,
    /// `f = 1`, `g = 0` on the cube; no closed form.
    UnitCube,
    /// `f = 1`, `g = 0` on a union of two balls; no closed form.
    TwoBalls,
    /// `|x|^2 / 2`, `f = 3`.
    Paraboloid,
}

#[derive(Clone, Debug, Serialize)]
pub struct Problem {
    pub name: String,
    pub kind: ProblemKind,
    pub domain: Domain,
}

fn norm_sq(p: [f64; 3]) -> f64 {
    p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
}

fn sub(p: [f64; 3], q: [f64; 3]) -> [f64; 3] {
    [p[0] - q[0], p[1] - q[1], p[2] - q[2]]
}

fn two_ball_domain() -> Domain {
    Domain::Balls(vec![
        Ball {
            center: [0.35, 0.35, 0.5],
            radius: 0.3,
        },
        Ball {
            center: [0.65, 0.65, 0.5],
            radius: 0.3,
        },
    ])
}

impl Problem {
    pub fn new(name: impl Into<String>, kind: ProblemKind) -> Self {
        let domain = match kind {
            ProblemKind::TwoBalls => two_ball_domain(),
            _ => Domain::Cube,
        };
        Self {
            name: name.into(),
            kind,
            domain,
        }
    }

    /// Example by catalog name (`ex1`..`ex8`, or a descriptive alias).
    pub fn by_name(name: &str) -> Result<Self> {
        let kind = match name {
            "ex1" | "quadratic" => ProblemKind::Quadratic,
            "ex2" | "convex-radial" => ProblemKind::ConvexRadial {
                center: DEFAULT_CENTER,
            },
            "ex3" | "nonconvex-exp" => ProblemKind::NonconvexExponential,
            "ex4" | "log-radial" => ProblemKind::LogRadial,
            "ex5" | "nonsmooth" => ProblemKind::NonsmoothConvex {
                center: DEFAULT_CENTER,
            },
            "ex6" | "blow-up" => ProblemKind::BlowUp,
            "ex7" | "cube" => ProblemKind::UnitCube,
            "ex8" | "two-balls" => ProblemKind::TwoBalls,
            "paraboloid" => ProblemKind::Paraboloid,
            other => return Err(Error::UnknownProblem(other.to_string())),
        };
        let canonical = match kind {
            ProblemKind::Quadratic => "ex1",
            ProblemKind::ConvexRadial { .. } => "ex2",
            ProblemKind::NonconvexExponential => "ex3",
            ProblemKind::LogRadial => "ex4",
            ProblemKind::NonsmoothConvex { .. } => "ex5",
            ProblemKind::BlowUp => "ex6",
            ProblemKind::UnitCube => "ex7",
            ProblemKind::TwoBalls => "ex8",
            ProblemKind::Paraboloid => "paraboloid",
        };
        Ok(Self::new(canonical, kind))
    }

    /// Replaces the centre of the radial examples; other problems are unchanged.
    pub fn with_center(mut self, center: [f64; 3]) -> Self {
        self.kind = match self.kind {
            ProblemKind::ConvexRadial { .. } => ProblemKind::ConvexRadial { center },
            ProblemKind::NonsmoothConvex { .. } => ProblemKind::NonsmoothConvex { center },
            k => k,
        };
        self
    }

    pub fn has_exact(&self) -> bool {
        !matches!(self.kind, ProblemKind::UnitCube | ProblemKind::TwoBalls)
    }

    pub fn u_exact(&self, p: [f64; 3]) -> Option<f64> {
        let [x, y, z] = p;
        Some(match self.kind {
            ProblemKind::Quadratic => x * x - 0.5 * y * y + 2.0 * z * z,
            ProblemKind::ConvexRadial { center } => (0.5 * norm_sq(sub(p, center))).exp(),
            ProblemKind::NonconvexExponential => (2.0 * x * x - y * y + 4.0 * z * z).exp(),
            ProblemKind::LogRadial => (2.0 + norm_sq(p)).ln(),
            ProblemKind::NonsmoothConvex { center } => {
                let r = norm_sq(sub(p, center)).sqrt();
                0.5 * (r - KINK_RADIUS).max(0.0).powi(2)
            }
            ProblemKind::BlowUp => -(3.0 - norm_sq(p)).max(0.0).sqrt(),
            ProblemKind::Paraboloid => 0.5 * norm_sq(p),
            ProblemKind::UnitCube | ProblemKind::TwoBalls => return None,
        })
    }

    pub fn f(&self, p: [f64; 3]) -> f64 {
        let [x, y, z] = p;
        match self.kind {
            ProblemKind::Quadratic => 2.0,
            ProblemKind::ConvexRadial { center } => {
                let s = norm_sq(sub(p, center));
                (3.0 + 2.0 * s) * s.exp()
            }
            ProblemKind::NonconvexExponential => {
                8.0 * (1.0 + 12.0 * x * x + 6.0 * y * y + 16.0 * z * z)
                    * (4.0 * x * x - 2.0 * y * y + 8.0 * z * z).exp()
            }
            ProblemKind::LogRadial => {
                let s = norm_sq(p);
                -4.0 * (-6.0 + s) / (2.0 + s).powi(3)
            }
            ProblemKind::NonsmoothConvex { center } => {
                let r = norm_sq(sub(p, center)).sqrt();
                if r > KINK_RADIUS {
                    3.0 + 1.0 / (25.0 * r * r) - 4.0 / (5.0 * r)
                } else {
                    0.0
                }
            }
            ProblemKind::BlowUp => {
                let s = norm_sq(p);
                -(-9.0 + s) / (-3.0 + s).powi(2)
            }
            ProblemKind::UnitCube | ProblemKind::TwoBalls => 1.0,
            ProblemKind::Paraboloid => 3.0,
        }
    }

    /// Dirichlet data: the exact solution where known, zero otherwise.
    pub fn g(&self, p: [f64; 3]) -> f64 {
        self.u_exact(p).unwrap_or(0.0)
    }

    /// Analytic Hessian of the exact solution, where it exists.
    pub fn hessian(&self, p: [f64; 3]) -> Option<[[f64; 3]; 3]> {
        let outer = |a: [f64; 3], s: f64, diag: [f64; 3]| {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = s * a[i] * a[j];
                }
                m[i][i] += diag[i];
            }
            m
        };
        match self.kind {
            ProblemKind::Quadratic => Some(outer([0.0; 3], 0.0, [2.0, -1.0, 4.0])),
            ProblemKind::Paraboloid => Some(outer([0.0; 3], 0.0, [1.0; 3])),
            ProblemKind::ConvexRadial { center } => {
                let r = sub(p, center);
                let u = (0.5 * norm_sq(r)).exp();
                Some(outer(r, u, [u; 3]))
            }
            ProblemKind::NonconvexExponential => {
                let [x, y, z] = p;
                let u = (2.0 * x * x - y * y + 4.0 * z * z).exp();
                let grad = [4.0 * x, -2.0 * y, 8.0 * z];
                Some(outer(grad, u, [4.0 * u, -2.0 * u, 8.0 * u]))
            }
            ProblemKind::LogRadial => {
                let q = 2.0 + norm_sq(p);
                Some(outer(p, -4.0 / (q * q), [2.0 / q; 3]))
            }
            ProblemKind::NonsmoothConvex { center } => {
                let r = sub(p, center);
                let rho = norm_sq(r).sqrt();
                if (rho - KINK_RADIUS).abs() < 1e-12 || rho == 0.0 {
                    return None;
                }
                if rho < KINK_RADIUS {
                    return Some([[0.0; 3]; 3]);
                }
                // (1 - 0.2/rho) on the tangent plane, 1 radially
                let t = 1.0 - KINK_RADIUS / rho;
                Some(outer(r, (1.0 - t) / (rho * rho), [t; 3]))
            }
            ProblemKind::BlowUp => {
                let w2 = 3.0 - norm_sq(p);
                if w2 <= 0.0 {
                    return None;
                }
                let w = w2.sqrt();
                Some(outer(p, 1.0 / (w2 * w), [1.0 / w; 3]))
            }
            ProblemKind::UnitCube | ProblemKind::TwoBalls => None,
        }
    }

    /// Points where the exact solution is not twice differentiable, or `f`
    /// is unbounded, are within this distance of the returned set.
    pub fn near_singular_set(&self, p: [f64; 3], margin: f64) -> bool {
        match self.kind {
            ProblemKind::NonsmoothConvex { center } => {
                let rho = norm_sq(sub(p, center)).sqrt();
                (rho - KINK_RADIUS).abs() < margin || rho < margin
            }
            ProblemKind::BlowUp => norm_sq(sub(p, [1.0; 3])).sqrt() < margin,
            _ => false,
        }
    }

    pub fn sample_f(&self, grid: &Arc<Grid3>) -> ScalarField {
        ScalarField::from_fn(grid.clone(), |p| self.f(p))
    }

    pub fn sample_g(&self, grid: &Arc<Grid3>) -> ScalarField {
        ScalarField::from_fn(grid.clone(), |p| self.g(p))
    }

    pub fn sample_exact(&self, grid: &Arc<Grid3>) -> Option<ScalarField> {
        self.has_exact()
            .then(|| ScalarField::from_fn(grid.clone(), |p| self.u_exact(p).unwrap()))
    }
}

/// The eight examples, with the radial centres at [`DEFAULT_CENTER`].
pub fn catalog() -> Vec<Problem> {
    (1..=8)
        .map(|i| Problem::by_name(&format!("ex{i}")).expect("catalog names are valid"))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub name: String,
    pub samples: usize,
    pub max_residual: f64,
    pub worst_point: [f64; 3],
}

/// Largest tolerated `|S2[u] - f|`, relative to `max(1, |f|)`.
pub const VALIDATION_TOLERANCE: f64 = 1e-8;

/// Checks `S2[u_exact] = f` from the analytic Hessian at random points of the
/// domain, away from singular sets.
pub fn validate_problem(p: &Problem, samples: usize, seed: u64) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport {
        name: p.name.clone(),
        samples: 0,
        max_residual: 0.0,
        worst_point: [0.0; 3],
    };
    if !p.has_exact() {
        return Ok(report);
    }
    let mut attempts = 0;
    while report.samples < samples {
        attempts += 1;
        if attempts > 100 * samples.max(1) {
            break;
        }
        let x = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        if !p.domain.contains(x) || p.near_singular_set(x, 1e-2) {
            continue;
        }
        let Some(hess) = p.hessian(x) else { continue };
        let s2 = HessianSample::from_matrix(hess).c();
        let f = p.f(x);
        let residual = (s2 - f).abs() / f.abs().max(1.0);
        if residual > report.max_residual {
            report.max_residual = residual;
            report.worst_point = x;
        }
        report.samples += 1;
        if residual > VALIDATION_TOLERANCE {
            return Err(Error::ProblemMismatch {
                name: p.name.clone(),
                point: x,
                residual,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hessian by fourth-order central differences of `u_exact` alone.
    fn fd_hessian(p: &Problem, x: [f64; 3]) -> [[f64; 3]; 3] {
        let h = 1e-3;
        let u = |d: [f64; 3]| p.u_exact([x[0] + d[0], x[1] + d[1], x[2] + d[2]]).unwrap();
        let e = |i: usize, s: f64| {
            let mut v = [0.0; 3];
            v[i] = s;
            v
        };
        let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = (-u(e(i, 2.0 * h)) + 16.0 * u(e(i, h)) - 30.0 * u([0.0; 3]) + 16.0 * u(e(i, -h))
                - u(e(i, -2.0 * h)))
                / (12.0 * h * h);
            for j in i + 1..3 {
                let d = |a: f64, b: f64| u(add(e(i, a), e(j, b)));
                let cross = |h: f64| (d(h, h) - d(h, -h) - d(-h, h) + d(-h, -h)) / (4.0 * h * h);
                // Richardson step lifts the cross difference to fourth order
                let v = (4.0 * cross(0.5 * h) - cross(h)) / 3.0;
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    #[test]
    fn catalog_has_eight_problems() {
        let c = catalog();
        assert_eq!(c.len(), 8);
        assert_eq!(c[7].domain, two_ball_domain());
        assert!(c[..6].iter().all(|p| p.has_exact()));
        assert!(!c[6].has_exact() && !c[7].has_exact());
        assert!(Problem::by_name("ex9").is_err());
    }

    #[test]
    fn right_hand_sides() {
        let ex1 = Problem::by_name("ex1").unwrap();
        assert_eq!(ex1.f([0.3, 0.9, 0.1]), 2.0);
        let ex5 = Problem::by_name("ex5").unwrap();
        assert_eq!(ex5.f([0.5, 0.5, 0.5]), 0.0);
        assert_eq!(ex5.f([0.6, 0.55, 0.5]), 0.0);
        assert!(ex5.f([0.9, 0.5, 0.5]) > 0.0);
        let ex7 = Problem::by_name("ex7").unwrap();
        assert_eq!(ex7.f([0.2, 0.2, 0.2]), 1.0);
        assert_eq!(ex7.g([0.0, 0.2, 0.2]), 0.0);
    }

    #[test]
    fn analytic_hessians_match_finite_differences() {
        let pts = [[0.3, 0.6, 0.2], [0.8, 0.1, 0.45], [0.15, 0.7, 0.9]];
        for p in catalog().iter().filter(|p| p.has_exact()) {
            for x in pts {
                if p.near_singular_set(x, 0.05) {
                    continue;
                }
                let a = p.hessian(x).unwrap();
                let b = fd_hessian(p, x);
                let scale = a.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((a[i][j] - b[i][j]).abs() < 1e-6 * scale, "{} at {x:?}", p.name);
                    }
                }
            }
        }
    }

    #[test]
    fn ex3_consistency_at_reference_point() {
        let p = Problem::by_name("ex3").unwrap();
        let x = [0.3, 0.6, 0.2];
        let s2 = HessianSample::from_matrix(fd_hessian(&p, x)).c();
        assert!((s2 - p.f(x)).abs() < 1e-6 * p.f(x));
    }

    #[test]
    fn every_problem_validates() {
        for p in catalog() {
            let r = validate_problem(&p, 500, 17).unwrap();
            assert!(r.max_residual <= VALIDATION_TOLERANCE);
        }
        let ex1 = validate_problem(&Problem::by_name("ex1").unwrap(), 100, 1).unwrap();
        assert_eq!(ex1.max_residual, 0.0);
        let ex4 = validate_problem(&Problem::by_name("ex4").unwrap(), 1000, 1).unwrap();
        assert!(ex4.max_residual < 1e-10);
        let para = validate_problem(&Problem::by_name("paraboloid").unwrap(), 50, 1).unwrap();
        assert_eq!(para.max_residual, 0.0);
    }

    #[test]
    fn blow_up_excludes_corner() {
        let p = Problem::by_name("ex6").unwrap();
        assert!(p.near_singular_set([0.999, 0.999, 0.999], 1e-2));
        assert_eq!(p.u_exact([1.0, 1.0, 1.0]), Some(-0.0));
        let r = validate_problem(&p, 2000, 3).unwrap();
        assert_eq!(r.samples, 2000);
    }

    #[test]
    fn exact_solutions_are_admissible() {
        // eigenvalue pairwise sums via the invariants: for a symmetric 3x3
        // matrix all pairwise sums are positive iff trace > 0 and
        // the sum of pairwise-sum products and their product are positive.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in catalog().iter().filter(|p| p.has_exact()) {
            for _ in 0..200 {
                let x = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                if p.near_singular_set(x, 1e-2) {
                    continue;
                }
                let m = HessianSample::from_matrix(p.hessian(x).unwrap());
                if matches!(p.kind, ProblemKind::NonsmoothConvex { .. }) && m.trace() == 0.0 {
                    continue;
                }
                // pairwise sums are the eigenvalues of trace*I - M
                let t = m.trace();
                let n = HessianSample {
                    dxx: t - m.dxx,
                    dyy: t - m.dyy,
                    dzz: t - m.dzz,
                    dxy: -m.dxy,
                    dxz: -m.dxz,
                    dyz: -m.dyz,
                };
                let det = {
                    let a = n.to_matrix();
                    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
                };
                assert!(n.trace() > 0.0 && n.c() > 0.0 && det > 0.0, "{} at {x:?}", p.name);
            }
        }
    }
}
