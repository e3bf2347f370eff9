use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use two_hessian::grid::{Domain, Grid3, ScalarField};
use two_hessian::problems::Problem;
use two_hessian::solvers::{
    parabolic_step, solve, solve_jacobi, solve_newton, solve_parabolic, solve_semi_implicit,
    Discretization, Init, Method, Outcome, Scheme, SolverConfig,
};
use two_hessian::sparse::linear_solve;

fn cube(n: usize, band: usize) -> Arc<Grid3> {
    Arc::new(Grid3::build(n, Domain::Cube, band).unwrap())
}

#[test]
fn newton_system_at_exact_quadratic_meets_contract() {
    let p = Problem::by_name("ex1").unwrap();
    let grid = cube(13, 1);
    let u = p.sample_exact(&grid).unwrap();
    let jac = two_hessian::naive::jacobian_naive(&u);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b: Vec<f64> = (0..grid.num_unknowns()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = linear_solve(&jac, &b).unwrap();
    let r = jac.apply(&x);
    let res = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(res <= 1e-12);
}

#[test]
fn semi_implicit_matches_newton_error_on_radial_example() {
    let p = Problem::by_name("ex2").unwrap();
    let grid = cube(15, 1);
    let cfg = SolverConfig {
        method: Method::SemiImplicit,
        init: Init::PoissonSqrt2f,
        max_iters: 1000,
        ..SolverConfig::default()
    };
    let rep = solve_semi_implicit(&p, grid.clone(), &cfg).unwrap();
    assert!(rep.converged);
    let err = rep.final_field.max_norm_error(&p.sample_exact(&grid).unwrap());
    assert!((err - 2.393e-4).abs() <= 0.2 * 2.393e-4, "{err:e}");
}

#[test]
fn converged_solvers_agree_within_hundred_tol() {
    let p = Problem::by_name("ex4").unwrap();
    let grid = cube(11, 1);
    let base = SolverConfig {
        max_iters: 50_000,
        ..SolverConfig::default()
    };
    let runs = [
        solve_jacobi(&p, grid.clone(), &SolverConfig { method: Method::Jacobi, ..base.clone() }),
        solve_semi_implicit(
            &p,
            grid.clone(),
            &SolverConfig {
                method: Method::SemiImplicit,
                init: Init::PoissonSqrt2f,
                ..base.clone()
            },
        ),
        solve_newton(&p, grid.clone(), &SolverConfig { max_iters: 50, ..base.clone() }),
    ];
    let fields: Vec<ScalarField> = runs
        .into_iter()
        .map(|r| {
            let r = r.unwrap();
            assert!(r.converged, "{:?} {:?}", r.method, r.outcome);
            r.final_field
        })
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(fields[i].max_norm_error(&fields[j]) <= 100.0 * base.tol);
        }
    }
}

#[test]
fn reports_keep_their_invariants() {
    let p = Problem::by_name("ex2").unwrap();
    for method in [Method::Jacobi, Method::SemiImplicit, Method::Newton] {
        let cfg = SolverConfig {
            method,
            max_iters: 20_000,
            ..SolverConfig::default()
        };
        let rep = solve(&p, cube(9, 1), &cfg).unwrap();
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        assert!(rep.converged);
        assert!(rep.final_residual() < rep.residual_target);
        if method == Method::Newton {
            assert_eq!(rep.damping_history.len(), rep.iterations);
            assert!(rep.residual_history.windows(2).all(|w| w[1] < w[0]));
        }
        let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(json["iterations"], rep.iterations);
        assert_eq!(json["residual_history"].as_array().unwrap().len(), rep.iterations + 1);
        assert!(json["elapsed_secs"].is_number());
        assert_eq!(json["outcome"]["status"], "converged");
    }
}

#[test]
fn monotone_newton_without_exact_solution() {
    let p = Problem::by_name("ex7").unwrap();
    let cfg = SolverConfig {
        scheme: Scheme::Monotone { n_theta: 2 },
        ..SolverConfig::default()
    };
    let rep = solve_newton(&p, cube(13, 2), &cfg).unwrap();
    assert!(rep.converged, "{:?}", rep.outcome);
    // the solution is negative inside and vanishes on the band
    let u = &rep.final_field;
    let grid = u.grid();
    assert!(grid.interior_nodes().iter().all(|&q| u.get(q) < 0.0));
}

#[test]
fn monotone_parabolic_step_is_nonexpansive_for_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = Problem::by_name("ex2").unwrap();
    for n_theta in [1, 2] {
        let grid = cube(9, n_theta);
        let disc = Discretization::new(&p, grid.clone(), Scheme::Monotone { n_theta }).unwrap();
        let exact = p.sample_exact(&grid).unwrap();
        let alpha = 0.1 * grid.h().powi(4);
        for _ in 0..25 {
            let mut a = exact.clone();
            let mut b = exact.clone();
            for &q in grid.interior_nodes() {
                a.set(q, exact.get(q) + rng.random_range(-1e-3..1e-3));
                b.set(q, exact.get(q) + rng.random_range(-1e-3..1e-3));
            }
            let before = a.max_norm_error(&b);
            let after = parabolic_step(&disc, &a, alpha).max_norm_error(&parabolic_step(&disc, &b, alpha));
            assert!(after <= before * (1.0 + 1e-12), "{after:e} > {before:e}");
        }
    }
}

#[test]
fn monotone_parabolic_hits_the_iteration_cap() {
    let p = Problem::by_name("ex1").unwrap();
    let cfg = SolverConfig {
        scheme: Scheme::Monotone { n_theta: 1 },
        method: Method::Parabolic,
        init: Init::Zero,
        max_iters: 50,
        ..SolverConfig::default()
    };
    let rep = solve_parabolic(&p, cube(9, 1), &cfg).unwrap();
    assert_eq!(rep.outcome, Outcome::MaxIterations);
    assert_eq!(rep.iterations, 50);
    assert!(rep.into_result().is_err());
}
