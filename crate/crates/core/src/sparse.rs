//! Sparse operators over the interior unknowns and the linear solve they need.
//!
//! Operators are assembled as (row, col, value) triplets; duplicates are
//! summed when the operator is compressed. Solves run restarted GMRES with an
//! ILU(0) right preconditioner and fall back to a sparse LU factorization with
//! iterative refinement when the Krylov solve misses its target.

use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use faer::prelude::Solve;

use crate::error::{Error, Result};

/// Target for `‖Ax − b‖∞` relative to `max(1, ‖b‖∞)`.
pub const SOLVE_TOLERANCE: f64 = 1e-12;

const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITERS: usize = 3000;
const REFINEMENT_STEPS: usize = 4;

/// Square sparse operator in triplet form.
#[derive(Clone, Debug, Default)]
pub struct SparseOperator {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseOperator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            triplets: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, nnz: usize) -> Self {
        Self {
            dim,
            triplets: Vec::with_capacity(nnz),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut a = Self::with_capacity(dim, dim);
        for i in 0..dim {
            a.push(i, i, 1.0);
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.triplets.push((row, col, value));
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &SparseOperator, scale: f64) -> SparseOperator {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        out.triplets
            .extend(other.triplets.iter().map(|&(r, c, v)| (r, c, scale * v)));
        out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn to_csr(&self) -> Csr {
        Csr::from_triplets(self.dim, &self.triplets)
    }

    /// Dense row `row` as (col, value) pairs with duplicates summed.
    pub fn row(&self, row: usize) -> Vec<(usize, f64)> {
        let mut entries: Vec<(usize, f64)> = self
            .triplets
            .iter()
            .filter(|t| t.0 == row)
            .map(|&(_, c, v)| (c, v))
            .collect();
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match out.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => out.push((c, v)),
            }
        }
        out
    }
}

/// Compressed sparse rows with sorted, unique column indices.
#[derive(Clone, Debug)]
pub struct Csr {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..dim {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if out_cols.len() > row_ptr[r] && *out_cols.last().unwrap() == c {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            row_ptr.push(out_cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols: out_cols,
            vals: out_vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yr = acc;
        }
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; self.dim];
        self.mul_into(x, &mut ax);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    }

    fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Incomplete LU with zero fill on the CSR pattern.
struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &Csr) -> Option<Self> {
        let mut lu = a.clone();
        let n = a.dim;
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for p in lu.row_ptr[r]..lu.row_ptr[r + 1] {
                if lu.cols[p] == r {
                    diag[r] = p;
                }
            }
            if diag[r] == usize::MAX {
                return None;
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.cols[p]] = p;
            }
            for p in start..end {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                let lik = lu.vals[p] / pivot;
                lu.vals[p] = lik;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.cols[q];
                    let target = pos[j];
                    if target != usize::MAX {
                        lu.vals[target] -= lik * lu.vals[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.cols[p]] = usize::MAX;
            }
            let d = lu.vals[diag[i]];
            if !d.is_finite() || d.abs() < f64::MIN_POSITIVE * 1e10 {
                return None;
            }
        }
        Some(Self { lu, diag })
    }

    fn apply(&self, x: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.dim {
            let mut acc = x[i];
            for p in lu.row_ptr[i]..self.diag[i] {
                acc -= lu.vals[p] * x[lu.cols[p]];
            }
            x[i] = acc;
        }
        for i in (0..lu.dim).rev() {
            let mut acc = x[i];
            for p in self.diag[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.vals[p] * x[lu.cols[p]];
            }
            x[i] = acc / lu.vals[self.diag[i]];
        }
    }
}

/// Outcome of a solve that did not necessarily meet the contract.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub solution: Vec<f64>,
    /// `‖Ax − b‖∞` of the returned solution.
    pub residual: f64,
    pub target: f64,
    pub used_direct: bool,
}

impl SolveOutcome {
    pub fn meets_contract(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.target
    }
}

/// Reusable solver for one operator; the preconditioner is built once.
pub struct LinearSolver {
    a: Csr,
    triplets: Vec<(usize, usize, f64)>,
    ilu: Option<Ilu0>,
    direct: Option<Lu<usize, f64>>,
}

impl LinearSolver {
    pub fn new(a: &SparseOperator) -> Self {
        let csr = a.to_csr();
        let ilu = Ilu0::new(&csr);
        Self {
            a: csr,
            triplets: a.triplets.clone(),
            ilu,
            direct: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim
    }

    /// Solves `Ax = b` to the crate-wide contract or reports a singular system.
    pub fn solve(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        let out = self.solve_best_effort(b);
        if out.meets_contract() {
            Ok(out.solution)
        } else {
            Err(Error::SingularSystem {
                residual: out.residual,
                target: out.target,
            })
        }
    }

    /// Solves as well as possible and reports the achieved residual.
    pub fn solve_best_effort(&mut self, b: &[f64]) -> SolveOutcome {
        assert_eq!(b.len(), self.a.dim);
        let b_norm = norm_inf(b);
        let target = SOLVE_TOLERANCE * b_norm.max(1.0);
        if self.a.dim == 0 {
            return SolveOutcome {
                solution: Vec::new(),
                residual: 0.0,
                target,
                used_direct: false,
            };
        }

        if self.direct.is_none() {
            if let Some(ilu) = &self.ilu {
                let x = gmres(&self.a, ilu, b, target);
                let residual = norm_inf(&self.a.residual(&x, b));
                if residual.is_finite() && residual <= target {
                    return SolveOutcome {
                        solution: x,
                        residual,
                        target,
                        used_direct: false,
                    };
                }
                log::debug!("gmres missed target ({residual:e} > {target:e}); using sparse LU");
            }
        }

        match self.direct_solve(b) {
            Some(x) => {
                let residual = norm_inf(&self.a.residual(&x, b));
                SolveOutcome {
                    solution: x,
                    residual: if residual.is_finite() { residual } else { f64::INFINITY },
                    target,
                    used_direct: true,
                }
            }
            None => SolveOutcome {
                solution: vec![f64::NAN; self.a.dim],
                residual: f64::INFINITY,
                target,
                used_direct: true,
            },
        }
    }

    fn direct_solve(&mut self, b: &[f64]) -> Option<Vec<f64>> {
        if self.direct.is_none() {
            let n = self.a.dim;
            let entries: Vec<Triplet<usize, usize, f64>> = self
                .triplets
                .iter()
                .map(|&(r, c, v)| Triplet::new(r, c, v))
                .collect();
            let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &entries).ok()?;
            self.direct = Some(mat.sp_lu().ok()?);
        }
        let lu = self.direct.as_ref()?;
        let solve = |rhs: &[f64]| -> Vec<f64> {
            let col = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
            let x = lu.solve(&col);
            (0..rhs.len()).map(|i| x[i]).collect()
        };
        let mut x = solve(b);
        for _ in 0..REFINEMENT_STEPS {
            let r = self.a.residual(&x, b);
            if !norm_inf(&r).is_finite() {
                return Some(x);
            }
            let dx = solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Some(x)
    }

    /// `‖A‖∞`, useful for judging achievable residuals.
    pub fn operator_norm_inf(&self) -> f64 {
        self.a.norm_inf()
    }
}

/// One-shot solve of `Ax = b` under the crate-wide residual contract.
pub fn linear_solve(a: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    LinearSolver::new(a).solve(b)
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| {
        if x.is_nan() {
            f64::NAN
        } else {
            m.max(x.abs())
        }
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES. Stops once the 2-norm residual,
/// which bounds the max-norm residual, falls under `target`.
fn gmres(a: &Csr, m: &Ilu0, b: &[f64], target: f64) -> Vec<f64> {
    let n = a.dim;
    let mut x = vec![0.0; n];
    let mut total = 0;
    let mut tmp = vec![0.0; n];
    let mut best = x.clone();
    let mut best_res = f64::INFINITY;

    while total < GMRES_MAX_ITERS {
        let r = a.residual(&x, b);
        let beta = norm2(&r);
        let r_inf = norm_inf(&r);
        if r_inf < best_res {
            best_res = r_inf;
            best.copy_from_slice(&x);
        }
        if !beta.is_finite() || r_inf <= target || beta == 0.0 {
            break;
        }

        let restart = GMRES_RESTART.min(n);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut steps = 0;

        for j in 0..restart {
            let mut z = basis[j].clone();
            m.apply(&mut z);
            a.mul_into(&z, &mut tmp);
            let mut w = tmp.clone();
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                hess[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hnext = norm2(&w);
            hess[j + 1][j] = hnext;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = (hess[j][j] * hess[j][j] + hess[j + 1][j] * hess[j + 1][j]).sqrt();
            if denom == 0.0 || !denom.is_finite() {
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            steps = j + 1;
            total += 1;
            if g[j + 1].abs() <= 0.5 * target || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        if steps == 0 {
            break;
        }

        let mut y = vec![0.0; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for k in i + 1..steps {
                acc -= hess[i][k] * y[k];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vk) in update.iter_mut().zip(v) {
                *u += yi * vk;
            }
        }
        m.apply(&mut update);
        for (xi, ui) in x.iter_mut().zip(&update) {
            *xi += ui;
        }
    }

    let r_inf = norm_inf(&a.residual(&x, b));
    if r_inf <= best_res {
        x
    } else {
        best
    }
}
