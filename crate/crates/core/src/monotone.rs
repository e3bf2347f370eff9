//! Monotone wide-stencil discretization of the 2-Hessian.
//!
//! At each node the operator is the minimum, over the lattice triplets of
//! mutually orthogonal directions, of the non-decreasing extension of
//! `sigma_2` applied to the three directional second differences. Every
//! ingredient is non-decreasing in neighbour-minus-centre differences, which
//! makes the scheme degenerate elliptic.

use crate::directions::{max_norm, norm_sq, Direction, DirectionSet};
use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField};
use crate::sparse::SparseOperator;

/// Second elementary symmetric polynomial of three values.
#[inline]
pub fn sigma2(l1: f64, l2: f64, l3: f64) -> f64 {
    l1 * l2 + l1 * l3 + l2 * l3
}

/// All pairwise sums strictly positive.
#[inline]
pub fn in_gamma(l1: f64, l2: f64, l3: f64) -> bool {
    l1 + l2 > 0.0 && l1 + l3 > 0.0 && l2 + l3 > 0.0
}

#[inline]
fn sort3(mut v: [f64; 3]) -> [f64; 3] {
    if v[0] > v[1] {
        v.swap(0, 1);
    }
    if v[1] > v[2] {
        v.swap(1, 2);
    }
    if v[0] > v[1] {
        v.swap(0, 1);
    }
    v
}

/// Which piece of the extension is active for a sorted triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Two smallest values sum to a non-negative number; plain `sigma_2`.
    Sigma2,
    /// Two smallest sum to a negative number; value is `-x^2` for the smallest `x`.
    Negative,
}

#[inline]
fn branch_of(sorted: [f64; 3]) -> Branch {
    if sorted[0] + sorted[1] < 0.0 {
        Branch::Negative
    } else {
        Branch::Sigma2
    }
}

#[inline]
fn sigma_bar_sorted(s: [f64; 3]) -> f64 {
    match branch_of(s) {
        Branch::Negative => -s[0] * s[0],
        Branch::Sigma2 => sigma2(s[0], s[1], s[2]),
    }
}

/// Non-decreasing extension of `sigma_2` from the cone to all of R^3.
#[inline]
pub fn sigma_bar(l1: f64, l2: f64, l3: f64) -> f64 {
    sigma_bar_sorted(sort3([l1, l2, l3]))
}

/// `(u(x + h nu) + u(x - h nu) - 2 u(x)) / (|nu|^2 h^2)`.
pub fn directional_second_diff(u: &ScalarField, node: usize, nu: Direction) -> Result<f64> {
    let grid = u.grid();
    let outside = || Error::StencilOutside { node, direction: nu };
    let plus = grid.offset(node, nu).ok_or_else(outside)?;
    let minus = grid.offset(node, nu.map(|c| -c)).ok_or_else(outside)?;
    let h2 = grid.h() * grid.h();
    Ok((u.get(plus) + u.get(minus) - 2.0 * u.get(node)) * (1.0 / (norm_sq(nu) as f64 * h2)))
}

/// Minimizing triplet at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveTriplet {
    /// Index into [`DirectionSet::triplets`].
    pub triplet: usize,
    /// The triplet's directions ordered by ascending second difference.
    pub directions: [Direction; 3],
    /// Second differences in ascending order.
    pub diffs: [f64; 3],
    pub branch: Branch,
}

impl ActiveTriplet {
    pub fn value(&self) -> f64 {
        sigma_bar_sorted(self.diffs)
    }

    /// Derivative of the extension with respect to each sorted difference.
    pub fn gradient(&self) -> [f64; 3] {
        let [x, y, z] = self.diffs;
        match self.branch {
            Branch::Negative => [-2.0 * x, 0.0, 0.0],
            Branch::Sigma2 => [y + z, x + z, x + y],
        }
    }
}

/// Active triplet per interior node, in unknown order.
#[derive(Clone, Debug)]
pub struct ActiveTripletField {
    entries: Vec<ActiveTriplet>,
}

impl ActiveTripletField {
    pub fn entries(&self) -> &[ActiveTriplet] {
        &self.entries
    }

    pub fn get(&self, unknown: usize) -> &ActiveTriplet {
        &self.entries[unknown]
    }

    /// Checks stored differences against recomputation from `u`.
    pub fn is_consistent_with(&self, u: &ScalarField, tol: f64) -> bool {
        let grid = u.grid();
        self.entries.len() == grid.num_unknowns()
            && grid.interior_nodes().iter().zip(&self.entries).all(|(&p, a)| {
                let sorted = a.diffs[0] <= a.diffs[1] && a.diffs[1] <= a.diffs[2];
                sorted
                    && branch_of(a.diffs) == a.branch
                    && a.directions.iter().zip(&a.diffs).all(|(&nu, &d)| {
                        directional_second_diff(u, p, nu)
                            .map(|r| (r - d).abs() <= tol * (1.0 + d.abs()))
                            .unwrap_or(false)
                    })
            })
    }
}

/// Per-grid lookup tables for evaluating the operator.
struct Plan<'a> {
    dirs: &'a DirectionSet,
    line_stride: Vec<isize>,
    line_extent: Vec<[i32; 3]>,
    line_scale: Vec<f64>,
    triplet_extent: Vec<[i32; 3]>,
}

impl<'a> Plan<'a> {
    fn new(grid: &Grid3, dirs: &'a DirectionSet) -> Self {
        let h2 = grid.h() * grid.h();
        let lines = dirs.lines();
        let line_extent: Vec<[i32; 3]> = lines.iter().map(|v| v.map(|c| c.abs())).collect();
        let triplet_extent = dirs
            .triplets()
            .iter()
            .map(|t| {
                let mut e = [0; 3];
                for &l in t {
                    for a in 0..3 {
                        e[a] = e[a].max(line_extent[l][a]);
                    }
                }
                e
            })
            .collect();
        Self {
            dirs,
            line_stride: lines.iter().map(|&v| grid.stride(v)).collect(),
            line_extent,
            line_scale: lines.iter().map(|&v| 1.0 / (norm_sq(v) as f64 * h2)).collect(),
            triplet_extent,
        }
    }

    #[inline]
    fn fits(extent: [i32; 3], reach: [usize; 3]) -> bool {
        (0..3).all(|a| extent[a] as usize <= reach[a])
    }

    /// Value and active triplet at `node`; `diffs` is scratch of length `lines`.
    fn eval(&self, u: &ScalarField, node: usize, diffs: &mut [f64]) -> (f64, ActiveTriplet) {
        let reach = u.grid().reach(node);
        let v = u.values();
        let c = v[node];
        for (l, d) in diffs.iter_mut().enumerate() {
            *d = if Self::fits(self.line_extent[l], reach) {
                let s = self.line_stride[l];
                let plus = v[(node as isize + s) as usize];
                let minus = v[(node as isize - s) as usize];
                (plus + minus - 2.0 * c) * self.line_scale[l]
            } else {
                f64::NAN
            };
        }

        let mut best = f64::INFINITY;
        let mut best_t = usize::MAX;
        for (t, trip) in self.dirs.triplets().iter().enumerate() {
            if !Self::fits(self.triplet_extent[t], reach) {
                continue;
            }
            let val = sigma_bar(diffs[trip[0]], diffs[trip[1]], diffs[trip[2]]);
            if val < best {
                best = val;
                best_t = t;
            }
        }
        assert!(best_t != usize::MAX, "no triplet fits at node {node}");

        let trip = self.dirs.triplets()[best_t];
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| diffs[trip[a]].total_cmp(&diffs[trip[b]]));
        let lines = self.dirs.lines();
        let sorted = order.map(|i| diffs[trip[i]]);
        let active = ActiveTriplet {
            triplet: best_t,
            directions: order.map(|i| lines[trip[i]]),
            diffs: sorted,
            branch: branch_of(sorted),
        };
        (best, active)
    }
}

/// Monotone 2-Hessian at every interior node (zero elsewhere) together with
/// the minimizing triplets. Ties go to the lowest triplet index. Triplets whose
/// stencil would leave the lattice at a node are skipped there.
pub fn s2_monotone(u: &ScalarField, dirs: &DirectionSet) -> (ScalarField, ActiveTripletField) {
    let grid = u.grid().clone();
    let plan = Plan::new(&grid, dirs);
    let mut diffs = vec![0.0; dirs.lines().len()];
    let mut out = ScalarField::zeros(grid.clone());
    let mut entries = Vec::with_capacity(grid.num_unknowns());
    for &p in grid.interior_nodes() {
        let (val, active) = plan.eval(u, p, &mut diffs);
        out.set(p, val);
        entries.push(active);
    }
    (out, ActiveTripletField { entries })
}

/// Monotone 2-Hessian at a single interior node.
pub fn s2_monotone_at(u: &ScalarField, node: usize, dirs: &DirectionSet) -> Result<(f64, ActiveTriplet)> {
    if !u.grid().is_interior(node) {
        return Err(Error::NotInterior(node));
    }
    let plan = Plan::new(u.grid(), dirs);
    let mut diffs = vec![0.0; dirs.lines().len()];
    Ok(plan.eval(u, node, &mut diffs))
}

/// Extension value of every triplet at `node`, in triplet order; `None` for
/// triplets that do not fit.
pub fn triplet_values(u: &ScalarField, node: usize, dirs: &DirectionSet) -> Vec<Option<f64>> {
    dirs.triplets()
        .iter()
        .map(|t| {
            let d: Result<Vec<f64>> = t
                .iter()
                .map(|&l| directional_second_diff(u, node, dirs.lines()[l]))
                .collect();
            d.ok().map(|d| sigma_bar(d[0], d[1], d[2]))
        })
        .collect()
}

/// Jacobian of [`s2_monotone`] from the active triplets: the derivative of
/// the active member of the minimum.
pub fn jacobian_monotone(u: &ScalarField, active: &ActiveTripletField) -> SparseOperator {
    let grid = u.grid();
    let h2 = grid.h() * grid.h();
    let mut jac = SparseOperator::with_capacity(grid.num_unknowns(), 7 * grid.num_unknowns());
    for (row, (&p, a)) in grid.interior_nodes().iter().zip(active.entries()).enumerate() {
        let grad = a.gradient();
        let mut center = 0.0;
        for (nu, g) in a.directions.iter().zip(grad) {
            if g == 0.0 {
                continue;
            }
            let w = g / (norm_sq(*nu) as f64 * h2);
            let s = grid.stride(*nu);
            for q in [(p as isize + s) as usize, (p as isize - s) as usize] {
                if let Some(col) = grid.unknown_index(q) {
                    jac.push(row, col, w);
                }
            }
            center -= 2.0 * w;
        }
        jac.push(row, row, center);
    }
    jac
}

/// Widest direction shell that fits in a band of `band_width` nodes.
pub fn widest_fitting_shell(band_width: usize, dirs: &DirectionSet) -> usize {
    dirs.lines()
        .iter()
        .map(|&v| max_norm(v) as usize)
        .filter(|&w| w <= band_width)
        .max()
        .unwrap_or(0)
}
