//! Standard centered-difference discretization of the 2-Hessian.
//!
//! Second order accurate for smooth solutions, exact on quadratics, but not
//! monotone because of the cross differences.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::sparse::SparseOperator;

/// The six distinct entries of the discrete Hessian at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HessianSample {
    pub dxx: f64,
    pub dyy: f64,
    pub dzz: f64,
    pub dxy: f64,
    pub dxz: f64,
    pub dyz: f64,
}

impl HessianSample {
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Self {
            dxx: m[0][0],
            dyy: m[1][1],
            dzz: m[2][2],
            dxy: m[0][1],
            dxz: m[0][2],
            dyz: m[1][2],
        }
    }

    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        [
            [self.dxx, self.dxy, self.dxz],
            [self.dxy, self.dyy, self.dyz],
            [self.dxz, self.dyz, self.dzz],
        ]
    }

    pub fn trace(&self) -> f64 {
        self.dxx + self.dyy + self.dzz
    }

    /// Squared Frobenius norm; off-diagonal entries count twice.
    pub fn frobenius_sq(&self) -> f64 {
        self.dxx * self.dxx
            + self.dyy * self.dyy
            + self.dzz * self.dzz
            + 2.0 * (self.dxy * self.dxy + self.dxz * self.dxz + self.dyz * self.dyz)
    }

    /// Sum of the principal 2x2 minors.
    pub fn c(&self) -> f64 {
        c_of_hessian(self)
    }
}

/// Sum of the principal 2x2 minors, i.e. sigma_2 of the eigenvalues.
#[inline]
pub fn c_of_hessian(hs: &HessianSample) -> f64 {
    hs.dxx * hs.dyy + hs.dxx * hs.dzz + hs.dyy * hs.dzz
        - hs.dxy * hs.dxy
        - hs.dxz * hs.dxz
        - hs.dyz * hs.dyz
}

const AXIS: [[i32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

/// Diagonal neighbour pairs for (xy, xz, yz): the "plus" offset and the
/// "minus" offset of the 4h^2 cross difference.
const CROSS: [([i32; 3], [i32; 3]); 3] = [
    ([1, 1, 0], [-1, 1, 0]),
    ([1, 0, 1], [-1, 0, 1]),
    ([0, 1, 1], [0, 1, -1]),
];

#[inline]
fn at(values: &[f64], node: usize, stride: isize) -> f64 {
    values[(node as isize + stride) as usize]
}

/// Discrete Hessian at `node`, which must be interior.
pub fn hessian_sample(u: &ScalarField, node: usize) -> Result<HessianSample> {
    if !u.grid().is_interior(node) {
        return Err(Error::NotInterior(node));
    }
    Ok(hessian_unchecked(u, node))
}

#[inline]
pub(crate) fn hessian_unchecked(u: &ScalarField, node: usize) -> HessianSample {
    let grid = u.grid();
    let v = u.values();
    let h2 = grid.h() * grid.h();
    let c = v[node];
    let second = |off: [i32; 3]| {
        let s = grid.stride(off);
        (at(v, node, s) + at(v, node, -s) - 2.0 * c) / h2
    };
    let cross = |plus: [i32; 3], minus: [i32; 3]| {
        let sp = grid.stride(plus);
        let sm = grid.stride(minus);
        (at(v, node, sp) + at(v, node, -sp) - at(v, node, sm) - at(v, node, -sm)) / (4.0 * h2)
    };
    HessianSample {
        dxx: second(AXIS[0]),
        dyy: second(AXIS[1]),
        dzz: second(AXIS[2]),
        dxy: cross(CROSS[0].0, CROSS[0].1),
        dxz: cross(CROSS[1].0, CROSS[1].1),
        dyz: cross(CROSS[2].0, CROSS[2].1),
    }
}

/// Naive 2-Hessian at every interior node; other nodes are zero.
pub fn s2_naive(u: &ScalarField) -> ScalarField {
    let grid = u.grid().clone();
    let mut out = ScalarField::zeros(grid.clone());
    for &p in grid.interior_nodes() {
        out.set(p, hessian_unchecked(u, p).c());
    }
    out
}

/// The nine neighbour-pair means around a node: three axis pairs followed by
/// the (xy, xy', xz, xz', yz, yz') diagonal pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborAverages {
    pub a: [f64; 9],
}

impl NeighborAverages {
    pub fn at(u: &ScalarField, node: usize) -> Result<Self> {
        if !u.grid().is_interior(node) {
            return Err(Error::NotInterior(node));
        }
        Ok(Self::at_unchecked(u, node))
    }

    #[inline]
    fn at_unchecked(u: &ScalarField, node: usize) -> Self {
        let grid = u.grid();
        let v = u.values();
        let mean = |off: [i32; 3]| {
            let s = grid.stride(off);
            0.5 * (at(v, node, s) + at(v, node, -s))
        };
        Self {
            a: [
                mean(AXIS[0]),
                mean(AXIS[1]),
                mean(AXIS[2]),
                mean([1, 1, 0]),
                mean([-1, 1, 0]),
                mean([1, 0, 1]),
                mean([-1, 0, 1]),
                mean([0, 1, 1]),
                mean([0, 1, -1]),
            ],
        }
    }

    /// The discriminant term under the square root of the per-node update.
    pub fn discriminant(&self, f: f64, h: f64) -> f64 {
        let a = &self.a;
        let axis = (a[0] - a[1]).powi(2) + (a[0] - a[2]).powi(2) + (a[1] - a[2]).powi(2);
        let cross = (a[3] - a[4]).powi(2) + (a[5] - a[6]).powi(2) + (a[7] - a[8]).powi(2);
        8.0 * axis + 3.0 * cross + 12.0 * f * h.powi(4)
    }

    /// Both roots of the per-node quadratic `S2 = f` in the centre value.
    pub fn roots(&self, f: f64, h: f64) -> QuadraticRoots {
        let disc = self.discriminant(f, h);
        let mean = (self.a[0] + self.a[1] + self.a[2]) / 3.0;
        let half_width = disc.max(0.0).sqrt() / 12.0;
        QuadraticRoots {
            smaller: mean - half_width,
            larger: mean + half_width,
            discriminant: disc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticRoots {
    pub smaller: f64,
    pub larger: f64,
    /// Unclamped value under the square root.
    pub discriminant: f64,
}

/// What to do when the per-node quadratic has no real root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiscriminantPolicy {
    /// Treat the negative value as zero and keep going.
    #[default]
    Clamp,
    Fail,
}

#[derive(Clone, Debug)]
pub struct JacobiSweep {
    pub field: ScalarField,
    /// Nodes whose discriminant was negative and clamped.
    pub clamped: usize,
    /// Largest interior change.
    pub max_update: f64,
}

/// One simultaneous sweep of the smaller-root fixed-point update.
pub fn jacobi_update(
    u: &ScalarField,
    f: &ScalarField,
    policy: DiscriminantPolicy,
) -> Result<JacobiSweep> {
    let grid = u.grid().clone();
    let h = grid.h();
    let mut next = u.clone();
    let mut clamped = 0;
    let mut max_update = 0.0f64;
    for &p in grid.interior_nodes() {
        let roots = NeighborAverages::at_unchecked(u, p).roots(f.get(p), h);
        if roots.discriminant < 0.0 {
            if policy == DiscriminantPolicy::Fail {
                return Err(Error::NegativeDiscriminant {
                    node: p,
                    value: roots.discriminant,
                });
            }
            clamped += 1;
        }
        max_update = max_update.max((roots.smaller - u.get(p)).abs());
        next.set(p, roots.smaller);
    }
    if clamped > 0 {
        log::warn!("jacobi sweep clamped {clamped} negative discriminants");
    }
    Ok(JacobiSweep {
        field: next,
        clamped,
        max_update,
    })
}

/// Jacobian of [`s2_naive`] with respect to the interior values. Band and
/// exterior neighbours are constants and drop out of the rows.
pub fn jacobian_naive(u: &ScalarField) -> SparseOperator {
    let grid = u.grid();
    let h2 = grid.h() * grid.h();
    let mut jac = SparseOperator::with_capacity(grid.num_unknowns(), 19 * grid.num_unknowns());
    for (row, &p) in grid.interior_nodes().iter().enumerate() {
        let hs = hessian_unchecked(u, p);
        let axis_coef = [hs.dyy + hs.dzz, hs.dxx + hs.dzz, hs.dxx + hs.dyy];
        let cross_coef = [-2.0 * hs.dxy, -2.0 * hs.dxz, -2.0 * hs.dyz];

        let mut push = |off: [i32; 3], w: f64| {
            let q = (p as isize + grid.stride(off)) as usize;
            if let Some(col) = grid.unknown_index(q) {
                jac.push(row, col, w);
            }
        };

        let mut center = 0.0;
        for (a, off) in AXIS.iter().enumerate() {
            let w = axis_coef[a] / h2;
            push(*off, w);
            push(off.map(|c| -c), w);
            center -= 2.0 * w;
        }
        for (c, (plus, minus)) in CROSS.iter().enumerate() {
            let w = cross_coef[c] / (4.0 * h2);
            push(*plus, w);
            push(plus.map(|v| -v), w);
            push(*minus, -w);
            push(minus.map(|v| -v), -w);
        }
        jac.push(row, row, center);
    }
    jac
}
