//! Uniform lattice over the unit cube with node classification.
//!
//! Nodes are numbered `(i * n + j) * n + k` with `i`, `j`, `k` the x, y and z
//! indices. Every node is exactly one of interior (an unknown), boundary band
//! (carries Dirichlet data so wide stencils never leave the data region) or
//! exterior (outside a non-box domain, carries the extended Dirichlet data).

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Ball {
    pub fn contains_strictly(&self, p: [f64; 3]) -> bool {
        let d2: f64 = (0..3).map(|a| (p[a] - self.center[a]).powi(2)).sum();
        d2 < self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// The whole cube `[0, 1]^3`.
    Cube,
    /// Union of open balls, each contained in the cube.
    Balls(Vec<Ball>),
}

impl Domain {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Domain::Cube => p.iter().all(|&c| (0.0..=1.0).contains(&c)),
            Domain::Balls(balls) => balls.iter().any(|b| b.contains_strictly(p)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    Band,
    Exterior,
}

#[derive(Clone, Debug)]
pub struct Grid3 {
    n: usize,
    h: f64,
    domain: Domain,
    band_width: usize,
    class: Vec<NodeClass>,
    interior: Vec<usize>,
    unknown: Vec<u32>,
}

const NO_UNKNOWN: u32 = u32::MAX;

impl Grid3 {
    pub fn build(n: usize, domain: Domain, band_width: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::GridTooSmall(n));
        }
        if band_width == 0 || 2 * band_width >= n {
            return Err(Error::BandTooWide { n, band_width });
        }
        if let Domain::Balls(balls) = &domain {
            if balls.is_empty() {
                return Err(Error::InvalidDomain("empty ball list".into()));
            }
            for b in balls {
                let inside = b.radius > 0.0
                    && b.center
                        .iter()
                        .all(|&c| c - b.radius >= 0.0 && c + b.radius <= 1.0);
                if !inside {
                    return Err(Error::InvalidDomain(format!(
                        "ball {b:?} is not contained in the unit cube"
                    )));
                }
            }
        }

        let h = 1.0 / (n - 1) as f64;
        let total = n * n * n;
        let mut class = Vec::with_capacity(total);
        let (lo, hi) = (band_width, n - 1 - band_width);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let in_lattice_core = [i, j, k].iter().all(|&c| c >= lo && c <= hi);
                    let c = match &domain {
                        Domain::Cube => {
                            if in_lattice_core {
                                NodeClass::Interior
                            } else {
                                NodeClass::Band
                            }
                        }
                        Domain::Balls(_) => {
                            let p = [i as f64 * h, j as f64 * h, k as f64 * h];
                            if !domain.contains(p) {
                                NodeClass::Exterior
                            } else if in_lattice_core {
                                NodeClass::Interior
                            } else {
                                NodeClass::Band
                            }
                        }
                    };
                    class.push(c);
                }
            }
        }

        let mut interior = Vec::new();
        let mut unknown = vec![NO_UNKNOWN; total];
        for (idx, c) in class.iter().enumerate() {
            if *c == NodeClass::Interior {
                unknown[idx] = interior.len() as u32;
                interior.push(idx);
            }
        }
        if interior.is_empty() {
            return Err(Error::InvalidDomain("no interior nodes".into()));
        }

        Ok(Self {
            n,
            h,
            domain,
            band_width,
            class,
            interior,
            unknown,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn band_width(&self) -> usize {
        self.band_width
    }

    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn ijk(&self, node: usize) -> [usize; 3] {
        let k = node % self.n;
        let j = (node / self.n) % self.n;
        let i = node / (self.n * self.n);
        [i, j, k]
    }

    pub fn point(&self, node: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(node);
        [i as f64 * self.h, j as f64 * self.h, k as f64 * self.h]
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.class[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.class[node] == NodeClass::Interior
    }

    /// Interior nodes in ascending node order; position in this list is the
    /// unknown index used by the sparse operators.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn num_unknowns(&self) -> usize {
        self.interior.len()
    }

    #[inline]
    pub fn unknown_index(&self, node: usize) -> Option<usize> {
        match self.unknown[node] {
            NO_UNKNOWN => None,
            u => Some(u as usize),
        }
    }

    /// Node at `node + offset`, if it lies in the lattice.
    #[inline]
    pub fn offset(&self, node: usize, offset: [i32; 3]) -> Option<usize> {
        let ijk = self.ijk(node);
        let n = self.n as i64;
        let mut out = [0usize; 3];
        for a in 0..3 {
            let c = ijk[a] as i64 + offset[a] as i64;
            if c < 0 || c >= n {
                return None;
            }
            out[a] = c as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    /// Signed linear stride of a lattice offset; only meaningful when the
    /// target is known to be inside the lattice.
    #[inline]
    pub fn stride(&self, offset: [i32; 3]) -> isize {
        let n = self.n as isize;
        (offset[0] as isize * n + offset[1] as isize) * n + offset[2] as isize
    }

    /// Per-axis distance from `node` to the lattice edge.
    #[inline]
    pub fn reach(&self, node: usize) -> [usize; 3] {
        let ijk = self.ijk(node);
        ijk.map(|c| c.min(self.n - 1 - c))
    }

    pub fn counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for c in &self.class {
            match c {
                NodeClass::Interior => counts.interior += 1,
                NodeClass::Band => counts.band += 1,
                NodeClass::Exterior => counts.exterior += 1,
            }
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub interior: usize,
    pub band: usize,
    pub exterior: usize,
}

/// Nodal values on a [`Grid3`].
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid3>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid3>) -> Self {
        let len = grid.len();
        Self {
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn constant(grid: Arc<Grid3>, value: f64) -> Self {
        let len = grid.len();
        Self {
            grid,
            values: vec![value; len],
        }
    }

    pub fn from_fn(grid: Arc<Grid3>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|node| f(grid.point(node))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Arc<Grid3>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field length does not match grid");
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    #[inline]
    pub fn set(&mut self, node: usize, value: f64) {
        self.values[node] = value;
    }

    /// Values at the interior nodes, in unknown order.
    pub fn interior_values(&self) -> Vec<f64> {
        self.grid
            .interior_nodes()
            .iter()
            .map(|&p| self.values[p])
            .collect()
    }

    pub fn set_interior_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.grid.num_unknowns());
        for (&p, &v) in self.grid.interior_nodes().iter().zip(values) {
            self.values[p] = v;
        }
    }

    /// Overwrites every band and exterior value with `g`; interior values are
    /// left untouched.
    pub fn apply_boundary(&mut self, g: &ScalarField) {
        self.assert_same_grid(g);
        for (node, v) in self.values.iter_mut().enumerate() {
            if !self.grid.is_interior(node) {
                *v = g.values[node];
            }
        }
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || {
            let (a, b) = (&*self.grid, &*other.grid);
            a.n == b.n && a.band_width == b.band_width && a.domain == b.domain
        }
    }

    fn assert_same_grid(&self, other: &ScalarField) {
        assert!(self.same_grid(other), "fields live on different grids");
    }

    /// Largest interior value of `|self - other|`.
    pub fn max_norm_error(&self, other: &ScalarField) -> f64 {
        max_norm_error(self, other)
    }

    /// Writes `i,j,k,value` rows for every node.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "k", "value"])?;
        for (node, v) in self.values.iter().enumerate() {
            let [i, j, k] = self.grid.ijk(node);
            w.write_record([
                i.to_string(),
                j.to_string(),
                k.to_string(),
                format!("{v:e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Flat little-endian dump: `n` as u64, then `n^3` f64 values in node order.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(&(self.grid.n as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary(grid: Arc<Grid3>, path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, "bad field file");
        if bytes.len() < 8 {
            return Err(bad().into());
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        if n != grid.n() || bytes.len() != 8 + 8 * grid.len() {
            return Err(bad().into());
        }
        let values = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { grid, values })
    }
}

/// Max over interior nodes of `|a - b|`.
pub fn max_norm_error(a: &ScalarField, b: &ScalarField) -> f64 {
    a.assert_same_grid(b);
    a.grid
        .interior_nodes()
        .iter()
        .map(|&p| (a.values[p] - b.values[p]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_balls() -> Domain {
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

    #[test]
    fn box_interior_counts() {
        let g = Grid3::build(15, Domain::Cube, 1).unwrap();
        assert_eq!(g.counts().interior, 13 * 13 * 13);
        let g = Grid3::build(15, Domain::Cube, 2).unwrap();
        assert_eq!(g.counts().interior, 11 * 11 * 11);
        assert_eq!(g.counts().exterior, 0);
    }

    #[test]
    fn box_band_rule() {
        let n = 12;
        let w = 3;
        let g = Grid3::build(n, Domain::Cube, w).unwrap();
        for node in 0..g.len() {
            let [i, j, k] = g.ijk(node);
            let lo = i.min(j).min(k);
            let hi = i.max(j).max(k);
            let band = lo < w || hi > n - 1 - w;
            assert_eq!(g.class(node) == NodeClass::Band, band);
        }
    }

    #[test]
    fn two_ball_interior_matches_point_test() {
        let n = 30;
        let g = Grid3::build(n, two_balls(), 1).unwrap();
        let h = 1.0 / (n - 1) as f64;
        let inside = |x: f64, y: f64, z: f64| {
            (x - 0.35).powi(2) + (y - 0.35).powi(2) + (z - 0.5).powi(2) < 0.09
                || (x - 0.65).powi(2) + (y - 0.65).powi(2) + (z - 0.5).powi(2) < 0.09
        };
        let mut brute = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if inside(i as f64 * h, j as f64 * h, k as f64 * h) {
                        brute += 1;
                    }
                }
            }
        }
        let c = g.counts();
        assert_eq!(c.interior, brute);
        assert_eq!(c.band, 0);
        assert_eq!(c.interior + c.band + c.exterior, n * n * n);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            Grid3::build(2, Domain::Cube, 1),
            Err(Error::GridTooSmall(2))
        ));
        assert!(matches!(
            Grid3::build(10, Domain::Cube, 5),
            Err(Error::BandTooWide { .. })
        ));
        assert!(Grid3::build(10, Domain::Cube, 0).is_err());
        let outside = Domain::Balls(vec![Ball {
            center: [0.1, 0.5, 0.5],
            radius: 0.3,
        }]);
        assert!(matches!(
            Grid3::build(10, outside, 1),
            Err(Error::InvalidDomain(_))
        ));
    }

    #[test]
    fn classification_is_deterministic() {
        let a = Grid3::build(21, two_balls(), 2).unwrap();
        let b = Grid3::build(21, two_balls(), 2).unwrap();
        assert_eq!(a.class, b.class);
        assert_eq!(a.interior, b.interior);
    }

    #[test]
    fn offsets_and_strides_agree() {
        let g = Grid3::build(7, Domain::Cube, 1).unwrap();
        let p = g.index(3, 3, 3);
        for off in [[1, 0, 0], [0, -1, 2], [-2, 1, -1]] {
            let q = g.offset(p, off).unwrap();
            assert_eq!(q as isize - p as isize, g.stride(off));
        }
        assert_eq!(g.offset(g.index(0, 3, 3), [-1, 0, 0]), None);
        assert_eq!(g.reach(g.index(1, 5, 3)), [1, 1, 3]);
    }

    #[test]
    fn apply_boundary_sets_band_only() {
        let grid = Arc::new(Grid3::build(9, Domain::Cube, 1).unwrap());
        let exact = |p: [f64; 3]| p[0] * p[0] - 0.5 * p[1] * p[1] + 2.0 * p[2] * p[2];
        let g = ScalarField::from_fn(grid.clone(), exact);
        let mut u = ScalarField::constant(grid.clone(), 7.0);
        u.apply_boundary(&g);
        for node in 0..grid.len() {
            if grid.is_interior(node) {
                assert_eq!(u.get(node), 7.0);
            } else {
                assert_eq!(u.get(node), exact(grid.point(node)));
            }
        }

        let zero = ScalarField::zeros(grid.clone());
        u.apply_boundary(&zero);
        assert!((0..grid.len())
            .filter(|&p| !grid.is_interior(p))
            .all(|p| u.get(p) == 0.0));
    }

    #[test]
    fn apply_boundary_on_two_balls() {
        let grid = Arc::new(Grid3::build(20, two_balls(), 1).unwrap());
        let mut u = ScalarField::constant(grid.clone(), -1.0);
        u.apply_boundary(&ScalarField::zeros(grid.clone()));
        for node in 0..grid.len() {
            let expect = if grid.is_interior(node) { -1.0 } else { 0.0 };
            assert_eq!(u.get(node), expect);
        }
    }

    #[test]
    fn max_norm_error_cases() {
        let grid = Arc::new(Grid3::build(8, Domain::Cube, 1).unwrap());
        let a = ScalarField::from_fn(grid.clone(), |p| p[0] + p[1] * p[2]);
        assert_eq!(max_norm_error(&a, &a), 0.0);

        let mut b = a.clone();
        for &p in grid.interior_nodes() {
            b.values_mut()[p] += 0.25;
        }
        // band differences must not count
        b.values_mut()[0] += 100.0;
        assert!((max_norm_error(&a, &b) - 0.25).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r1 = ScalarField::from_values(
            grid.clone(),
            (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let r2 = ScalarField::from_values(
            grid.clone(),
            (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let mut expect = 0.0f64;
        for i in 1..7 {
            for j in 1..7 {
                for k in 1..7 {
                    let p = grid.index(i, j, k);
                    expect = expect.max((r1.get(p) - r2.get(p)).abs());
                }
            }
        }
        assert_eq!(max_norm_error(&r1, &r2), expect);
    }

    #[test]
    fn binary_round_trip() {
        let grid = Arc::new(Grid3::build(5, Domain::Cube, 1).unwrap());
        let a = ScalarField::from_fn(grid.clone(), |p| p[0] - 3.0 * p[2]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.bin");
        a.write_binary(&path).unwrap();
        let b = ScalarField::read_binary(grid.clone(), &path).unwrap();
        assert_eq!(a.values(), b.values());
        a.write_csv(dir.path().join("u.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 125);
    }

    proptest::proptest! {
        #[test]
        fn index_and_offsets_agree(n in 3usize..12, i in 0usize..12, j in 0usize..12, k in 0usize..12,
                                   off in proptest::array::uniform3(-3i32..=3)) {
            let (i, j, k) = (i % n, j % n, k % n);
            let grid = Grid3::build(n, Domain::Cube, 1).unwrap();
            let node = grid.index(i, j, k);
            proptest::prop_assert_eq!(grid.ijk(node), [i, j, k]);
            let target = [i as i32 + off[0], j as i32 + off[1], k as i32 + off[2]];
            let inside = target.iter().all(|&c| c >= 0 && c < n as i32);
            match grid.offset(node, off) {
                Some(q) => {
                    proptest::prop_assert!(inside);
                    proptest::prop_assert_eq!(grid.ijk(q), target.map(|c| c as usize));
                    proptest::prop_assert_eq!(q as isize - node as isize, grid.stride(off));
                }
                None => proptest::prop_assert!(!inside),
            }
        }
    }
}
