//! Lattice directions for the wide stencil and their orthogonal triplets.
//!
//! The direction set for width `w` is every primitive (gcd 1) nonzero integer
//! vector with max-norm at most `w`. A direction and its negation give the
//! same second difference, so triplets are built from one representative per
//! line: the vector whose first nonzero component is positive.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_STENCIL_WIDTH: usize = 6;

pub type Direction = [i32; 3];

#[derive(Clone, Debug)]
pub struct DirectionSet {
    n_theta: usize,
    /// Every primitive direction, both signs, ordered by shell then lexicographically.
    directions: Vec<Direction>,
    /// One representative per line through the origin.
    lines: Vec<Direction>,
    /// Index triples into `lines`, pairwise orthogonal, each with `i < j < k`.
    triplets: Vec<[usize; 3]>,
}

fn gcd(a: i32, b: i32) -> i32 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn is_primitive(v: Direction) -> bool {
    v != [0, 0, 0] && gcd(gcd(v[0], v[1]), v[2]) == 1
}

pub fn max_norm(v: Direction) -> i32 {
    v.iter().map(|c| c.abs()).max().unwrap_or(0)
}

pub fn norm_sq(v: Direction) -> i32 {
    v.iter().map(|c| c * c).sum()
}

pub fn dot(a: Direction, b: Direction) -> i32 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn is_canonical(v: Direction) -> bool {
    v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

/// Builds the direction set and its deduplicated orthogonal triplets.
pub fn generate_directions(n_theta: usize) -> Result<DirectionSet> {
    if !(1..=MAX_STENCIL_WIDTH).contains(&n_theta) {
        return Err(Error::StencilWidth(n_theta));
    }
    let w = n_theta as i32;
    let mut directions = Vec::new();
    for x in -w..=w {
        for y in -w..=w {
            for z in -w..=w {
                let v = [x, y, z];
                if is_primitive(v) {
                    directions.push(v);
                }
            }
        }
    }
    directions.sort_by_key(|&v| (max_norm(v), v));

    let lines: Vec<Direction> = directions.iter().copied().filter(|&v| is_canonical(v)).collect();

    let mut triplets = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if dot(lines[i], lines[j]) != 0 {
                continue;
            }
            for k in j + 1..lines.len() {
                if dot(lines[i], lines[k]) == 0 && dot(lines[j], lines[k]) == 0 {
                    triplets.push([i, j, k]);
                }
            }
        }
    }

    Ok(DirectionSet {
        n_theta,
        directions,
        lines,
        triplets,
    })
}

impl DirectionSet {
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    /// All directions, both signs.
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// Number of directions, both signs; the stencil has one more point.
    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn lines(&self) -> &[Direction] {
        &self.lines
    }

    pub fn triplets(&self) -> &[[usize; 3]] {
        &self.triplets
    }

    pub fn triplet_vectors(&self, t: usize) -> [Direction; 3] {
        self.triplets[t].map(|i| self.lines[i])
    }

    /// Writes `kind,index,a,b,c` rows: one `direction` row per vector, then one
    /// `triplet` row per triplet holding indices into the line list.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", "index", "a", "b", "c"])?;
        for (i, v) in self.directions.iter().enumerate() {
            w.write_record(["direction".to_string(), i.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string()])?;
        }
        for (i, v) in self.lines.iter().enumerate() {
            w.write_record(["line".to_string(), i.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string()])?;
        }
        for (i, t) in self.triplets.iter().enumerate() {
            w.write_record(["triplet".to_string(), i.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Monte Carlo lower estimate of the directional resolution: the worst
    /// angular mismatch, over `samples` random orthonormal frames, between the
    /// frame and its best-matching lattice triplet. Radians.
    pub fn estimate_resolution(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units: Vec<[f64; 3]> = self
            .lines
            .iter()
            .map(|v| {
                let n = (norm_sq(*v) as f64).sqrt();
                v.map(|c| c as f64 / n)
            })
            .collect();
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let frame = random_frame(&mut rng);
            let mut best = f64::INFINITY;
            for t in &self.triplets {
                for perm in PERMS {
                    let mut angle = 0.0f64;
                    for (a, &slot) in perm.iter().enumerate() {
                        let u = units[t[slot]];
                        let c = (frame[a][0] * u[0] + frame[a][1] * u[1] + frame[a][2] * u[2]).abs();
                        angle = angle.max(c.min(1.0).acos());
                    }
                    best = best.min(angle);
                }
            }
            worst = worst.max(best);
        }
        worst
    }
}

fn random_frame(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let mut gauss = || -> [f64; 3] {
        // Box-Muller; only the direction matters
        let mut v = [0.0; 3];
        for c in &mut v {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            *c = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
        v
    };
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|c| c / n)
    };
    let a = normalize(gauss());
    let mut b = gauss();
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    for i in 0..3 {
        b[i] -= d * a[i];
    }
    let b = normalize(b);
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    [a, b, c]
}
