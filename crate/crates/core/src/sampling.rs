//! Control atoms drawn from the box `U`, and sampled vector-field sets.
//!
//! Monte Carlo atoms come from ChaCha8 seeded with a `u64`
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`). Each coordinate is
//! `lower + (upper − lower) · r` with `r` the generator's standard `f64` in
//! `[0, 1)`, drawn atom by atom, axis by axis. The stream is fixed by the
//! ChaCha8 algorithm so the same seed gives the same atoms on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{ControlBox, Problem};
use crate::{Error, Result};

/// Sampled control values `u_1 .. u_N`, stored flat with stride `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    m: usize,
    coords: Vec<f64>,
    seed: Option<u64>,
}

impl AtomSet {
    pub fn from_atoms(atoms: &[Vec<f64>]) -> Result<Self> {
        let m = atoms.first().map(Vec::len).unwrap_or(0);
        if atoms.is_empty() || m == 0 {
            return Err(Error::InvalidArgument("an atom set needs at least one non-empty atom".into()));
        }
        if atoms.iter().any(|a| a.len() != m) {
            return Err(Error::ShapeMismatch("atoms have differing dimensions".into()));
        }
        Ok(Self {
            m,
            coords: atoms.concat(),
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    #[inline]
    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.m..(i + 1) * self.m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.m)
    }
}

/// `count` i.i.d. uniform draws from `bx`.
pub fn sample_uniform(bx: &ControlBox, count: usize, seed: u64) -> Result<AtomSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = bx.dim();
    let mut coords = Vec::with_capacity(count * m);
    for _ in 0..count {
        for (lo, hi) in bx.lower().iter().zip(bx.upper()) {
            let r: f64 = rng.gen();
            coords.push(lo + (hi - lo) * r);
        }
    }
    Ok(AtomSet {
        m,
        coords,
        seed: Some(seed),
    })
}

/// Tensor grid with `per_axis[j]` evenly spaced points on axis `j`,
/// endpoints included; a single point sits at the axis midpoint. Atoms are
/// in lexicographic order (first axis varies slowest).
pub fn sample_grid(bx: &ControlBox, per_axis: &[usize]) -> Result<AtomSet> {
    if per_axis.is_empty() {
        return Err(Error::InvalidArgument("per_axis must not be empty".into()));
    }
    if per_axis.len() != bx.dim() {
        return Err(Error::ShapeMismatch(format!(
            "per_axis has {} entries for a {}-dimensional box",
            per_axis.len(),
            bx.dim()
        )));
    }
    if per_axis.contains(&0) {
        return Err(Error::InvalidArgument("every axis needs at least one grid point".into()));
    }
    let axes: Vec<Vec<f64>> = per_axis
        .iter()
        .zip(bx.lower().iter().zip(bx.upper()))
        .map(|(&k, (&lo, &hi))| {
            if k == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..k)
                    .map(|i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
                    .collect()
            }
        })
        .collect();
    let total: usize = per_axis.iter().product();
    let m = bx.dim();
    let mut coords = Vec::with_capacity(total * m);
    let mut index = vec![0usize; m];
    for _ in 0..total {
        coords.extend(index.iter().zip(&axes).map(|(&i, axis)| axis[i]));
        for j in (0..m).rev() {
            index[j] += 1;
            if index[j] < per_axis[j] {
                break;
            }
            index[j] = 0;
        }
    }
    Ok(AtomSet { m, coords, seed: None })
}

/// Sampled vector-field set at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullData {
    pub points: Vec<Vec<f64>>,
    /// Counter-clockwise hull vertex indices into `points`, only for `n = 2`.
    pub hull_indices: Option<Vec<usize>>,
}

/// Evaluates `f(t, x, u_i)` for every atom; for planar states also returns
/// the convex hull of the images.
pub fn hull_points(p: &Problem, t: f64, x: &[f64], atoms: &AtomSet) -> Result<HullData> {
    let points = atoms
        .iter()
        .map(|u| p.eval_field(t, x, u))
        .collect::<Result<Vec<_>>>()?;
    let hull_indices = (p.state_dim() == 2).then(|| convex_hull_2d(&points));
    Ok(HullData { points, hull_indices })
}

/// Strict left turn `o → a → b`; turns within rounding of collinear count
/// as straight.
fn turns_left(o: &[f64], a: &[f64], b: &[f64]) -> bool {
    let (ax, ay, bx, by) = (a[0] - o[0], a[1] - o[1], b[0] - o[0], b[1] - o[1]);
    ax * by - ay * bx > 1e-12 * ax.hypot(ay) * bx.hypot(by)
}

/// Andrew's monotone chain. Returns vertex indices counter-clockwise starting
/// from the lowest-x (then lowest-y) point; collinear boundary points are
/// dropped.
pub fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    order.dedup_by(|a, b| points[*a][..2] == points[*b][..2]);
    if order.len() <= 2 {
        return order;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for &i in &order {
        while hull.len() >= 2 && !turns_left(&points[hull[hull.len() - 2]], &points[hull[hull.len() - 1]], &points[i]) {
            hull.pop();
        }
        hull.push(i);
    }
    let lower_len = hull.len() + 1;
    for &i in order.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && !turns_left(&points[hull[hull.len() - 2]], &points[hull[hull.len() - 1]], &points[i])
        {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}
