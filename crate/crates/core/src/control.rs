//! Empirical relaxed controls on a uniform time grid.
//!
//! Row `k` of the weight matrix is the probability vector over atoms used on
//! `[t_k, t_{k+1})`. Rows are kept on the simplex: after every mutation
//! negative entries are clamped to zero and the row is rescaled to sum to one.

use std::sync::Arc;

use crate::sampling::AtomSet;
use crate::{Error, Result};

/// Rows are rejected if they sum outside `1 ± ROW_SUM_TOL` before
/// renormalization.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Entries above `-NEG_TOL` count as non-negative.
pub const NEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if intervals == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one interval".into()));
        }
        Ok(Self { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    /// `t_k`; the last node is exactly the horizon.
    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.intervals {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Interval containing `t`: `min(floor(t / dt), K − 1)`.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} is outside [0, {}]",
                self.horizon
            )));
        }
        Ok(((t / self.dt()).floor() as usize).min(self.intervals - 1))
    }
}

/// Weighted sum of Dirac measures at the atoms, one weight row per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedControl {
    grid: TimeGrid,
    atoms: Arc<AtomSet>,
    weights: Vec<f64>,
}

impl RelaxedControl {
    /// Every weight `1/N`.
    pub fn new_uniform(grid: TimeGrid, atoms: Arc<AtomSet>) -> Self {
        let n = atoms.len();
        Self {
            grid,
            atoms,
            weights: vec![1.0 / n as f64; grid.intervals() * n],
        }
    }

    /// Builds a control from a row-major `K × N` matrix, normalizing rows.
    pub fn from_weights(grid: TimeGrid, atoms: Arc<AtomSet>, weights: Vec<f64>) -> Result<Self> {
        let expected = grid.intervals() * atoms.len();
        if weights.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "weight matrix has {} entries, expected {} x {}",
                weights.len(),
                grid.intervals(),
                atoms.len()
            )));
        }
        let mut rc = Self { grid, atoms, weights };
        for k in 0..grid.intervals() {
            let row = rc.row(k);
            if row.iter().any(|w| !w.is_finite() || *w < -NEG_TOL) {
                return Err(Error::InvalidArgument(format!("weight row {k} has negative or non-finite entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("weight row {k} sums to {sum}")));
            }
        }
        rc.normalize()?;
        Ok(rc)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn atoms(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn atoms_arc(&self) -> &Arc<AtomSet> {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.atoms.len();
        &self.weights[k * n..(k + 1) * n]
    }

    /// Weight vector in force at time `t` (right-continuous, last interval
    /// closed at `T`).
    pub fn weights_at(&self, t: f64) -> Result<&[f64]> {
        Ok(self.row(self.grid.interval_of(t)?))
    }

    fn normalize(&mut self) -> Result<()> {
        let n = self.atoms.len();
        for (k, row) in self.weights.chunks_exact_mut(n).enumerate() {
            row.iter_mut().for_each(|w| *w = w.max(0.0));
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0 && sum.is_finite()) {
                return Err(Error::InvalidArgument(format!("weight row {k} has no positive mass")));
            }
            if sum != 1.0 {
                row.iter_mut().for_each(|w| *w /= sum);
            }
        }
        Ok(())
    }

    /// `W + λ δW`, projected back onto the simplex row by row.
    pub fn apply_step(&self, d: &DescentDirection, lambda: f64) -> Result<Self> {
        if d.delta_weights.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "direction has {} entries, control has {}",
                d.delta_weights.len(),
                self.weights.len()
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("step size {lambda} outside [0, 1]")));
        }
        let mut next = self.clone();
        if lambda == 0.0 {
            return Ok(next);
        }
        for (w, dw) in next.weights.iter_mut().zip(&d.delta_weights) {
            *w += lambda * dw;
        }
        next.normalize()?;
        Ok(next)
    }
}

/// Signed weight perturbation `δW` with its optimality-function values.
///
/// Rows of `δW` sum to zero and `W + δW` is non-negative, so stepping along it
/// with `λ ∈ [0, 1]` stays on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentDirection {
    pub delta_weights: Vec<f64>,
    /// Optimality function of the unregularized problem; `≤ 0`.
    pub theta_pure: f64,
    /// Directional derivative of the cost along `delta_weights`; equals
    /// `theta_pure` when no ℓ1 penalty is used.
    pub theta_reg: f64,
    pub gamma: f64,
}

impl DescentDirection {
    pub fn zero(rc: &RelaxedControl) -> Self {
        Self {
            delta_weights: vec![0.0; rc.weights.len()],
            theta_pure: 0.0,
            theta_reg: 0.0,
            gamma: 0.0,
        }
    }

    /// Slope used by the sufficient-decrease test.
    pub fn slope(&self) -> f64 {
        self.theta_reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ControlBox;
    use crate::sampling::sample_grid;
    use proptest::prelude::*;

    fn atoms(n: usize) -> Arc<AtomSet> {
        Arc::new(sample_grid(&ControlBox::cube(1, 0.0, 1.0).unwrap(), &[n]).unwrap())
    }

    #[test]
    fn uniform_rows() {
        let rc = RelaxedControl::new_uniform(TimeGrid::new(1.0, 3).unwrap(), atoms(1));
        assert!(rc.weights().iter().all(|w| *w == 1.0));
        let rc = RelaxedControl::new_uniform(TimeGrid::new(1.0, 2).unwrap(), atoms(4));
        assert_eq!(rc.weights(), &[0.25; 8]);
        let rc = RelaxedControl::new_uniform(TimeGrid::new(1.0, 5).unwrap(), atoms(7));
        for k in 0..5 {
            assert!((rc.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn full_transfer_step() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let rc = RelaxedControl::from_weights(grid, atoms(2), vec![0.3, 0.7]).unwrap();
        let d = DescentDirection {
            delta_weights: vec![-0.3, 0.3],
            theta_pure: -1.0,
            theta_reg: -1.0,
            gamma: 0.0,
        };
        let next = rc.apply_step(&d, 1.0).unwrap();
        assert_eq!(next.weights(), &[0.0, 1.0]);
        assert_eq!(rc.apply_step(&d, 0.0).unwrap(), rc);
        assert!(rc.apply_step(&d, 1.5).is_err());
        let bad = DescentDirection {
            delta_weights: vec![0.0; 3],
            ..d
        };
        assert!(matches!(rc.apply_step(&bad, 0.5), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn weights_at_conventions() {
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let w: Vec<f64> = (0..4).flat_map(|k| if k % 2 == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
        let rc = RelaxedControl::from_weights(grid, atoms(2), w).unwrap();
        assert_eq!(grid.interval_of(0.0).unwrap(), 0);
        assert_eq!(grid.interval_of(2.0).unwrap(), 3);
        assert_eq!(grid.interval_of(0.5).unwrap(), 1);
        assert_eq!(grid.interval_of(1.0).unwrap(), 2);
        assert_eq!(rc.weights_at(0.5).unwrap(), &[0.0, 1.0]);
        assert!(rc.weights_at(-0.1).is_err());
        assert!(rc.weights_at(2.1).is_err());
    }

    #[test]
    fn from_weights_validates() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        assert!(RelaxedControl::from_weights(grid, atoms(2), vec![0.5, 0.6]).is_err());
        assert!(RelaxedControl::from_weights(grid, atoms(2), vec![-0.1, 1.1]).is_err());
        assert!(RelaxedControl::from_weights(grid, atoms(2), vec![1.0]).is_err());
    }

    fn simplex_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|mut v| {
            v[0] += 1e-3;
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|w| *w /= s);
            v
        })
    }

    fn control_and_direction() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, usize)> {
        (1usize..4, 1usize..7).prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(simplex_row(n), k),
                prop::collection::vec(simplex_row(n), k),
                Just(k),
                Just(n),
            )
                .prop_map(|(w, v, k, n)| {
                    // δW = V − W for a target V on the simplex is a valid direction.
                    let w: Vec<f64> = w.concat();
                    let v: Vec<f64> = v.concat();
                    let d: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
                    (w, d, k, n)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn steps_stay_on_simplex((w, d, k, n) in control_and_direction(), lambda in 0.0f64..=1.0) {
            let grid = TimeGrid::new(1.0, k).unwrap();
            let rc = RelaxedControl::from_weights(grid, atoms(n), w).unwrap();
            let dir = DescentDirection { delta_weights: d, theta_pure: 0.0, theta_reg: 0.0, gamma: 0.0 };
            for lam in [lambda, 0.37] {
                let next = rc.apply_step(&dir, lam).unwrap();
                for row in next.weights().chunks(n) {
                    prop_assert!(row.iter().all(|w| *w >= 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
                let again = next.apply_step(&dir, 0.0).unwrap();
                prop_assert_eq!(again, next);
            }
        }
    }
}
