//! Sampled Hamiltonian, the optimality function and its descent direction.
//!
//! `H[k][i]` is the Hamiltonian of atom `i` averaged over interval `k`:
//! the RK4 stage quadrature of `Λ(t)ᵀ f(t, x(t), u_i)` with the stage
//! adjoints from [`backward_costate`]. With that choice
//! `Σ_k dt Σ_i δW[k][i] H[k][i]` is exactly the derivative of the discretized
//! terminal cost along `δW`.
//!
//! The optimality function minimizes that derivative over directions that
//! keep every row on the simplex. The problem decouples per interval into a
//! tiny LP whose optimum moves mass to the row's Hamiltonian minimizer.

use crate::control::{DescentDirection, RelaxedControl, TimeGrid};
use crate::integrate::{backward_costate_input, forward_input, Costate, Trajectory};
use crate::problem::Problem;
use crate::sampling::AtomSet;
use crate::synthesis::InputSchedule;
use crate::{Error, Result};

/// Row-major `K × N` table of per-interval atom Hamiltonians.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTable {
    intervals: usize,
    n_atoms: usize,
    values: Vec<f64>,
}

impl HamiltonianTable {
    pub fn from_values(intervals: usize, n_atoms: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != intervals * n_atoms {
            return Err(Error::ShapeMismatch(format!(
                "{} table entries for {intervals} x {n_atoms}",
                values.len()
            )));
        }
        Ok(Self {
            intervals,
            n_atoms,
            values,
        })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_atoms..(k + 1) * self.n_atoms]
    }
}

/// Builds the Hamiltonian table for `rc` from its trajectory and costate.
pub fn hamiltonian_table(p: &Problem, rc: &RelaxedControl, traj: &Trajectory, costate: &Costate) -> Result<HamiltonianTable> {
    let grid = rc.grid();
    if traj.grid() != grid || costate.grid() != grid || costate.stage_weights.len() != traj.stages.len() {
        return Err(Error::ShapeMismatch("trajectory, costate and control disagree".into()));
    }
    let n = p.state_dim();
    let atoms = rc.atoms();
    let n_atoms = atoms.len();
    let mut values = vec![0.0; grid.intervals() * n_atoms];
    let mut f = vec![0.0; n];
    for (s, step) in traj.plan.iter().enumerate() {
        let times = step.stage_times();
        let row = &mut values[step.interval * n_atoms..(step.interval + 1) * n_atoms];
        for (j, &t) in times.iter().enumerate() {
            let x = traj.stage(s, j);
            let g = costate.stage_weight(s, j);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            for (i, h) in row.iter_mut().enumerate() {
                p.field_into(t, x, atoms.atom(i), &mut f);
                *h += g.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    for k in 0..grid.intervals() {
        let width = grid.node(k + 1) - grid.node(k);
        values[k * n_atoms..(k + 1) * n_atoms].iter_mut().for_each(|h| *h /= width);
    }
    if let Some(pos) = values.iter().position(|h| !h.is_finite()) {
        let k = pos / n_atoms;
        return Err(Error::NonFinite {
            what: "Hamiltonian",
            t: grid.node(k),
            x: traj.state(k).to_vec(),
            u: atoms.atom(pos % n_atoms).to_vec(),
        });
    }
    Ok(HamiltonianTable {
        intervals: grid.intervals(),
        n_atoms,
        values,
    })
}

/// Lowest-index minimizer of a row.
pub fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = i;
        }
    }
    best
}

/// Optimal per-interval direction for `min δwᵀh + γ‖δw‖₁` over
/// `{δw : w + δw ≥ 0, Σ δw = 0}`, written into `out`. Returns the linear part
/// `δwᵀh`.
///
/// Moving a unit of mass from atom `i` to atom `j` changes the objective by
/// `h_j − h_i + 2γ`, so the optimum sends mass only to the minimizer `i*`,
/// and only from atoms with `h_i − h_{i*} > 2γ`.
pub fn row_direction(h: &[f64], w: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
    let best = argmin(h);
    let threshold = h[best] + 2.0 * gamma;
    let mut moved = 0.0;
    let mut slope = 0.0;
    for i in 0..h.len() {
        out[i] = 0.0;
        if i != best && w[i] > 0.0 && (gamma == 0.0 || h[i] > threshold) {
            out[i] = -w[i];
            moved += w[i];
            slope -= w[i] * h[i];
        }
    }
    out[best] = moved;
    slope + moved * h[best]
}

/// Value of the unregularized per-interval LP: `min_i h_i − wᵀh`.
pub fn row_theta(h: &[f64], w: &[f64]) -> f64 {
    let best = h[argmin(h)];
    // Σ w_i (h_best − h_i) keeps exact zeros for mass already on minimizers.
    w.iter().zip(h).map(|(wi, hi)| wi * (best - hi)).sum()
}

/// Optimality function and descent direction of `rc` given its table.
///
/// With `gamma = 0` the direction is the exact LP minimizer; with
/// `gamma > 0` it is the ℓ1-regularized one, which only moves mass whose
/// Hamiltonian exceeds the minimum by more than `2γ`. `theta_pure` is always
/// the unregularized value.
pub fn theta_and_direction(table: &HamiltonianTable, rc: &RelaxedControl, gamma: f64) -> Result<DescentDirection> {
    if table.intervals != rc.grid().intervals() || table.n_atoms != rc.n_atoms() {
        return Err(Error::ShapeMismatch(format!(
            "table is {} x {}, control is {} x {}",
            table.intervals,
            table.n_atoms,
            rc.grid().intervals(),
            rc.n_atoms()
        )));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be non-negative, got {gamma}")));
    }
    let grid = rc.grid();
    let n = table.n_atoms;
    let mut delta = vec![0.0; table.values.len()];
    let mut theta_pure = 0.0;
    let mut theta_reg = 0.0;
    for k in 0..table.intervals {
        let dt = grid.node(k + 1) - grid.node(k);
        let (h, w) = (table.row(k), rc.row(k));
        theta_pure += dt * row_theta(h, w);
        theta_reg += dt * row_direction(h, w, gamma, &mut delta[k * n..(k + 1) * n]);
    }
    Ok(DescentDirection {
        delta_weights: delta,
        theta_pure,
        theta_reg,
        gamma,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub t: f64,
    /// Atom minimizing the Hamiltonian at `t`, or `None` when the applied
    /// input already does at least as well as every atom.
    pub best_atom: Option<usize>,
    pub best_value: f64,
    pub current_value: f64,
}

impl GapRow {
    pub fn violation(&self) -> f64 {
        self.best_value - self.current_value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// `Σ_k dt (min H − H(u(t_k)))`, never positive.
    pub gap: f64,
    pub rows: Vec<GapRow>,
}

/// Pontryagin gap of a deterministic input at atom resolution.
///
/// The state and costate follow the input exactly; the Hamiltonian
/// `p(t_k)ᵀ f(t_k, x(t_k), ·)` is sampled at the left node of every grid
/// interval and minimized over `atoms` together with the applied value, so a
/// zero gap means no atom improves on the input anywhere on the grid.
pub fn pontryagin_gap(
    p: &Problem,
    schedule: &InputSchedule,
    atoms: &AtomSet,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<GapReport> {
    if atoms.dim() != p.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "atoms have dimension {}, problem has {} inputs",
            atoms.dim(),
            p.input_dim()
        )));
    }
    let traj = forward_input(p, schedule, grid, substeps, p.initial_state())?;
    let costate = backward_costate_input(p, schedule, &traj)?;
    let mut gap = 0.0;
    let mut rows = Vec::with_capacity(grid.intervals());
    for k in 0..grid.intervals() {
        let t = grid.node(k);
        let (x, lam) = (traj.state(k), costate.value(k));
        let ham = |u: &[f64]| -> Result<f64> {
            let f = p.eval_field(t, x, u)?;
            Ok(lam.iter().zip(&f).map(|(a, b)| a * b).sum())
        };
        let current = ham(schedule.atoms().atom(schedule.atom_at(t)))?;
        let mut best = current;
        let mut best_atom = None;
        for (i, u) in atoms.iter().enumerate() {
            let h = ham(u)?;
            if h < best {
                best = h;
                best_atom = Some(i);
            }
        }
        gap += (grid.node(k + 1) - t) * (best - current);
        rows.push(GapRow {
            t,
            best_atom,
            best_value: best,
            current_value: current,
        });
    }
    Ok(GapReport { gap, rows })
}
