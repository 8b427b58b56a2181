//! Deterministic inputs from relaxed controls.
//!
//! The weight rows are first block-averaged over periods of length `Δ`
//! (the Haar projection at that scale), then each period is split into
//! consecutive pulses, one per atom with positive weight, in atom-index
//! order. Pulse widths are `w̄_i · Δ` with exact real switching times.

use std::sync::Arc;

use crate::control::{RelaxedControl, TimeGrid};
use crate::integrate::{forward_input, forward_relaxed};
use crate::problem::Problem;
use crate::sampling::AtomSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub atom: usize,
}

/// Piecewise-constant input taking atom values, partitioning `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSchedule {
    horizon: f64,
    atoms: Arc<AtomSet>,
    segments: Vec<Segment>,
}

impl InputSchedule {
    pub fn new(horizon: f64, atoms: Arc<AtomSet>, segments: Vec<Segment>) -> Result<Self> {
        let s = Self::new_unchecked(horizon, atoms, segments);
        s.validate()?;
        Ok(s)
    }

    /// Skips validation; [`forward_input`] still validates before use.
    pub fn new_unchecked(horizon: f64, atoms: Arc<AtomSet>, segments: Vec<Segment>) -> Self {
        Self {
            horizon,
            atoms,
            segments,
        }
    }

    /// A single atom held over the whole horizon.
    pub fn constant(horizon: f64, atoms: Arc<AtomSet>, atom: usize) -> Result<Self> {
        Self::new(
            horizon,
            atoms,
            vec![Segment {
                t_start: 0.0,
                t_end: horizon,
                atom,
            }],
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn atoms(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12 * self.horizon.max(1.0);
        let Some(first) = self.segments.first() else {
            return Err(Error::Schedule("schedule has no segments".into()));
        };
        if first.t_start.abs() > tol {
            return Err(Error::Schedule(format!("schedule starts at {}, not 0", first.t_start)));
        }
        let last = self.segments[self.segments.len() - 1];
        if (last.t_end - self.horizon).abs() > tol {
            return Err(Error::Schedule(format!(
                "schedule ends at {}, horizon is {}",
                last.t_end, self.horizon
            )));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.t_end > s.t_start) {
                return Err(Error::Schedule(format!("segment {i} has non-positive width")));
            }
            if s.atom >= self.atoms.len() {
                return Err(Error::Schedule(format!("segment {i} refers to missing atom {}", s.atom)));
            }
        }
        for (i, pair) in self.segments.windows(2).enumerate() {
            let gap = pair[1].t_start - pair[0].t_end;
            if gap > tol {
                return Err(Error::Schedule(format!("gap of {gap} after segment {i}")));
            }
            if gap < -tol {
                return Err(Error::Schedule(format!("overlap of {} after segment {i}", -gap)));
            }
        }
        Ok(())
    }

    /// Index of the atom in force at `t` (segments are half-open, the last
    /// one closed at `T`).
    pub fn atom_at(&self, t: f64) -> usize {
        let i = self.segments.partition_point(|s| s.t_end <= t);
        self.segments[i.min(self.segments.len() - 1)].atom
    }

    /// Fraction of `[a, b]` during which each atom is active.
    pub fn time_shares(&self, a: f64, b: f64) -> Vec<f64> {
        let mut shares = vec![0.0; self.atoms.len()];
        for s in &self.segments {
            let overlap = s.t_end.min(b) - s.t_start.max(a);
            if overlap > 0.0 {
                shares[s.atom] += overlap / (b - a);
            }
        }
        shares
    }
}

/// Block-averaged weights, one row per period of length `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredWeights {
    pub period: f64,
    pub n_atoms: usize,
    pub rows: Vec<f64>,
}

impl FilteredWeights {
    pub fn n_periods(&self) -> usize {
        self.rows.len() / self.n_atoms
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.n_atoms..(j + 1) * self.n_atoms]
    }
}

/// How a period of length `delta` lines up with the grid.
enum Alignment {
    /// `delta = r · dt` with `r` dividing `K`.
    Coarse(usize),
    /// `dt = q · delta`; every period lies inside one interval.
    Fine(usize),
}

fn alignment(grid: &TimeGrid, delta: f64) -> Result<Alignment> {
    let whole = |v: f64| {
        let r = v.round();
        (r >= 1.0 && (v - r).abs() <= 1e-9 * v.max(1.0)).then_some(r as usize)
    };
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("period {delta} must be positive")));
    }
    if let Some(r) = whole(delta / grid.dt()) {
        if grid.intervals() % r != 0 {
            return Err(Error::InvalidArgument(format!(
                "period {delta} does not divide the horizon {}",
                grid.horizon()
            )));
        }
        return Ok(Alignment::Coarse(r));
    }
    if let Some(q) = whole(grid.dt() / delta) {
        return Ok(Alignment::Fine(q));
    }
    Err(Error::InvalidArgument(format!(
        "period {delta} is neither a multiple nor an integer fraction of dt = {}",
        grid.dt()
    )))
}

/// Averages weight rows over consecutive periods of length `delta`.
///
/// Periods shorter than `dt` must divide it; each then inherits the row of
/// the interval it lies in.
pub fn haar_filter(rc: &RelaxedControl, delta: f64) -> Result<FilteredWeights> {
    let n = rc.n_atoms();
    let k_total = rc.grid().intervals();
    match alignment(rc.grid(), delta)? {
        Alignment::Coarse(r) => {
            let periods = k_total / r;
            let mut rows = vec![0.0; periods * n];
            for j in 0..periods {
                let out = &mut rows[j * n..(j + 1) * n];
                for k in j * r..(j + 1) * r {
                    for (o, w) in out.iter_mut().zip(rc.row(k)) {
                        *o += w;
                    }
                }
                out.iter_mut().for_each(|o| *o /= r as f64);
            }
            Ok(FilteredWeights {
                period: r as f64 * rc.grid().dt(),
                n_atoms: n,
                rows,
            })
        }
        Alignment::Fine(q) => Ok(FilteredWeights {
            period: rc.grid().dt() / q as f64,
            n_atoms: n,
            rows: (0..k_total * q).flat_map(|j| rc.row(j / q).iter().copied()).collect(),
        }),
    }
}

/// Pulse-width modulation of filtered weights into a bang-bang schedule.
pub fn pwm(filtered: &FilteredWeights, atoms: Arc<AtomSet>, delta: f64) -> Result<InputSchedule> {
    if atoms.len() != filtered.n_atoms {
        return Err(Error::ShapeMismatch(format!(
            "{} atoms for {} weight columns",
            atoms.len(),
            filtered.n_atoms
        )));
    }
    let periods = filtered.n_periods();
    let horizon = periods as f64 * delta;
    let mut segments = Vec::new();
    for j in 0..periods {
        let start = j as f64 * delta;
        let end = if j + 1 == periods { horizon } else { (j + 1) as f64 * delta };
        let row = filtered.row(j);
        let last_active = row.iter().rposition(|w| *w > 0.0);
        let mut t = start;
        for (i, &w) in row.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let t_next = if Some(i) == last_active { end } else { (t + w * delta).min(end) };
            if t_next > t {
                segments.push(Segment {
                    t_start: t,
                    t_end: t_next,
                    atom: i,
                });
                t = t_next;
            }
        }
    }
    InputSchedule::new(horizon, atoms, segments)
}

/// Largest node-wise distance `‖x_relaxed(t_k) − x_schedule(t_k)‖₂`.
pub fn chattering_error(p: &Problem, rc: &RelaxedControl, schedule: &InputSchedule, substeps: usize) -> Result<f64> {
    let relaxed = forward_relaxed(p, rc, substeps)?;
    let driven = forward_input(p, schedule, rc.grid(), substeps, p.initial_state())?;
    Ok(relaxed
        .states()
        .zip(driven.states())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}
