//! Armijo step selection and the outer descent loop.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::{DescentDirection, RelaxedControl, TimeGrid};
use crate::integrate::{backward_costate, forward_relaxed, Trajectory};
use crate::optimality::{hamiltonian_table, theta_and_direction};
use crate::problem::Problem;
use crate::sampling::AtomSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop once `theta_pure > -eps_tol`.
    pub eps_tol: f64,
    /// Sufficient-decrease fraction.
    pub alpha: f64,
    /// Step shrink factor; candidates are `beta^k`.
    pub beta: f64,
    /// ℓ1 penalty on weight changes; `0` gives the pure direction.
    pub gamma_l1: f64,
    pub max_iters: usize,
    pub armijo_kmax: usize,
    pub grid_intervals: usize,
    /// RK4 steps per grid interval.
    pub substeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_tol: 1e-5,
            alpha: 0.1,
            beta: 0.5,
            gamma_l1: 0.0,
            max_iters: 500,
            armijo_kmax: 30,
            grid_intervals: 100,
            substeps: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.eps_tol > 0.0 && self.eps_tol.is_finite()) {
            return bad("eps_tol must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.gamma_l1 >= 0.0 && self.gamma_l1.is_finite()) {
            return bad("gamma_l1 must be non-negative");
        }
        if self.grid_intervals == 0 {
            return bad("grid_intervals must be at least 1");
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub theta_pure: f64,
    pub theta_reg: f64,
    /// Terminal cost of the iterate this record describes.
    pub cost: f64,
    /// Accepted step, absent on the final record.
    pub lambda: Option<f64>,
    /// Terminal cost after the accepted step.
    pub new_cost: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl IterationLog {
    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.lambda.is_some()).count()
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("a log always has at least one record")
    }

    /// Whether the cost never went up across accepted steps.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].cost <= w[0].cost)
            && self.records.iter().all(|r| r.new_cost.is_none_or(|c| c <= r.cost))
    }
}

#[derive(Debug, Clone)]
pub enum ArmijoOutcome {
    Accepted {
        lambda: f64,
        k: usize,
        cost: f64,
        control: RelaxedControl,
        trajectory: Trajectory,
    },
    Stalled,
}

/// Largest `β^k`, `k = 0..=armijo_kmax`, with
/// `Ψ(x^{W + β^k δW}(T)) − Ψ(x^W(T)) ≤ α β^k θ`, where `θ` is the slope of
/// `d`. A candidate whose simulation fails counts as rejected.
pub fn armijo(p: &Problem, rc: &RelaxedControl, current_cost: f64, d: &DescentDirection, cfg: &SolverConfig) -> Result<ArmijoOutcome> {
    let slope = d.slope();
    if !(slope < 0.0) {
        return Err(Error::InvalidArgument(format!("Armijo needs a descent direction, slope is {slope}")));
    }
    let mut lambda = 1.0;
    for k in 0..=cfg.armijo_kmax {
        let candidate = rc.apply_step(d, lambda)?;
        if let Ok(trajectory) = forward_relaxed(p, &candidate, cfg.substeps) {
            let cost = p.terminal_cost(trajectory.final_state());
            if cost.is_finite() && cost - current_cost <= cfg.alpha * lambda * slope {
                return Ok(ArmijoOutcome::Accepted {
                    lambda,
                    k,
                    cost,
                    control: candidate,
                    trajectory,
                });
            }
        }
        lambda *= cfg.beta;
    }
    Ok(ArmijoOutcome::Stalled)
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub control: RelaxedControl,
    pub trajectory: Trajectory,
    pub log: IterationLog,
}

impl SolveResult {
    pub fn final_cost(&self) -> f64 {
        self.log.final_record().cost
    }

    pub fn final_theta(&self) -> f64 {
        self.log.final_record().theta_pure
    }
}

/// Descent from uniform weights over `atoms` on a `cfg.grid_intervals` grid.
pub fn solve(p: &Problem, atoms: Arc<AtomSet>, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let grid = TimeGrid::new(p.horizon(), cfg.grid_intervals)?;
    solve_from(p, RelaxedControl::new_uniform(grid, atoms), cfg)
}

/// Descent starting from an arbitrary relaxed control.
pub fn solve_from(p: &Problem, initial: RelaxedControl, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut control = initial;
    let mut trajectory = forward_relaxed(p, &control, cfg.substeps)?;
    let mut cost = p.terminal_cost(trajectory.final_state());
    let mut records = Vec::new();

    let termination = loop {
        let costate = backward_costate(p, &control, &trajectory)?;
        let table = hamiltonian_table(p, &control, &trajectory, &costate)?;
        let direction = theta_and_direction(&table, &control, cfg.gamma_l1)?;
        let mut record = IterationRecord {
            iter: records.len(),
            theta_pure: direction.theta_pure,
            theta_reg: direction.theta_reg,
            cost,
            lambda: None,
            new_cost: None,
            wall_time: 0.0,
        };
        let finish = |mut record: IterationRecord, records: &mut Vec<IterationRecord>| {
            record.wall_time = start.elapsed().as_secs_f64();
            records.push(record);
        };

        if direction.theta_pure > -cfg.eps_tol {
            finish(record, &mut records);
            break Termination::Converged;
        }
        if records.len() >= cfg.max_iters {
            finish(record, &mut records);
            break Termination::MaxIters;
        }
        // A regularized direction can be flat while the pure one is not.
        if !(direction.slope() < 0.0) {
            finish(record, &mut records);
            break Termination::Stalled;
        }
        match armijo(p, &control, cost, &direction, cfg)? {
            ArmijoOutcome::Accepted {
                lambda,
                cost: new_cost,
                control: next,
                trajectory: next_traj,
                ..
            } => {
                record.lambda = Some(lambda);
                record.new_cost = Some(new_cost);
                finish(record, &mut records);
                control = next;
                trajectory = next_traj;
                cost = new_cost;
            }
            ArmijoOutcome::Stalled => {
                finish(record, &mut records);
                break Termination::Stalled;
            }
        }
    };

    Ok(SolveResult {
        control,
        trajectory,
        log: IterationLog { records, termination },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, Overrides};
    use crate::sampling::sample_grid;

    fn toy() -> Problem {
        builtin("toy_abs", &Overrides::new()).unwrap()
    }

    #[test]
    fn single_atom_converges_immediately() {
        let p = toy();
        let atoms = Arc::new(AtomSet::from_atoms(&[vec![3.0]]).unwrap());
        let r = solve(&p, atoms, &SolverConfig::default()).unwrap();
        assert_eq!(r.log.termination, Termination::Converged);
        assert_eq!(r.log.records.len(), 1);
        assert_eq!(r.final_theta(), 0.0);
    }

    #[test]
    fn armijo_accepts_full_step_on_toy() {
        // The toy cost is linear in the weights, so λ = 1 always passes.
        let p = toy();
        let atoms = Arc::new(sample_grid(p.control_box(), &[15]).unwrap());
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let rc = RelaxedControl::new_uniform(grid, atoms);
        let traj = forward_relaxed(&p, &rc, 1).unwrap();
        let cost = p.terminal_cost(traj.final_state());
        let cs = backward_costate(&p, &rc, &traj).unwrap();
        let table = hamiltonian_table(&p, &rc, &traj, &cs).unwrap();
        let d = theta_and_direction(&table, &rc, 0.0).unwrap();
        match armijo(&p, &rc, cost, &d, &SolverConfig::default()).unwrap() {
            ArmijoOutcome::Accepted { lambda, k, cost: new_cost, .. } => {
                assert_eq!(k, 0);
                assert_eq!(lambda, 1.0);
                assert!(new_cost < cost);
                assert!((new_cost + 1.0).abs() < 1e-12);
            }
            ArmijoOutcome::Stalled => panic!("expected acceptance"),
        }
    }

    #[test]
    fn armijo_exhaustion_stalls() {
        let p = toy();
        let atoms = Arc::new(sample_grid(p.control_box(), &[3]).unwrap());
        let rc = RelaxedControl::new_uniform(TimeGrid::new(1.0, 4).unwrap(), atoms);
        let traj = forward_relaxed(&p, &rc, 1).unwrap();
        let cost = p.terminal_cost(traj.final_state());
        // A direction that claims a much steeper slope than the real one.
        let cs = backward_costate(&p, &rc, &traj).unwrap();
        let table = hamiltonian_table(&p, &rc, &traj, &cs).unwrap();
        let mut d = theta_and_direction(&table, &rc, 0.0).unwrap();
        d.theta_reg *= 1e6;
        let cfg = SolverConfig {
            armijo_kmax: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(armijo(&p, &rc, cost, &d, &cfg).unwrap(), ArmijoOutcome::Stalled));
        d.theta_reg = 0.0;
        assert!(armijo(&p, &rc, cost, &d, &cfg).is_err());
    }

    #[test]
    fn toy_escapes_local_minima() {
        let p = toy();
        let atoms = Arc::new(sample_grid(p.control_box(), &[15]).unwrap());
        let cfg = SolverConfig {
            grid_intervals: 50,
            ..SolverConfig::default()
        };
        let r = solve(&p, atoms.clone(), &cfg).unwrap();
        assert_eq!(r.log.termination, Termination::Converged);
        assert!(r.final_cost() <= -0.99);
        let zero = atoms.iter().position(|u| u == [0.0]).unwrap();
        for k in 0..50 {
            assert!(r.control.row(k)[zero] >= 0.99);
        }
        assert!(r.log.is_monotone());
    }

    #[test]
    fn max_iters_zero_stops_at_once() {
        let p = toy();
        let atoms = Arc::new(sample_grid(p.control_box(), &[15]).unwrap());
        let cfg = SolverConfig {
            max_iters: 0,
            grid_intervals: 10,
            ..SolverConfig::default()
        };
        let r = solve(&p, atoms, &cfg).unwrap();
        assert_eq!(r.log.termination, Termination::MaxIters);
        assert_eq!(r.log.iterations(), 0);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            alpha: 1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            beta: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad: std::result::Result<SolverConfig, _> = serde_json::from_str(r#"{"eps": 1.0}"#);
        assert!(bad.is_err());
    }
}
