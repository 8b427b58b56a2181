//! Fixed-step RK4 for relaxed and deterministic inputs, and the costate.
//!
//! Both forward passes cut `[0, T]` into the same kind of step plan: every
//! grid interval is split into `substeps` equal RK4 steps, and a
//! deterministic schedule additionally splits intervals at its switching
//! times so no step straddles a switch. The forward pass records the four
//! stage states of every step.
//!
//! The costate is the exact adjoint of that RK4 recursion, not a separate
//! backward integration. It matches the continuous costate `ṗ = −Aᵀp`,
//! `p(T) = ∇Ψ(x(T))` to the integrator's order, and the per-stage adjoint
//! weights it leaves behind make the Hamiltonian table the exact gradient of
//! the discretized cost with respect to the weights.

use crate::control::{RelaxedControl, TimeGrid};
use crate::problem::Problem;
use crate::synthesis::InputSchedule;
use crate::{Error, Result};

/// States above this norm are treated as a blow-up.
pub const BLOWUP_NORM: f64 = 1e9;

const RK4_B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Step {
    pub t0: f64,
    pub h: f64,
    /// Weight row (relaxed) or atom index (schedule) driving this step.
    pub control: usize,
    pub interval: usize,
    pub first_in_interval: bool,
    pub last_in_interval: bool,
}

impl Step {
    #[inline]
    pub fn stage_times(&self) -> [f64; 4] {
        let mid = self.t0 + 0.5 * self.h;
        [self.t0, mid, mid, self.t0 + self.h]
    }
}

/// Appends `nsteps` equal steps covering `[a, b]`.
fn push_piece(plan: &mut Vec<Step>, a: f64, b: f64, nsteps: usize, control: usize, interval: usize) {
    let h = (b - a) / nsteps as f64;
    for j in 0..nsteps {
        plan.push(Step {
            t0: a + j as f64 * h,
            h,
            control,
            interval,
            first_in_interval: false,
            last_in_interval: false,
        });
    }
}

fn mark_interval(plan: &mut [Step], from: usize) {
    if let Some(s) = plan.get_mut(from) {
        s.first_in_interval = true;
    }
    if let Some(s) = plan.last_mut() {
        s.last_in_interval = true;
    }
}

fn relaxed_plan(grid: &TimeGrid, substeps: usize) -> Vec<Step> {
    let mut plan = Vec::with_capacity(grid.intervals() * substeps);
    for k in 0..grid.intervals() {
        let start = plan.len();
        push_piece(&mut plan, grid.node(k), grid.node(k + 1), substeps, k, k);
        mark_interval(&mut plan, start);
    }
    plan
}

fn schedule_plan(grid: &TimeGrid, substeps: usize, schedule: &InputSchedule) -> Vec<Step> {
    let dt = grid.dt();
    let tol = 1e-12 * grid.horizon();
    let segs = schedule.segments();
    let mut plan = Vec::new();
    let mut seg = 0usize;
    for k in 0..grid.intervals() {
        let (a, b) = (grid.node(k), grid.node(k + 1));
        let start = plan.len();
        let mut left = a;
        while seg + 1 < segs.len() && segs[seg].t_end <= a + tol {
            seg += 1;
        }
        let mut cur = seg;
        loop {
            let end = segs[cur].t_end;
            let right = if end < b - tol { end } else { b };
            let nsteps = ((substeps as f64 * (right - left) / dt) - 1e-9).ceil().max(1.0) as usize;
            push_piece(&mut plan, left, right, nsteps, segs[cur].atom, k);
            if right >= b || cur + 1 >= segs.len() {
                break;
            }
            left = right;
            cur += 1;
        }
        mark_interval(&mut plan, start);
    }
    plan
}

#[derive(Clone, Copy)]
enum Drive<'a> {
    Relaxed(&'a RelaxedControl),
    Input(&'a InputSchedule),
}

struct Workspace {
    f: Vec<f64>,
    jac: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            f: vec![0.0; n],
            jac: vec![0.0; n * n],
        }
    }
}

impl Drive<'_> {
    /// `out = Σ_i w_i f(t, x, u_i)` or `f(t, x, u)` for a scheduled atom.
    fn rhs(&self, p: &Problem, control: usize, t: f64, x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        match self {
            Drive::Input(s) => p.field_into(t, x, s.atoms().atom(control), out),
            Drive::Relaxed(rc) => {
                let atoms = rc.atoms();
                let mut first = true;
                for (i, &w) in rc.row(control).iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    if first {
                        p.field_into(t, x, atoms.atom(i), out);
                        if w != 1.0 {
                            out.iter_mut().for_each(|v| *v *= w);
                        }
                        first = false;
                    } else {
                        p.field_into(t, x, atoms.atom(i), &mut ws.f);
                        for (o, fi) in out.iter_mut().zip(&ws.f) {
                            *o += w * fi;
                        }
                    }
                }
            }
        }
    }

    /// `out = (Σ_i w_i ∂f/∂x(t, x, u_i))ᵀ g`.
    fn jac_t_vec(
        &self,
        p: &Problem,
        control: usize,
        t: f64,
        x: &[f64],
        g: &[f64],
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        let n = x.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut add = |u: &[f64], w: f64, ws: &mut Workspace| -> Result<()> {
            p.jacobian_x_into(t, x, u, &mut ws.jac)?;
            for (r, gr) in g.iter().enumerate() {
                let wg = w * gr;
                if wg == 0.0 {
                    continue;
                }
                for (o, jrc) in out.iter_mut().zip(&ws.jac[r * n..(r + 1) * n]) {
                    *o += wg * jrc;
                }
            }
            Ok(())
        };
        match self {
            Drive::Input(s) => add(s.atoms().atom(control), 1.0, ws),
            Drive::Relaxed(rc) => {
                for (i, &w) in rc.row(control).iter().enumerate() {
                    if w != 0.0 {
                        add(rc.atoms().atom(i), w, ws)?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// State samples on the grid nodes, plus the RK4 stage record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    n: usize,
    states: Vec<f64>,
    pub(crate) plan: Vec<Step>,
    pub(crate) stages: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `x(t_k)`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.intervals())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.n)
    }

    /// Stage state `j ∈ 0..4` of plan step `s`.
    pub(crate) fn stage(&self, s: usize, j: usize) -> &[f64] {
        let off = (4 * s + j) * self.n;
        &self.stages[off..off + self.n]
    }
}

/// Costate samples on the grid nodes.
#[derive(Debug, Clone)]
pub struct Costate {
    grid: TimeGrid,
    n: usize,
    values: Vec<f64>,
    /// Per plan step and stage: `h·b_j·Λ_j`, the weight of `f(t_j, X_j, u)`
    /// in the gradient of the discrete cost.
    pub(crate) stage_weights: Vec<f64>,
}

impl Costate {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn values(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    pub(crate) fn stage_weight(&self, s: usize, j: usize) -> &[f64] {
        let off = (4 * s + j) * self.n;
        &self.stage_weights[off..off + self.n]
    }
}

fn blown_up(x: &[f64]) -> bool {
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    !(norm2.is_finite() && norm2 <= BLOWUP_NORM * BLOWUP_NORM)
}

fn run_forward(p: &Problem, drive: Drive<'_>, grid: TimeGrid, plan: Vec<Step>, x0: &[f64]) -> Result<Trajectory> {
    let n = p.state_dim();
    if x0.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "initial state has {} entries, problem has {n} states",
            x0.len()
        )));
    }
    let mut ws = Workspace::new(n);
    let mut states = Vec::with_capacity((grid.intervals() + 1) * n);
    states.extend_from_slice(x0);
    let mut stages = vec![0.0; plan.len() * 4 * n];
    let mut x = x0.to_vec();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut xs = vec![0.0; n];

    for (s, step) in plan.iter().enumerate() {
        let h = step.h;
        let [t1, t2, t3, t4] = step.stage_times();
        let base = 4 * s * n;

        stages[base..base + n].copy_from_slice(&x);
        drive.rhs(p, step.control, t1, &x, &mut k[0], &mut ws);

        for i in 0..n {
            xs[i] = x[i] + 0.5 * h * k[0][i];
        }
        stages[base + n..base + 2 * n].copy_from_slice(&xs);
        drive.rhs(p, step.control, t2, &xs, &mut k[1], &mut ws);

        for i in 0..n {
            xs[i] = x[i] + 0.5 * h * k[1][i];
        }
        stages[base + 2 * n..base + 3 * n].copy_from_slice(&xs);
        drive.rhs(p, step.control, t3, &xs, &mut k[2], &mut ws);

        for i in 0..n {
            xs[i] = x[i] + h * k[2][i];
        }
        stages[base + 3 * n..base + 4 * n].copy_from_slice(&xs);
        drive.rhs(p, step.control, t4, &xs, &mut k[3], &mut ws);

        for i in 0..n {
            x[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if blown_up(&x) {
            return Err(Error::BlowUp {
                what: "state",
                node: step.interval + 1,
                t: grid.node(step.interval + 1),
            });
        }
        if step.last_in_interval {
            states.extend_from_slice(&x);
        }
    }
    Ok(Trajectory {
        grid,
        n,
        states,
        plan,
        stages,
    })
}

/// Integrates `ẋ = Σ_i w_i(t) f(t, x, u_i)` from the problem's initial state.
/// `substeps` RK4 steps are taken per grid interval.
pub fn forward_relaxed(p: &Problem, rc: &RelaxedControl, substeps: usize) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    check_atoms(p, rc.atoms().dim())?;
    let grid = *rc.grid();
    run_forward(p, Drive::Relaxed(rc), grid, relaxed_plan(&grid, substeps), p.initial_state())
}

/// Integrates the deterministic input `schedule` from `x0`, reporting states
/// on `grid`. Steps never cross a switching time.
pub fn forward_input(
    p: &Problem,
    schedule: &InputSchedule,
    grid: &TimeGrid,
    substeps: usize,
    x0: &[f64],
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    check_atoms(p, schedule.atoms().dim())?;
    schedule.validate()?;
    if (schedule.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon() {
        return Err(Error::Schedule(format!(
            "schedule horizon {} differs from grid horizon {}",
            schedule.horizon(),
            grid.horizon()
        )));
    }
    let plan = schedule_plan(grid, substeps, schedule);
    run_forward(p, Drive::Input(schedule), *grid, plan, x0)
}

fn check_atoms(p: &Problem, m: usize) -> Result<()> {
    if m != p.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "atoms have dimension {m}, problem has {} inputs",
            p.input_dim()
        )));
    }
    Ok(())
}

fn run_backward(p: &Problem, drive: Drive<'_>, traj: &Trajectory) -> Result<Costate> {
    let n = traj.n;
    let grid = traj.grid;
    let kk = grid.intervals();
    let mut ws = Workspace::new(n);
    let mut values = vec![0.0; (kk + 1) * n];
    let mut stage_weights = vec![0.0; traj.plan.len() * 4 * n];

    let mut lam = p.terminal_gradient(traj.final_state());
    if lam.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp {
            what: "costate",
            node: kk,
            t: grid.horizon(),
        });
    }
    values[kk * n..].copy_from_slice(&lam);

    let mut g = vec![0.0; n];
    let mut d = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (s, step) in traj.plan.iter().enumerate().rev() {
        let h = step.h;
        let times = step.stage_times();
        // Coefficient of the next stage's adjoint in stage j's weight: stage
        // j + 1 evaluates at x + c_{j+1} h k_j.
        let feed = [0.5 * h, 0.5 * h, h];
        for j in (0..4).rev() {
            for i in 0..n {
                g[i] = h * RK4_B[j] * lam[i];
                if j < 3 {
                    g[i] += feed[j] * d[j + 1][i];
                }
            }
            let off = (4 * s + j) * n;
            stage_weights[off..off + n].copy_from_slice(&g);
            let (dj, _) = d.split_at_mut(j + 1);
            drive.jac_t_vec(p, step.control, times[j], traj.stage(s, j), &g, &mut dj[j], &mut ws)?;
        }
        for i in 0..n {
            lam[i] += d[0][i] + d[1][i] + d[2][i] + d[3][i];
        }
        if blown_up(&lam) {
            return Err(Error::BlowUp {
                what: "costate",
                node: step.interval,
                t: grid.node(step.interval),
            });
        }
        if step.first_in_interval {
            values[step.interval * n..(step.interval + 1) * n].copy_from_slice(&lam);
        }
    }
    Ok(Costate {
        grid,
        n,
        values,
        stage_weights,
    })
}

/// Costate of the relaxed system along `traj`, which must come from
/// [`forward_relaxed`] with the same control.
pub fn backward_costate(p: &Problem, rc: &RelaxedControl, traj: &Trajectory) -> Result<Costate> {
    if traj.grid != *rc.grid() || traj.plan.iter().any(|s| s.control >= rc.grid().intervals()) {
        return Err(Error::ShapeMismatch("trajectory was not produced on this control's grid".into()));
    }
    run_backward(p, Drive::Relaxed(rc), traj)
}

/// Costate along a trajectory produced by [`forward_input`] with `schedule`.
pub fn backward_costate_input(p: &Problem, schedule: &InputSchedule, traj: &Trajectory) -> Result<Costate> {
    if traj.plan.iter().any(|s| s.control >= schedule.atoms().len()) {
        return Err(Error::ShapeMismatch("trajectory was not produced by this schedule".into()));
    }
    run_backward(p, Drive::Input(schedule), traj)
}
