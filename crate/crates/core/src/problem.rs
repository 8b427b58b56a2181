//! Mayer-form optimal control problems.
//!
//! A [`Problem`] minimizes a terminal cost `Ψ(x(T))` subject to
//! `ẋ = f(t, x, u)`, `x(0) = ξ` and `u(t) ∈ U` for a box `U`. Problems with a
//! running cost are written as a [`RunningCostProblem`] and converted with
//! [`augment_mayer`], which appends the accumulated running cost as one extra
//! state.
//!
//! All callables write into caller-provided buffers so the integrators can
//! evaluate hundreds of atoms per stage without allocating. Jacobians are
//! row-major: `jac[r * n + c] = ∂f_r / ∂x_c`.
//!
//! The field is expected to be Lipschitz continuously differentiable in `x`
//! and continuous in `(t, u)`. This is not checked; non-finite values are.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type FieldFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TerminalGradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type RunningCostGradientFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Relative finite-difference step; the absolute step for component `j` is
/// `FD_STEP * max(1, |x_j|)`.
pub const FD_STEP: f64 = 1e-6;

/// Axis-aligned control set `U = [lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidProblem("control box needs at least one axis".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch(format!(
                "control box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidProblem(format!(
                    "control box axis {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` on every one of `m` axes.
    pub fn cube(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; m], vec![hi; m])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// Mayer-form problem: minimize `Ψ(x(T))`.
#[derive(Clone)]
pub struct Problem {
    name: String,
    n: usize,
    m: usize,
    horizon: f64,
    initial_state: Vec<f64>,
    control_box: ControlBox,
    field: FieldFn,
    jacobian_x: Option<JacobianFn>,
    terminal_cost: TerminalCostFn,
    terminal_gradient: Option<TerminalGradientFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .field("control_box", &self.control_box)
            .field("analytic_jacobian", &self.jacobian_x.is_some())
            .field("analytic_terminal_gradient", &self.terminal_gradient.is_some())
            .finish()
    }
}

fn check_common(horizon: f64, initial_state: &[f64]) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidProblem(format!("horizon must be positive, got {horizon}")));
    }
    if initial_state.is_empty() {
        return Err(Error::InvalidProblem("state dimension must be at least 1".into()));
    }
    if initial_state.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("initial state is not finite".into()));
    }
    Ok(())
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        initial_state: Vec<f64>,
        control_box: ControlBox,
        field: FieldFn,
        terminal_cost: TerminalCostFn,
    ) -> Result<Self> {
        check_common(horizon, &initial_state)?;
        Ok(Self {
            name: name.into(),
            n: initial_state.len(),
            m: control_box.dim(),
            horizon,
            initial_state,
            control_box,
            field,
            jacobian_x: None,
            terminal_cost,
            terminal_gradient: None,
        })
    }

    pub fn with_jacobian(mut self, jacobian_x: JacobianFn) -> Self {
        self.jacobian_x = Some(jacobian_x);
        self
    }

    pub fn with_terminal_gradient(mut self, gradient: TerminalGradientFn) -> Self {
        self.terminal_gradient = Some(gradient);
        self
    }

    /// Drops the analytic derivatives so every derivative goes through the
    /// finite-difference fallback.
    pub fn without_derivatives(mut self) -> Self {
        self.jacobian_x = None;
        self.terminal_gradient = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.control_box
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian_x.is_some()
    }

    /// Unchecked field evaluation into `out`.
    #[inline]
    pub fn field_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.field)(t, x, u, out)
    }

    /// Field evaluation with a finiteness check.
    pub fn eval_field(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.field_into(t, x, u, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(non_finite("vector field", t, x, u))
        }
    }

    /// `∂f/∂x` at `(t, x, u)`, row-major. Uses the analytic Jacobian when
    /// present and central differences otherwise.
    pub fn jacobian_x_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.jacobian_x {
            Some(jac) => jac(t, x, u, out),
            None => fd_jacobian(|xx, o| self.field_into(t, xx, u, o), x, self.n, out),
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(non_finite("state Jacobian", t, x, u))
        }
    }

    pub fn eval_jacobian_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n * self.n];
        self.jacobian_x_into(t, x, u, &mut out)?;
        Ok(out)
    }

    /// Central-difference Jacobian regardless of whether an analytic one exists.
    pub fn fd_jacobian_x(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        fd_jacobian(|xx, o| self.field_into(t, xx, u, o), x, self.n, &mut out);
        out
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal_cost)(x)
    }

    pub fn terminal_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.terminal_gradient {
            Some(g) => g(x, out),
            None => fd_gradient(|xx| self.terminal_cost(xx), x, out),
        }
    }

    pub fn terminal_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.terminal_gradient_into(x, &mut out);
        out
    }
}

fn non_finite(what: &'static str, t: f64, x: &[f64], u: &[f64]) -> Error {
    Error::NonFinite {
        what,
        t,
        x: x.to_vec(),
        u: u.to_vec(),
    }
}

#[inline]
fn fd_step(xj: f64) -> f64 {
    FD_STEP * xj.abs().max(1.0)
}

/// Central-difference Jacobian of `g: R^n -> R^rows`, written row-major into
/// `out` (`rows * n` entries).
fn fd_jacobian(g: impl Fn(&[f64], &mut [f64]), x: &[f64], rows: usize, out: &mut [f64]) {
    let n = x.len();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; rows];
    let mut fm = vec![0.0; rows];
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        g(&xp, &mut fp);
        xp[j] = x[j] - h;
        g(&xp, &mut fm);
        xp[j] = x[j];
        for r in 0..rows {
            out[r * n + j] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
}

fn fd_gradient(g: impl Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = g(&xp);
        xp[j] = x[j] - h;
        let fm = g(&xp);
        xp[j] = x[j];
        out[j] = (fp - fm) / (2.0 * h);
    }
}

/// Problem with an integral cost `∫ L(t, x, u) dt` and optional terminal cost.
#[derive(Clone)]
pub struct RunningCostProblem {
    pub name: String,
    pub horizon: f64,
    pub initial_state: Vec<f64>,
    pub control_box: ControlBox,
    pub field: FieldFn,
    pub jacobian_x: Option<JacobianFn>,
    pub running_cost: RunningCostFn,
    pub running_cost_grad_x: Option<RunningCostGradientFn>,
    pub terminal_cost: Option<TerminalCostFn>,
    pub terminal_gradient: Option<TerminalGradientFn>,
}

impl RunningCostProblem {
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        initial_state: Vec<f64>,
        control_box: ControlBox,
        field: FieldFn,
        running_cost: RunningCostFn,
    ) -> Self {
        Self {
            name: name.into(),
            horizon,
            initial_state,
            control_box,
            field,
            jacobian_x: None,
            running_cost,
            running_cost_grad_x: None,
            terminal_cost: None,
            terminal_gradient: None,
        }
    }
}

/// Rewrites a running-cost problem in Mayer form.
///
/// The returned problem has `n + 1` states. The last one integrates the
/// running cost from zero, and the terminal cost becomes
/// `Ψ(x_{1..n}(T)) + x_{n+1}(T)`. The first `n` field components are the
/// original field, untouched.
pub fn augment_mayer(p: RunningCostProblem) -> Result<Problem> {
    check_common(p.horizon, &p.initial_state)?;
    let n = p.initial_state.len();
    let na = n + 1;

    let field = p.field.clone();
    let running = p.running_cost.clone();
    let aug_field: FieldFn = Arc::new(move |t, x, u, out| {
        field(t, &x[..n], u, &mut out[..n]);
        out[n] = running(t, &x[..n], u);
    });

    let field = p.field.clone();
    let jac = p.jacobian_x.clone();
    let running = p.running_cost.clone();
    let running_grad = p.running_cost_grad_x.clone();
    let aug_jac: JacobianFn = Arc::new(move |t, x, u, out| {
        let xs = &x[..n];
        let mut block = vec![0.0; n * n];
        match &jac {
            Some(j) => j(t, xs, u, &mut block),
            None => fd_jacobian(|xx, o| field(t, xx, u, o), xs, n, &mut block),
        }
        let mut grad = vec![0.0; n];
        match &running_grad {
            Some(g) => g(t, xs, u, &mut grad),
            None => fd_gradient(|xx| running(t, xx, u), xs, &mut grad),
        }
        for r in 0..n {
            out[r * na..r * na + n].copy_from_slice(&block[r * n..(r + 1) * n]);
            out[r * na + n] = 0.0;
        }
        out[n * na..n * na + n].copy_from_slice(&grad);
        out[n * na + n] = 0.0;
    });

    let terminal = p.terminal_cost.clone();
    let aug_cost: TerminalCostFn = Arc::new(move |x| {
        let base = terminal.as_ref().map_or(0.0, |psi| psi(&x[..n]));
        base + x[n]
    });

    let terminal = p.terminal_cost.clone();
    let terminal_grad = p.terminal_gradient.clone();
    let aug_grad: TerminalGradientFn = Arc::new(move |x, out| {
        match (&terminal_grad, &terminal) {
            (Some(g), _) => g(&x[..n], &mut out[..n]),
            (None, Some(psi)) => fd_gradient(|xx| psi(xx), &x[..n], &mut out[..n]),
            (None, None) => out[..n].iter_mut().for_each(|v| *v = 0.0),
        }
        out[n] = 1.0;
    });

    let mut xi = p.initial_state;
    xi.push(0.0);
    Ok(Problem::new(p.name, p.horizon, xi, p.control_box, aug_field, aug_cost)?
        .with_jacobian(aug_jac)
        .with_terminal_gradient(aug_grad))
}

/// A builtin-problem parameter override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Number(f64),
    Vector(Vec<f64>),
}

pub type Overrides = BTreeMap<String, ParamValue>;

struct OverrideReader<'a> {
    problem: &'a str,
    overrides: &'a Overrides,
}

impl OverrideReader<'_> {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.overrides.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(self.bad(key, format!("unknown key (allowed: {})", allowed.join(", "))));
            }
        }
        Ok(())
    }

    fn bad(&self, key: &str, reason: impl Into<String>) -> Error {
        Error::BadOverride {
            problem: self.problem.to_string(),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn number(&self, key: &str, default: f64) -> Result<f64> {
        match self.overrides.get(key) {
            None => Ok(default),
            Some(ParamValue::Number(v)) if v.is_finite() => Ok(*v),
            Some(other) => Err(self.bad(key, format!("expected a finite number, got {other:?}"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.overrides.get(key) {
            None => Ok(default),
            Some(ParamValue::Bool(v)) => Ok(*v),
            Some(other) => Err(self.bad(key, format!("expected a boolean, got {other:?}"))),
        }
    }

    fn vector(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.overrides.get(key) {
            None => Ok(default.to_vec()),
            Some(ParamValue::Vector(v)) if v.len() == default.len() && v.iter().all(|c| c.is_finite()) => {
                Ok(v.clone())
            }
            Some(other) => Err(self.bad(
                key,
                format!("expected {} finite numbers, got {other:?}", default.len()),
            )),
        }
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["toy_abs", "constrained_lqr", "quadrotor"];

/// Builds one of the reference problems by name.
///
/// * `toy_abs`: `ẋ = ½|u| − cos u`, `x(0) = 0`, `Ψ = x(1)`, `U = [−7, 7]`.
///   Overrides: `horizon`, `u_bound`.
/// * `constrained_lqr`: planar vehicle with a pendulum-like third axis,
///   six states plus the running-cost state, `U = [−1, 1]²`, `T = 2`.
///   Overrides: `horizon`, `eta`.
/// * `quadrotor`: twelve states plus the running-cost state, `U = [0, 2]⁴`,
///   `T = 5`. Overrides: `horizon`, `target`, `eta`, `arm_length`, `gravity`.
pub fn builtin(name: &str, overrides: &Overrides) -> Result<Problem> {
    let reader = OverrideReader {
        problem: name,
        overrides,
    };
    match name {
        "toy_abs" => {
            reader.check_keys(&["horizon", "u_bound"])?;
            toy_abs(reader.number("horizon", 1.0)?, reader.number("u_bound", 7.0)?)
        }
        "constrained_lqr" => {
            reader.check_keys(&["horizon", "eta"])?;
            constrained_lqr(reader.number("horizon", 2.0)?, reader.number("eta", 0.05)?)
        }
        "quadrotor" => {
            reader.check_keys(&["horizon", "target", "eta", "arm_length", "gravity"])?;
            let params = QuadrotorParams {
                horizon: reader.number("horizon", 5.0)?,
                target: reader.vector("target", &[-1.2, -1.0, -1.0])?,
                eta: reader.number("eta", 0.05)?,
                arm_length: reader.number("arm_length", 0.25)?,
                gravity: reader.flag("gravity", false)?,
                ..QuadrotorParams::default()
            };
            quadrotor(&params)
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

fn toy_abs(horizon: f64, u_bound: f64) -> Result<Problem> {
    let field: FieldFn = Arc::new(|_t, _x, u, out| out[0] = 0.5 * u[0].abs() - u[0].cos());
    let jac: JacobianFn = Arc::new(|_t, _x, _u, out| out[0] = 0.0);
    Ok(Problem::new(
        "toy_abs",
        horizon,
        vec![0.0],
        ControlBox::new(vec![-u_bound], vec![u_bound])?,
        field,
        Arc::new(|x| x[0]),
    )?
    .with_jacobian(jac)
    .with_terminal_gradient(Arc::new(|_x, out| out[0] = 1.0)))
}

/// Planar field `f(x, u) = x + (u² + 1, u)` on `U = [−1, 1]` with a zero
/// cost, used to illustrate sampled vector-field sets.
pub fn parabola_field() -> Result<Problem> {
    let field: FieldFn = Arc::new(|_t, x, u, out| {
        out[0] = x[0] + u[0] * u[0] + 1.0;
        out[1] = x[1] + u[0];
    });
    let jac: JacobianFn = Arc::new(|_t, _x, _u, out| out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]));
    Ok(Problem::new("parabola", 1.0, vec![0.0, 0.0], ControlBox::cube(1, -1.0, 1.0)?, field, Arc::new(|_x| 0.0))?
        .with_jacobian(jac)
        .with_terminal_gradient(Arc::new(|_x, out| out.iter_mut().for_each(|v| *v = 0.0))))
}

/// Parameters of the constrained LQR vehicle.
const LQR_J: f64 = 0.0475;
const LQR_MASS: f64 = 1.5;
const LQR_R: f64 = 0.25;
const LQR_G: f64 = 9.8;
const LQR_GAMMA: f64 = 0.51;
const LQR_D: f64 = 0.2;
const LQR_L: f64 = 0.05;
const LQR_TARGET: [f64; 3] = [-0.3, -0.5, 0.0];

// State order: (x1, x2, x3, ẋ1, ẋ2, ẋ3).
fn constrained_lqr(horizon: f64, eta: f64) -> Result<Problem> {
    let damp = LQR_D / LQR_MASS;
    let stiff = LQR_MASS * LQR_G * LQR_L / LQR_J;
    let field: FieldFn = Arc::new(move |_t, x, u, out| {
        out[0] = x[3];
        out[1] = x[4];
        out[2] = x[5];
        out[3] = -damp * x[3] - LQR_GAMMA * x[2] + u[0] / LQR_MASS;
        out[4] = -damp * x[4] + u[1] / LQR_MASS;
        out[5] = -stiff * x[2] + LQR_R / LQR_J * u[0];
    });
    let jac: JacobianFn = Arc::new(move |_t, _x, _u, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[3] = 1.0;
        out[6 + 4] = 1.0;
        out[12 + 5] = 1.0;
        out[18 + 3] = -damp;
        out[18 + 2] = -LQR_GAMMA;
        out[24 + 4] = -damp;
        out[30 + 2] = -stiff;
    });
    let running: RunningCostFn = Arc::new(move |_t, x, u| {
        (0..3).map(|i| (x[i] - LQR_TARGET[i]).powi(2)).sum::<f64>() + eta * (u[0] * u[0] + u[1] * u[1])
    });
    let running_grad: RunningCostGradientFn = Arc::new(|_t, x, _u, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..3 {
            out[i] = 2.0 * (x[i] - LQR_TARGET[i]);
        }
    });
    let mut p = RunningCostProblem::new(
        "constrained_lqr",
        horizon,
        vec![0.0; 6],
        ControlBox::cube(2, -1.0, 1.0)?,
        field,
        running,
    );
    p.jacobian_x = Some(jac);
    p.running_cost_grad_x = Some(running_grad);
    augment_mayer(p)
}

/// Physical parameters of the quadrotor model.
#[derive(Debug, Clone)]
pub struct QuadrotorParams {
    pub horizon: f64,
    pub target: Vec<f64>,
    pub mass: f64,
    pub inertia_x: f64,
    pub inertia_y: f64,
    pub drag: f64,
    pub thrust_gain: f64,
    pub arm_length: f64,
    pub eta: f64,
    pub gravity: bool,
    pub g: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            target: vec![-1.2, -1.0, -1.0],
            mass: 1.3,
            inertia_x: 0.0605,
            inertia_y: 0.0605,
            drag: 0.1,
            thrust_gain: 1.0,
            arm_length: 0.25,
            eta: 0.05,
            gravity: false,
            g: 9.8,
        }
    }
}

// State order: positions (x1, x2, x3), Euler angles (x4, x5, x6), then the
// six velocities in the same order.
pub fn quadrotor(params: &QuadrotorParams) -> Result<Problem> {
    if params.target.len() != 3 {
        return Err(Error::InvalidProblem("quadrotor target must have 3 components".into()));
    }
    let damp = params.drag / params.mass;
    let lift = params.thrust_gain / params.mass;
    let roll = params.thrust_gain * params.arm_length / params.inertia_x;
    let pitch = params.thrust_gain * params.arm_length / params.inertia_y;
    let yaw = params.thrust_gain / (params.inertia_x + params.inertia_y);
    let g = if params.gravity { params.g } else { 0.0 };

    let field: FieldFn = Arc::new(move |_t, x, u, out| {
        let total = u[0] + u[1] + u[2] + u[3];
        let (s4, c4) = x[3].sin_cos();
        let (s5, c5) = x[4].sin_cos();
        out[..6].copy_from_slice(&x[6..12]);
        out[6] = -damp * x[6] + lift * s5 * total;
        out[7] = -damp * x[7] + lift * s4 * c5 * total;
        out[8] = -damp * x[8] + lift * c4 * c5 * total - g;
        out[9] = -x[10] * x[11] + roll * (u[1] - u[3]);
        out[10] = x[10] * x[11] + pitch * (u[2] - u[0]);
        out[11] = yaw * (u[0] - u[1] + u[2] - u[3]);
    });
    let jac: JacobianFn = Arc::new(move |_t, x, u, out| {
        const N: usize = 12;
        out.iter_mut().for_each(|v| *v = 0.0);
        let total = u[0] + u[1] + u[2] + u[3];
        let (s4, c4) = x[3].sin_cos();
        let (s5, c5) = x[4].sin_cos();
        for i in 0..6 {
            out[i * N + 6 + i] = 1.0;
        }
        out[6 * N + 6] = -damp;
        out[6 * N + 4] = lift * c5 * total;
        out[7 * N + 7] = -damp;
        out[7 * N + 3] = lift * c4 * c5 * total;
        out[7 * N + 4] = -lift * s4 * s5 * total;
        out[8 * N + 8] = -damp;
        out[8 * N + 3] = -lift * s4 * c5 * total;
        out[8 * N + 4] = -lift * c4 * s5 * total;
        out[9 * N + 10] = -x[11];
        out[9 * N + 11] = -x[10];
        out[10 * N + 10] = x[11];
        out[10 * N + 11] = x[10];
    });
    let target = params.target.clone();
    let eta = params.eta;
    let running: RunningCostFn = Arc::new(move |_t, x, u| {
        let position: f64 = (0..3).map(|i| (x[i] - target[i]).powi(2)).sum();
        let attitude: f64 = (3..6).map(|i| x[i].sin().powi(2)).sum();
        let effort = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        position + attitude + eta * effort
    });
    let target = params.target.clone();
    let running_grad: RunningCostGradientFn = Arc::new(move |_t, x, _u, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..3 {
            out[i] = 2.0 * (x[i] - target[i]);
        }
        for i in 3..6 {
            out[i] = (2.0 * x[i]).sin();
        }
    });
    let mut p = RunningCostProblem::new(
        "quadrotor",
        params.horizon,
        vec![0.0; 12],
        ControlBox::cube(4, 0.0, 2.0)?,
        field,
        running,
    );
    p.jacobian_x = Some(jac);
    p.running_cost_grad_x = Some(running_grad);
    augment_mayer(p)
}
