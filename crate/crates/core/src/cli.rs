//! Run configuration and the file-emitting batch runs behind the binary.
//!
//! A run is described by a TOML file whose sections mirror [`RunConfig`].
//! Every field has a default and unknown keys are rejected. `--set` style
//! overrides address fields by dotted path (`solver.max_iters=50`) and take
//! TOML literals, falling back to a bare string.
//!
//! Numeric CSV output uses a header row and 17 significant digits, so values
//! round-trip exactly and reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::control::{RelaxedControl, TimeGrid};
use crate::descent::{solve, SolverConfig, Termination};
use crate::optimality::pontryagin_gap;
use crate::problem::{builtin, parabola_field, Overrides, Problem};
use crate::sampling::{hull_points, sample_grid, sample_uniform, AtomSet};
use crate::synthesis::{chattering_error, haar_filter, pwm, InputSchedule, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// One of `toy_abs`, `constrained_lqr`, `quadrotor`.
    pub name: String,
    pub overrides: Overrides,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            name: "toy_abs".into(),
            overrides: Overrides::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomMode {
    Grid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomsSection {
    pub mode: AtomMode,
    /// Grid points per input axis; defaults depend on the problem.
    pub per_axis: Option<Vec<usize>>,
    /// Number of Monte Carlo atoms.
    pub count: usize,
    pub seed: u64,
}

impl Default for AtomsSection {
    fn default() -> Self {
        Self {
            mode: AtomMode::Grid,
            per_axis: None,
            count: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    /// PWM period; defaults to the grid step.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullField {
    /// `f(x, u) = x + (u² + 1, u)` on `U = [−1, 1]`.
    Parabola,
    /// The configured problem with the configured atoms.
    Problem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HullSection {
    pub field: HullField,
    /// State at which the field is sampled; defaults to the initial state.
    pub point: Option<Vec<f64>>,
    pub t: f64,
    /// Grid size for the parabola field.
    pub per_axis: usize,
}

impl Default for HullSection {
    fn default() -> Self {
        Self {
            field: HullField::Parabola,
            point: None,
            t: 0.0,
            per_axis: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub atoms: AtomsSection,
    pub solver: SolverConfig,
    pub synthesis: SynthesisSection,
    pub hull: HullSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSection::default(),
            atoms: AtomsSection::default(),
            solver: SolverConfig::default(),
            synthesis: SynthesisSection::default(),
            hull: HullSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn default_per_axis(problem: &str, m: usize) -> Vec<usize> {
    match problem {
        "toy_abs" => vec![15],
        "constrained_lqr" => vec![9, 9],
        "quadrotor" => vec![5; 4],
        _ => vec![5; m],
    }
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides and fills in the
    /// problem-dependent defaults.
    pub fn load(text: &str, sets: &[String]) -> anyhow::Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("parsing config")?;
        for set in sets {
            apply_set(&mut table, set)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid config")?;
        cfg.resolved()
    }

    pub fn from_file(path: Option<&Path>, sets: &[String]) -> anyhow::Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        Self::load(&text, sets)
    }

    /// Fills every optional field so the config can be re-run verbatim.
    pub fn resolved(mut self) -> anyhow::Result<Self> {
        self.solver.validate()?;
        let p = self.build_problem()?;
        if self.atoms.per_axis.is_none() {
            self.atoms.per_axis = Some(default_per_axis(&self.problem.name, p.input_dim()));
        }
        if self.synthesis.delta.is_none() {
            self.synthesis.delta = Some(p.horizon() / self.solver.grid_intervals as f64);
        }
        if self.hull.point.is_none() && self.hull.field == HullField::Problem {
            self.hull.point = Some(p.initial_state().to_vec());
        }
        Ok(self)
    }

    pub fn build_problem(&self) -> anyhow::Result<Problem> {
        Ok(builtin(&self.problem.name, &self.problem.overrides)?)
    }

    pub fn build_atoms(&self, p: &Problem) -> anyhow::Result<AtomSet> {
        let bx = p.control_box();
        Ok(match self.atoms.mode {
            AtomMode::Grid => {
                let per_axis = match &self.atoms.per_axis {
                    Some(v) => v.clone(),
                    None => default_per_axis(&self.problem.name, p.input_dim()),
                };
                sample_grid(bx, &per_axis)?
            }
            AtomMode::Uniform => sample_uniform(bx, self.atoms.count, self.atoms.seed)?,
        })
    }

    pub fn grid(&self, p: &Problem) -> anyhow::Result<TimeGrid> {
        Ok(TimeGrid::new(p.horizon(), self.solver.grid_intervals)?)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_set(table: &mut toml::Table, set: &str) -> anyhow::Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| anyhow!("override {set:?} is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override {set:?} has an empty key segment");
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {set:?}: {part} is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_literal(raw.trim()));
    Ok(())
}

/// How a run ended, for the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Solved(Termination),
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed | RunStatus::Solved(Termination::Converged) => 0,
            RunStatus::Solved(_) => 2,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(first: &[&str], prefix: &str, count: usize) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain((1..=count).map(|i| format!("{prefix}_{i}")))
        .collect()
}

fn write_csv(path: &Path, head: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(&head)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), i + 1))?;
        if row.len() != head.len() {
            bail!("{}: row {} has {} fields, header has {}", path.display(), i + 1, row.len(), head.len());
        }
        rows.push(row);
    }
    Ok((head, rows))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_atoms(path: &Path, atoms: &AtomSet) -> anyhow::Result<()> {
    write_csv(
        path,
        header(&["index"], "u", atoms.dim()),
        atoms
            .iter()
            .enumerate()
            .map(|(i, u)| std::iter::once(i.to_string()).chain(u.iter().map(|v| num(*v))).collect()),
    )
}

/// Reads `atoms.csv` as written by [`run_solve`].
pub fn read_atoms(path: &Path) -> anyhow::Result<AtomSet> {
    let (_, rows) = read_csv(path)?;
    for (i, row) in rows.iter().enumerate() {
        if row.first().copied() != Some(i as f64) {
            bail!("{}: atom indices must run 0, 1, 2, ...", path.display());
        }
    }
    let atoms: Vec<Vec<f64>> = rows.into_iter().map(|r| r[1..].to_vec()).collect();
    Ok(AtomSet::from_atoms(&atoms)?)
}

/// Reads `weights.csv` (node time, then one column per atom).
pub fn read_weights(path: &Path, p: &Problem, atoms: Arc<AtomSet>) -> anyhow::Result<RelaxedControl> {
    let (head, rows) = read_csv(path)?;
    if head.len() != atoms.len() + 1 {
        bail!("{}: {} weight columns for {} atoms", path.display(), head.len() - 1, atoms.len());
    }
    if rows.is_empty() {
        bail!("{}: no weight rows", path.display());
    }
    let grid = TimeGrid::new(p.horizon(), rows.len())?;
    for (k, row) in rows.iter().enumerate() {
        if (row[0] - grid.node(k)).abs() > 1e-9 * p.horizon().max(1.0) {
            bail!("{}: row {} has time {}, expected {}", path.display(), k + 1, row[0], grid.node(k));
        }
    }
    let flat = rows.into_iter().flat_map(|r| r.into_iter().skip(1)).collect();
    RelaxedControl::from_weights(grid, atoms, flat).with_context(|| format!("{}: bad weights", path.display()))
}

/// Reads `schedule.csv`; each segment gets its own atom built from the
/// listed input value.
pub fn read_schedule(path: &Path, horizon: f64, input_dim: usize) -> anyhow::Result<InputSchedule> {
    let (head, rows) = read_csv(path)?;
    if head.len() != 3 + input_dim {
        bail!("{}: expected t_start, t_end, atom_index and {input_dim} input columns", path.display());
    }
    let values: Vec<Vec<f64>> = rows.iter().map(|r| r[3..].to_vec()).collect();
    let segments = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Segment {
            t_start: r[0],
            t_end: r[1],
            atom: i,
        })
        .collect();
    let atoms = AtomSet::from_atoms(&values).with_context(|| format!("{}: bad input values", path.display()))?;
    InputSchedule::new(horizon, Arc::new(atoms), segments).with_context(|| format!("{}: bad schedule", path.display()))
}

fn write_schedule(path: &Path, s: &InputSchedule) -> anyhow::Result<()> {
    write_csv(
        path,
        header(&["t_start", "t_end", "atom_index"], "u", s.atoms().dim()),
        s.segments().iter().map(|seg| {
            [num(seg.t_start), num(seg.t_end), seg.atom.to_string()]
                .into_iter()
                .chain(s.atoms().atom(seg.atom).iter().map(|v| num(*v)))
                .collect()
        }),
    )
}

/// Solves the configured problem and writes `atoms.csv`, `trajectory.csv`,
/// `weights.csv`, `log.jsonl` and `summary.json` into the output directory.
///
/// `summary.json` is written even when the solver aborts.
pub fn run_solve(cfg: &RunConfig) -> anyhow::Result<RunStatus> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let start = Instant::now();
    let result = (|| {
        let p = cfg.build_problem()?;
        let atoms = Arc::new(cfg.build_atoms(&p)?);
        write_atoms(&out.join("atoms.csv"), &atoms)?;
        Ok::<_, anyhow::Error>(solve(&p, atoms, &cfg.solver)?)
    })();
    let r = match result {
        Ok(r) => r,
        Err(e) => {
            write_json(
                &out.join("summary.json"),
                &json!({
                    "config": cfg,
                    "termination": "error",
                    "error": format!("{e:#}"),
                    "runtime_s": start.elapsed().as_secs_f64(),
                }),
            )?;
            return Err(e);
        }
    };

    let grid = *r.control.grid();
    let n = r.trajectory.final_state().len();
    write_csv(
        &out.join("trajectory.csv"),
        header(&["t"], "x", n),
        r.trajectory
            .states()
            .enumerate()
            .map(|(k, x)| std::iter::once(num(grid.node(k))).chain(x.iter().map(|v| num(*v))).collect()),
    )?;
    write_csv(
        &out.join("weights.csv"),
        header(&["t"], "w", r.control.n_atoms()),
        (0..grid.intervals())
            .map(|k| std::iter::once(num(grid.node(k))).chain(r.control.row(k).iter().map(|v| num(*v))).collect()),
    )?;
    let mut log = fs::File::create(out.join("log.jsonl"))?;
    for rec in &r.log.records {
        writeln!(log, "{}", serde_json::to_string(rec)?)?;
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "config": cfg,
            "termination": r.log.termination,
            "final_cost": r.final_cost(),
            "final_theta": r.final_theta(),
            "iterations": r.log.iterations(),
            "final_state": r.trajectory.final_state(),
            "runtime_s": start.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(RunStatus::Solved(r.log.termination))
}

/// Turns a weights file into a PWM schedule.
///
/// Writes `schedule.csv`, `input_trace.csv` (the input sampled on a grid 16
/// times finer than the period) and `chatter.json` (trajectory error against
/// the relaxed control at `Δ`, `Δ/2` and `Δ/4`). The atoms are read from
/// `atoms.csv` next to the weights file.
pub fn run_synthesize(cfg: &RunConfig, weights: Option<&Path>) -> anyhow::Result<RunStatus> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let weights = weights.map(Path::to_path_buf).unwrap_or_else(|| out.join("weights.csv"));
    let atoms_path = weights.parent().unwrap_or(Path::new(".")).join("atoms.csv");
    let p = cfg.build_problem()?;
    let atoms = Arc::new(read_atoms(&atoms_path)?);
    if atoms.dim() != p.input_dim() {
        bail!("{}: atoms have dimension {}, problem has {} inputs", atoms_path.display(), atoms.dim(), p.input_dim());
    }
    let rc = read_weights(&weights, &p, atoms.clone())?;
    let delta = cfg.synthesis.delta.unwrap_or_else(|| rc.grid().dt());

    let schedule_at = |d: f64| -> anyhow::Result<InputSchedule> { Ok(pwm(&haar_filter(&rc, d)?, atoms.clone(), d)?) };
    let schedule = schedule_at(delta)?;
    write_schedule(&out.join("schedule.csv"), &schedule)?;

    let samples = 16 * (p.horizon() / delta).round().max(1.0) as usize;
    write_csv(
        &out.join("input_trace.csv"),
        header(&["t"], "u", atoms.dim()),
        (0..=samples).map(|j| {
            let t = if j == samples { p.horizon() } else { j as f64 * p.horizon() / samples as f64 };
            std::iter::once(num(t))
                .chain(atoms.atom(schedule.atom_at(t)).iter().map(|v| num(*v)))
                .collect()
        }),
    )?;

    let mut levels = Vec::new();
    for d in [delta, delta / 2.0, delta / 4.0] {
        let s = schedule_at(d)?;
        let err = chattering_error(&p, &rc, &s, cfg.solver.substeps)?;
        levels.push(json!({ "delta": d, "error": err, "segments": s.segments().len() }));
    }
    write_json(&out.join("chatter.json"), &json!({ "levels": levels }))?;
    Ok(RunStatus::Completed)
}

/// Pontryagin gap of a schedule file against the configured atoms; writes
/// `gap.json` and returns the gap.
pub fn run_gap(cfg: &RunConfig, schedule: Option<&Path>) -> anyhow::Result<f64> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let path = schedule.map(Path::to_path_buf).unwrap_or_else(|| out.join("schedule.csv"));
    let p = cfg.build_problem()?;
    let s = read_schedule(&path, p.horizon(), p.input_dim())?;
    let atoms = cfg.build_atoms(&p)?;
    let report = pontryagin_gap(&p, &s, &atoms, &cfg.grid(&p)?, cfg.solver.substeps)?;

    let coords = |a: Option<usize>| a.map(|i| atoms.atom(i).to_vec());
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "t": r.t,
                "best_atom": r.best_atom,
                "best_input": coords(r.best_atom),
                "best_value": r.best_value,
                "current_value": r.current_value,
                "violation": r.violation(),
            })
        })
        .collect();
    let worst = report
        .rows
        .iter()
        .filter(|r| r.best_atom.is_some())
        .min_by(|a, b| a.violation().total_cmp(&b.violation()))
        .map(|r| json!({ "t": r.t, "atom": r.best_atom, "input": coords(r.best_atom), "violation": r.violation() }));
    write_json(&out.join("gap.json"), &json!({ "gap": report.gap, "worst": worst, "rows": rows }))?;
    Ok(report.gap)
}

/// Samples the vector-field set at one state and writes `hull.csv` with
/// columns `t`, the state, the point index, the field value, an on-hull flag
/// and the counter-clockwise hull position (empty when no hull is computed).
pub fn run_hull(cfg: &RunConfig) -> anyhow::Result<RunStatus> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let (p, atoms) = match cfg.hull.field {
        HullField::Parabola => {
            let p = parabola_field()?;
            let atoms = sample_grid(p.control_box(), &[cfg.hull.per_axis])?;
            (p, atoms)
        }
        HullField::Problem => {
            let p = cfg.build_problem()?;
            let atoms = cfg.build_atoms(&p)?;
            (p, atoms)
        }
    };
    let x = cfg.hull.point.clone().unwrap_or_else(|| p.initial_state().to_vec());
    if x.len() != p.state_dim() {
        bail!("hull point has {} components, state has {}", x.len(), p.state_dim());
    }
    let data = hull_points(&p, cfg.hull.t, &x, &atoms)?;
    let order: Option<Vec<Option<usize>>> = data.hull_indices.as_ref().map(|h| {
        let mut pos = vec![None; data.points.len()];
        for (j, &i) in h.iter().enumerate() {
            pos[i] = Some(j);
        }
        pos
    });
    let mut head = header(&["t"], "x", x.len());
    head.push("point".into());
    head.extend((1..=x.len()).map(|i| format!("f_{i}")));
    head.extend(["on_hull".to_string(), "hull_order".to_string()]);
    write_csv(
        &out.join("hull.csv"),
        head,
        data.points.iter().enumerate().map(|(i, f)| {
            let (flag, pos) = match &order {
                Some(o) => (
                    u8::from(o[i].is_some()).to_string(),
                    o[i].map(|j| j.to_string()).unwrap_or_default(),
                ),
                None => (String::new(), String::new()),
            };
            std::iter::once(num(cfg.hull.t))
                .chain(x.iter().map(|v| num(*v)))
                .chain(std::iter::once(i.to_string()))
                .chain(f.iter().map(|v| num(*v)))
                .chain([flag, pos])
                .collect()
        }),
    )?;
    Ok(RunStatus::Completed)
}
