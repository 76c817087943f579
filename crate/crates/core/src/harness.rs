//! JSON experiment configs, the preset registry, deterministic runs and
//! report emission.
//!
//! A config names a preset in `experiment`; every other field is optional and
//! falls back to that preset's defaults, except `seed`, which must be given.
//! Reports carry no wall-clock data, so a fixed config and seed reproduce the
//! emitted files byte for byte.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{gradient_magnitude, Domain, Field, GraphGeometry, GridSpec, Trajectory};
use crate::heat_kernel::{
    fit_norm_prefactor, gaussian_lower_bound_check, kernel_evolve, kernel_moment, kernel_norm_report, LowerBoundOptions,
};
use crate::interp::{
    calibrate_constant, check_exponents, interpolation_check, interpolation_measure, random_case, BallCover,
    InterpOptions,
};
use crate::rd::{
    general_solve, lp_energy, lp_energy_report, observed_orders, quadratic_solve, running_integral, skt_auxiliary,
    skt_solve, structural_report, AuxOptions, GeneralSystemSpec, RunSpec, SktParams, StructuralOptions,
};
use crate::report::{inf_f64, write_rows_csv, CheckRow, EstimateReport, Num, SCHEMA_VERSION};
use crate::rough::{
    calibrate_holder, comparison_pair, conjugate, explicit_constants, fit_cut_ball_prefactor, holder_bound_row,
    holder_sample, iteration_trace, oscillation_decay_check, random_rough_case, solve_rough, supremum_bound_check,
    ConstantsBundle, HolderSample, KernelPrefactors, RandomCaseOptions, RoughRun, TracerInputs,
};

/// Registered presets with a one-line description.
pub const PRESETS: [(&str, &str); 6] = [
    (
        "skt",
        "SKT cross-diffusion run, auxiliary variables, rough-coefficient and interpolation checks on w",
    ),
    (
        "quad4",
        "quadratic four-species system: mass, μ bounds, Δw identity and w evolution residuals",
    ),
    (
        "general",
        "general reaction network: structural (A1)-(A3) checks and the triangular transform",
    ),
    (
        "heatkernel",
        "Neumann heat kernel decay slopes, mass, first moment and the Gaussian lower bound",
    ),
    (
        "oscdecay",
        "randomized rough-coefficient oscillation decay, comparison and sandwich orderings",
    ),
    (
        "interp",
        "one-sided interpolation: calibrate on one case set, test on a fresh one",
    ),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    /// Cells per axis.
    pub n: usize,
    /// Side length of the box `[0, extent]^dim`.
    pub extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// `None` picks the preset's horizon.
    pub t_end: Option<f64>,
    /// `None` selects 90% of the stability limit.
    pub dt: Option<f64>,
    /// Stored frames; `None` uses a multiple of `n`.
    pub frames: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub skt: SktParams,
    /// Diffusion rates of the quadratic or general system.
    pub diffusion: Vec<f64>,
    /// Built-in network for `general`: `quad4`, `uum`, `s1_2s2` or `p_q_2s3`.
    pub network: String,
    /// Stoichiometric coefficients of `uum` (`b_i`) or `p_q_2s3` (`[p, q]`).
    pub stoichiometry: Vec<u32>,
    /// Inline network; overrides `network`.
    pub general: Option<GeneralSystemSpec>,
    /// Frame cadence of `w̃` in the SKT pipeline.
    pub w_tilde_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateParams {
    #[serde(with = "inf_f64")]
    pub p: f64,
    /// `None` gives `2(3−α)/(2−α)` in `interp` and `p` elsewhere.
    pub q: Option<Num>,
    pub alpha: f64,
    pub a0: f64,
    pub c0: f64,
    /// Cylinder radius, lower-bound ball radius or covering cap, by preset.
    #[serde(rename = "R")]
    pub r: f64,
    /// Overrides the cylinder aspect `β = 49a₀/(200d)` when set.
    pub beta: Option<f64>,
    pub eps: f64,
    /// Frozen energy constant; `None` reports the implied constant.
    pub c_p: Option<f64>,
    /// Calibration headroom for fitted constants.
    pub headroom: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Randomized cases checked (per forcing mode in `oscdecay`).
    pub cases: usize,
    /// Calibration cases, disjoint from the checked ones.
    pub calibration: usize,
    /// Comparison pairs in `oscdecay`.
    pub pairs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub system: SystemConfig,
    pub estimate: EstimateParams,
    pub sampling: SamplingConfig,
    pub seed: u64,
    /// Extra runs at `n·2^k`, `k = 1..=refine`.
    pub refine: usize,
    pub output: OutputConfig,
}

fn preset_names() -> String {
    PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
}

/// Default config of a preset.
pub fn preset_config(name: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        experiment: name.to_string(),
        grid: GridConfig {
            dim: 2,
            n: 32,
            extent: 1.0,
        },
        time: TimeConfig {
            t_end: None,
            dt: None,
            frames: None,
        },
        system: SystemConfig {
            skt: SktParams::default(),
            diffusion: Vec::new(),
            network: String::new(),
            stoichiometry: Vec::new(),
            general: None,
            w_tilde_every: None,
        },
        estimate: EstimateParams {
            p: 4.0,
            q: None,
            alpha: 0.3,
            a0: 1.0,
            c0: 2.0,
            r: 0.25,
            beta: None,
            eps: 0.25,
            c_p: None,
            headroom: 2.0,
        },
        sampling: SamplingConfig {
            cases: 0,
            calibration: 0,
            pairs: 0,
        },
        seed: 0,
        refine: 0,
        output: OutputConfig {
            dir: PathBuf::from("lab-out"),
            formats: vec![Format::Json, Format::Csv],
        },
    };
    match name {
        "skt" => cfg.time.t_end = Some(1.0),
        "quad4" => {
            cfg.time.t_end = Some(0.5);
            cfg.system.diffusion = vec![0.1, 0.4, 1.0, 2.0];
        }
        "general" => {
            cfg.time.t_end = Some(0.5);
            cfg.system.network = "uum".into();
            cfg.system.stoichiometry = vec![1, 2];
            cfg.system.diffusion = vec![0.3, 0.6, 1.0, 1.4];
        }
        "heatkernel" => {
            cfg.grid.n = 96;
            cfg.time.t_end = Some(0.1);
            cfg.estimate.r = 1.0;
        }
        "oscdecay" => {
            cfg.grid.n = 48;
            cfg.estimate.r = 0.5;
            cfg.sampling = SamplingConfig {
                cases: 20,
                calibration: 4,
                pairs: 20,
            };
        }
        "interp" => {
            cfg.grid.dim = 3;
            cfg.estimate.p = 2.0;
            cfg.estimate.r = 0.4;
            cfg.sampling = SamplingConfig {
                cases: 20,
                calibration: 20,
                pairs: 0,
            };
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}`; valid presets: {}",
                preset_names()
            )))
        }
    }
    Ok(cfg)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parse a config, filling omitted fields from the named preset.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text)?;
        let obj = raw
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let name = obj.get("experiment").and_then(Value::as_str).ok_or_else(|| {
            Error::Config(format!(
                "field `experiment` is required; valid presets: {}",
                preset_names()
            ))
        })?;
        if !obj.contains_key("seed") {
            return Err(Error::Config("field `seed` is required".into()));
        }
        let mut base = serde_json::to_value(preset_config(name)?)?;
        merge(&mut base, raw);
        let cfg: ExperimentConfig =
            serde_json::from_value(base).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn q(&self) -> f64 {
        match self.estimate.q {
            Some(q) => q.0,
            None if self.experiment == "interp" => 2.0 * (3.0 - self.estimate.alpha) / (2.0 - self.estimate.alpha),
            None => self.estimate.p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if !PRESETS.iter().any(|p| p.0 == self.experiment) {
            return bad(
                "experiment",
                format!(
                    "unknown preset `{}`; valid presets: {}",
                    self.experiment,
                    preset_names()
                ),
            );
        }
        let g = &self.grid;
        if !(1..=3).contains(&g.dim) {
            return bad("grid.dim", format!("{} must be 1, 2 or 3", g.dim));
        }
        if g.n < 4 {
            return bad("grid.n", format!("{} must be at least 4", g.n));
        }
        if !(g.extent.is_finite() && g.extent > 0.0) {
            return bad("grid.extent", format!("{} must be positive", g.extent));
        }
        if let Some(t) = self.time.t_end {
            if !(t.is_finite() && t > 0.0) {
                return bad("time.t_end", format!("{t} must be positive"));
            }
        }
        if let Some(dt) = self.time.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad("time.dt", format!("{dt} must be positive"));
            }
        }
        if let Some(f) = self.time.frames {
            if f < 2 {
                return bad("time.frames", format!("{f} must be at least 2"));
            }
        }
        let e = &self.estimate;
        if e.p <= 1.0 {
            return bad("estimate.p", format!("{} must exceed 1", e.p));
        }
        if self.q() < 1.0 {
            return bad("estimate.q", format!("{} must be at least 1", self.q()));
        }
        if !(0.0..1.0).contains(&e.alpha) {
            return bad("estimate.alpha", format!("{} must lie in [0, 1)", e.alpha));
        }
        if !(e.a0.is_finite() && e.a0 > 0.0) {
            return bad("estimate.a0", format!("{} must be positive", e.a0));
        }
        if !(e.c0.is_finite() && e.c0 >= 1.0) {
            return bad("estimate.c0", format!("{} must be at least 1", e.c0));
        }
        if !(e.r.is_finite() && e.r > 0.0) {
            return bad("estimate.R", format!("{} must be positive", e.r));
        }
        if let Some(b) = e.beta {
            if !(b.is_finite() && b > 0.0) {
                return bad("estimate.beta", format!("{b} must be positive"));
            }
        }
        if !(e.eps > 0.0 && e.eps < 0.5) {
            return bad("estimate.eps", format!("{} must lie in (0, 1/2)", e.eps));
        }
        if !(e.headroom >= 1.0) {
            return bad("estimate.headroom", format!("{} must be at least 1", e.headroom));
        }
        match self.experiment.as_str() {
            "quad4" if self.system.diffusion.len() != 4 => {
                return bad(
                    "system.diffusion",
                    format!("quad4 needs 4 rates, got {}", self.system.diffusion.len()),
                );
            }
            "oscdecay" | "interp" if self.sampling.cases == 0 || self.sampling.calibration == 0 => {
                return bad("sampling", "cases and calibration must be positive".into());
            }
            "interp" => {
                check_exponents(g.dim, e.p, self.q(), e.alpha)
                    .or_else(|err| bad("estimate.p/q/alpha", err.to_string()))?;
            }
            "oscdecay" => {
                if let Err(err) = explicit_constants(g.dim, e.p, self.q(), e.a0, e.c0) {
                    return bad("estimate", err.to_string());
                }
            }
            _ => {}
        }
        if self.system.diffusion.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad("system.diffusion", "rates must be positive".into());
        }
        if let Err(err) = self.system.skt.validate() {
            return bad("system.skt", err.to_string());
        }
        Ok(())
    }

    /// Same experiment on a grid refined `2^k` times.
    pub fn refined(&self, k: usize) -> ExperimentConfig {
        let mut c = self.clone();
        c.grid.n = self.grid.n << k;
        c.refine = 0;
        c.time.frames = self.time.frames.map(|f| f << k);
        c
    }
}

/// Checks of one grid level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub n: usize,
    pub checks: Vec<EstimateReport>,
}

/// `lhs` of one residual check across refinement levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub report: String,
    pub check: String,
    pub n: Vec<usize>,
    pub values: Vec<Num>,
    pub orders: Vec<Num>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config: ExperimentConfig,
    /// Every constants bundle the checks used.
    pub constants: Vec<ConstantsBundle>,
    pub checks: Vec<EstimateReport>,
    pub refinement: Vec<RefinementLevel>,
    pub convergence: Vec<ConvergenceRow>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(EstimateReport::passed)
            && self
                .refinement
                .iter()
                .all(|l| l.checks.iter().all(EstimateReport::passed))
    }

    pub fn row_count(&self) -> usize {
        self.checks.iter().map(|r| r.rows.len()).sum::<usize>()
            + self
                .refinement
                .iter()
                .flat_map(|l| &l.checks)
                .map(|r| r.rows.len())
                .sum::<usize>()
    }

    /// Base checks followed by the refinement levels, names tagged with `@n`.
    pub fn flat_reports(&self) -> Vec<EstimateReport> {
        let mut out = self.checks.clone();
        for level in &self.refinement {
            for r in &level.checks {
                let mut r = r.clone();
                r.name = format!("{}@n{}", r.name, level.n);
                out.push(r);
            }
        }
        out
    }

    pub fn find(&self, report: &str, check: &str) -> Option<&CheckRow> {
        self.checks
            .iter()
            .filter(|r| r.name == report)
            .flat_map(|r| &r.rows)
            .find(|row| row.check == check)
    }
}

struct Outcome {
    constants: Vec<ConstantsBundle>,
    checks: Vec<EstimateReport>,
}

/// Run a validated config, plus its refinement companions.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let base = dispatch(cfg)?;
    let mut refinement = Vec::new();
    for k in 1..=cfg.refine {
        let rc = cfg.refined(k);
        let out = dispatch(&rc)?;
        refinement.push(RefinementLevel {
            n: rc.grid.n,
            checks: out.checks,
        });
    }
    let convergence = convergence_rows(cfg.grid.n, &base.checks, &refinement);
    Ok(RunReport {
        schema: SCHEMA_VERSION.to_string(),
        config: cfg.clone(),
        constants: base.constants,
        checks: base.checks,
        refinement,
        convergence,
    })
}

fn convergence_rows(n0: usize, base: &[EstimateReport], levels: &[RefinementLevel]) -> Vec<ConvergenceRow> {
    if levels.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for rep in base {
        for row in rep.rows.iter().filter(|r| r.check.contains("residual")) {
            let mut n = vec![n0];
            let mut values = vec![row.lhs.0];
            for level in levels {
                let hit = level
                    .checks
                    .iter()
                    .filter(|r| r.name == rep.name)
                    .flat_map(|r| &r.rows)
                    .find(|r| r.check == row.check);
                if let Some(r) = hit {
                    n.push(level.n);
                    values.push(r.lhs.0);
                }
            }
            if values.len() == levels.len() + 1 {
                out.push(ConvergenceRow {
                    report: rep.name.clone(),
                    check: row.check.clone(),
                    n,
                    orders: observed_orders(&values).into_iter().map(Num).collect(),
                    values: values.into_iter().map(Num).collect(),
                });
            }
        }
    }
    out
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment.as_str() {
        "skt" => run_skt(cfg),
        "quad4" => run_quad4(cfg),
        "general" => run_general(cfg),
        "heatkernel" => run_heatkernel(cfg),
        "oscdecay" => run_oscdecay(cfg),
        "interp" => run_interp(cfg),
        other => Err(Error::Config(format!(
            "unknown preset `{other}`; valid presets: {}",
            preset_names()
        ))),
    }
}

fn domain(cfg: &ExperimentConfig) -> Result<Arc<Domain>> {
    Domain::neumann_box(GridSpec::cube(cfg.grid.dim, 0.0, cfg.grid.extent, cfg.grid.n)?)
}

fn run_spec(cfg: &ExperimentConfig, frames_per_cell: usize) -> RunSpec {
    RunSpec {
        t_end: cfg.time.t_end.unwrap_or(1.0),
        dt: cfg.time.dt,
        frames: cfg.time.frames.unwrap_or(frames_per_cell * cfg.grid.n),
    }
}

/// `base + amp · Π cos(k_a π x_a / L)`: smooth, positive and Neumann-compatible.
fn cosine_field(dom: &Arc<Domain>, extent: f64, base: f64, rng: &mut ChaCha8Rng) -> Result<Field> {
    let d = dom.dim();
    let amp = base * rng.gen_range(0.3..0.5);
    let k: Vec<f64> = (0..d).map(|_| rng.gen_range(0..3) as f64).collect();
    Field::from_fn(dom, |x| {
        base + amp * (0..d).map(|a| (k[a] * PI * x[a] / extent).cos()).product::<f64>()
    })
}

fn info(check: &str, value: f64) -> CheckRow {
    CheckRow::with_pass(check, value, f64::INFINITY, value.is_finite()).note("informative")
}

fn run_skt(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = domain(cfg)?;
    let params = cfg.system.skt;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u0 = cosine_field(&dom, cfg.grid.extent, 1.0, &mut rng)?;
    let v0 = cosine_field(&dom, cfg.grid.extent, 0.6, &mut rng)?;
    let spec = run_spec(cfg, 4);
    let run = skt_solve(&params, &u0, &v0, spec)?;
    let every = cfg.system.w_tilde_every.unwrap_or((spec.frames / 8).max(1));
    let aux = skt_auxiliary(&run, AuxOptions { w_tilde_every: every })?;
    let grid = dom.grid();

    let mut rep = EstimateReport::new("skt.solution");
    let floor = run.u.min().min(run.v.min());
    rep.push(
        CheckRow::le("positivity", -floor, 1e-8)
            .on_grid(grid)
            .param("dt", run.dt)
            .param("steps", run.steps as f64),
    );
    rep.push(CheckRow::le("v_ceiling", run.v.max(), run.v_ceiling + 1e-8));
    let mass = crate::rd::integral(&dom, u0.values()) + crate::rd::integral(&dom, v0.values());
    rep.push(CheckRow::le("clip_mass", run.clip.mass, 1e-8 * mass).param("events", run.clip.events as f64));

    let mut aux_rep = EstimateReport::new("skt.auxiliary");
    aux_rep.push(CheckRow::le("m_nonnegative", -aux.m_min, 0.0));
    aux_rep.push(
        CheckRow::le("nu_lower", aux.nu_bounds[0] - aux.nu_range[0], 1e-12)
            .param("nu_min", aux.nu_range[0])
            .param("bound", aux.nu_bounds[0])
            .param("guarded", aux.nu_guarded as f64),
    );
    aux_rep.push(
        CheckRow::le("nu_upper", aux.nu_range[1] - aux.nu_bounds[1], 1e-12)
            .param("nu_max", aux.nu_range[1])
            .param("bound", aux.nu_bounds[1]),
    );
    aux_rep.push(CheckRow::le("w_nondecreasing", aux.w_decrease, 0.0));
    aux_rep.push(info("w_evolution_residual", aux.residual_max).on_grid(grid));
    if let Some(m) = aux.w_tilde_margin {
        aux_rep.push(info("w_tilde_one_sided_margin", m).note("min(Δw̃ − u) over full-stencil nodes"));
    }

    let energy = lp_energy(&run, 1.0)?;
    let energy_rep = match cfg.estimate.c_p {
        Some(c) => lp_energy_report(&energy, c),
        None => {
            let mut r = EstimateReport::new("rd.lp_energy");
            r.push(info("lp_energy_implied_constant", energy.ratio()).param("moment", energy.moment));
            r
        }
    };

    // w solves a ∂_t w − Δw = u_init + r_u ∫u with a = 1/ν.
    let (a0, c0) = (1.0 / aux.nu_bounds[1], aux.nu_bounds[1] / aux.nu_bounds[0]);
    let d = dom.dim();
    let q = cfg.q();
    let mut consts = explicit_constants(d, cfg.estimate.p, q, a0, c0)?;
    if let Some(b) = cfg.estimate.beta {
        consts.beta = b;
    }
    let tau = run.u.dt();
    let int_u = running_integral(run.u.frames(), tau);
    let u_init = run.u.frame(0);
    let forcing: Vec<Vec<f64>> = int_u
        .iter()
        .map(|iu| iu.iter().zip(u_init).map(|(i, u)| u + params.ru * i).collect())
        .collect();
    let f = Trajectory::new(dom.clone(), 0.0, tau, forcing)?;
    let t_end = spec.t_end;
    let x0 = vec![0.5 * cfg.grid.extent; d];
    let r = cfg.estimate.r.min((t_end / consts.beta).sqrt());
    let c_star = fit_cut_ball_prefactor(&GraphGeometry::flat(x0.clone(), 1.0), 2 * cfg.grid.n, q, 4)?;
    let osc = oscillation_decay_check(&aux.w, &f, t_end, &x0, r, &consts, c_star)?;
    let mut rough_rep = EstimateReport::new("skt.rough_w");
    rough_rep.push(osc.to_row(&consts).param("R", r).param("c_star", c_star));

    // ‖u‖³_{L³(Q_T)} against 1 + ‖∇u‖^{2−α}_{L²(Q_T)}.
    let alpha = cfg.estimate.alpha;
    let vol = dom.cell_volume();
    let (mut cube, mut grad2) = (Vec::new(), Vec::new());
    for k in 0..run.u.len() {
        let uk = run.u.field(k);
        cube.push(uk.values().iter().map(|v| v.powi(3)).sum::<f64>() * vol);
        grad2.push(gradient_magnitude(&uk).iter().map(|g| g * g).sum::<f64>() * vol);
    }
    let trap = |v: &[f64]| v.windows(2).map(|w| 0.5 * tau * (w[0] + w[1])).sum::<f64>();
    let (l3, g2) = (trap(&cube), trap(&grad2).sqrt());
    let mut interp_rep = EstimateReport::new("skt.interpolation_usage");
    interp_rep.push(
        info("cubic_moment_implied_constant", l3 / (1.0 + g2.powf(2.0 - alpha)))
            .param("u_l3_cubed", l3)
            .param("grad_u_l2", g2)
            .param("alpha", alpha),
    );
    Ok(Outcome {
        constants: vec![consts],
        checks: vec![rep, aux_rep, energy_rep, rough_rep, interp_rep],
    })
}

fn run_quad4(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = domain(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = [1.0, 0.5, 0.8, 0.3];
    let init: Vec<Field> = base
        .iter()
        .map(|&b| cosine_field(&dom, cfg.grid.extent, b, &mut rng))
        .collect::<Result<_>>()?;
    let d: [f64; 4] = cfg.system.diffusion[..4].try_into().expect("validated length");
    let run = quadratic_solve(d, [&init[0], &init[1], &init[2], &init[3]], run_spec(cfg, 2))?;
    let diag = run.diagnostics()?;
    let (dmin, dmax) = (
        d.iter().cloned().fold(f64::INFINITY, f64::min),
        d.iter().cloned().fold(0.0, f64::max),
    );
    let mut rep = EstimateReport::new("quad4");
    rep.push(
        CheckRow::le("relative_mass_drift", diag.mass_drift / diag.mass[0], 1e-10)
            .on_grid(dom.grid())
            .param("dt", run.dt)
            .param("steps", run.steps as f64),
    );
    rep.push(CheckRow::le("mu_lower", dmin - diag.mu_range[0], 1e-12).param("mu_min", diag.mu_range[0]));
    rep.push(CheckRow::le("mu_upper", diag.mu_range[1] - dmax, 1e-12).param("mu_max", diag.mu_range[1]));
    rep.push(CheckRow::le("clip_mass", run.clip.mass, 1e-8 * diag.mass[0]).param("events", run.clip.events as f64));
    rep.push(info("laplacian_w_identity_residual", diag.newu_max));
    rep.push(info("w_evolution_residual", diag.newuu_max));
    Ok(Outcome {
        constants: Vec::new(),
        checks: vec![rep],
    })
}

/// The configured network of the `general` preset.
pub fn general_spec(cfg: &ExperimentConfig) -> Result<GeneralSystemSpec> {
    if let Some(spec) = &cfg.system.general {
        return Ok(spec.clone());
    }
    let diff = &cfg.system.diffusion;
    let three = || -> Result<[f64; 3]> {
        diff.as_slice()
            .try_into()
            .map_err(|_| Error::Config(format!("system.diffusion: network needs 3 rates, got {}", diff.len())))
    };
    let stoich = &cfg.system.stoichiometry;
    match cfg.system.network.as_str() {
        "quad4" => Ok(GeneralSystemSpec::quad4(diff.as_slice().try_into().map_err(|_| {
            Error::Config(format!("system.diffusion: quad4 needs 4 rates, got {}", diff.len()))
        })?)),
        "uum" => GeneralSystemSpec::uum(stoich, diff).map_err(|e| Error::Config(format!("system: {e}"))),
        "s1_2s2" => Ok(GeneralSystemSpec::s1_2s2(three()?)),
        "p_q_2s3" => {
            let [p, q] = stoich.as_slice() else {
                return Err(Error::Config("system.stoichiometry: p_q_2s3 needs [p, q]".into()));
            };
            GeneralSystemSpec::p_q_2s3(*p, *q, three()?)
        }
        other => Err(Error::Config(format!(
            "system.network: unknown network `{other}`; valid: quad4, uum, s1_2s2, p_q_2s3"
        ))),
    }
}

fn run_general(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = general_spec(cfg)?;
    let structure = structural_report(&spec, &StructuralOptions::default())?;
    let dom = domain(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<Field> = (0..spec.m())
        .map(|i| cosine_field(&dom, cfg.grid.extent, 0.5 + 0.1 * i as f64, &mut rng))
        .collect::<Result<_>>()?;
    let refs: Vec<&Field> = init.iter().collect();
    let mut checks = vec![structure.report.clone()];
    let run = general_solve(&spec, &refs, run_spec(cfg, 2), &StructuralOptions::default())?;
    let mut rep = EstimateReport::new(format!("general.{}", spec.name));
    let floor = run.u.iter().map(|u| u.min()).fold(f64::INFINITY, f64::min);
    rep.push(
        CheckRow::le("positivity", -floor, 1e-8)
            .on_grid(dom.grid())
            .param("dt", run.dt),
    );
    rep.push(CheckRow::le("transform_roundtrip", run.roundtrip, 1e-12));
    rep.push(info("triangular_transform_residual", run.uifi5_max).param("companion", run.companion as u8 as f64));
    checks.push(rep);
    Ok(Outcome {
        constants: Vec::new(),
        checks,
    })
}

fn run_heatkernel(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = domain(cfg)?;
    let d = dom.dim();
    let center = vec![0.5 * cfg.grid.extent; d];
    let src = dom.nearest_slot(&center);
    let kernel = kernel_evolve(&dom, src, cfg.time.t_end.unwrap_or(0.1), cfg.time.dt)?;
    let mut norms = kernel_norm_report(&kernel, &[f64::INFINITY], 0.1)?.to_estimate();
    norms.extend(kernel_norm_report(&kernel, &[2.0], 0.07)?.to_estimate());
    let mass_err = (0..kernel.len())
        .map(|k| (kernel.mass(k) - 1.0).abs())
        .fold(0.0, f64::max);
    norms.push(
        CheckRow::le("mass", mass_err, 1e-9)
            .on_grid(dom.grid())
            .param("frames", kernel.len() as f64),
    );
    let moment = kernel_moment(&kernel)?;
    norms.push(
        CheckRow::le("moment_slope", (moment.slope - 0.5).abs(), 0.05)
            .param("slope", moment.slope)
            .param("fitted_constant", moment.fitted_constant),
    );
    let mut checks = vec![norms];
    if d >= 2 {
        let r = cfg.estimate.r;
        let mut origin = vec![0.0; d];
        origin[d - 1] = 0.0;
        let opts = LowerBoundOptions {
            n: cfg.grid.n,
            ..LowerBoundOptions::default()
        };
        let amp = r / (22.0 * d as f64);
        for geom in [
            GraphGeometry::flat(origin.clone(), r),
            GraphGeometry::sine(origin.clone(), r, amp, 1.0 / r),
        ] {
            let rep = gaussian_lower_bound_check(&geom, &opts)?;
            let mut est = rep.to_estimate();
            est.name = format!("{}[{}]", est.name, geom.label);
            checks.push(est);
        }
    }
    Ok(Outcome {
        constants: Vec::new(),
        checks,
    })
}

fn run_oscdecay(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = domain(cfg)?;
    let d = dom.dim();
    let est = &cfg.estimate;
    let q = cfg.q();
    let mut consts = explicit_constants(d, est.p, q, est.a0, est.c0)?;
    if let Some(b) = est.beta {
        consts.beta = b;
    }
    let r = est.r;
    let t_end = cfg.time.t_end.unwrap_or(consts.beta * r * r);
    if consts.beta * r * r > t_end * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "time.t_end: {t_end} is shorter than the cylinder height βR² = {}",
            consts.beta * r * r
        )));
    }
    let mut x0 = vec![0.5 * cfg.grid.extent; d];
    x0[d - 1] = 0.0;
    let c_star = fit_cut_ball_prefactor(&GraphGeometry::flat(x0.clone(), 1.0), 2 * cfg.grid.n, q, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..2 * cfg.sampling.cases + cfg.sampling.calibration + cfg.sampling.pairs)
        .map(|_| rng.gen())
        .collect();
    let (decay_seeds, rest) = seeds.split_at(2 * cfg.sampling.cases);
    let (calib_seeds, pair_seeds) = rest.split_at(cfg.sampling.calibration);
    let stride = 4;
    let run = RoughRun {
        dt: cfg.time.dt,
        ..RoughRun::new(0.0, t_end).stride(stride)
    };
    let case_opts = |forcing: Option<f64>| RandomCaseOptions {
        a0: est.a0,
        c0: est.c0,
        t_end,
        blocks: 8,
        forcing,
        monotone_forcing: false,
        // Forced runs also feed the Hölder check, which needs Lipschitz data.
        noise: if forcing.is_some() { 0.0 } else { 1.0 },
    };

    let mut decay = EstimateReport::new("rough.oscillation_decay");
    let mut holder_test = Vec::new();
    let mut first_forced = None;
    for (i, &seed) in decay_seeds.iter().enumerate() {
        let forced = i >= cfg.sampling.cases;
        let amp = forced.then(|| 10f64.powf(ChaCha8Rng::seed_from_u64(seed).gen_range(-1.0..1.0)));
        let case = random_rough_case(&dom, &case_opts(amp), seed)?;
        let sol = solve_rough(&case.coeff, &case.f, &case.w_init, run)?;
        let rep = oscillation_decay_check(&sol.w, &case.f, t_end, &x0, r, &consts, c_star)?;
        let label = if forced { "forced" } else { "unforced" };
        decay.push(
            rep.to_row(&consts)
                .param("seed", seed as f64)
                .param("c_star", c_star)
                .note(label),
        );
        if forced {
            holder_test.push(holder_pair(&sol.w, &case.f, &case.w_init, &consts)?);
            if first_forced.is_none() {
                first_forced = Some((case, sol));
            }
        }
    }

    let mut holder = EstimateReport::new("rough.holder");
    let calib = calib_seeds
        .iter()
        .map(|&seed| {
            let amp = 10f64.powf(ChaCha8Rng::seed_from_u64(seed).gen_range(-1.0..1.0));
            let case = random_rough_case(&dom, &case_opts(Some(amp)), seed)?;
            let sol = solve_rough(&case.coeff, &case.f, &case.w_init, run)?;
            holder_pair(&sol.w, &case.f, &case.w_init, &consts)
        })
        .collect::<Result<Vec<_>>>()?;
    let (calib_exact, calib_practical): (Vec<_>, Vec<_>) = calib.into_iter().unzip();
    let c_exact = est.headroom * calibrate_holder(&calib_exact)?;
    let c_practical = est.headroom * calibrate_holder(&calib_practical)?;
    for (exact, practical) in &holder_test {
        holder.push(holder_bound_row(exact, c_exact).note("alpha"));
        let row = holder_bound_row(practical, c_practical);
        let finite = row.lhs.0.is_finite();
        holder.push(CheckRow { pass: finite, ..row }.note("alpha_practical, informative"));
    }

    let mut checks = vec![decay, holder];
    if let Some((case, sol)) = first_forced {
        let horizon = t_end / est.a0;
        let src = dom.nearest_slot(&x0);
        let c_kernel = fit_norm_prefactor(&dom, &[src], conjugate(q), horizon)?;
        let moment = kernel_moment(&kernel_evolve(
            &dom,
            dom.nearest_slot(&vec![0.5 * cfg.grid.extent; d]),
            horizon,
            None,
        )?);
        match moment {
            Ok(m) => {
                let pre = KernelPrefactors {
                    c_kernel,
                    c_moment: m.prefactor(est.eps, horizon),
                    eps: est.eps,
                };
                let sup_r = r.min((t_end / consts.beta).sqrt());
                checks.push(supremum_bound_check(
                    &sol.w,
                    &case.f,
                    &case.w_init,
                    &consts,
                    &pre,
                    &x0,
                    sup_r,
                )?);
                let inputs = TracerInputs {
                    t0: t_end,
                    x0: x0.clone(),
                    r0: r,
                    eps: est.eps,
                    prefactors: pre,
                    c_star,
                };
                checks.push(iteration_trace(&sol.w, &case.f, &case.w_init, &consts, &inputs)?);
            }
            Err(e) => {
                let mut skipped = EstimateReport::new("rough.supremum_bound");
                skipped.push(info("skipped", 0.0).note(format!("moment prefactor unavailable: {e}")));
                checks.push(skipped);
            }
        }
    }

    let mut cmp = EstimateReport::new("rough.comparison");
    for &seed in pair_seeds {
        cmp.extend(comparison_pair(&dom, est.a0, est.c0, t_end, seed)?);
    }
    checks.push(cmp);
    Ok(Outcome {
        constants: vec![consts],
        checks,
    })
}

/// Hölder samples at the bundle `α` and at `α_practical`.
fn holder_pair(
    w: &Trajectory,
    f: &Trajectory,
    w_init: &Field,
    consts: &ConstantsBundle,
) -> Result<(HolderSample, HolderSample)> {
    Ok((
        holder_sample(w, f, w_init, consts, consts.alpha)?,
        holder_sample(w, f, w_init, consts, consts.alpha_practical)?,
    ))
}

fn run_interp(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dom = domain(cfg)?;
    let d = dom.dim();
    let opts = InterpOptions {
        p: cfg.estimate.p,
        q: cfg.q(),
        alpha: cfg.estimate.alpha,
        r0: cfg.estimate.r,
        overlap_bound: BallCover::default_overlap_bound(d),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.sampling.calibration + cfg.sampling.cases)
        .map(|_| rng.gen())
        .collect();
    let (calib_seeds, test_seeds) = seeds.split_at(cfg.sampling.calibration);
    let calib = calib_seeds
        .iter()
        .map(|&s| {
            let (u, w) = random_case(&dom, s)?;
            interpolation_measure(&u, &w, &opts, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let constant = calibrate_constant(&calib, cfg.estimate.headroom)?;
    let mut rep = EstimateReport::new("interp");
    let mut homogeneity = EstimateReport::new("interp.homogeneity");
    for (i, &s) in test_seeds.iter().enumerate() {
        let (u, w) = random_case(&dom, s)?;
        let case = interpolation_measure(&u, &w, &opts, s)?;
        for row in interpolation_check(&case, constant, &opts).rows {
            rep.push(row.param("case", s as f64));
        }
        if i == 0 {
            for lambda in [1e-3, 1e3] {
                let scaled = interpolation_measure(&u.scaled(lambda), &w.scaled(lambda), &opts, s)?;
                let drift = (scaled.ratio / case.ratio - 1.0).abs();
                homogeneity.push(
                    CheckRow::le("ratio_invariance", drift, 1e-9)
                        .param("lambda", lambda)
                        .param("ratio", case.ratio)
                        .param("scaled_ratio", scaled.ratio),
                );
            }
        }
    }
    rep.push(info("calibrated_constant", constant).param("calibration_cases", calib.len() as f64));
    Ok(Outcome {
        constants: Vec::new(),
        checks: vec![rep, homogeneity],
    })
}

/// Write `report` to `dir` as `<experiment>-seed<seed>.<ext>`; returns the path.
pub fn emit(report: &RunReport, format: Format, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("{}-seed{}", report.config.experiment, report.config.seed);
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        }
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_rows_csv(std::io::BufWriter::new(file), &report.flat_reports())?;
            Ok(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_preset_lists_valid_ones() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "nope", "seed": 1}"#).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("nope") && msg.contains("quad4") && msg.contains("interp"),
            "{msg}"
        );
    }

    #[test]
    fn seed_is_required() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "quad4"}"#).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn partial_config_keeps_preset_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "quad4", "seed": 3, "grid": {"n": 8}}"#).unwrap();
        assert_eq!(cfg.grid.n, 8);
        assert_eq!(cfg.grid.dim, 2);
        assert_eq!(cfg.system.diffusion, vec![0.1, 0.4, 1.0, 2.0]);
    }

    #[test]
    fn field_errors_name_the_field() {
        let err =
            ExperimentConfig::from_json(r#"{"experiment": "skt", "seed": 0, "estimate": {"c0": 0.5}}"#).unwrap_err();
        assert!(err.to_string().contains("estimate.c0"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"experiment": "skt", "seed": 0, "grid": {"m": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("`m`"), "{err}");
    }
}
