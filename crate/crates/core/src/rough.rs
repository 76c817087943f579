//! `a(t,x) ∂_t w − Δw = f` with a measurable coefficient `a₀ ≤ a ≤ c₀a₀`,
//! Neumann data, the explicit constants of the decay argument, and checks of
//! the oscillation, supremum and Hölder estimates on computed solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{
    lipschitz_norm, lpq_norm_window, oscillation, Cylinder, Domain, Field, GraphGeometry, GridSpec, Trajectory,
};
use crate::heat_kernel::fit_norm_prefactor;
use crate::report::{CheckRow, EstimateReport};

/// Conjugate exponent, `1' = ∞`, `∞' = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == f64::INFINITY {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

fn recip(p: f64) -> f64 {
    if p == f64::INFINITY {
        0.0
    } else {
        1.0 / p
    }
}

/// Volume of the unit ball, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Closed-form constants of the oscillation decay and supremum bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    pub d: usize,
    #[serde(with = "crate::report::inf_f64")]
    pub p: f64,
    #[serde(with = "crate::report::inf_f64")]
    pub q: f64,
    pub a0: f64,
    pub c0: f64,
    /// `γ = 2 − 2/p − d/q`.
    pub gamma: f64,
    /// `β = 49 a₀ / (200 d)`.
    pub beta: f64,
    /// `δ = (13/1568)(98π)^{−d/2} d^{d/2+1} e^{−d c₀} |B_d|`.
    pub delta: f64,
    /// `A = (a₀c₀)^{d/2q} (1 − dp'/2q)^{−1/p'} (25a₀²/(128 d))^{1/p' − d/2q}`.
    pub amplitude: f64,
    /// Same with base `49a₀/(200d)`, the value reached at the end of the decay argument.
    pub amplitude_proof: f64,
    /// `α = min(ln(1/(1−δ))/ln 4, γ, 1/2)`.
    pub alpha: f64,
    /// `min(γ, 1/2)/2`, a coarser exponent that is visible at desk resolution.
    pub alpha_practical: f64,
    /// `K₁ = a₀^{d/2q} / (1 − dp'/2q)^{1−1/p}`.
    pub k1: f64,
}

pub fn explicit_constants(d: usize, p: f64, q: f64, a0: f64, c0: f64) -> Result<ConstantsBundle> {
    ensure!(d >= 1, Parameter, "dimension must be positive");
    ensure!(p > 1.0, Parameter, "p = {p} must exceed 1");
    ensure!(q >= 1.0, Parameter, "q = {q} must be at least 1");
    ensure!(a0.is_finite() && a0 > 0.0, Parameter, "a0 = {a0} must be positive");
    ensure!(c0.is_finite() && c0 >= 1.0, Parameter, "c0 = {c0} must be at least 1");
    let df = d as f64;
    let pc = conjugate(p);
    let gamma = 2.0 - 2.0 * recip(p) - df * recip(q);
    ensure!(gamma > 0.0, Parameter, "γ = 2 − 2/p − d/q = {gamma} must be positive");
    let lever = df * pc * recip(q) / 2.0;
    ensure!(lever < 1.0, Parameter, "d p'/(2q) = {lever} must be below 1");
    let beta = 49.0 * a0 / (200.0 * df);
    let delta =
        13.0 / 1568.0 * (98.0 * PI).powf(-df / 2.0) * df.powf(df / 2.0 + 1.0) * (-df * c0).exp() * unit_ball_volume(d);
    let expo = 1.0 / pc - df * recip(q) / 2.0;
    let pre = (a0 * c0).powf(df * recip(q) / 2.0) * (1.0 - lever).powf(-1.0 / pc);
    let amplitude = pre * (25.0 / 64.0 * a0 * a0 / (2.0 * df)).powf(expo);
    let amplitude_proof = pre * (49.0 / 100.0 * a0 / (2.0 * df)).powf(expo);
    let log_branch = -(-delta).ln_1p() / 4f64.ln();
    let alpha = log_branch.min(gamma).min(0.5);
    let k1 = a0.powf(df * recip(q) / 2.0) / (1.0 - lever).powf(1.0 - recip(p));
    Ok(ConstantsBundle {
        d,
        p,
        q,
        a0,
        c0,
        gamma,
        beta,
        delta,
        amplitude,
        amplitude_proof,
        alpha,
        alpha_practical: gamma.min(0.5) / 2.0,
        k1,
    })
}

impl ConstantsBundle {
    pub fn p_conj(&self) -> f64 {
        conjugate(self.p)
    }

    /// Contraction factor `Λ = max(1 − δ/2, 4^{−γ}, 4^{−1+2ε})`.
    pub fn lambda(&self, eps: f64) -> f64 {
        (1.0 - self.delta / 2.0)
            .max(4f64.powf(-self.gamma))
            .max(4f64.powf(-1.0 + 2.0 * eps))
    }

    /// `K₂ = max[2(T/β)^ε, 2 C̃ (β/a₀)^{1/2−ε}]` with `C̃` the moment prefactor.
    pub fn k2(&self, t_end: f64, c_moment: f64, eps: f64) -> f64 {
        (2.0 * (t_end / self.beta).powf(eps)).max(2.0 * c_moment * (self.beta / self.a0).powf(0.5 - eps))
    }

    /// `K₃ = 2 C (a₀c₀)^{d/2q} (1 − dp'/2q)^{−1/p'} β^{1/p' − d/2q}` with `C` the kernel prefactor.
    pub fn k3(&self, c_kernel: f64) -> f64 {
        let df = self.d as f64;
        let pc = self.p_conj();
        2.0 * c_kernel
            * (self.a0 * self.c0).powf(df * recip(self.q) / 2.0)
            * (1.0 - df * pc * recip(self.q) / 2.0).powf(-1.0 / pc)
            * self.beta.powf(1.0 / pc - df * recip(self.q) / 2.0)
    }

    /// `R_f = R₀ (1 + ‖f‖ / (‖w‖_∞ + ‖w_init‖_Lip))^{−1/γ}`.
    pub fn r_f(&self, r0: f64, f_norm: f64, w_sup: f64, lip: f64) -> f64 {
        r0 * (1.0 + f_norm / (w_sup + lip)).powf(-1.0 / self.gamma)
    }

    /// `C₁ = max(1, K₂(4R₀)^{1−2ε}, K₃(4R₀)^γ, (2/δ) C_{f,1} R₀^γ)`.
    pub fn c1(&self, k2: f64, k3: f64, c_f1: f64, r0: f64, eps: f64) -> f64 {
        1f64.max(k2 * (4.0 * r0).powf(1.0 - 2.0 * eps))
            .max(k3 * (4.0 * r0).powf(self.gamma))
            .max(2.0 / self.delta * c_f1 * r0.powf(self.gamma))
    }

    /// Forcing weight of the decay step, `A C* / a₀`.
    ///
    /// The comparison solutions solve `a₀ ∂_t v − Δv = f`, so the source enters
    /// the kernel representation as `f / a₀`.
    pub fn forcing_weight(&self, c_star: f64) -> f64 {
        self.amplitude_proof * c_star / self.a0
    }
}

/// A rough coefficient with its ellipticity window.
#[derive(Clone, Debug)]
pub struct RoughCoefficient {
    a: Trajectory,
    a0: f64,
    c0: f64,
}

impl RoughCoefficient {
    pub fn new(a: Trajectory, a0: f64, c0: f64) -> Result<Self> {
        ensure!(
            a0 > 0.0 && c0 >= 1.0,
            Parameter,
            "need a0 > 0 and c0 ≥ 1 (got {a0}, {c0})"
        );
        let (lo, hi) = (a.min(), a.max());
        let tol = 1e-12 * c0 * a0;
        if lo < a0 - tol || hi > c0 * a0 + tol {
            return Err(Error::Domain(format!(
                "coefficient range [{lo}, {hi}] leaves [a0, c0 a0] = [{a0}, {}]",
                c0 * a0
            )));
        }
        Ok(RoughCoefficient { a, a0, c0 })
    }

    pub fn constant(domain: &Arc<Domain>, a: f64) -> Result<Self> {
        Self::new(Trajectory::steady(&Field::constant(domain, a)), a, 1.0)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.a
    }
    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
}

#[derive(Clone, Debug)]
pub struct RoughSolution {
    pub w: Trajectory,
    pub dt: f64,
    pub steps: usize,
    /// Share of node-steps where the discrete `∂_t w` fell below `−1e−10`.
    pub negative_rate_fraction: f64,
    pub min_rate: f64,
}

/// Time window and resolution for [`solve_rough`].
#[derive(Clone, Copy, Debug)]
pub struct RoughRun {
    pub t_start: f64,
    pub t_end: f64,
    /// `None` picks 90% of the stability limit `a₀ h² / max stencil weight`.
    pub dt: Option<f64>,
    /// Store every `frame_stride`-th step.
    pub frame_stride: usize,
}

impl RoughRun {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        RoughRun {
            t_start,
            t_end,
            dt: None,
            frame_stride: 1,
        }
    }
    pub fn stride(mut self, k: usize) -> Self {
        self.frame_stride = k;
        self
    }
    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }
}

/// Explicit scheme `w ← w + (dt/a)(Lw + f)`; `a` and `f` are read at the start of each step.
pub fn solve_rough(coeff: &RoughCoefficient, f: &Trajectory, w_init: &Field, run: RoughRun) -> Result<RoughSolution> {
    let dom = w_init.domain();
    ensure!(
        Arc::ptr_eq(coeff.a.domain(), dom) && Arc::ptr_eq(f.domain(), dom),
        Geometry,
        "coefficient, forcing and initial data must share one domain"
    );
    ensure!(run.t_end > run.t_start, Parameter, "empty time interval");
    ensure!(run.frame_stride > 0, Parameter, "frame stride must be positive");
    let limit = coeff.a0 * dom.stable_dt(1.0);
    let span = run.t_end - run.t_start;
    let target = run.dt.unwrap_or(0.9 * limit);
    if !(target > 0.0 && target <= limit * (1.0 + 1e-12)) {
        return Err(Error::Cfl { dt: target, limit });
    }
    let stride = run.frame_stride;
    let blocks = ((span / (target * stride as f64)) - 1e-9).ceil().max(1.0) as usize;
    let steps = blocks * stride;
    let dt = span / steps as f64;

    let n = dom.len();
    let mut w = w_init.values().to_vec();
    let mut lw = vec![0.0; n];
    let mut frames = Vec::with_capacity(blocks + 1);
    frames.push(w.clone());
    let mut negative = 0usize;
    let mut min_rate = f64::INFINITY;
    for k in 0..steps {
        let t = run.t_start + k as f64 * dt;
        let a = coeff.a.at(t);
        let fk = f.at(t);
        dom.apply_laplacian(&w, &mut lw);
        for i in 0..n {
            let rate = (lw[i] + fk[i]) / a[i];
            if rate < -1e-10 {
                negative += 1;
            }
            min_rate = min_rate.min(rate);
            w[i] += dt * rate;
        }
        if (k + 1) % stride == 0 {
            frames.push(w.clone());
        }
    }
    let traj = Trajectory::new(dom.clone(), run.t_start, dt * stride as f64, frames)
        .map_err(|e| Error::Solver(format!("solution left the finite range: {e}")))?;
    Ok(RoughSolution {
        w: traj,
        dt,
        steps,
        negative_rate_fraction: negative as f64 / (steps * n) as f64,
        min_rate,
    })
}

/// Largest `(lower − upper)_+` over matching frames.
pub fn ordering_violation(lower: &Trajectory, upper: &Trajectory) -> Result<f64> {
    ensure!(lower.len() == upper.len(), Parameter, "trajectories differ in length");
    Ok(lower
        .frames()
        .iter()
        .zip(upper.frames())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y))
        .fold(0.0, f64::max))
}

/// Kernel prefactor `C*` for the cut ball `B(c, R) ∩ {x_d > φ}` with Dirichlet data on the sphere:
/// `‖Γ_U(t)‖_{q'} ≤ C* t^{−d/(2q)}` for `t ≤ 49R²/(200d)`.
pub fn fit_cut_ball_prefactor(geom: &GraphGeometry, cells_across: usize, q: f64, sources: usize) -> Result<f64> {
    let d = geom.dim();
    let r = geom.radius;
    let lower: Vec<f64> = geom.center.iter().map(|c| c - 1.05 * r).collect();
    let upper: Vec<f64> = geom.center.iter().map(|c| c + 1.05 * r).collect();
    let grid = GridSpec::boxed(&lower, &upper, cells_across)?;
    let dom = geom.ball_domain(grid)?;
    let mut slots = Vec::new();
    for i in 0..sources.max(1) {
        let mut x = geom.center.clone();
        x[d - 1] += r * (0.05 + 0.8 * i as f64 / sources.max(1) as f64);
        let s = dom.nearest_slot(&x);
        if !slots.contains(&s) {
            slots.push(s);
        }
    }
    fit_norm_prefactor(&dom, &slots, conjugate(q), 49.0 * r * r / (200.0 * d as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscDecayReport {
    pub osc_outer: f64,
    pub osc_inner: f64,
    pub forcing_norm: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub degenerate: bool,
    pub pass: bool,
}

impl OscDecayReport {
    pub fn to_row(&self, consts: &ConstantsBundle) -> CheckRow {
        CheckRow::with_pass("oscillation_decay", self.lhs, self.rhs, self.pass)
            .param("delta", consts.delta)
            .param("osc_outer", self.osc_outer)
            .param("osc_inner", self.osc_inner)
            .param("forcing_norm", self.forcing_norm)
            .param("degenerate", self.degenerate as u8 as f64)
    }
}

/// One decay step on `Q_R = (t0 − βR², t0] × B(x0, R)`:
/// `osc_{Q_{R/4}} w̃ ≤ 1 − δ + (A C*/a₀) R^γ ‖f‖_{L^p L^q(Q_R)} / osc_{Q_R} w`,
/// `w̃` the solution rescaled to `[0, 1]` on `Q_R`.
pub fn oscillation_decay_check(
    w: &Trajectory,
    f: &Trajectory,
    t0: f64,
    x0: &[f64],
    r: f64,
    consts: &ConstantsBundle,
    c_star: f64,
) -> Result<OscDecayReport> {
    let outer = Cylinder::backward(t0, x0.to_vec(), r, consts.beta);
    let inner = Cylinder::backward(t0, x0.to_vec(), r / 4.0, consts.beta);
    let osc_outer = oscillation(w, &outer)?;
    let osc_inner = oscillation(w, &inner)?;
    let slots = outer.slots(w.domain());
    let forcing_norm = lpq_norm_window(f, consts.p, consts.q, outer.t_lo, outer.t_hi, Some(&slots))?;
    if osc_outer < 1e-12 {
        return Ok(OscDecayReport {
            osc_outer,
            osc_inner,
            forcing_norm,
            lhs: 0.0,
            rhs: 1.0,
            degenerate: true,
            pass: true,
        });
    }
    let lhs = osc_inner / osc_outer;
    let rhs = 1.0 - consts.delta + consts.forcing_weight(c_star) * r.powf(consts.gamma) * forcing_norm / osc_outer;
    Ok(OscDecayReport {
        osc_outer,
        osc_inner,
        forcing_norm,
        lhs,
        rhs,
        degenerate: false,
        pass: lhs <= rhs,
    })
}

/// Prefactors of the supremum and initial-oscillation bounds, fitted on the run's domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPrefactors {
    /// `C` in `‖Γ(t)‖_{q'} ≤ C t^{−d/(2q)}` for `t ≤ T/a₀`.
    pub c_kernel: f64,
    /// `C̃` in `∫Γ(t,x,y)|x−y| dy ≤ C̃ t^{1/2−ε}` for `t ≤ T/a₀`.
    pub c_moment: f64,
    pub eps: f64,
}

/// `sup w ≤ K₁ C T^{1−1/p−d/2q} ‖f₊‖/a₀ + ‖w_init‖_∞` (and the mirror bound for `inf w`),
/// plus the initial oscillation bound on `(t_start, t_start + βR²] × B(x0, R)`.
pub fn supremum_bound_check(
    w: &Trajectory,
    f: &Trajectory,
    w_init: &Field,
    consts: &ConstantsBundle,
    pre: &KernelPrefactors,
    x0: &[f64],
    r: f64,
) -> Result<EstimateReport> {
    let t_start = w.t0();
    let span = w.t_end() - t_start;
    ensure!(span > 0.0, Parameter, "trajectory spans no time");
    let df = consts.d as f64;
    let (p, q) = (consts.p, consts.q);
    let scale = consts.k1 * pre.c_kernel * span.powf(1.0 - recip(p) - df * recip(q) / 2.0) / consts.a0;
    let f_pos = f.map(|v| v.max(0.0));
    let f_neg = f.map(|v| (-v).max(0.0));
    let lo_t = t_start;
    let hi_t = w.t_end();
    let fp = lpq_norm_window(&f_pos, p, q, lo_t, hi_t, None)?;
    let fm = lpq_norm_window(&f_neg, p, q, lo_t, hi_t, None)?;
    let init_sup = w_init.sup_abs();
    let slack = |b: f64| b * (1.0 + 1e-12) + 1e-12;
    let up = w.max();
    let down = -w.min();
    let mut rep = EstimateReport::new("rough.supremum_bound");
    let b_up = scale * fp + init_sup;
    let b_down = scale * fm + init_sup;
    rep.push(
        CheckRow::with_pass("sup_w", up, b_up, up <= slack(b_up))
            .param("f_plus_norm", fp)
            .on_grid(w.domain().grid()),
    );
    rep.push(CheckRow::with_pass("sup_minus_w", down, b_down, down <= slack(b_down)).param("f_minus_norm", fm));

    ensure!(
        consts.beta * r * r <= span * (1.0 + 1e-12),
        Parameter,
        "βR² = {} exceeds the run length {span}",
        consts.beta * r * r
    );
    let cyl = Cylinder {
        t_lo: t_start - 0.5 * w.dt(),
        t_hi: t_start + consts.beta * r * r,
        center: x0.to_vec(),
        radius: r,
    };
    let osc = oscillation(w, &cyl)?;
    let lip = lipschitz_norm(w_init)?;
    let f_all = lpq_norm_window(f, p, q, lo_t, hi_t, None)?;
    let k2 = consts.k2(span, pre.c_moment, pre.eps);
    let k3 = consts.k3(pre.c_kernel);
    let bound = k2 * r.powf(1.0 - 2.0 * pre.eps) * lip + k3 * r.powf(consts.gamma) * f_all / consts.a0;
    rep.push(
        CheckRow::with_pass("initial_oscillation", osc, bound, osc <= slack(bound))
            .param("k2", k2)
            .param("k3", k3)
            .param("lip", lip)
            .param("R", r),
    );
    Ok(rep)
}

/// `(‖f₊‖ + Lip)^{1−α/γ} (‖f‖ + Lip)^{α/γ}`, the data dependence of the Hölder bound.
pub fn holder_structure(consts: &ConstantsBundle, alpha: f64, f_plus: f64, f_all: f64, lip: f64) -> Result<f64> {
    ensure!(
        consts.gamma > alpha,
        Parameter,
        "γ = {} must exceed α = {alpha}",
        consts.gamma
    );
    let r = alpha / consts.gamma;
    Ok((f_plus + lip).powf(1.0 - r) * (f_all + lip).powf(r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderSample {
    pub alpha: f64,
    pub measured: f64,
    pub structure: f64,
}

impl HolderSample {
    pub fn ratio(&self) -> f64 {
        self.measured / self.structure
    }
}

/// Measured `‖w‖_{C^{α/2,α}}` on `(t_start, T] × Ω` and the data structure it is compared with.
pub fn holder_sample(
    w: &Trajectory,
    f: &Trajectory,
    w_init: &Field,
    consts: &ConstantsBundle,
    alpha: f64,
) -> Result<HolderSample> {
    let f_pos = f.map(|v| v.max(0.0));
    let fp = lpq_norm_window(&f_pos, consts.p, consts.q, w.t0(), w.t_end(), None)?;
    let fa = lpq_norm_window(f, consts.p, consts.q, w.t0(), w.t_end(), None)?;
    let lip = lipschitz_norm(w_init)?;
    let structure = holder_structure(consts, alpha, fp, fa, lip)?;
    let opts = crate::grid::HolderOptions {
        frames: Some((1, w.len())),
        ..Default::default()
    };
    let measured = crate::grid::holder_norm_with(w, alpha, &opts)?.value;
    Ok(HolderSample {
        alpha,
        measured,
        structure,
    })
}

/// `C_*` frozen as the largest measured/structure ratio over a calibration set.
pub fn calibrate_holder(samples: &[HolderSample]) -> Result<f64> {
    ensure!(!samples.is_empty(), Sampling, "empty calibration set");
    Ok(samples.iter().map(HolderSample::ratio).fold(0.0, f64::max))
}

pub fn holder_bound_row(sample: &HolderSample, c_star: f64) -> CheckRow {
    let rhs = c_star * sample.structure;
    CheckRow::le(format!("holder_alpha_{:.3e}", sample.alpha), sample.measured, rhs)
        .param("alpha", sample.alpha)
        .param("c_star", c_star)
        .param("structure", sample.structure)
}

/// Inputs of the iteration tracer.
#[derive(Clone, Debug)]
pub struct TracerInputs {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub r0: f64,
    pub eps: f64,
    pub prefactors: KernelPrefactors,
    /// Cut-ball prefactor `C*` at unit radius.
    pub c_star: f64,
}

/// `osc_{Q_k} w ≤ C₁ (‖w‖_∞ + ‖w_init‖_Lip) Λ^k` on
/// `Q_k = (t0 − β R_f² 16^{−k}, t0] × B(x0, R_f 4^{−k})` while `Q_k` is resolved.
pub fn iteration_trace(
    w: &Trajectory,
    f: &Trajectory,
    w_init: &Field,
    consts: &ConstantsBundle,
    inp: &TracerInputs,
) -> Result<EstimateReport> {
    let span = w.t_end() - w.t0();
    let f_norm = lpq_norm_window(f, consts.p, consts.q, w.t0(), w.t_end(), None)?;
    let lip = lipschitz_norm(w_init)?;
    let w_sup = w.sup_abs();
    let rf = consts.r_f(inp.r0, f_norm, w_sup, lip);
    let k2 = consts.k2(span, inp.prefactors.c_moment, inp.eps);
    let k3 = consts.k3(inp.prefactors.c_kernel);
    let c1 = consts.c1(k2, k3, consts.forcing_weight(inp.c_star), inp.r0, inp.eps);
    let lam = consts.lambda(inp.eps);
    let base = c1 * (w_sup + lip);
    let h = w.domain().h();
    let mut rep = EstimateReport::new("rough.iteration_trace");
    for k in 0.. {
        let radius = rf * 4f64.powi(-k);
        let cyl = Cylinder::backward(inp.t0, inp.x0.clone(), radius, consts.beta);
        if radius < h || cyl.t_lo < w.t0() || cyl.frames(w).is_empty() {
            break;
        }
        let osc = oscillation(w, &cyl)?;
        let bound = base * lam.powi(k);
        rep.push(
            CheckRow::le(format!("iterate_{k}"), osc, bound)
                .param("radius", radius)
                .param("lambda", lam)
                .param("c1", c1),
        );
    }
    Ok(rep)
}

/// Data of one randomized rough-coefficient run.
#[derive(Clone, Debug)]
pub struct RoughCase {
    pub coeff: RoughCoefficient,
    pub f: Trajectory,
    pub w_init: Field,
}

/// Options for [`random_rough_case`].
#[derive(Clone, Copy, Debug)]
pub struct RandomCaseOptions {
    pub a0: f64,
    pub c0: f64,
    pub t_end: f64,
    /// Number of piecewise-constant time blocks for `a` and `f`.
    pub blocks: usize,
    /// `None` for `f ≡ 0`, otherwise the largest `|f|`.
    pub forcing: Option<f64>,
    /// Forcing that is nonnegative and nondecreasing in time.
    pub monotone_forcing: bool,
    /// Largest weight of nodal noise in the initial data; `0` keeps it smooth.
    pub noise: f64,
}

/// White-noise coefficient in `[a₀, c₀a₀]` per node and time block, initial
/// data in `[0, 1]` mixing a random cosine mode with nodal noise, and
/// optional noise forcing.
pub fn random_rough_case(dom: &Arc<Domain>, opts: &RandomCaseOptions, seed: u64) -> Result<RoughCase> {
    use rand::{Rng, SeedableRng};
    ensure!(opts.blocks > 0, Parameter, "need at least one time block");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = dom.len();
    let block_dt = opts.t_end / opts.blocks as f64;
    let (a0, c0) = (opts.a0, opts.c0);
    let a_frames: Vec<Vec<f64>> = (0..opts.blocks)
        .map(|_| (0..n).map(|_| a0 * rng.gen_range(1.0..=c0)).collect())
        .collect();
    let coeff = RoughCoefficient::new(Trajectory::new(dom.clone(), 0.0, block_dt, a_frames)?, a0, c0)?;

    let d = dom.dim();
    let k: Vec<f64> = (0..d).map(|_| PI * rng.gen_range(1..4) as f64).collect();
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let mix: f64 = 1.0 - opts.noise * rng.gen_range(0.0..1.0);
    let mut values = Vec::with_capacity(n);
    for s in 0..n {
        let x = dom.point(s);
        let wave = 0.5 + 0.5 * (phase + (0..d).map(|a| k[a] * x[a]).sum::<f64>()).cos();
        values.push(mix * wave + (1.0 - mix) * rng.gen_range(0.0..1.0));
    }
    let w_init = Field::new(dom.clone(), values)?;

    let f = match opts.forcing {
        None => Trajectory::steady(&Field::zeros(dom)),
        Some(amp) if opts.monotone_forcing => {
            // Lw_init + f ≥ 0 at t = 0 keeps the discrete ∂_t w nonnegative.
            let base = w_init.laplacian().map(|v| (-v).max(0.0)).into_values();
            let mut frames = vec![base];
            for _ in 1..opts.blocks {
                let prev = frames.last().expect("one frame");
                let next = prev.iter().map(|v| v + amp * rng.gen_range(0.0..1.0)).collect();
                frames.push(next);
            }
            Trajectory::new(dom.clone(), 0.0, block_dt, frames)?
        }
        Some(amp) => {
            let frames = (0..opts.blocks)
                .map(|_| (0..n).map(|_| amp * rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            Trajectory::new(dom.clone(), 0.0, block_dt, frames)?
        }
    };
    Ok(RoughCase { coeff, f, w_init })
}

/// Ordering checks on one random case:
/// - `f₁ ≤ f₂` with shared `a` and data gives `w₁ ≤ w₂`;
/// - for `∂_t w ≥ 0` the constant-coefficient runs with `a₀` and `c₀a₀`
///   bracket `w` from above and below.
///
/// All runs share one time step so the discrete comparison applies.
pub fn comparison_pair(dom: &Arc<Domain>, a0: f64, c0: f64, t_end: f64, seed: u64) -> Result<EstimateReport> {
    use rand::{Rng, SeedableRng};
    let opts = RandomCaseOptions {
        a0,
        c0,
        t_end,
        blocks: 8,
        forcing: Some(1.0),
        monotone_forcing: false,
        noise: 1.0,
    };
    let case = random_rough_case(dom, &opts, seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let f2_frames = case
        .f
        .frames()
        .iter()
        .map(|fr| fr.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect())
        .collect();
    let f2 = Trajectory::new(dom.clone(), case.f.t0(), case.f.dt(), f2_frames)?;
    let dt = 0.9 * a0 * dom.stable_dt(1.0);
    let run = RoughRun::new(0.0, t_end).dt(dt);
    let w1 = solve_rough(&case.coeff, &case.f, &case.w_init, run)?;
    let w2 = solve_rough(&case.coeff, &f2, &case.w_init, run)?;
    let mut rep = EstimateReport::new("rough.comparison");
    let tol = 1e-10;
    let gap = ordering_violation(&w1.w, &w2.w)?;
    rep.push(CheckRow::le("forcing_order", gap, tol).param("seed", seed as f64));

    let mono = random_rough_case(
        dom,
        &RandomCaseOptions {
            monotone_forcing: true,
            ..opts
        },
        seed,
    )?;
    let w = solve_rough(&mono.coeff, &mono.f, &mono.w_init, run)?;
    let fast = solve_rough(&RoughCoefficient::constant(dom, a0)?, &mono.f, &mono.w_init, run)?;
    let slow = solve_rough(&RoughCoefficient::constant(dom, c0 * a0)?, &mono.f, &mono.w_init, run)?;
    let upper = ordering_violation(&w.w, &fast.w)?;
    let lower = ordering_violation(&slow.w, &w.w)?;
    rep.push(
        CheckRow::le("sandwich_upper", upper, tol)
            .param("seed", seed as f64)
            .param("min_rate", w.min_rate),
    );
    rep.push(CheckRow::le("sandwich_lower", lower, tol).param("seed", seed as f64));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn reference_delta_and_alpha() {
        let c = explicit_constants(1, 4.0, 4.0, 1.0, 1.0).unwrap();
        assert!((c.delta / 3.476_520_811_331_302e-4 - 1.0).abs() < 1e-12);
        assert!((c.alpha / 2.508_215_685_495_686e-4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_reference() {
        let mut c = explicit_constants(1, 4.0, 4.0, 1.0, 1.0).unwrap();
        c.gamma = 0.5;
        c.delta = 3.48e-4;
        assert!((c.lambda(0.25) - 0.999826).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        assert!(explicit_constants(2, 1.0, 4.0, 1.0, 1.0).is_err());
        assert!(explicit_constants(2, 4.0, 4.0, 1.0, 0.5).is_err());
        assert!(explicit_constants(3, 1.2, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn coefficient_outside_window_rejected() {
        let dom = Domain::neumann_box(GridSpec::cube(1, 0.0, 1.0, 8).unwrap()).unwrap();
        let a = Trajectory::steady(&Field::constant(&dom, 3.0));
        assert!(matches!(RoughCoefficient::new(a, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_forcing_gives_linear_growth() {
        let dom = Domain::neumann_box(GridSpec::cube(1, 0.0, 1.0, 16).unwrap()).unwrap();
        let a = RoughCoefficient::constant(&dom, 1.0).unwrap();
        let f = Trajectory::steady(&Field::constant(&dom, 1.0));
        let sol = solve_rough(&a, &f, &Field::zeros(&dom), RoughRun::new(0.0, 1.0).stride(10)).unwrap();
        for k in 0..sol.w.len() {
            let t = sol.w.time(k);
            assert!(sol.w.frame(k).iter().all(|v| (v - t).abs() < 1e-12));
        }
    }
}
