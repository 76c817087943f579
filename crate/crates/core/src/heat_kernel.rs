//! Discrete heat kernels `Γ(t, ·, y)` on masked domains and their decay rates.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{dist2, Domain, GraphGeometry, GridSpec, Trajectory};
use crate::report::{CheckRow, EstimateReport, Num};

/// Which steps of the evolution are stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FrameSchedule {
    /// Every `k`-th step.
    Every(usize),
    /// Roughly log-uniform in time.
    Geometric { per_decade: usize },
}

/// Kernel evolved from a unit point mass at one active node.
#[derive(Clone, Debug)]
pub struct KernelField {
    domain: Arc<Domain>,
    source: usize,
    dt: f64,
    steps: Vec<usize>,
    frames: Vec<Vec<f64>>,
}

impl KernelField {
    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }
    pub fn source(&self) -> usize {
        self.source
    }
    pub fn source_point(&self) -> &[f64] {
        self.domain.point(self.source)
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.frames.len()
    }
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
    pub fn step(&self, k: usize) -> usize {
        self.steps[k]
    }
    pub fn time(&self, k: usize) -> f64 {
        self.steps[k] as f64 * self.dt
    }
    pub fn frame(&self, k: usize) -> &[f64] {
        &self.frames[k]
    }
    /// Frame stored at exactly `step`, if any.
    pub fn at_step(&self, step: usize) -> Option<&[f64]> {
        self.steps.binary_search(&step).ok().map(|k| self.frames[k].as_slice())
    }

    pub fn mass(&self, k: usize) -> f64 {
        crate::grid::neumaier(self.frames[k].iter().copied()) * self.domain.cell_volume()
    }

    /// Uniformly spaced frames as a trajectory (only for `Every` schedules).
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        ensure!(self.len() >= 2, Sampling, "kernel holds a single frame");
        let stride = self.steps[1] - self.steps[0];
        ensure!(
            self.steps.windows(2).all(|w| w[1] - w[0] == stride),
            Parameter,
            "kernel frames are not uniformly spaced"
        );
        Trajectory::new(self.domain.clone(), 0.0, stride as f64 * self.dt, self.frames.clone())
    }
}

/// Evolve `∂_t Γ = L Γ` from `Γ(0) = δ_y / h^d` with explicit Euler steps.
///
/// `dt = None` picks 90% of the positivity limit.
pub fn kernel_evolve(domain: &Arc<Domain>, source: usize, t_end: f64, dt: Option<f64>) -> Result<KernelField> {
    kernel_evolve_with(domain, source, t_end, dt, FrameSchedule::Geometric { per_decade: 24 })
}

pub fn kernel_evolve_with(
    domain: &Arc<Domain>,
    source: usize,
    t_end: f64,
    dt: Option<f64>,
    schedule: FrameSchedule,
) -> Result<KernelField> {
    ensure!(source < domain.len(), Parameter, "source slot {source} out of range");
    ensure!(
        t_end.is_finite() && t_end > 0.0,
        Parameter,
        "t_end = {t_end} must be positive"
    );
    let limit = domain.stable_dt(1.0);
    let dt = dt.unwrap_or(0.9 * limit);
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(Error::Cfl { dt, limit });
    }
    let n_steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let n = domain.len();
    let mut u = vec![0.0; n];
    u[source] = 1.0 / domain.cell_volume();
    let mut lu = vec![0.0; n];

    let mut steps = vec![0];
    let mut frames = vec![u.clone()];
    let ratio = match schedule {
        FrameSchedule::Geometric { per_decade } => {
            ensure!(per_decade > 0, Parameter, "per_decade must be positive");
            10f64.powf(1.0 / per_decade as f64)
        }
        FrameSchedule::Every(k) => {
            ensure!(k > 0, Parameter, "stride must be positive");
            0.0
        }
    };
    let mut next_t = dt;
    for step in 1..=n_steps {
        domain.apply_laplacian(&u, &mut lu);
        for i in 0..n {
            u[i] += dt * lu[i];
        }
        let t = step as f64 * dt;
        let keep = match schedule {
            FrameSchedule::Every(k) => step % k == 0,
            FrameSchedule::Geometric { .. } => {
                if t >= next_t * (1.0 - 1e-12) {
                    while next_t <= t * (1.0 + 1e-12) {
                        next_t *= ratio;
                    }
                    true
                } else {
                    false
                }
            }
        };
        if keep || step == n_steps {
            steps.push(step);
            frames.push(u.clone());
        }
    }
    Ok(KernelField {
        domain: domain.clone(),
        source,
        dt,
        steps,
        frames,
    })
}

fn kernel_norm(values: &[f64], p: f64, vol: f64) -> f64 {
    if p == f64::INFINITY {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        (crate::grid::neumaier(values.iter().map(|v| v.abs().powf(p))) * vol).powf(1.0 / p)
    }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Slope of `ln ‖Γ(t)‖_p` against `ln t` over the intermediate regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub p: Num,
    pub slope: f64,
    pub target_slope: f64,
    /// `exp` of the regression intercept.
    pub fitted_constant: f64,
    /// `sup_t ‖Γ(t)‖_p t^{-target}` over `(0, t_mix]`.
    pub envelope_constant: f64,
    pub regime: [f64; 2],
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelNormReport {
    pub dim: usize,
    pub h: f64,
    pub frames_in_regime: usize,
    pub rows: Vec<SlopeRow>,
}

impl KernelNormReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_estimate(&self) -> EstimateReport {
        let mut rep = EstimateReport::new("heat_kernel.norms");
        for r in &self.rows {
            rep.push(
                CheckRow::with_pass(
                    format!("slope_p{}", r.p.0),
                    (r.slope - r.target_slope).abs(),
                    r.tolerance,
                    r.pass,
                )
                .param("p", r.p.0)
                .param("slope", r.slope)
                .param("target_slope", r.target_slope)
                .param("fitted_constant", r.fitted_constant)
                .param("t_lo", r.regime[0])
                .param("t_hi", r.regime[1]),
            );
        }
        rep
    }
}

/// Intermediate regime `[4h², t_mix]`, `t_mix` the first time `‖Γ‖_∞ ≤ 2/|Ω|`.
pub fn intermediate_regime(kernel: &KernelField) -> Result<(usize, usize, [f64; 2])> {
    let dom = kernel.domain();
    let t_lo = 4.0 * dom.h() * dom.h();
    let cap = 2.0 / dom.volume();
    let last = kernel.len() - 1;
    let k_mix = (1..kernel.len())
        .find(|&k| kernel_norm(kernel.frame(k), f64::INFINITY, 1.0) <= cap)
        .unwrap_or(last);
    let t_hi = kernel.time(k_mix);
    let k_lo = (1..kernel.len())
        .find(|&k| kernel.time(k) >= t_lo * (1.0 - 1e-12))
        .unwrap_or(last);
    let used = (k_mix + 1).saturating_sub(k_lo);
    ensure!(
        used >= 10 && t_hi >= 10.0 * t_lo * (1.0 - 1e-9),
        Sampling,
        "regime [{t_lo:e}, {t_hi:e}] holds {used} frames; need ≥ 10 frames spanning a decade"
    );
    Ok((k_lo, k_mix, [t_lo, t_hi]))
}

/// Fit `‖Γ(t)‖_p ≈ C t^{-(d/2)(1 - 1/p)}` for each `p`.
pub fn kernel_norm_report(kernel: &KernelField, ps: &[f64], tolerance: f64) -> Result<KernelNormReport> {
    let dom = kernel.domain();
    let d = dom.dim() as f64;
    let vol = dom.cell_volume();
    let (k_lo, k_hi, regime) = intermediate_regime(kernel)?;
    let mut rows = Vec::new();
    for &p in ps {
        ensure!(p == f64::INFINITY || p >= 1.0, Parameter, "p = {p} must lie in [1, ∞]");
        let inv_p = if p == f64::INFINITY { 0.0 } else { 1.0 / p };
        let target = -(d / 2.0) * (1.0 - inv_p);
        let (xs, ys): (Vec<f64>, Vec<f64>) = (k_lo..=k_hi)
            .map(|k| (kernel.time(k).ln(), kernel_norm(kernel.frame(k), p, vol).ln()))
            .unzip();
        let (a, b) = linear_fit(&xs, &ys);
        let envelope = (1..=k_hi)
            .map(|k| kernel_norm(kernel.frame(k), p, vol) * kernel.time(k).powf(-target))
            .fold(0.0, f64::max);
        rows.push(SlopeRow {
            p: Num(p),
            slope: b,
            target_slope: target,
            fitted_constant: a.exp(),
            envelope_constant: envelope,
            regime,
            tolerance,
            pass: (b - target).abs() <= tolerance,
        });
    }
    Ok(KernelNormReport {
        dim: dom.dim(),
        h: dom.h(),
        frames_in_regime: k_hi + 1 - k_lo,
        rows,
    })
}

/// First moment `m(t) = ∫ Γ(t, x, y) |x - y| dy` and its fitted growth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    pub slope: f64,
    pub fitted_constant: f64,
    pub regime: [f64; 2],
}

impl MomentSeries {
    /// `sup_{0 < t ≤ t_max} m(t) / t^{1/2 - ε}`.
    pub fn prefactor(&self, eps: f64, t_max: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.moments)
            .filter(|(&t, _)| t > 0.0 && t <= t_max * (1.0 + 1e-12))
            .map(|(&t, &m)| m / t.powf(0.5 - eps))
            .fold(0.0, f64::max)
    }
}

pub fn kernel_moment(kernel: &KernelField) -> Result<MomentSeries> {
    let dom = kernel.domain();
    ensure!(
        !dom.has_dirichlet(),
        Precondition,
        "moment growth is defined for pure-Neumann masks"
    );
    let y = kernel.source_point().to_vec();
    let dist: Vec<f64> = (0..dom.len()).map(|s| dist2(dom.point(s), &y).sqrt()).collect();
    let vol = dom.cell_volume();
    let moments: Vec<f64> = (0..kernel.len())
        .map(|k| crate::grid::neumaier(kernel.frame(k).iter().zip(&dist).map(|(g, r)| g * r)) * vol)
        .collect();
    let times: Vec<f64> = (0..kernel.len()).map(|k| kernel.time(k)).collect();
    let (k_lo, k_hi, regime) = intermediate_regime(kernel)?;
    let xs: Vec<f64> = times[k_lo..=k_hi].iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = moments[k_lo..=k_hi].iter().map(|m| m.ln()).collect();
    let (a, b) = linear_fit(&xs, &ys);
    Ok(MomentSeries {
        times,
        moments,
        slope: b,
        fitted_constant: a.exp(),
        regime,
    })
}

/// `sup_{0 < t ≤ t_max} ‖Γ(t, ·, y)‖_{p} t^{d(1 - 1/p)/2}` over the given sources.
///
/// With `p = q'` this is the prefactor `C` in `‖Γ(t)‖_{q'} ≤ C t^{-d/(2q)}`.
pub fn fit_norm_prefactor(domain: &Arc<Domain>, sources: &[usize], p: f64, t_max: f64) -> Result<f64> {
    ensure!(!sources.is_empty(), Sampling, "no kernel sources");
    let d = domain.dim() as f64;
    let inv_p = if p == f64::INFINITY { 0.0 } else { 1.0 / p };
    let expo = d * (1.0 - inv_p) / 2.0;
    let vol = domain.cell_volume();
    let mut best = 0.0f64;
    for &s in sources {
        let k = kernel_evolve(domain, s, t_max, None)?;
        for i in 1..k.len() {
            best = best.max(kernel_norm(k.frame(i), p, vol) * k.time(i).powf(expo));
        }
    }
    Ok(best)
}

/// `Φ(t, r) = (4πt)^{-d/2} e^{-r²/(4t)}`.
pub fn gaussian(d: usize, t: f64, r: f64) -> f64 {
    (4.0 * PI * t).powf(-(d as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
}

/// `sup_{0 < s ≤ t} Φ(s, r)`; `Φ(·, r)` peaks at `s = r²/(2d)`.
pub fn gaussian_running_sup(d: usize, t: f64, r: f64) -> f64 {
    let s_star = r * r / (2.0 * d as f64);
    gaussian(d, t.min(s_star), r)
}

/// Comparison function `Ψ(t, x, y) = Φ(t, |x-y|) - sup_{s ≤ t} Φ(s, 7R/10)`.
pub fn psi(d: usize, t: f64, dist: f64, r: f64) -> f64 {
    gaussian(d, t, dist) - gaussian_running_sup(d, t, 0.7 * r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub label: String,
    pub n: usize,
    pub h: f64,
    pub sources: usize,
    pub samples: usize,
    /// `max (Ψ - Γ)_+` before slack.
    pub violation: f64,
    /// Largest `Ψ - Γ - slack`; positive means the bound failed.
    pub excess: f64,
    pub worst: [f64; 2],
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
    pub shrinking: bool,
    pub pass: bool,
}

impl LowerBoundReport {
    pub fn to_estimate(&self) -> EstimateReport {
        let mut rep = EstimateReport::new("heat_kernel.gaussian_lower_bound");
        for r in &self.rows {
            rep.push(
                CheckRow::with_pass(format!("lower_bound[{}]", r.label), r.excess, 0.0, r.pass)
                    .param("n", r.n as f64)
                    .param("h", r.h)
                    .param("violation", r.violation)
                    .param("samples", r.samples as f64),
            );
        }
        rep.push(CheckRow::with_pass(
            "violation_shrinks_under_refinement",
            0.0,
            0.0,
            self.shrinking,
        ));
        rep
    }
}

/// Options for [`gaussian_lower_bound_check`].
#[derive(Clone, Debug)]
pub struct LowerBoundOptions {
    /// Grid cells across the box `[c - 1.1R, c + 1.1R]^d` on the coarse level.
    pub n: usize,
    pub sources: usize,
    pub relative_slack: f64,
    pub absolute_slack: f64,
    pub frames_per_decade: usize,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        LowerBoundOptions {
            n: 96,
            sources: 3,
            relative_slack: 0.05,
            absolute_slack: 1e-8,
            frames_per_decade: 12,
        }
    }
}

/// Check `Γ_U(t, x, y) ≥ Ψ(t, x, y)` for `x, y ∈ U_e` and `4h² ≤ t ≤ 49R²/(200d)`
/// on the graph domain cut to `B(c, R)`, at spacing `h` and `h/2`.
pub fn gaussian_lower_bound_check(geom: &GraphGeometry, opts: &LowerBoundOptions) -> Result<LowerBoundReport> {
    geom.check_admissible()?;
    let d = geom.dim();
    let r = geom.radius;
    let lower: Vec<f64> = geom.center.iter().map(|c| c - 1.1 * r).collect();
    let upper: Vec<f64> = geom.center.iter().map(|c| c + 1.1 * r).collect();
    let coarse = GridSpec::boxed(&lower, &upper, opts.n)?;
    let t_min = 4.0 * coarse.h() * coarse.h();
    let t_max = 49.0 * r * r / (200.0 * d as f64);
    ensure!(
        t_max > t_min,
        Sampling,
        "grid too coarse: 4h² = {t_min:e} ≥ T = {t_max:e}"
    );
    let mut rows = Vec::new();
    for level in 0..2 {
        let grid = coarse.refined(1 << level)?;
        let dom = geom.ball_domain(grid)?;
        rows.push(lower_bound_on(geom, &dom, t_min, t_max, opts, opts.n << level)?);
    }
    let shrinking = rows[1].violation <= rows[0].violation;
    let pass = rows.iter().all(|r| r.pass) && shrinking;
    Ok(LowerBoundReport { rows, shrinking, pass })
}

fn lower_bound_on(
    geom: &GraphGeometry,
    dom: &Arc<Domain>,
    t_min: f64,
    t_max: f64,
    opts: &LowerBoundOptions,
    n: usize,
) -> Result<LowerBoundRow> {
    let d = geom.dim();
    let r = geom.radius;
    let ue = geom.target_center();
    let targets = dom.slots_in_ball(&ue, r / 10.0);
    ensure!(!targets.is_empty(), Sampling, "target ball holds no nodes");
    let mut sources: Vec<usize> = vec![dom.nearest_slot(&ue)];
    for i in 1..opts.sources {
        let mut x = ue.clone();
        let ang = 2.0 * PI * i as f64 / (opts.sources - 1).max(1) as f64;
        x[0] += 0.07 * r * ang.cos();
        x[d - 1] += 0.07 * r * ang.sin();
        let s = dom.nearest_slot(&x);
        if !sources.contains(&s) && targets.contains(&s) {
            sources.push(s);
        }
    }
    let mut row = LowerBoundRow {
        label: geom.label.clone(),
        n,
        h: dom.h(),
        sources: sources.len(),
        samples: 0,
        violation: 0.0,
        excess: f64::NEG_INFINITY,
        worst: [0.0, 0.0],
        pass: true,
    };
    for &s in &sources {
        let k = kernel_evolve_with(
            dom,
            s,
            t_max,
            None,
            FrameSchedule::Geometric {
                per_decade: opts.frames_per_decade,
            },
        )?;
        let x = dom.point(s).to_vec();
        for i in 1..k.len() {
            let t = k.time(i);
            if t < t_min * (1.0 - 1e-12) {
                continue;
            }
            let frame = k.frame(i);
            for &y in &targets {
                let dist = dist2(dom.point(y), &x).sqrt();
                let ps = psi(d, t, dist, r);
                let gap = ps - frame[y];
                let slack = opts.relative_slack * ps.abs() + opts.absolute_slack;
                row.samples += 1;
                row.violation = row.violation.max(gap);
                if gap - slack > row.excess {
                    row.excess = gap - slack;
                    row.worst = [t, dist];
                }
            }
        }
    }
    row.pass = row.excess <= 0.0;
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Domain};

    fn line(n: usize) -> Arc<Domain> {
        Domain::neumann_box(GridSpec::cube(1, 0.0, 1.0, n).unwrap()).unwrap()
    }

    #[test]
    fn neumann_mass_is_conserved() {
        let dom = line(64);
        let k = kernel_evolve(&dom, 10, 0.05, None).unwrap();
        for i in 0..k.len() {
            assert!((k.mass(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_mass_decreases() {
        let dom = Domain::boxed(GridSpec::cube(1, 0.0, 1.0, 32).unwrap(), Boundary::Dirichlet).unwrap();
        let k = kernel_evolve(&dom, 16, 0.2, None).unwrap();
        for i in 1..k.len() {
            assert!(k.mass(i) <= k.mass(i - 1) + 1e-15);
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let dom = line(32);
        let limit = dom.stable_dt(1.0);
        assert!(matches!(
            kernel_evolve(&dom, 3, 0.1, Some(1.5 * limit)),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn running_sup_switches_at_peak() {
        let (d, r) = (2usize, 0.7);
        let s_star = r * r / 4.0;
        assert_eq!(gaussian_running_sup(d, 10.0, r), gaussian(d, s_star, r));
        assert_eq!(gaussian_running_sup(d, 0.5 * s_star, r), gaussian(d, 0.5 * s_star, r));
        assert!(gaussian(d, 1.01 * s_star, r) < gaussian(d, s_star, r));
    }

    #[test]
    fn one_dimensional_slopes() {
        let dom = line(512);
        let k = kernel_evolve(&dom, 256, 0.05, None).unwrap();
        let rep = kernel_norm_report(&k, &[1.0, 2.0, f64::INFINITY], 0.05).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
