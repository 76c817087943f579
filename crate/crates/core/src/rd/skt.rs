use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use super::{check_initial, integral, integrate, running_integral, sup, to_trajectories, ClipAudit, RunSpec};
use crate::error::{ensure, Result};
use crate::grid::{gradient_magnitude, poisson_neumann, Domain, Field, Trajectory};
use crate::report::{CheckRow, EstimateReport};

/// Coefficients of
/// `u_t − Δ[(d₁ + σv)u] = u(r_u − d₁₁u − d₁₂v)`, `v_t − d₂Δv = v(r_v − d₂₁u − d₂₂v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SktParams {
    pub d1: f64,
    pub d2: f64,
    pub sigma: f64,
    pub ru: f64,
    pub rv: f64,
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
}

impl Default for SktParams {
    fn default() -> Self {
        SktParams {
            d1: 0.5,
            d2: 1.0,
            sigma: 0.5,
            ru: 1.0,
            rv: 1.0,
            d11: 1.0,
            d12: 0.5,
            d21: 0.5,
            d22: 1.0,
        }
    }
}

impl SktParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        ensure!(p.d1 > 0.0 && p.d2 > 0.0, Parameter, "d1, d2 must be positive");
        ensure!(p.sigma >= 0.0, Parameter, "sigma must be nonnegative");
        ensure!(
            p.ru >= 0.0 && p.rv >= 0.0,
            Parameter,
            "growth rates must be nonnegative"
        );
        ensure!(
            p.d11 > 0.0 && p.d12 > 0.0 && p.d21 > 0.0 && p.d22 > 0.0,
            Parameter,
            "competition coefficients must be positive"
        );
        Ok(())
    }

    /// `max(‖v_init‖_∞, r_v/d₂₂)`.
    pub fn v_ceiling(&self, v_init_sup: f64) -> f64 {
        v_init_sup.max(self.rv / self.d22)
    }
}

#[derive(Clone, Debug)]
pub struct SktRun {
    pub params: SktParams,
    pub u: Trajectory,
    pub v: Trajectory,
    pub dt: f64,
    pub steps: usize,
    pub clip: ClipAudit,
    pub v_ceiling: f64,
}

impl SktRun {
    pub fn domain(&self) -> &Arc<Domain> {
        self.u.domain()
    }
}

pub fn skt_solve(params: &SktParams, u_init: &Field, v_init: &Field, run: RunSpec) -> Result<SktRun> {
    params.validate()?;
    let dom = u_init.domain().clone();
    check_initial(&dom, &[u_init, v_init])?;
    let p = *params;
    let h2 = dom.h() * dom.h();
    let deg = dom.max_center_weight();
    let v_cap = p.v_ceiling(v_init.max());
    let u_est = 2.0 * u_init.max().max(p.ru / p.d11);
    let kappa = (p.d1 + p.sigma * v_cap).max(p.d2);
    let react = (p.d11 + p.d21) * u_est + (p.d12 + p.d22) * v_cap;
    let dt_max = 1.0 / (deg * kappa / h2 + react);

    let n = dom.len();
    let lap_dom = dom.clone();
    let mut flux = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let rhs = move |s: &[Vec<f64>], out: &mut [Vec<f64>]| {
        let (u, v) = (&s[0], &s[1]);
        for i in 0..n {
            flux[i] = (p.d1 + p.sigma * v[i]) * u[i];
        }
        lap_dom.apply_laplacian(&flux, &mut lap);
        for i in 0..n {
            out[0][i] = lap[i] + u[i] * (p.ru - p.d11 * u[i] - p.d12 * v[i]);
        }
        lap_dom.apply_laplacian(v, &mut lap);
        for i in 0..n {
            out[1][i] = p.d2 * lap[i] + v[i] * (p.rv - p.d21 * u[i] - p.d22 * v[i]);
        }
    };
    let stiff_dom = dom.clone();
    let stiffness = move |s: &[Vec<f64>]| {
        let (u, v) = (&s[0], &s[1]);
        (0..n).fold(0.0f64, |m, i| {
            let c = stiff_dom.center_weight(i) / h2;
            let ru = c * (p.d1 + p.sigma * v[i]) + p.d11 * u[i] + p.d12 * v[i];
            let rv = c * p.d2 + p.d21 * u[i] + p.d22 * v[i];
            m.max(ru).max(rv)
        })
    };
    let state = vec![u_init.values().to_vec(), v_init.values().to_vec()];
    let out = integrate(&dom, state, run, dt_max, rhs, stiffness)?;
    let tau = run.t_end / run.frames as f64;
    let mut tr = to_trajectories(&dom, out.frames, tau)?;
    let v = tr.pop().expect("two species");
    let u = tr.pop().expect("two species");
    Ok(SktRun {
        params: p,
        u,
        v,
        dt: out.dt,
        steps: out.steps,
        clip: out.clip,
        v_ceiling: v_cap,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct AuxOptions {
    /// Build `w̃` on every k-th frame (0 disables it).
    pub w_tilde_every: usize,
}

impl Default for AuxOptions {
    fn default() -> Self {
        AuxOptions { w_tilde_every: 8 }
    }
}

/// Auxiliary variables of the SKT system and the residual of
/// `ν⁻¹ ∂_t w − Δw = u_init + r_u ∫₀ᵗ u`.
#[derive(Clone, Debug)]
pub struct AuxiliaryState {
    /// `m_t − Δm = u(d₁₁u + d₁₂v)`, `m(0) = 0`.
    pub m: Trajectory,
    /// `ν = (μu + m)/(u + m)`, `μ = d₁ + σv`.
    pub nu: Trajectory,
    /// `w = ∫₀ᵗ (μu + m)`.
    pub w: Trajectory,
    /// `w̃` on every `w_tilde_every`-th frame.
    pub w_tilde: Option<Trajectory>,
    /// Sup-norm residual per interior frame `1..len-1`.
    pub residual: Vec<f64>,
    pub residual_max: f64,
    pub nu_bounds: [f64; 2],
    pub nu_range: [f64; 2],
    pub nu_guarded: usize,
    pub m_min: f64,
    /// Largest per-node decrease of `w` between frames.
    pub w_decrease: f64,
    /// `min (Δw̃ − u)` over nodes with a full interior stencil.
    pub w_tilde_margin: Option<f64>,
}

pub fn skt_auxiliary(run: &SktRun, opts: AuxOptions) -> Result<AuxiliaryState> {
    let p = run.params;
    let dom = run.domain().clone();
    let (u, v) = (&run.u, &run.v);
    let n = dom.len();
    let k_count = u.len();
    ensure!(k_count >= 3, Sampling, "auxiliary residual needs at least three frames");
    let tau = u.dt();

    let source: Vec<Vec<f64>> = (0..k_count)
        .map(|k| {
            let (uk, vk) = (u.frame(k), v.frame(k));
            (0..n).map(|i| uk[i] * (p.d11 * uk[i] + p.d12 * vk[i])).collect()
        })
        .collect();
    let m_frames = heat_with_source(&dom, &source, tau)?;

    let v_sup = v.sup_abs();
    let nu_lo = 1f64.min(p.d1);
    let nu_hi = 1f64.max(p.d1 + p.sigma * v_sup);
    let mut guarded = 0;
    let mut nu_range = [f64::INFINITY, f64::NEG_INFINITY];
    let mut flux = Vec::with_capacity(k_count);
    let mut nu = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let (uk, vk, mk) = (u.frame(k), v.frame(k), &m_frames[k]);
        let mut fk = vec![0.0; n];
        let mut nk = vec![0.0; n];
        for i in 0..n {
            let mu = p.d1 + p.sigma * vk[i];
            fk[i] = mu * uk[i] + mk[i];
            let denom = uk[i] + mk[i];
            nk[i] = if denom < 1e-14 {
                guarded += 1;
                mu
            } else {
                fk[i] / denom
            };
            nu_range[0] = nu_range[0].min(nk[i]);
            nu_range[1] = nu_range[1].max(nk[i]);
        }
        flux.push(fk);
        nu.push(nk);
    }
    if guarded > 0 {
        info!("ν guard applied at {guarded} node-frames where u + m < 1e-14");
    }
    let w_frames = running_integral(&flux, tau);
    let int_u = running_integral(u.frames(), tau);

    let u_init = u.frame(0);
    let mut lw = vec![0.0; n];
    let mut residual = Vec::with_capacity(k_count - 2);
    for k in 1..k_count - 1 {
        dom.apply_laplacian(&w_frames[k], &mut lw);
        let mut r = 0.0f64;
        for i in 0..n {
            let dw = (w_frames[k + 1][i] - w_frames[k - 1][i]) / (2.0 * tau);
            let res = dw / nu[k][i] - lw[i] - u_init[i] - p.ru * int_u[k][i];
            r = r.max(res.abs());
        }
        residual.push(r);
    }
    let residual_max = residual.iter().cloned().fold(0.0, f64::max);

    let w_decrease = w_frames
        .windows(2)
        .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a - b))
        .fold(0.0, f64::max);
    let m_min = m_frames.iter().flatten().cloned().fold(f64::INFINITY, f64::min);

    let (w_tilde, margin) = if opts.w_tilde_every > 0 && !dom.has_dirichlet() {
        let (wt, margin) = build_w_tilde(&dom, run, &w_frames, &int_u, opts.w_tilde_every)?;
        (Some(wt), Some(margin))
    } else {
        (None, None)
    };

    Ok(AuxiliaryState {
        m: Trajectory::new(dom.clone(), 0.0, tau, m_frames)?,
        nu: Trajectory::new(dom.clone(), 0.0, tau, nu)?,
        w: Trajectory::new(dom, 0.0, tau, w_frames)?,
        w_tilde,
        residual,
        residual_max,
        nu_bounds: [nu_lo, nu_hi],
        nu_range,
        nu_guarded: guarded,
        m_min,
        w_decrease,
        w_tilde_margin: margin,
    })
}

/// `m_t − Lm = s(t)`, `m(0) = 0`, `s` linear between frames, SSP-RK2 substeps.
fn heat_with_source(dom: &Arc<Domain>, source: &[Vec<f64>], tau: f64) -> Result<Vec<Vec<f64>>> {
    let n = dom.len();
    let limit = dom.stable_dt(1.0);
    let sub = ((tau / (0.9 * limit)) - 1e-9).ceil().max(1.0) as usize;
    let dt = tau / sub as f64;
    let mut m = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let mut out = vec![m.clone()];
    for k in 0..source.len() - 1 {
        let (s0, s1) = (&source[k], &source[k + 1]);
        for j in 0..sub {
            let th0 = j as f64 / sub as f64;
            let th1 = (j + 1) as f64 / sub as f64;
            dom.apply_laplacian(&m, &mut lap);
            for i in 0..n {
                stage[i] = m[i] + dt * (lap[i] + (1.0 - th0) * s0[i] + th0 * s1[i]);
            }
            dom.apply_laplacian(&stage, &mut lap);
            for i in 0..n {
                m[i] = 0.5 * (m[i] + stage[i] + dt * (lap[i] + (1.0 - th1) * s0[i] + th1 * s1[i]));
            }
        }
        out.push(m.clone());
    }
    Ok(out)
}

/// `w̃ = w + |x−c|²/(2d) (‖u_init‖_∞ + r_u T ‖u‖_{L^∞L¹}/|Ω|) + r_u Δ⁻¹(∫₀ᵗu − mean)`.
fn build_w_tilde(
    dom: &Arc<Domain>,
    run: &SktRun,
    w: &[Vec<f64>],
    int_u: &[Vec<f64>],
    every: usize,
) -> Result<(Trajectory, f64)> {
    let p = run.params;
    let n = dom.len();
    let d = dom.dim();
    let grid = dom.grid();
    let center: Vec<f64> = (0..d).map(|a| grid.origin()[a] + 0.5 * grid.extent(a)).collect();
    let t_end = run.u.t_end();
    let l1_max = run.u.frames().iter().map(|f| integral(dom, f)).fold(0.0, f64::max);
    let coef = sup(run.u.frame(0)) + p.ru * t_end * l1_max / dom.volume();
    let bowl: Vec<f64> = (0..n)
        .map(|s| crate::grid::dist2(dom.point(s), &center) / (2.0 * d as f64))
        .collect();
    let interior: Vec<usize> = (0..n).filter(|&s| dom.neighbors(s).len() == 2 * d).collect();
    let mut frames = Vec::new();
    let mut margin = f64::INFINITY;
    let mut lap = vec![0.0; n];
    for k in (0..w.len()).step_by(every) {
        let mean = int_u[k].iter().sum::<f64>() / n as f64;
        let rhs = Field::new(dom.clone(), int_u[k].iter().map(|x| x - mean).collect())?;
        let corr = poisson_neumann(&rhs)?;
        let wt: Vec<f64> = (0..n)
            .map(|i| w[k][i] + bowl[i] * coef + p.ru * corr.values()[i])
            .collect();
        dom.apply_laplacian(&wt, &mut lap);
        let uk = run.u.frame(k);
        for &i in &interior {
            margin = margin.min(lap[i] - uk[i]);
        }
        frames.push(wt);
    }
    Ok((
        Trajectory::new(dom.clone(), 0.0, run.u.dt() * every as f64, frames)?,
        margin,
    ))
}

/// Terms of the `L^{p+1}` energy inequality for `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpEnergy {
    pub p: f64,
    /// `∫ u(T)^{p+1}/(p+1)`.
    pub final_term: f64,
    /// `d₁ 4p/(p+1)² ∫₀ᵀ ∫ |∇u^{(p+1)/2}|²`.
    pub gradient_term: f64,
    /// `∫₀ᵀ ∫ u^{p+2}`.
    pub moment: f64,
}

impl LpEnergy {
    pub fn lhs(&self) -> f64 {
        self.final_term + self.gradient_term
    }
    /// `lhs / (1 + moment)`, the smallest admissible `C_p` for this run.
    pub fn ratio(&self) -> f64 {
        self.lhs() / (1.0 + self.moment)
    }
}

pub fn lp_energy(run: &SktRun, p: f64) -> Result<LpEnergy> {
    ensure!(p > 0.0, Parameter, "p = {p} must be positive");
    let u = &run.u;
    let dom = u.domain();
    let tau = u.dt();
    let last = Field::new(dom.clone(), u.last().to_vec())?;
    let final_term = integral(dom, &last.map(|x| x.powf(p + 1.0) / (p + 1.0)).into_values());
    let grad: Vec<f64> = (0..u.len())
        .map(|k| {
            let g = u.field(k).map(|x| x.powf((p + 1.0) / 2.0));
            let gm = gradient_magnitude(&g);
            integral(dom, &gm.iter().map(|x| x * x).collect::<Vec<_>>())
        })
        .collect();
    let mom: Vec<f64> = (0..u.len())
        .map(|k| integral(dom, &u.frame(k).iter().map(|x| x.powf(p + 2.0)).collect::<Vec<_>>()))
        .collect();
    let trap = |v: &[f64]| v.windows(2).map(|w| 0.5 * tau * (w[0] + w[1])).sum::<f64>();
    Ok(LpEnergy {
        p,
        final_term,
        gradient_term: run.params.d1 * 4.0 * p / ((p + 1.0) * (p + 1.0)) * trap(&grad),
        moment: trap(&mom),
    })
}

/// `lhs ≤ C_p (1 + ∫∫u^{p+2})` with `C_p` frozen from a calibration run.
pub fn lp_energy_report(energy: &LpEnergy, c_p: f64) -> EstimateReport {
    let mut rep = EstimateReport::new("rd.lp_energy");
    rep.push(
        CheckRow::le(
            format!("lp_energy_p{}", energy.p),
            energy.lhs(),
            c_p * (1.0 + energy.moment),
        )
        .param("p", energy.p)
        .param("c_p", c_p)
        .param("final_term", energy.final_term)
        .param("gradient_term", energy.gradient_term)
        .param("moment", energy.moment),
    );
    rep
}
