use std::sync::Arc;

use super::{check_initial, integral, integrate, running_integral, ClipAudit, RunSpec};
use crate::error::{ensure, Result};
use crate::grid::{Domain, Field, Trajectory};

/// Solution of `∂_t u_i − d_iΔu_i = (−1)^i (u₁u₃ − u₂u₄)`, `i = 1..4`.
#[derive(Clone, Debug)]
pub struct QuadRun {
    pub d: [f64; 4],
    pub u: Vec<Trajectory>,
    pub dt: f64,
    pub steps: usize,
    pub clip: ClipAudit,
}

/// Mass balance, `μ = Σd_iu_i / Σu_i`, `w = ∫₀ᵗ Σd_iu_i` and the residuals of
/// `Δw = Σu_i − Σu_i^init` and `∂_t w − μΔw = μΣu_i^init`.
#[derive(Clone, Debug)]
pub struct QuadraticDiagnostics {
    /// `Σ_i ∫u_i` per frame.
    pub mass: Vec<f64>,
    pub mass_drift: f64,
    pub mu: Trajectory,
    pub mu_range: [f64; 2],
    pub mu_guarded: usize,
    pub w: Trajectory,
    /// Sup-norm residual of the `Δw` identity per frame.
    pub newu: Vec<f64>,
    pub newu_max: f64,
    /// Sup-norm residual of the `w` evolution per interior frame.
    pub newuu: Vec<f64>,
    pub newuu_max: f64,
}

pub fn quadratic_solve(d: [f64; 4], u_init: [&Field; 4], run: RunSpec) -> Result<QuadRun> {
    ensure!(
        d.iter().all(|&x| x > 0.0 && x.is_finite()),
        Parameter,
        "diffusions must be positive, got {d:?}"
    );
    let dom = u_init[0].domain().clone();
    check_initial(&dom, &u_init)?;
    let n = dom.len();
    let h2 = dom.h() * dom.h();
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let total_sup: f64 = u_init.iter().map(|f| f.max()).sum();
    let dt_max = 1.0 / (dom.max_center_weight() * dmax / h2 + 2.0 * total_sup);

    let lap_dom = dom.clone();
    let mut lap = vec![0.0; n];
    let rhs = move |s: &[Vec<f64>], out: &mut [Vec<f64>]| {
        for i in 0..n {
            let r = s[0][i] * s[2][i] - s[1][i] * s[3][i];
            out[0][i] = -r;
            out[1][i] = r;
            out[2][i] = -r;
            out[3][i] = r;
        }
        for sp in 0..4 {
            lap_dom.apply_laplacian(&s[sp], &mut lap);
            for i in 0..n {
                out[sp][i] += d[sp] * lap[i];
            }
        }
    };
    let stiff_dom = dom.clone();
    let stiffness = move |s: &[Vec<f64>]| {
        let partner = [2, 3, 0, 1];
        (0..n).fold(0.0f64, |m, i| {
            let c = stiff_dom.center_weight(i) / h2;
            (0..4).fold(m, |m, sp| m.max(c * d[sp] + s[partner[sp]][i]))
        })
    };
    let state = u_init.iter().map(|f| f.values().to_vec()).collect();
    let out = integrate(&dom, state, run, dt_max, rhs, stiffness)?;
    let tau = run.t_end / run.frames as f64;
    Ok(QuadRun {
        d,
        u: super::to_trajectories(&dom, out.frames, tau)?,
        dt: out.dt,
        steps: out.steps,
        clip: out.clip,
    })
}

impl QuadRun {
    pub fn domain(&self) -> &Arc<Domain> {
        self.u[0].domain()
    }

    pub fn diagnostics(&self) -> Result<QuadraticDiagnostics> {
        let dom = self.domain().clone();
        let n = dom.len();
        let frames = self.u[0].len();
        ensure!(frames >= 3, Sampling, "diagnostics need at least three frames");
        let tau = self.u[0].dt();
        let d = self.d;
        let (dmin, dmax) = d
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));

        let mut total = Vec::with_capacity(frames);
        let mut weighted = Vec::with_capacity(frames);
        let mut mu = Vec::with_capacity(frames);
        let mut guarded = 0;
        let mut mu_range = [f64::INFINITY, f64::NEG_INFINITY];
        for k in 0..frames {
            let mut s = vec![0.0; n];
            let mut ws = vec![0.0; n];
            let mut mk = vec![0.0; n];
            for i in 0..n {
                for sp in 0..4 {
                    let v = self.u[sp].frame(k)[i];
                    s[i] += v;
                    ws[i] += d[sp] * v;
                }
                mk[i] = if s[i] < 1e-14 {
                    guarded += 1;
                    0.5 * (dmin + dmax)
                } else {
                    ws[i] / s[i]
                };
                mu_range[0] = mu_range[0].min(mk[i]);
                mu_range[1] = mu_range[1].max(mk[i]);
            }
            total.push(s);
            weighted.push(ws);
            mu.push(mk);
        }
        let mass: Vec<f64> = total.iter().map(|s| integral(&dom, s)).collect();
        let mass_drift = mass.iter().map(|m| (m - mass[0]).abs()).fold(0.0, f64::max);

        let w = running_integral(&weighted, tau);
        let mut lw = vec![0.0; n];
        let mut newu = Vec::with_capacity(frames);
        let mut newuu = Vec::with_capacity(frames - 2);
        for k in 0..frames {
            dom.apply_laplacian(&w[k], &mut lw);
            let r = (0..n).fold(0.0f64, |r, i| r.max((lw[i] - (total[k][i] - total[0][i])).abs()));
            newu.push(r);
            if k > 0 && k + 1 < frames {
                let r = (0..n).fold(0.0f64, |r, i| {
                    let dw = (w[k + 1][i] - w[k - 1][i]) / (2.0 * tau);
                    r.max((dw - mu[k][i] * lw[i] - mu[k][i] * total[0][i]).abs())
                });
                newuu.push(r);
            }
        }
        let newu_max = newu.iter().cloned().fold(0.0, f64::max);
        let newuu_max = newuu.iter().cloned().fold(0.0, f64::max);
        Ok(QuadraticDiagnostics {
            mass,
            mass_drift,
            mu: Trajectory::new(dom.clone(), 0.0, tau, mu)?,
            mu_range,
            mu_guarded: guarded,
            w: Trajectory::new(dom, 0.0, tau, w)?,
            newu,
            newu_max,
            newuu,
            newuu_max,
        })
    }
}
