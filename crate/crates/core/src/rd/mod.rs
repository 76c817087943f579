//! Reaction–diffusion systems: SKT cross-diffusion, the quadratic four-species
//! system and general polynomial networks, with their auxiliary variables.
//!
//! All systems advance with the two-stage SSP Runge–Kutta scheme (the average
//! of the state and two forward-Euler stages), so every stage is a convex
//! combination of positivity-preserving Euler steps.

mod general;
mod quadratic;
mod skt;

use std::sync::Arc;

use crate::error::{ensure, Error, Result};
use crate::grid::{neumaier, Domain, Trajectory};

pub use general::{
    c_table, general_solve, lower_triangular_inverse, structural_checks, structural_report, GeneralRun,
    GeneralSystemSpec, Reaction, StructuralOptions, StructuralReport,
};
pub use quadratic::{quadratic_solve, QuadRun, QuadraticDiagnostics};
pub use skt::{
    lp_energy, lp_energy_report, skt_auxiliary, skt_solve, AuxOptions, AuxiliaryState, LpEnergy, SktParams, SktRun,
};

/// Time grid and output cadence of a system run.
#[derive(Clone, Copy, Debug)]
pub struct RunSpec {
    pub t_end: f64,
    /// `None` picks 90% of the admissible step.
    pub dt: Option<f64>,
    /// Number of stored intervals; frames land at `k · t_end / frames`.
    pub frames: usize,
}

impl RunSpec {
    pub fn new(t_end: f64, frames: usize) -> Self {
        RunSpec {
            t_end,
            dt: None,
            frames,
        }
    }
}

/// Audit of values clipped to zero after each step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClipAudit {
    pub events: usize,
    /// Integral of the removed negative parts.
    pub mass: f64,
    /// Most negative value before clipping.
    pub worst: f64,
}

pub(crate) struct Integration {
    pub frames: Vec<Vec<Vec<f64>>>,
    pub dt: f64,
    pub steps: usize,
    pub clip: ClipAudit,
}

/// Advance `state` with SSP-RK2.
///
/// `rhs(state, out)` writes the time derivative. `stiffness(state)` bounds the
/// largest diagonal rate; a step with `dt · stiffness > 1` loses positivity and
/// aborts the run.
pub(crate) fn integrate(
    dom: &Arc<Domain>,
    mut state: Vec<Vec<f64>>,
    run: RunSpec,
    dt_max: f64,
    mut rhs: impl FnMut(&[Vec<f64>], &mut [Vec<f64>]),
    stiffness: impl Fn(&[Vec<f64>]) -> f64,
) -> Result<Integration> {
    ensure!(run.t_end > 0.0, Parameter, "t_end must be positive");
    ensure!(run.frames > 0, Parameter, "need at least one output interval");
    let target = run.dt.unwrap_or(0.9 * dt_max);
    if !(target > 0.0 && target <= dt_max * (1.0 + 1e-12)) {
        return Err(Error::Cfl {
            dt: target,
            limit: dt_max,
        });
    }
    let per_frame = ((run.t_end / run.frames as f64 / target) - 1e-9).ceil().max(1.0) as usize;
    let steps = per_frame * run.frames;
    let dt = run.t_end / steps as f64;
    let n = dom.len();
    let species = state.len();
    let vol = dom.cell_volume();
    let mut k1 = vec![vec![0.0; n]; species];
    let mut stage = state.clone();
    let mut clip = ClipAudit::default();
    let mut frames = vec![state.clone()];
    for step in 0..steps {
        let rate = stiffness(&state);
        if dt * rate > 1.0 + 1e-12 {
            return Err(Error::Solver(format!(
                "step {step} (frame {}): dt·rate = {:.3} exceeds the positivity limit",
                step / per_frame,
                dt * rate
            )));
        }
        rhs(&state, &mut k1);
        for s in 0..species {
            for i in 0..n {
                stage[s][i] = state[s][i] + dt * k1[s][i];
            }
        }
        rhs(&stage, &mut k1);
        for s in 0..species {
            for i in 0..n {
                let next = 0.5 * (state[s][i] + stage[s][i] + dt * k1[s][i]);
                if next < 0.0 {
                    clip.events += 1;
                    clip.mass += -next * vol;
                    clip.worst = clip.worst.min(next);
                    state[s][i] = 0.0;
                } else {
                    state[s][i] = next;
                }
            }
        }
        if (step + 1) % per_frame == 0 {
            if state.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Solver(format!(
                    "non-finite state at frame {}",
                    (step + 1) / per_frame
                )));
            }
            frames.push(state.clone());
        }
    }
    Ok(Integration {
        frames,
        dt,
        steps,
        clip,
    })
}

pub(crate) fn to_trajectories(dom: &Arc<Domain>, frames: Vec<Vec<Vec<f64>>>, tau: f64) -> Result<Vec<Trajectory>> {
    let species = frames[0].len();
    let mut per: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(frames.len()); species];
    for fr in frames {
        for (s, v) in fr.into_iter().enumerate() {
            per[s].push(v);
        }
    }
    per.into_iter()
        .map(|f| Trajectory::new(dom.clone(), 0.0, tau, f))
        .collect()
}

pub(crate) fn check_initial(dom: &Arc<Domain>, fields: &[&crate::grid::Field]) -> Result<()> {
    for (i, f) in fields.iter().enumerate() {
        ensure!(
            Arc::ptr_eq(f.domain(), dom),
            Geometry,
            "initial field {i} lives on another domain"
        );
        ensure!(
            f.min() >= 0.0,
            Precondition,
            "initial field {i} has negative values (min {})",
            f.min()
        );
    }
    Ok(())
}

pub(crate) fn integral(dom: &Domain, v: &[f64]) -> f64 {
    neumaier(v.iter().copied()) * dom.cell_volume()
}

/// Trapezoidal running integral `∫₀^{t_k} g` over frames spaced `tau`.
pub(crate) fn running_integral(frames: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let n = frames[0].len();
    let mut acc = vec![0.0; n];
    let mut out = vec![acc.clone()];
    for w in frames.windows(2) {
        for i in 0..n {
            acc[i] += 0.5 * tau * (w[0][i] + w[1][i]);
        }
        out.push(acc.clone());
    }
    out
}

pub(crate) fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Observed orders `log2(e_k / e_{k+1})` of a refinement sequence.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
