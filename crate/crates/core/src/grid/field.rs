use std::sync::Arc;

use super::{neumaier, Domain};
use crate::error::{ensure, Result};

/// Values on the active nodes of a domain.
#[derive(Clone, Debug)]
pub struct Field {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == domain.len(),
            Parameter,
            "field has {} values for {} active nodes",
            values.len(),
            domain.len()
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            Domain,
            "field holds non-finite values"
        );
        Ok(Field { domain, values })
    }

    pub fn from_fn(domain: &Arc<Domain>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..domain.len()).map(|s| f(domain.point(s))).collect();
        Self::new(domain.clone(), values)
    }

    pub fn constant(domain: &Arc<Domain>, c: f64) -> Self {
        Field {
            domain: domain.clone(),
            values: vec![c; domain.len()],
        }
    }

    pub fn zeros(domain: &Arc<Domain>) -> Self {
        Self::constant(domain, 0.0)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        neumaier(self.values.iter().copied()) * self.domain.cell_volume()
    }
    pub fn mean(&self) -> f64 {
        neumaier(self.values.iter().copied()) / self.values.len() as f64
    }
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Masked Laplacian with the domain's boundary classes.
    pub fn laplacian(&self) -> Field {
        let mut out = vec![0.0; self.values.len()];
        self.domain.apply_laplacian(&self.values, &mut out);
        Field {
            domain: self.domain.clone(),
            values: out,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }
}

/// Frames on a uniform time lattice `t0 + k dt`.
///
/// Lookups between frames are piecewise constant: time `t` reads frame
/// `floor((t - t0) / dt)`, clamped to the last frame. A single-frame
/// trajectory is therefore constant in time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    domain: Arc<Domain>,
    t0: f64,
    dt: f64,
    frames: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(domain: Arc<Domain>, t0: f64, dt: f64, frames: Vec<Vec<f64>>) -> Result<Self> {
        ensure!(!frames.is_empty(), Parameter, "trajectory needs at least one frame");
        ensure!(
            dt.is_finite() && dt > 0.0,
            Parameter,
            "frame spacing {dt} must be positive"
        );
        ensure!(t0.is_finite(), Parameter, "start time must be finite");
        for f in &frames {
            ensure!(
                f.len() == domain.len(),
                Parameter,
                "frame length {} != {}",
                f.len(),
                domain.len()
            );
            ensure!(
                f.iter().all(|v| v.is_finite()),
                Domain,
                "trajectory holds non-finite values"
            );
        }
        Ok(Trajectory { domain, t0, dt, frames })
    }

    /// A time-independent trajectory.
    pub fn steady(field: &Field) -> Self {
        Trajectory {
            domain: field.domain().clone(),
            t0: 0.0,
            dt: 1.0,
            frames: vec![field.values().to_vec()],
        }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }
    pub fn t0(&self) -> f64 {
        self.t0
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
    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }
    pub fn frame(&self, k: usize) -> &[f64] {
        &self.frames[k]
    }
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
    pub fn t_end(&self) -> f64 {
        self.time(self.frames.len() - 1)
    }
    pub fn last(&self) -> &[f64] {
        &self.frames[self.frames.len() - 1]
    }
    pub fn field(&self, k: usize) -> Field {
        Field::new(self.domain.clone(), self.frames[k].clone()).expect("frames are validated")
    }

    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt + 1e-9).floor();
        (k.max(0.0) as usize).min(self.frames.len() - 1)
    }

    pub fn at(&self, t: f64) -> &[f64] {
        &self.frames[self.index_at(t)]
    }

    pub fn push(&mut self, frame: Vec<f64>) -> Result<()> {
        ensure!(frame.len() == self.domain.len(), Parameter, "frame length mismatch");
        ensure!(frame.iter().all(|v| v.is_finite()), Domain, "non-finite frame");
        self.frames.push(frame);
        Ok(())
    }

    pub fn into_frames(self) -> Vec<Vec<f64>> {
        self.frames
    }

    /// Same frames with every value transformed.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory {
            domain: self.domain.clone(),
            t0: self.t0,
            dt: self.dt,
            frames: self
                .frames
                .iter()
                .map(|fr| fr.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn min(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
