use std::fmt;
use std::sync::Arc;

use super::{Boundary, Domain, GridSpec, NodeKind};
use crate::error::{Error, Result};

/// Boundary profile `φ(y)`, `y` the first `d-1` coordinates relative to the center.
pub type Profile = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Region `{x : x_d - c_d > φ(x' - c')}` near a boundary point `c`, optionally cut to a ball.
#[derive(Clone)]
pub struct GraphGeometry {
    pub center: Vec<f64>,
    pub radius: f64,
    pub profile: Profile,
    pub label: String,
}

impl fmt::Debug for GraphGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphGeometry")
            .field("center", &self.center)
            .field("radius", &self.radius)
            .field("label", &self.label)
            .finish()
    }
}

impl GraphGeometry {
    pub fn flat(center: Vec<f64>, radius: f64) -> Self {
        GraphGeometry {
            center,
            radius,
            profile: Arc::new(|_| 0.0),
            label: "flat".into(),
        }
    }

    /// `φ(y) = amplitude · sin(frequency · y_0)`.
    pub fn sine(center: Vec<f64>, radius: f64, amplitude: f64, frequency: f64) -> Self {
        GraphGeometry {
            center,
            radius,
            profile: Arc::new(move |y: &[f64]| amplitude * y.first().map_or(0.0, |&y0| (frequency * y0).sin())),
            label: format!("sine(a={amplitude},k={frequency})"),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn phi(&self, y: &[f64]) -> f64 {
        (self.profile)(y)
    }

    /// Signed height of `x` above the graph.
    pub fn height(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut y = [0.0; 3];
        for a in 0..d - 1 {
            y[a] = x[a] - self.center[a];
        }
        x[d - 1] - self.center[d - 1] - self.phi(&y[..d - 1])
    }

    pub fn in_ball(&self, x: &[f64]) -> bool {
        super::dist2(x, &self.center) <= self.radius * self.radius
    }

    /// Require `|φ| ≤ R/(11d)` and `|∇φ| ≤ 1/(11d)` on `[-R, R]^{d-1}`, sampled.
    pub fn check_admissible(&self) -> Result<()> {
        let d = self.dim();
        let r = self.radius;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Geometry(format!("radius {r} must be positive")));
        }
        let bound_val = r / (11.0 * d as f64);
        let bound_grad = 1.0 / (11.0 * d as f64);
        let per_axis: usize = if d == 3 { 81 } else { 401 };
        let samples = per_axis.pow((d - 1) as u32).max(1);
        let step = r * 1e-5;
        let mut y = [0.0; 2];
        for idx in 0..samples {
            let mut k = idx;
            for a in 0..d - 1 {
                y[a] = -r + 2.0 * r * (k % per_axis) as f64 / (per_axis - 1) as f64;
                k /= per_axis;
            }
            let yy = &mut y[..d - 1];
            let v = self.phi(yy);
            if v.abs() > bound_val * (1.0 + 1e-9) {
                return Err(Error::Precondition(format!(
                    "|φ({yy:?})| = {v:e} exceeds R/(11d) = {bound_val:e}"
                )));
            }
            let mut g2 = 0.0;
            for a in 0..d - 1 {
                let keep = yy[a];
                yy[a] = keep + step;
                let hi = self.phi(yy);
                yy[a] = keep - step;
                let lo = self.phi(yy);
                yy[a] = keep;
                g2 += ((hi - lo) / (2.0 * step)).powi(2);
            }
            if g2.sqrt() > bound_grad * (1.0 + 1e-6) {
                return Err(Error::Precondition(format!(
                    "|∇φ({yy:?})| = {:e} exceeds 1/(11d) = {bound_grad:e}",
                    g2.sqrt()
                )));
            }
        }
        Ok(())
    }

    /// Ball cut by the graph: Neumann on the graph, Dirichlet on the sphere.
    pub fn ball_domain(&self, grid: GridSpec) -> Result<Arc<Domain>> {
        self.check_grid(&grid)?;
        Domain::from_fn(grid, Boundary::Dirichlet, |x| {
            let inside = self.in_ball(x);
            if inside && self.height(x) > 0.0 {
                NodeKind::Active
            } else if inside {
                NodeKind::Exterior(Boundary::Neumann)
            } else {
                NodeKind::Exterior(Boundary::Dirichlet)
            }
        })
    }

    /// Whole box above the graph, Neumann everywhere.
    pub fn half_box_domain(&self, grid: GridSpec) -> Result<Arc<Domain>> {
        self.check_grid(&grid)?;
        Domain::from_fn(grid, Boundary::Neumann, |x| {
            if self.height(x) > 0.0 {
                NodeKind::Active
            } else {
                NodeKind::Exterior(Boundary::Neumann)
            }
        })
    }

    /// Center of the target ball `U_e = B(c + (R/5) e_d, R/10)`.
    pub fn target_center(&self) -> Vec<f64> {
        let mut c = self.center.clone();
        let d = c.len();
        c[d - 1] += self.radius / 5.0;
        c
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::Geometry(format!(
                "geometry is {}-dimensional, grid is {}-dimensional",
                self.dim(),
                grid.dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steep_profile_rejected() {
        let g = GraphGeometry::sine(vec![0.0, 0.0], 1.0, 0.04, 3.0);
        assert!(matches!(g.check_admissible(), Err(Error::Precondition(_))));
        let ok = GraphGeometry::sine(vec![0.0, 0.0], 1.0, 0.03, 1.5);
        ok.check_admissible().unwrap();
    }

    #[test]
    fn ball_domain_is_mixed() {
        let g = GraphGeometry::flat(vec![0.0, 0.0], 0.5);
        let grid = GridSpec::boxed(&[-0.6, -0.6], &[0.6, 0.6], 24).unwrap();
        let dom = g.ball_domain(grid).unwrap();
        assert!(dom.has_dirichlet());
        assert!((0..dom.len()).all(|s| dom.point(s)[1] > 0.0));
    }
}
