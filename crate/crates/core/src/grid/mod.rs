//! Cell-centered structured grids, masked domains, fields and discrete operators.
//!
//! Node `k` along an axis sits at `origin + (k + 1/2) h`, so the box faces lie
//! half a cell outside the outermost nodes. Mirror ghosts then realize Neumann
//! data and odd ghosts realize a zero trace on the face.

mod field;
mod geometry;
pub mod io;
mod norms;
mod poisson;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub use field::{Field, Trajectory};
pub use geometry::{GraphGeometry, Profile};
pub use norms::{
    gradient_lp_norm, gradient_magnitude, holder_norm, holder_norm_with, lipschitz_norm, lp_norm, lp_norm_on, lpq_norm,
    lpq_norm_window, oscillation, Cylinder, HolderEstimate, HolderOptions,
};
pub use poisson::poisson_neumann;

/// Largest number of nodes a grid may hold.
pub const NODE_CAP: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    origin: Vec<f64>,
    n: Vec<usize>,
    h: f64,
}

impl GridSpec {
    /// Grid with `n[a]` cells of width `h` along axis `a`, lower corner at `origin`.
    pub fn new(origin: Vec<f64>, n: Vec<usize>, h: f64) -> Result<Self> {
        let d = n.len();
        ensure!((1..=3).contains(&d), Geometry, "dimension {d} not in 1..=3");
        ensure!(
            origin.len() == d,
            Geometry,
            "origin has {} coordinates, expected {d}",
            origin.len()
        );
        ensure!(h.is_finite() && h > 0.0, Geometry, "spacing h = {h} must be positive");
        ensure!(n.iter().all(|&k| k >= 2), Geometry, "every axis needs at least 2 nodes");
        ensure!(origin.iter().all(|x| x.is_finite()), Geometry, "origin must be finite");
        let total = n
            .iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .filter(|&t| t <= NODE_CAP);
        ensure!(total.is_some(), Geometry, "grid {n:?} exceeds the node cap {NODE_CAP}");
        Ok(GridSpec { origin, n, h })
    }

    /// Cube `[lower, lower + side]^d` split into `n` cells per axis.
    pub fn cube(dim: usize, lower: f64, side: f64, n: usize) -> Result<Self> {
        ensure!(side > 0.0, Geometry, "side must be positive");
        Self::new(vec![lower; dim], vec![n; dim], side / n as f64)
    }

    /// Box `[lower, upper]` with spacing `side_0 / n0` shared by all axes.
    pub fn boxed(lower: &[f64], upper: &[f64], n0: usize) -> Result<Self> {
        ensure!(lower.len() == upper.len(), Geometry, "corner dimensions differ");
        ensure!(!lower.is_empty(), Geometry, "empty corner");
        let h = (upper[0] - lower[0]) / n0 as f64;
        ensure!(h > 0.0, Geometry, "upper corner must exceed lower corner");
        let n = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| ((u - l) / h).round().max(2.0) as usize)
            .collect();
        Self::new(lower.to_vec(), n, h)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }
    pub fn n(&self) -> &[usize] {
        &self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn node_count(&self) -> usize {
        self.n.iter().product()
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }
    pub fn extent(&self, axis: usize) -> f64 {
        self.n[axis] as f64 * self.h
    }

    /// Same box with the spacing divided by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.origin.clone(),
            self.n.iter().map(|k| k * factor).collect(),
            self.h / factor as f64,
        )
    }

    /// Row-major multi-index of a linear node index (last axis fastest).
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.n[a];
            idx /= self.n[a];
        }
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.n).fold(0, |acc, (&i, &k)| acc * k + i)
    }

    pub fn coords(&self, idx: usize, out: &mut [f64]) {
        let mut m = [0usize; 3];
        self.multi_index(idx, &mut m);
        for a in 0..self.dim() {
            out[a] = self.origin[a] + (m[a] as f64 + 0.5) * self.h;
        }
    }

    /// Node nearest to `x`, clamped into the box.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut m = [0usize; 3];
        for a in 0..self.dim() {
            let k = ((x[a] - self.origin[a]) / self.h - 0.5).round();
            m[a] = k.clamp(0.0, (self.n[a] - 1) as f64) as usize;
        }
        self.linear_index(&m[..self.dim()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

/// Role of a grid node in a masked domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Active,
    /// Outside the domain; faces shared with active nodes carry this condition.
    Exterior(Boundary),
}

/// A masked grid with its precomputed Laplacian stencil.
///
/// Field values are stored per active node, in increasing grid order.
#[derive(Debug)]
pub struct Domain {
    grid: GridSpec,
    kinds: Vec<NodeKind>,
    outer: Boundary,
    active: Vec<usize>,
    slot: Vec<u32>,
    points: Vec<f64>,
    nbr_start: Vec<u32>,
    nbr: Vec<u32>,
    diag: Vec<f64>,
    dirichlet_faces: usize,
}

const INACTIVE: u32 = u32::MAX;

impl Domain {
    pub fn new(grid: GridSpec, kinds: Vec<NodeKind>, outer: Boundary) -> Result<Arc<Self>> {
        ensure!(
            kinds.len() == grid.node_count(),
            Geometry,
            "mask has {} entries for {} nodes",
            kinds.len(),
            grid.node_count()
        );
        let d = grid.dim();
        let active: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == NodeKind::Active).collect();
        ensure!(!active.is_empty(), Geometry, "mask has no active nodes");
        let mut slot = vec![INACTIVE; kinds.len()];
        for (s, &g) in active.iter().enumerate() {
            slot[g] = s as u32;
        }
        let mut points = vec![0.0; active.len() * d];
        for (s, &g) in active.iter().enumerate() {
            grid.coords(g, &mut points[s * d..(s + 1) * d]);
        }

        let mut nbr_start = Vec::with_capacity(active.len() + 1);
        let mut nbr = Vec::with_capacity(active.len() * 2 * d);
        let mut diag = Vec::with_capacity(active.len());
        let mut dirichlet_faces = 0;
        let mut m = [0usize; 3];
        nbr_start.push(0);
        for &g in &active {
            grid.multi_index(g, &mut m);
            let mut c = 0.0;
            for a in 0..d {
                for step in [-1i64, 1] {
                    let k = m[a] as i64 + step;
                    let class = if k < 0 || k >= grid.n[a] as i64 {
                        Some(outer)
                    } else {
                        let mut mm = m;
                        mm[a] = k as usize;
                        let j = grid.linear_index(&mm[..d]);
                        match kinds[j] {
                            NodeKind::Active => {
                                nbr.push(slot[j]);
                                c += 1.0;
                                None
                            }
                            NodeKind::Exterior(b) => Some(b),
                        }
                    };
                    if class == Some(Boundary::Dirichlet) {
                        c += 2.0;
                        dirichlet_faces += 1;
                    }
                }
            }
            diag.push(c);
            nbr_start.push(nbr.len() as u32);
        }

        let dom = Domain {
            grid,
            kinds,
            outer,
            active,
            slot,
            points,
            nbr_start,
            nbr,
            diag,
            dirichlet_faces,
        };
        dom.check_connected()?;
        Ok(Arc::new(dom))
    }

    /// Full box with a single boundary condition on every face.
    pub fn boxed(grid: GridSpec, outer: Boundary) -> Result<Arc<Self>> {
        let kinds = vec![NodeKind::Active; grid.node_count()];
        Self::new(grid, kinds, outer)
    }

    pub fn neumann_box(grid: GridSpec) -> Result<Arc<Self>> {
        Self::boxed(grid, Boundary::Neumann)
    }

    /// Mask defined pointwise from node coordinates.
    pub fn from_fn(grid: GridSpec, outer: Boundary, mut kind: impl FnMut(&[f64]) -> NodeKind) -> Result<Arc<Self>> {
        let d = grid.dim();
        let mut x = [0.0; 3];
        let kinds = (0..grid.node_count())
            .map(|i| {
                grid.coords(i, &mut x);
                kind(&x[..d])
            })
            .collect();
        Self::new(grid, kinds, outer)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.active.len();
        if n == 1 {
            return Ok(());
        }
        for s in 0..n {
            if self.neighbors(s).is_empty() {
                let mut x = vec![0.0; self.dim()];
                self.grid.coords(self.active[s], &mut x);
                return Err(Error::Geometry(format!("isolated active node at {x:?}")));
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(s) = queue.pop_front() {
            for &j in self.neighbors(s) {
                let j = j as usize;
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        ensure!(
            count == n,
            Geometry,
            "active region is disconnected ({count} of {n} nodes reachable)"
        );
        Ok(())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn h(&self) -> f64 {
        self.grid.h
    }
    pub fn len(&self) -> usize {
        self.active.len()
    }
    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
    pub fn outer(&self) -> Boundary {
        self.outer
    }
    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }
    /// Grid index of each active node.
    pub fn active_nodes(&self) -> &[usize] {
        &self.active
    }
    /// Active slot of a grid node, if it is active.
    pub fn slot_of(&self, node: usize) -> Option<usize> {
        match self.slot.get(node) {
            Some(&s) if s != INACTIVE => Some(s as usize),
            _ => None,
        }
    }
    pub fn point(&self, slot: usize) -> &[f64] {
        let d = self.dim();
        &self.points[slot * d..(slot + 1) * d]
    }
    pub fn neighbors(&self, slot: usize) -> &[u32] {
        &self.nbr[self.nbr_start[slot] as usize..self.nbr_start[slot + 1] as usize]
    }
    /// Diagonal weight of the stencil row: active neighbors plus twice the Dirichlet faces.
    pub fn center_weight(&self, slot: usize) -> f64 {
        self.diag[slot]
    }
    pub fn max_center_weight(&self) -> f64 {
        self.diag.iter().cloned().fold(0.0, f64::max)
    }
    pub fn has_dirichlet(&self) -> bool {
        self.dirichlet_faces > 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume()
    }
    /// Measure of the active region.
    pub fn volume(&self) -> f64 {
        self.len() as f64 * self.cell_volume()
    }

    /// Largest explicit step keeping `u + dt κ L u` a nonnegative combination.
    pub fn stable_dt(&self, diffusivity: f64) -> f64 {
        self.grid.h * self.grid.h / (diffusivity * self.max_center_weight())
    }

    /// Active slot nearest to `x`.
    pub fn nearest_slot(&self, x: &[f64]) -> usize {
        if let Some(s) = self.slot_of(self.grid.nearest(x)) {
            return s;
        }
        (0..self.len())
            .min_by(|&a, &b| dist2(self.point(a), x).total_cmp(&dist2(self.point(b), x)))
            .unwrap_or(0)
    }

    /// Active slots within distance `r` of `x`.
    pub fn slots_in_ball(&self, x: &[f64], r: f64) -> Vec<usize> {
        let r2 = r * r;
        (0..self.len())
            .filter(|&s| dist2(self.point(s), x) <= r2 * (1.0 + 1e-12))
            .collect()
    }

    /// `out = L u` with `L` the masked five/seven-point Laplacian.
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (self.grid.h * self.grid.h);
        for s in 0..self.len() {
            let mut acc = 0.0;
            for &j in self.neighbors(s) {
                acc += u[j as usize];
            }
            out[s] = (acc - self.diag[s] * u[s]) * inv_h2;
        }
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Lu` for a field on a domain without Dirichlet faces.
pub fn laplacian_neumann(u: &Field) -> Result<Field> {
    ensure!(
        !u.domain().has_dirichlet(),
        Precondition,
        "laplacian_neumann needs a pure-Neumann mask"
    );
    Ok(u.laplacian())
}

/// Compensated (Neumaier) sum.
pub(crate) fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_centered_coordinates() {
        let g = GridSpec::cube(2, 0.0, 1.0, 4).unwrap();
        let mut x = [0.0; 2];
        g.coords(0, &mut x);
        assert_eq!(x, [0.125, 0.125]);
        g.coords(g.linear_index(&[3, 1]), &mut x);
        assert_eq!(x, [0.875, 0.375]);
        assert_eq!(g.nearest(&[0.88, 0.3]), g.linear_index(&[3, 1]));
    }

    #[test]
    fn node_cap_is_enforced() {
        assert!(matches!(
            GridSpec::new(vec![0.0; 3], vec![300; 3], 0.1),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn isolated_node_rejected() {
        let g = GridSpec::cube(2, 0.0, 1.0, 5).unwrap();
        let err = Domain::from_fn(g, Boundary::Neumann, |x| {
            let dx = (x[0] - 0.5).abs();
            let dy = (x[1] - 0.5).abs();
            if dx < 0.05 && dy < 0.05 || x[0] < 0.2 {
                NodeKind::Active
            } else {
                NodeKind::Exterior(Boundary::Neumann)
            }
        });
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn stencil_rows_sum_to_zero_without_dirichlet() {
        let g = GridSpec::cube(3, 0.0, 1.0, 6).unwrap();
        let dom = Domain::neumann_box(g).unwrap();
        for s in 0..dom.len() {
            assert_eq!(dom.neighbors(s).len() as f64, dom.center_weight(s));
        }
        assert!(!dom.has_dirichlet());
    }

    #[test]
    fn dirichlet_faces_double_the_center() {
        let g = GridSpec::cube(1, 0.0, 1.0, 4).unwrap();
        let dom = Domain::boxed(g, Boundary::Dirichlet).unwrap();
        assert_eq!(dom.center_weight(0), 3.0);
        assert_eq!(dom.center_weight(1), 2.0);
        assert_eq!(dom.max_center_weight(), 3.0);
    }
}
