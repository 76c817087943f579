//! One-sided interpolation: for `0 ≤ u ≤ Δw`,
//! `‖u‖_q ≤ C ‖w‖^{1−θ} ‖∇u‖_p^θ + C ‖w‖` with `θ = (2−α−d/q)/(3−α−d/p)`,
//! where `‖w‖` is the `C^α` norm (`L^∞` when `α = 0`).
//!
//! The pipeline mirrors the proof: cut-ball estimates around a mollified
//! average, a covering by balls whose radius balances the two terms, and an
//! aggregation over the cover.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{
    gradient_magnitude, holder_norm_with, lp_norm, lp_norm_on, Domain, Field, HolderOptions, NodeKind, Trajectory,
};
use crate::heat_kernel::linear_fit;
use crate::report::{CheckRow, EstimateReport};
use crate::rough::unit_ball_volume;

/// Radial bump `χ(x) = c·exp(−1/(1−|4x|²))` on `|x| < 1/4` with unit mass.
#[derive(Clone, Debug)]
pub struct Mollifier {
    d: usize,
    norm: f64,
    lap_l1: f64,
}

impl Mollifier {
    pub const SUPPORT: f64 = 0.25;

    pub fn new(d: usize) -> Result<Self> {
        ensure!((1..=3).contains(&d), Parameter, "dimension {d} unsupported");
        let sphere = d as f64 * unit_ball_volume(d);
        let raw = simpson(|s| bump(s) * s.powi(d as i32 - 1), 0.0, 1.0, 20_000);
        let norm = 1.0 / (sphere * 0.25f64.powi(d as i32) * raw);
        let mut m = Mollifier { d, norm, lap_l1: 0.0 };
        m.lap_l1 = sphere * simpson(|r| m.laplacian(r).abs() * r.powi(d as i32 - 1), 0.0, 0.25, 200_000);
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `χ` at radius `r`.
    pub fn profile(&self, r: f64) -> f64 {
        self.norm * bump(4.0 * r)
    }

    /// `Δχ` at radius `r`.
    pub fn laplacian(&self, r: f64) -> f64 {
        let s = 4.0 * r;
        if s >= 1.0 {
            return 0.0;
        }
        let one = 1.0 - s * s;
        let g1 = -2.0 * s / (one * one);
        let g2 = -2.0 / (one * one) - 8.0 * s * s / (one * one * one);
        let phi = bump(s);
        let d2 = (g2 + g1 * g1) * phi;
        // φ'(s)/s = g1·φ/s, finite at s = 0.
        let d1_over_s = -2.0 / (one * one) * phi;
        16.0 * self.norm * (d2 + (self.d as f64 - 1.0) * d1_over_s)
    }

    /// `χ_R(x) = R^{−d} χ(x/R)` at distance `r`.
    pub fn scaled(&self, r: f64, big_r: f64) -> f64 {
        big_r.powi(-(self.d as i32)) * self.profile(r / big_r)
    }

    /// `‖Δχ‖_{L¹}`.
    pub fn laplacian_l1(&self) -> f64 {
        self.lap_l1
    }

    /// `∬_{B(0,1/4)²} |ξ−η|^α |Δχ(ξ) − Δχ(η)|`, by quasi-Monte Carlo.
    pub fn holder_constant(&self, alpha: f64) -> f64 {
        let d = self.d;
        let bases = [2u64, 3, 5, 7, 11, 13];
        let n = 1usize << 18;
        let cube = (0.5f64).powi(2 * d as i32);
        let mut acc = 0.0;
        let mut x = [0.0; 6];
        for i in 0..n {
            for (k, xk) in x.iter_mut().take(2 * d).enumerate() {
                *xk = radical_inverse(i as u64 + 1, bases[k]) * 0.5 - 0.25;
            }
            let (xi, eta) = x[..2 * d].split_at(d);
            let (rx, ry) = (norm(xi), norm(eta));
            if rx >= 0.25 || ry >= 0.25 {
                continue;
            }
            let dist = xi.iter().zip(eta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            acc += dist.powf(alpha) * (self.laplacian(rx) - self.laplacian(ry)).abs();
        }
        acc * cube / n as f64
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Integer offsets within `radius`, sorted by length then lexicographically.
fn offsets(d: usize, h: f64, radius: f64) -> Vec<([i64; 3], f64)> {
    let k = (radius / h).floor() as i64;
    let mut out = Vec::new();
    let range = |a: usize| if a < d { -k..=k } else { 0..=0 };
    for i in range(0) {
        for j in range(1) {
            for l in range(2) {
                let r = h * ((i * i + j * j + l * l) as f64).sqrt();
                if r <= radius * (1.0 + 1e-12) {
                    out.push(([i, j, l], r));
                }
            }
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Slot of the grid node `base + off`, if active.
fn shifted_slot(dom: &Domain, base: &[usize], off: &[i64; 3]) -> Option<usize> {
    let grid = dom.grid();
    let d = grid.dim();
    let mut m = [0usize; 3];
    for a in 0..d {
        let k = base[a] as i64 + off[a];
        if k < 0 || k >= grid.n()[a] as i64 {
            return None;
        }
        m[a] = k as usize;
    }
    dom.slot_of(grid.linear_index(&m[..d]))
}

/// Node quadrature of `∫ u(x̂−x) χ_R(x) dx`, normalized by the discrete mass of `χ_R`.
pub fn mollified_average(u: &Field, center: &[f64], r: f64, moll: &Mollifier) -> Result<f64> {
    let dom = u.domain();
    let grid = dom.grid();
    let d = grid.dim();
    ensure!(moll.dim() == d, Parameter, "mollifier is {}-dimensional", moll.dim());
    ensure!(r > 0.0, Parameter, "radius {r} must be positive");
    let support = r * Mollifier::SUPPORT;
    for a in 0..d {
        let lo = grid.origin()[a];
        ensure!(
            center[a] - support >= lo && center[a] + support <= lo + grid.extent(a),
            Geometry,
            "mollifier support B({center:?}, {support}) leaves the grid"
        );
    }
    let h = grid.h();
    let mut lo_idx = [0i64; 3];
    let mut hi_idx = [0i64; 3];
    for a in 0..d {
        lo_idx[a] = ((center[a] - support - grid.origin()[a]) / h - 0.5).floor() as i64;
        hi_idx[a] = ((center[a] + support - grid.origin()[a]) / h - 0.5).ceil() as i64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut m = [0usize; 3];
    let mut x = [0.0; 3];
    let count: i64 = (0..d).map(|a| hi_idx[a] - lo_idx[a] + 1).product();
    for idx in 0..count {
        let mut rest = idx;
        let mut inside_grid = true;
        for a in (0..d).rev() {
            let span = hi_idx[a] - lo_idx[a] + 1;
            let k = lo_idx[a] + rest % span;
            rest /= span;
            if k < 0 || k >= grid.n()[a] as i64 {
                inside_grid = false;
                break;
            }
            m[a] = k as usize;
            x[a] = grid.origin()[a] + (k as f64 + 0.5) * h;
        }
        if !inside_grid {
            continue;
        }
        let dist = x[..d]
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist >= support {
            continue;
        }
        let node = grid.linear_index(&m[..d]);
        let slot = match dom.kinds()[node] {
            NodeKind::Active => dom.slot_of(node).expect("active node has a slot"),
            NodeKind::Exterior(_) => {
                return Err(Error::Geometry(format!(
                    "mollifier support at {center:?} meets inactive node {node}"
                )))
            }
        };
        let wgt = moll.scaled(dist, r);
        num += wgt * u.values()[slot];
        den += wgt;
    }
    ensure!(
        den > 0.0,
        Geometry,
        "mollifier support B({center:?}, {support}) contains no node"
    );
    Ok(num / den)
}

/// Discrete `Δw` without boundary conditions: at a missing neighbour the
/// second difference is taken one node inward, exact for quadratics.
pub fn free_laplacian(w: &Field) -> Result<Vec<f64>> {
    let dom = w.domain();
    let grid = dom.grid();
    let d = grid.dim();
    let h2 = grid.h() * grid.h();
    let v = w.values();
    let mut m = [0usize; 3];
    let mut out = vec![0.0; dom.len()];
    for (s, o) in out.iter_mut().enumerate() {
        grid.multi_index(dom.active_nodes()[s], &mut m);
        let mut acc = 0.0;
        for a in 0..d {
            let mut off = [0i64; 3];
            let mut at = |k: i64| {
                off[a] = k;
                shifted_slot(dom, &m[..d], &off)
            };
            let (lo, hi) = (at(-1), at(1));
            acc += match (lo, hi) {
                (Some(l), Some(r)) => v[l] - 2.0 * v[s] + v[r],
                (None, Some(r)) => match at(2) {
                    Some(rr) => v[s] - 2.0 * v[r] + v[rr],
                    None => return Err(Error::Geometry(format!("slot {s} is too thin along axis {a}"))),
                },
                (Some(l), None) => match at(-2) {
                    Some(ll) => v[ll] - 2.0 * v[l] + v[s],
                    None => return Err(Error::Geometry(format!("slot {s} is too thin along axis {a}"))),
                },
                (None, None) => return Err(Error::Geometry(format!("slot {s} is isolated along axis {a}"))),
            };
        }
        *o = acc / h2;
    }
    Ok(out)
}

/// Require `0 ≤ u ≤ Δw + tol` on `slots` (all when `None`).
pub fn check_one_sided(u: &Field, lap_w: &[f64], slots: Option<&[usize]>, tol: f64) -> Result<()> {
    let all: Vec<usize>;
    let slots = match slots {
        Some(s) => s,
        None => {
            all = (0..u.domain().len()).collect();
            &all
        }
    };
    for &s in slots {
        let (us, lw) = (u.values()[s], lap_w[s]);
        if us < -tol || us > lw + tol {
            return Err(Error::Precondition(format!(
                "0 ≤ u ≤ Δw fails at {:?}: u = {us:e}, Δw = {lw:e}",
                u.domain().point(s)
            )));
        }
    }
    Ok(())
}

/// `‖w‖_{C^α}` over `slots` (the `L^∞` norm when `α = 0`).
fn w_norm(w: &Field, alpha: f64, slots: Option<Vec<usize>>) -> Result<f64> {
    if alpha == 0.0 {
        return match slots {
            Some(s) => lp_norm_on(w, &s, f64::INFINITY),
            None => lp_norm(w, f64::INFINITY),
        };
    }
    let opts = HolderOptions {
        slots,
        ..Default::default()
    };
    Ok(holder_norm_with(&Trajectory::steady(w), alpha, &opts)?.value)
}

#[derive(Clone, Debug)]
pub struct CutBallOptions {
    pub p: f64,
    pub q: f64,
    /// `0` selects the `L^∞` form of the `w` term.
    pub alpha: f64,
    pub radii: Vec<f64>,
    /// Frozen constant; without it only the scaling rows are emitted.
    pub constant: Option<f64>,
    /// Expected log-log slope of `‖u‖_{L^q(B)}` in `R`.
    pub expected_slope: Option<f64>,
    pub slope_tolerance: f64,
}

impl CutBallOptions {
    pub fn new(p: f64, q: f64, alpha: f64, radii: Vec<f64>) -> Self {
        CutBallOptions {
            p,
            q,
            alpha,
            radii,
            constant: None,
            expected_slope: None,
            slope_tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutBallRow {
    pub radius: f64,
    /// `‖u‖_{L^q(B)}`.
    pub lhs: f64,
    /// `R^{1−d(1/p−1/q)} ‖∇u‖_{L^p(B)}`.
    pub grad_term: f64,
    /// `R^{−2+α+d/q} ‖w‖_{C^α(B)}`.
    pub w_term: f64,
    /// Mollified average `ū` at the core center.
    pub mean: f64,
    pub core: Vec<f64>,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct CutBallReport {
    pub rows: Vec<CutBallRow>,
    pub lhs_slope: Option<f64>,
    pub w_term_slope: Option<f64>,
    pub report: EstimateReport,
}

/// Core center: `x₀` when `B(x₀, R/4)` fits, otherwise shifted inward by
/// `R/2` along each axis whose face is too close.
fn core_center(dom: &Domain, x0: &[f64], r: f64) -> Vec<f64> {
    let grid = dom.grid();
    let margin = r * Mollifier::SUPPORT + grid.h();
    (0..grid.dim())
        .map(|a| {
            let lo = grid.origin()[a];
            let hi = lo + grid.extent(a);
            if x0[a] - lo < margin {
                x0[a] + r / 2.0
            } else if hi - x0[a] < margin {
                x0[a] - r / 2.0
            } else {
                x0[a]
            }
        })
        .collect()
}

pub fn cut_ball_check(
    u: &Field,
    w: &Field,
    x0: &[f64],
    opts: &CutBallOptions,
    moll: &Mollifier,
) -> Result<CutBallReport> {
    let dom = u.domain();
    ensure!(
        std::sync::Arc::ptr_eq(dom, w.domain()),
        Geometry,
        "u and w live on different domains"
    );
    ensure!(opts.p >= 1.0 && opts.q >= 1.0, Parameter, "p, q must be at least 1");
    ensure!(
        (0.0..1.0).contains(&opts.alpha),
        Parameter,
        "α = {} must lie in [0, 1)",
        opts.alpha
    );
    ensure!(!opts.radii.is_empty(), Parameter, "empty radius ladder");
    let d = dom.dim() as f64;
    let lap = free_laplacian(w)?;
    let grad = gradient_magnitude(u);
    let vol = dom.cell_volume();
    let mut rows = Vec::with_capacity(opts.radii.len());
    for &r in &opts.radii {
        let slots = dom.slots_in_ball(x0, r);
        ensure!(!slots.is_empty(), Geometry, "cut ball B({x0:?}, {r}) contains no node");
        check_one_sided(u, &lap, Some(&slots), 1e-10)?;
        let lhs = lp_norm_on(u, &slots, opts.q)?;
        let g = slots.iter().map(|&s| grad[s].powf(opts.p)).sum::<f64>() * vol;
        let grad_term = r.powf(1.0 - d * (1.0 / opts.p - 1.0 / opts.q)) * g.powf(1.0 / opts.p);
        let w_term = r.powf(-2.0 + opts.alpha + d / opts.q) * w_norm(w, opts.alpha, Some(slots))?;
        let core = core_center(dom, x0, r);
        let mean = mollified_average(u, &core, r, moll)?;
        let rhs = grad_term + w_term;
        rows.push(CutBallRow {
            radius: r,
            lhs,
            grad_term,
            w_term,
            mean,
            core,
            ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        });
    }

    let slope = |vals: Vec<f64>| -> Option<f64> {
        if rows.len() < 2 || vals.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let x: Vec<f64> = rows.iter().map(|r| r.radius.ln()).collect();
        let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        Some(linear_fit(&x, &y).0)
    };
    let lhs_slope = slope(rows.iter().map(|r| r.lhs).collect());
    let w_term_slope = slope(rows.iter().map(|r| r.w_term).collect());

    let mut rep = EstimateReport::new("interp.cut_ball");
    if let Some(c) = opts.constant {
        for row in &rows {
            rep.push(
                CheckRow::le(
                    format!("cut_ball_R{}", row.radius),
                    row.lhs,
                    c * (row.grad_term + row.w_term),
                )
                .param("R", row.radius)
                .param("grad_term", row.grad_term)
                .param("w_term", row.w_term)
                .param("constant", c),
            );
        }
    }
    if let (Some(expected), Some(s)) = (opts.expected_slope, lhs_slope) {
        rep.push(
            CheckRow::le("cut_ball_lhs_slope", (s - expected).abs(), opts.slope_tolerance)
                .param("slope", s)
                .param("expected", expected),
        );
    }
    Ok(CutBallReport {
        rows,
        lhs_slope,
        w_term_slope,
        report: rep,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ball {
    pub slot: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Radius hit the cap `R₀`.
    pub capped: bool,
}

#[derive(Clone, Debug)]
pub struct BallCover {
    pub balls: Vec<Ball>,
    pub threshold: f64,
    pub p: f64,
    pub alpha: f64,
    pub r0: f64,
    /// `R(x)` per active slot.
    pub radii: Vec<f64>,
    /// Number of selected balls containing each slot.
    pub overlap: Vec<u32>,
    pub max_overlap: u32,
    pub uncovered: usize,
}

impl BallCover {
    /// Conservative overlap bound `2^d·d`.
    pub fn default_overlap_bound(d: usize) -> f64 {
        (1usize << d) as f64 * d as f64
    }
}

/// `R(x)`: first radius where `R^{3−α−d/p} ‖∇u‖_{L^p(B(x,R)∩Ω)}` reaches `A`,
/// capped at `R₀`.
///
/// The accumulation over lattice shells is exact, so the crossing is found
/// without bisection and is non-decreasing in `A` by construction.
pub fn radius_function(u: &Field, threshold: f64, p: f64, alpha: f64, r0: f64) -> Result<Vec<f64>> {
    let dom = u.domain();
    let d = dom.dim();
    ensure!(
        threshold > 0.0 && threshold.is_finite(),
        Parameter,
        "threshold {threshold} must be positive"
    );
    ensure!(r0 > 0.0, Parameter, "R0 {r0} must be positive");
    let e = 3.0 - alpha - d as f64 / p;
    ensure!(e > 0.0, Parameter, "need p > d/(3−α); got p = {p}, α = {alpha}");
    let grid = dom.grid();
    let gp: Vec<f64> = gradient_magnitude(u)
        .iter()
        .map(|g| g.powf(p) * dom.cell_volume())
        .collect();
    // Distinct shell radii; `need(r) = (A/r^e)^p` is the mass that makes the
    // balance function reach `A` at radius `r`.
    let need = |r: f64| (threshold / r.powf(e)).powf(p);
    let (shells, columns) = shell_columns(d, grid.h(), r0);
    let cols = ColumnSums::new(dom, &gp);
    let mut radii = Vec::with_capacity(dom.len());
    for s in 0..dom.len() {
        let node = dom.active_nodes()[s];
        let next_of = |k: usize| shells.get(k + 1).copied().unwrap_or(r0);
        let hit = |k: usize| cols.ball(node, &columns[k]) > need(next_of(k));
        let last = shells.len() - 1;
        if !hit(last) {
            radii.push(r0);
            continue;
        }
        let (mut lo, mut hi) = (0, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if hit(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let r = shells[lo];
        let acc = cols.ball(node, &columns[lo]);
        let found = if acc >= need(r) {
            r
        } else {
            (threshold / acc.powf(1.0 / p)).powf(1.0 / e)
        };
        radii.push(found.min(r0));
    }
    Ok(radii)
}

/// Distinct shell radii up to `r0` and, for each, the lattice ball as
/// columns `[di, dj, half-length]` along the last axis (axes padded at the front).
fn shell_columns(d: usize, h: f64, r0: f64) -> (Vec<f64>, Vec<Vec<[i64; 3]>>) {
    let offs = offsets(d, h, r0);
    let mut half: std::collections::BTreeMap<(i64, i64), i64> = Default::default();
    let (mut shells, mut columns) = (Vec::new(), Vec::new());
    for (idx, (o, r)) in offs.iter().enumerate() {
        let mut q = [0i64; 3];
        q[3 - d..].copy_from_slice(&o[..d]);
        let e = half.entry((q[0], q[1])).or_insert(0);
        *e = (*e).max(q[2].abs());
        if offs.get(idx + 1).is_none_or(|next| next.1 != *r) {
            shells.push(*r);
            columns.push(half.iter().map(|(&(a, b), &l)| [a, b, l]).collect());
        }
    }
    (shells, columns)
}

/// Prefix sums along the last axis, for exact sums over lattice balls in
/// `O(K^{d−1})` per ball.
struct ColumnSums {
    /// Grid extents padded at the front to three axes.
    dims: [usize; 3],
    pre: Vec<f64>,
}

impl ColumnSums {
    fn new(dom: &Domain, vals: &[f64]) -> Self {
        let d = dom.dim();
        let mut dims = [1usize; 3];
        dims[3 - d..].copy_from_slice(dom.grid().n());
        let lines = dims[0] * dims[1];
        let len = dims[2];
        let mut pre = vec![0.0; lines * (len + 1)];
        for line in 0..lines {
            let mut acc = 0.0;
            for l in 0..len {
                acc += dom.slot_of(line * len + l).map_or(0.0, |s| vals[s]);
                pre[line * (len + 1) + l + 1] = acc;
            }
        }
        ColumnSums { dims, pre }
    }

    /// Sum over the ball around `node` described by `columns`.
    fn ball(&self, node: usize, columns: &[[i64; 3]]) -> f64 {
        let [n0, n1, n2] = self.dims;
        let m = [(node / (n1 * n2)) as i64, ((node / n2) % n1) as i64, (node % n2) as i64];
        let mut total = 0.0;
        for &[di, dj, l] in columns {
            let (i, j) = (m[0] + di, m[1] + dj);
            if i < 0 || i >= n0 as i64 || j < 0 || j >= n1 as i64 {
                continue;
            }
            let lo = (m[2] - l).max(0) as usize;
            let hi = ((m[2] + l) as usize).min(n2 - 1);
            let line = (i as usize * n1 + j as usize) * (n2 + 1);
            total += self.pre[line + hi + 1] - self.pre[line + lo];
        }
        total
    }
}

/// Greedy selection over nodes by decreasing `R(x)`: a ball is kept when its
/// center is not yet covered. The overlap per node is audited afterwards.
pub fn build_covering(u: &Field, threshold: f64, p: f64, alpha: f64, r0: f64) -> Result<BallCover> {
    let dom = u.domain();
    let d = dom.dim();
    let radii = radius_function(u, threshold, p, alpha, r0)?;
    let grid = dom.grid();
    let offs = offsets(d, grid.h(), r0);
    let mut order: Vec<usize> = (0..dom.len()).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));
    let mut covered = vec![false; dom.len()];
    let mut overlap = vec![0u32; dom.len()];
    let mut balls = Vec::new();
    let mut m = [0usize; 3];
    for s in order {
        if covered[s] {
            continue;
        }
        let r = radii[s];
        grid.multi_index(dom.active_nodes()[s], &mut m);
        for (off, dist) in &offs {
            if *dist > r * (1.0 + 1e-12) {
                break;
            }
            if let Some(t) = shifted_slot(dom, &m[..d], off) {
                covered[t] = true;
                overlap[t] += 1;
            }
        }
        balls.push(Ball {
            slot: s,
            center: dom.point(s).to_vec(),
            radius: r,
            capped: r >= r0,
        });
    }
    let max_overlap = overlap.iter().cloned().max().unwrap_or(0);
    let uncovered = covered.iter().filter(|c| !**c).count();
    Ok(BallCover {
        balls,
        threshold,
        p,
        alpha,
        r0,
        radii,
        overlap,
        max_overlap,
        uncovered,
    })
}

/// `θ = (2−α−d/q)/(3−α−d/p)`.
pub fn interpolation_exponent(d: usize, p: f64, q: f64, alpha: f64) -> f64 {
    let d = d as f64;
    (2.0 - alpha - d / q) / (3.0 - alpha - d / p)
}

/// `q·θ − p`, nonnegative under the exponent hypotheses.
pub fn exponent_sum_margin(d: usize, p: f64, q: f64, alpha: f64) -> f64 {
    q * interpolation_exponent(d, p, q, alpha) - p
}

/// `d/2 < 3p/2 ≤ q` when `α = 0`, `q ≥ (3−α)p/(2−α) > d/(2−α)` otherwise;
/// equalities are accepted to `1e-12`.
pub fn check_exponents(d: usize, p: f64, q: f64, alpha: f64) -> Result<()> {
    let d = d as f64;
    let tol = 1e-12;
    ensure!(p >= 1.0 && q >= 1.0 && q.is_finite(), Parameter, "need 1 ≤ p, q < ∞");
    ensure!((0.0..1.0).contains(&alpha), Parameter, "α = {alpha} must lie in [0, 1)");
    if alpha == 0.0 {
        ensure!(d / 2.0 < 1.5 * p, Parameter, "need d/2 < 3p/2 (d = {d}, p = {p})");
        ensure!(
            1.5 * p <= q * (1.0 + tol),
            Parameter,
            "need 3p/2 ≤ q (p = {p}, q = {q})"
        );
    } else {
        let mid = (3.0 - alpha) / (2.0 - alpha) * p;
        ensure!(
            q >= mid * (1.0 - tol),
            Parameter,
            "need q ≥ (3−α)p/(2−α) = {mid}, got {q}"
        );
        ensure!(mid > d / (2.0 - alpha), Parameter, "need (3−α)p/(2−α) > d/(2−α)");
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct InterpOptions {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub r0: f64,
    pub overlap_bound: f64,
}

impl InterpOptions {
    /// The usage point `p = 2`, `q = 2(3−α)/(2−α)`.
    pub fn usage_point(d: usize, alpha: f64) -> Self {
        InterpOptions {
            p: 2.0,
            q: 2.0 * (3.0 - alpha) / (2.0 - alpha),
            alpha,
            r0: 0.4,
            overlap_bound: BallCover::default_overlap_bound(d),
        }
    }
}

/// Measured quantities of one interpolation case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpCase {
    pub case_id: u64,
    /// `‖u‖_{L^q}`.
    pub lhs: f64,
    /// `‖∇u‖_{L^p}`.
    pub grad: f64,
    /// `A = ‖w‖_{C^α}`.
    pub a: f64,
    pub theta: f64,
    /// `A^{1−θ} ‖∇u‖_p^θ + A`.
    pub rhs_core: f64,
    pub ratio: f64,
    pub exponent_sum: f64,
    pub balls: usize,
    pub capped_balls: usize,
    pub min_radius: f64,
    pub max_overlap: u32,
    pub uncovered: usize,
    /// `Σ_B ‖u‖^q_{L^q(B)}`, at least `‖u‖_q^q` for a complete cover.
    pub ball_sum: f64,
    /// `Σ_B [R^{1−d(1/p−1/q)} ‖∇u‖_{L^p(B)} + R^{−2+α+d/q} A]^q`.
    pub ball_bound_sum: f64,
    /// Largest `‖u‖_{L^q(B)} / (ball terms)` over the cover.
    pub max_ball_ratio: f64,
}

/// Run the covering pipeline on `(u, w)` and measure both sides.
pub fn interpolation_measure(u: &Field, w: &Field, opts: &InterpOptions, case_id: u64) -> Result<InterpCase> {
    let dom = u.domain();
    let d = dom.dim();
    ensure!(
        std::sync::Arc::ptr_eq(dom, w.domain()),
        Geometry,
        "u and w live on different domains"
    );
    check_exponents(d, opts.p, opts.q, opts.alpha)?;
    let lap = free_laplacian(w)?;
    check_one_sided(
        u,
        &lap,
        None,
        1e-10 * (1.0 + lap.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
    )?;

    let lhs = lp_norm(u, opts.q)?;
    let grad_mag = gradient_magnitude(u);
    let vol = dom.cell_volume();
    let grad = (grad_mag.iter().map(|g| g.powf(opts.p)).sum::<f64>() * vol).powf(1.0 / opts.p);
    let a = w_norm(w, opts.alpha, None)?;
    let theta = interpolation_exponent(d, opts.p, opts.q, opts.alpha);
    let rhs_core = if a > 0.0 {
        a.powf(1.0 - theta) * grad.powf(theta) + a
    } else {
        0.0
    };

    let (mut balls, mut capped, mut max_overlap, mut uncovered) = (0, 0, 0, 0);
    let mut min_radius = opts.r0;
    let (mut ball_sum, mut ball_bound_sum, mut max_ball_ratio) = (0.0, 0.0, 0.0f64);
    if a > 0.0 {
        let cover = build_covering(u, a, opts.p, opts.alpha, opts.r0)?;
        let df = d as f64;
        let offs = offsets(d, dom.h(), opts.r0);
        let grid = dom.grid();
        let mut m = [0usize; 3];
        for b in &cover.balls {
            grid.multi_index(dom.active_nodes()[b.slot], &mut m);
            let (mut uq, mut gp) = (0.0, 0.0);
            for (off, dist) in &offs {
                if *dist > b.radius * (1.0 + 1e-12) {
                    break;
                }
                if let Some(t) = shifted_slot(dom, &m[..d], off) {
                    uq += u.values()[t].abs().powf(opts.q);
                    gp += grad_mag[t].powf(opts.p);
                }
            }
            uq *= vol;
            gp *= vol;
            let r = b.radius;
            let term = r.powf(1.0 - df * (1.0 / opts.p - 1.0 / opts.q)) * gp.powf(1.0 / opts.p)
                + r.powf(-2.0 + opts.alpha + df / opts.q) * a;
            ball_sum += uq;
            ball_bound_sum += term.powf(opts.q);
            max_ball_ratio = max_ball_ratio.max(uq.powf(1.0 / opts.q) / term);
        }
        min_radius = cover.balls.iter().map(|b| b.radius).fold(opts.r0, f64::min);
        balls = cover.balls.len();
        capped = cover.balls.iter().filter(|b| b.capped).count();
        max_overlap = cover.max_overlap;
        uncovered = cover.uncovered;
    }

    Ok(InterpCase {
        case_id,
        lhs,
        grad,
        a,
        theta,
        rhs_core,
        ratio: if rhs_core > 0.0 { lhs / rhs_core } else { 0.0 },
        exponent_sum: exponent_sum_margin(d, opts.p, opts.q, opts.alpha),
        balls,
        capped_balls: capped,
        min_radius,
        max_overlap,
        uncovered,
        ball_sum,
        ball_bound_sum,
        max_ball_ratio,
    })
}

/// Frozen constant from calibration ratios: the largest ratio times `headroom`.
pub fn calibrate_constant(cases: &[InterpCase], headroom: f64) -> Result<f64> {
    ensure!(!cases.is_empty(), Sampling, "no calibration cases");
    ensure!(headroom >= 1.0, Parameter, "headroom {headroom} must be at least 1");
    Ok(cases.iter().map(|c| c.ratio).fold(0.0, f64::max) * headroom)
}

/// Rows for one case against the frozen constant.
pub fn interpolation_check(case: &InterpCase, constant: f64, opts: &InterpOptions) -> EstimateReport {
    let mut rep = EstimateReport::new(format!("interp.case{}", case.case_id));
    rep.push(
        CheckRow::le("exponent_sum", -case.exponent_sum, 1e-12)
            .param("p", opts.p)
            .param("q", opts.q)
            .param("alpha", opts.alpha),
    );
    rep.push(CheckRow::le("cover_uncovered", case.uncovered as f64, 0.0).param("balls", case.balls as f64));
    rep.push(CheckRow::le(
        "cover_overlap",
        case.max_overlap as f64,
        opts.overlap_bound,
    ));
    rep.push(
        CheckRow::le("interpolation", case.lhs, constant * case.rhs_core)
            .param("fitted_constant", constant)
            .param("theta", case.theta)
            .param("grad", case.grad)
            .param("w_norm", case.a)
            .param("ball_sum", case.ball_sum)
            .param("ball_bound_sum", case.ball_bound_sum)
            .param("max_ball_ratio", case.max_ball_ratio),
    );
    rep
}

/// Random convex `w = ½xᵀMx + b·x + Σ c_k e^{g_k·x} + Σ (ε_k² + |x−z_k|²)^{1/2}` and
/// `u = θ(x)·Δw` with a smooth `θ ∈ [0, 1]`, `Δw` the free discrete Laplacian.
pub fn random_case(dom: &std::sync::Arc<Domain>, seed: u64) -> Result<(Field, Field)> {
    let d = dom.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // One case in three is dominated by sharp cones, which drives radii below the cap.
    let cone_mode = rng.gen_range(0..3) == 0;
    let smooth = if cone_mode { 0.02 } else { 1.0 };
    let mut q = [[0.0; 3]; 3];
    for row in q.iter_mut().take(d) {
        for v in row.iter_mut().take(d) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mut mat = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            mat[i][j] = smooth * (0..d).map(|k| q[k][i] * q[k][j]).sum::<f64>();
        }
    }
    let b: Vec<f64> = (0..d).map(|_| smooth * rng.gen_range(-1.0..1.0)).collect();
    let terms: Vec<(f64, Vec<f64>)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            (
                smooth * rng.gen_range(0.05..1.0),
                (0..d).map(|_| rng.gen_range(-6.0..6.0)).collect(),
            )
        })
        .collect();
    let cone_count = if cone_mode {
        rng.gen_range(1..=3)
    } else {
        rng.gen_range(0..=2)
    };
    let cones: Vec<(f64, Vec<f64>)> = (0..cone_count)
        .map(|_| {
            (
                10f64.powf(rng.gen_range(-1.5..-1.0)),
                (0..d).map(|_| rng.gen_range(0.1..0.9)).collect(),
            )
        })
        .collect();
    let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
    let w = Field::from_fn(dom, |x| {
        let mut v = 0.0;
        for i in 0..d {
            v += b[i] * x[i];
            for j in 0..d {
                v += 0.5 * mat[i][j] * x[i] * x[j];
            }
        }
        for (c, g) in &terms {
            v += c * g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().exp();
        }
        for (eps, c) in &cones {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            v += (eps * eps + r2).sqrt();
        }
        scale * v
    })?;
    let k: Vec<f64> = (0..d).map(|_| rng.gen_range(-6.0 * PI..6.0 * PI)).collect();
    let phase = rng.gen_range(0.0..2.0 * PI);
    let bump_center: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..0.8)).collect();
    let width = 10f64.powf(rng.gen_range(-1.6..-0.4));
    let use_bump = rng.gen_bool(0.5);
    let lap = free_laplacian(&w)?;
    let u = Field::new(
        dom.clone(),
        (0..dom.len())
            .map(|s| {
                let x = dom.point(s);
                let wave = 0.5 * (1.0 + (k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase).sin());
                let th = if use_bump {
                    let r2: f64 = x.iter().zip(&bump_center).map(|(a, b)| (a - b) * (a - b)).sum();
                    wave * (-r2 / (width * width)).exp()
                } else {
                    wave
                };
                th * lap[s].max(0.0)
            })
            .collect(),
    )?;
    Ok((u, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn mollifier_has_unit_mass() {
        for d in 1..=3 {
            let m = Mollifier::new(d).unwrap();
            let sphere = d as f64 * unit_ball_volume(d);
            let mass = sphere * simpson(|r| m.profile(r) * r.powi(d as i32 - 1), 0.0, 0.25, 20_000);
            assert!((mass - 1.0).abs() < 1e-10, "d={d}: {mass}");
            assert!(m.laplacian_l1() > 0.0);
            assert_eq!(m.profile(0.25), 0.0);
        }
    }

    #[test]
    fn laplacian_of_bump_integrates_to_zero() {
        let m = Mollifier::new(3).unwrap();
        let sphere = 3.0 * unit_ball_volume(3);
        let total = sphere * simpson(|r| m.laplacian(r) * r * r, 0.0, 0.25, 200_000);
        assert!(total.abs() < 1e-8 * m.laplacian_l1());
    }

    #[test]
    fn usage_point_exponents() {
        let alpha = 0.3;
        let q = 2.0 * (3.0 - alpha) / (2.0 - alpha);
        check_exponents(3, 2.0, q, alpha).unwrap();
        assert!(exponent_sum_margin(3, 2.0, q, alpha).abs() < 1e-12);
        assert!((interpolation_exponent(3, 2.0, 3.0, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!(check_exponents(3, 1.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn free_laplacian_exact_on_quadratics() {
        let dom = Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, 10).unwrap()).unwrap();
        let w = Field::from_fn(&dom, |x| x[0] * x[0] + 3.0 * x[0] * x[1] - 0.5 * x[1] * x[1]).unwrap();
        let lap = free_laplacian(&w).unwrap();
        assert!(lap.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn constant_gradient_free_field_gets_cap() {
        let dom = Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, 16).unwrap()).unwrap();
        let u = Field::constant(&dom, 2.0);
        let cover = build_covering(&u, 1.0, 2.0, 0.0, 0.3).unwrap();
        assert!(cover.radii.iter().all(|&r| r == 0.3));
        assert_eq!(cover.uncovered, 0);
    }
}
