use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dist2, neumaier, Boundary, Domain, Field, NodeKind, Trajectory};
use crate::error::{ensure, Result};

fn check_exponent(p: f64) -> Result<()> {
    ensure!(
        p == f64::INFINITY || (p.is_finite() && p >= 1.0),
        Parameter,
        "exponent {p} must lie in [1, ∞]"
    );
    Ok(())
}

fn spatial_norm(values: &[f64], slots: Option<&[usize]>, p: f64, vol: f64) -> f64 {
    let iter: Box<dyn Iterator<Item = f64>> = match slots {
        Some(s) => Box::new(s.iter().map(|&i| values[i].abs())),
        None => Box::new(values.iter().map(|v| v.abs())),
    };
    if p == f64::INFINITY {
        iter.fold(0.0, f64::max)
    } else {
        (neumaier(iter.map(|v| v.powf(p))) * vol).powf(1.0 / p)
    }
}

/// `‖u‖_{L^p}` with the cell volume as quadrature weight.
pub fn lp_norm(u: &Field, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(spatial_norm(u.values(), None, p, u.domain().cell_volume()))
}

/// `‖u‖_{L^p}` restricted to the given active slots.
pub fn lp_norm_on(u: &Field, slots: &[usize], p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(spatial_norm(u.values(), Some(slots), p, u.domain().cell_volume()))
}

/// `‖w‖_{L^p(L^q)}` over `[t0, t0 + len·dt)`, frame `k` standing for `[t_k, t_k + dt)`.
pub fn lpq_norm(w: &Trajectory, p: f64, q: f64) -> Result<f64> {
    let hi = w.t0() + w.len() as f64 * w.dt();
    lpq_norm_window(w, p, q, w.t0(), hi, None)
}

/// `‖w‖_{L^p((t_lo, t_hi); L^q(S))}` with piecewise-constant frames.
///
/// Frame `k` covers `[t_k, t_{k+1})`; the first frame extends to `-∞` and
/// the last to `+∞`, matching [`Trajectory::at`].
pub fn lpq_norm_window(w: &Trajectory, p: f64, q: f64, t_lo: f64, t_hi: f64, slots: Option<&[usize]>) -> Result<f64> {
    check_exponent(p)?;
    check_exponent(q)?;
    ensure!(t_hi >= t_lo, Parameter, "empty time window ({t_lo}, {t_hi})");
    let vol = w.domain().cell_volume();
    let k = w.len();
    let mut parts = Vec::with_capacity(k);
    for i in 0..k {
        let a = if i == 0 { f64::NEG_INFINITY } else { w.time(i) };
        let b = if i + 1 == k { f64::INFINITY } else { w.time(i + 1) };
        let len = b.min(t_hi) - a.max(t_lo);
        if len > 0.0 {
            parts.push((len, spatial_norm(w.frame(i), slots, q, vol)));
        }
    }
    Ok(if p == f64::INFINITY {
        parts.iter().fold(0.0, |m, &(_, n)| m.max(n))
    } else {
        neumaier(parts.iter().map(|&(len, n)| n.powf(p) * len)).powf(1.0 / p)
    })
}

/// Parabolic cylinder `(t_lo, t_hi] × B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub t_lo: f64,
    pub t_hi: f64,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Cylinder {
    /// `(t0 - β r², t0] × B(x0, r)`.
    pub fn backward(t0: f64, x0: Vec<f64>, r: f64, beta: f64) -> Self {
        Cylinder {
            t_lo: t0 - beta * r * r,
            t_hi: t0,
            center: x0,
            radius: r,
        }
    }

    pub fn frames(&self, w: &Trajectory) -> Vec<usize> {
        let eps = 1e-9 * w.dt();
        (0..w.len())
            .filter(|&k| {
                let t = w.time(k);
                t > self.t_lo + eps && t <= self.t_hi + eps
            })
            .collect()
    }

    pub fn slots(&self, dom: &Domain) -> Vec<usize> {
        dom.slots_in_ball(&self.center, self.radius)
    }
}

/// `sup - inf` of `w` over the active nodes and frames inside the cylinder.
pub fn oscillation(w: &Trajectory, cyl: &Cylinder) -> Result<f64> {
    let eps = 1e-9 * w.dt();
    ensure!(
        cyl.t_lo >= w.t0() - eps - w.dt() && cyl.t_hi <= w.t_end() + eps,
        Parameter,
        "cylinder ({}, {}] leaves the trajectory span [{}, {}]",
        cyl.t_lo,
        cyl.t_hi,
        w.t0(),
        w.t_end()
    );
    let frames = cyl.frames(w);
    let slots = cyl.slots(w.domain());
    ensure!(
        !frames.is_empty() && !slots.is_empty(),
        Sampling,
        "cylinder holds {} frames and {} nodes",
        frames.len(),
        slots.len()
    );
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &k in &frames {
        let f = w.frame(k);
        for &s in &slots {
            lo = lo.min(f[s]);
            hi = hi.max(f[s]);
        }
    }
    Ok(hi - lo)
}

/// Sampling controls for [`holder_norm_with`].
#[derive(Clone, Debug)]
pub struct HolderOptions {
    /// Exhaustive evaluation below this many pairs; otherwise this many samples.
    pub budget: usize,
    pub seed: u64,
    /// Restrict to these active slots.
    pub slots: Option<Vec<usize>>,
    /// Restrict to frames `lo..hi`.
    pub frames: Option<(usize, usize)>,
}

impl Default for HolderOptions {
    fn default() -> Self {
        HolderOptions {
            budget: 1_000_000,
            seed: 0x5eed_401d,
            slots: None,
            frames: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub value: f64,
    pub sup: f64,
    pub seminorm: f64,
    pub pairs: usize,
    pub exhaustive: bool,
    /// `(frame, slot)` endpoints of the largest quotient.
    pub witness: Option<[(usize, usize); 2]>,
}

/// Parabolic `C^{α/2, α}` norm: `sup|w| + sup |Δw| / (|Δt|^{α/2} + |Δx|^α)`.
pub fn holder_norm(w: &Trajectory, alpha: f64) -> Result<HolderEstimate> {
    holder_norm_with(w, alpha, &HolderOptions::default())
}

pub fn holder_norm_with(w: &Trajectory, alpha: f64, opts: &HolderOptions) -> Result<HolderEstimate> {
    ensure!(
        alpha > 0.0 && alpha <= 1.0,
        Parameter,
        "Hölder exponent {alpha} must lie in (0, 1]"
    );
    let dom = w.domain();
    let slots: Vec<usize> = opts.slots.clone().unwrap_or_else(|| (0..dom.len()).collect());
    let (f_lo, f_hi) = opts.frames.unwrap_or((0, w.len()));
    ensure!(
        f_hi <= w.len() && f_lo < f_hi,
        Parameter,
        "frame range {f_lo}..{f_hi} invalid"
    );
    ensure!(!slots.is_empty(), Sampling, "no nodes selected");
    let frames: Vec<usize> = (f_lo..f_hi).collect();

    let mut sup = 0.0f64;
    for &k in &frames {
        let f = w.frame(k);
        for &s in &slots {
            sup = sup.max(f[s].abs());
        }
    }

    let quotient = |a: (usize, usize), b: (usize, usize)| -> f64 {
        let dv = (w.frame(a.0)[a.1] - w.frame(b.0)[b.1]).abs();
        if dv == 0.0 {
            return 0.0;
        }
        let dt = (w.time(a.0) - w.time(b.0)).abs();
        let dx = dist2(dom.point(a.1), dom.point(b.1)).sqrt();
        dv / (dt.powf(alpha / 2.0) + dx.powf(alpha))
    };

    let n_points = frames.len() * slots.len();
    let total_pairs = n_points as u128 * (n_points as u128 - 1) / 2;
    let mut best = (0.0f64, None);
    let consider = |a: (usize, usize), b: (usize, usize), best: &mut (f64, Option<[(usize, usize); 2]>)| {
        let q = quotient(a, b);
        if q > best.0 {
            *best = (q, Some([a, b]));
        }
    };

    let exhaustive = total_pairs <= opts.budget as u128;
    let mut pairs = 0usize;
    if exhaustive {
        let pts: Vec<(usize, usize)> = frames
            .iter()
            .flat_map(|&k| slots.iter().map(move |&s| (k, s)))
            .collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                consider(pts[i], pts[j], &mut best);
            }
        }
        pairs = total_pairs as usize;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut selected = vec![false; dom.len()];
        for &s in &slots {
            selected[s] = true;
        }
        // Nearest neighbours in space and time.
        let mut nn: Vec<((usize, usize), (usize, usize))> = Vec::new();
        for &s in &slots {
            for &j in dom.neighbors(s) {
                let j = j as usize;
                if j > s && selected[j] {
                    for &k in &frames {
                        nn.push(((k, s), (k, j)));
                    }
                }
            }
            for win in frames.windows(2) {
                nn.push(((win[0], s), (win[1], s)));
            }
        }
        let nn_budget = opts.budget / 2;
        if nn.len() <= nn_budget {
            for &(a, b) in &nn {
                consider(a, b, &mut best);
            }
            pairs += nn.len();
        } else {
            for _ in 0..nn_budget {
                let (a, b) = nn[rng.gen_range(0..nn.len())];
                consider(a, b, &mut best);
            }
            pairs += nn_budget;
        }

        // Stratified far pairs, one stratum per distance octave.
        let h = dom.h();
        let d = dom.dim();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &s in &slots {
            for a in 0..d {
                lo[a] = lo[a].min(dom.point(s)[a]);
                hi[a] = hi[a].max(dom.point(s)[a]);
            }
        }
        let diam = (0..d).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        let span = (w.time(f_hi - 1) - w.time(f_lo)).sqrt();
        let reach = diam.max(span).max(h);
        let levels = ((reach / h).log2().ceil() as usize).max(1);
        let per_level = (opts.budget - opts.budget / 2) / levels;
        let grid = dom.grid();
        let mut target = [0.0; 3];
        let mut dir = [0.0; 3];
        for level in 0..levels {
            for _ in 0..per_level {
                for _attempt in 0..4 {
                    let fa = frames[rng.gen_range(0..frames.len())];
                    let sa = slots[rng.gen_range(0..slots.len())];
                    let rho = h * 2f64.powi(level as i32) * (1.0 + rng.gen::<f64>());
                    let theta: f64 = if frames.len() > 1 { rng.gen() } else { 1.0 };
                    let r_space = rho * theta;
                    let tau = (rho * (1.0 - theta)).powi(2);
                    loop {
                        let mut n2 = 0.0;
                        for v in dir.iter_mut().take(d) {
                            *v = rng.gen::<f64>() * 2.0 - 1.0;
                            n2 += *v * *v;
                        }
                        if n2 > 1e-6 && n2 <= 1.0 {
                            let n = n2.sqrt();
                            dir.iter_mut().take(d).for_each(|v| *v /= n);
                            break;
                        }
                    }
                    let pa = dom.point(sa);
                    for a in 0..d {
                        target[a] = pa[a] + r_space * dir[a];
                    }
                    let Some(sb) = dom.slot_of(grid.nearest(&target[..d])) else {
                        continue;
                    };
                    if !selected[sb] {
                        continue;
                    }
                    let shift = (tau / w.dt()).round() as i64 * if rng.gen::<bool>() { 1 } else { -1 };
                    let fb = fa as i64 + shift;
                    if fb < f_lo as i64 || fb >= f_hi as i64 {
                        continue;
                    }
                    let b = (fb as usize, sb);
                    if b == (fa, sa) {
                        continue;
                    }
                    consider((fa, sa), b, &mut best);
                    pairs += 1;
                    break;
                }
            }
        }
    }

    Ok(HolderEstimate {
        alpha,
        value: sup + best.0,
        sup,
        seminorm: best.0,
        pairs,
        exhaustive,
        witness: best.1,
    })
}

/// `sup|u| + sup |u(x) - u(y)| / |x - y|`.
pub fn lipschitz_norm(u: &Field) -> Result<f64> {
    Ok(holder_norm(&Trajectory::steady(u), 1.0)?.value)
}

/// `|∇u|` per active node by central differences with ghost values.
pub fn gradient_magnitude(u: &Field) -> Vec<f64> {
    let dom = u.domain();
    let grid = dom.grid();
    let d = grid.dim();
    let h = grid.h();
    let vals = u.values();
    let mut m = [0usize; 3];
    let ghost = |kind: Boundary, v: f64| match kind {
        Boundary::Neumann => v,
        Boundary::Dirichlet => -v,
    };
    (0..dom.len())
        .map(|s| {
            let g = dom.active_nodes()[s];
            grid.multi_index(g, &mut m);
            let v = vals[s];
            let mut acc = 0.0;
            for a in 0..d {
                let mut side = [0.0; 2];
                for (i, step) in [-1i64, 1].into_iter().enumerate() {
                    let k = m[a] as i64 + step;
                    side[i] = if k < 0 || k >= grid.n()[a] as i64 {
                        ghost(dom.outer(), v)
                    } else {
                        let mut mm = m;
                        mm[a] = k as usize;
                        let j = grid.linear_index(&mm[..d]);
                        match dom.kinds()[j] {
                            NodeKind::Active => vals[dom.slot_of(j).expect("active node has a slot")],
                            NodeKind::Exterior(b) => ghost(b, v),
                        }
                    };
                }
                acc += ((side[1] - side[0]) / (2.0 * h)).powi(2);
            }
            acc.sqrt()
        })
        .collect()
}

/// `‖∇u‖_{L^p}` over the given slots (all when `None`).
pub fn gradient_lp_norm(u: &Field, p: f64, slots: Option<&[usize]>) -> Result<f64> {
    check_exponent(p)?;
    let g = gradient_magnitude(u);
    Ok(spatial_norm(&g, slots, p, u.domain().cell_volume()))
}

#[cfg(test)]
mod tests {
    use super::super::GridSpec;
    use super::*;

    fn box2(n: usize) -> std::sync::Arc<Domain> {
        Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, n).unwrap()).unwrap()
    }

    #[test]
    fn lp_of_constant() {
        let dom = box2(8);
        let f = Field::constant(&dom, 3.0);
        assert!((lp_norm(&f, 2.0).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 3.0);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn lpq_weights_frames_by_dt() {
        let dom = box2(4);
        let frames = vec![vec![1.0; dom.len()]; 10];
        let w = Trajectory::new(dom, 0.0, 0.1, frames).unwrap();
        assert!((lpq_norm(&w, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((lpq_norm_window(&w, 1.0, 1.0, 0.0, 0.5, None).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn holder_of_linear_profile_is_sup_plus_slope_when_alpha_is_one() {
        let dom = box2(16);
        let f = Field::from_fn(&dom, |x| 2.0 * x[0]).unwrap();
        let est = holder_norm(&Trajectory::steady(&f), 1.0).unwrap();
        let h = dom.h();
        assert!(est.exhaustive);
        assert!((est.seminorm - 2.0).abs() < 1e-12);
        assert!((est.value - (4.0 - h)).abs() < 1e-12);
    }

    #[test]
    fn oscillation_on_cylinder() {
        let dom = box2(8);
        let frames: Vec<Vec<f64>> = (0..5)
            .map(|k| (0..dom.len()).map(|s| k as f64 + dom.point(s)[0]).collect())
            .collect();
        let w = Trajectory::new(dom, 0.0, 1.0, frames).unwrap();
        let cyl = Cylinder {
            t_lo: 1.0,
            t_hi: 3.0,
            center: vec![0.5, 0.5],
            radius: 0.1,
        };
        let osc = oscillation(&w, &cyl).unwrap();
        assert!((osc - (1.0 + 0.125)).abs() < 1e-12, "{osc}");
    }

    #[test]
    fn gradient_of_linear_interior() {
        let dom = box2(10);
        let f = Field::from_fn(&dom, |x| 3.0 * x[1]).unwrap();
        let g = gradient_magnitude(&f);
        let s = dom.nearest_slot(&[0.45, 0.55]);
        assert!((g[s] - 3.0).abs() < 1e-12);
    }
}
