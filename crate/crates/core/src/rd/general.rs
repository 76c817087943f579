use std::collections::BTreeMap;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{check_initial, integrate, to_trajectories, ClipAudit, RunSpec};
use crate::error::{ensure, Error, Result};
use crate::grid::{Field, Trajectory};
use crate::report::{CheckRow, EstimateReport};

/// Mass-action term: contributes `rate · stoich_i · Π_j u_j^{order_j}` to `f_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub rate: f64,
    pub order: Vec<f64>,
    pub stoich: Vec<f64>,
}

impl Reaction {
    pub fn monomial(&self, u: &[f64]) -> f64 {
        self.rate
            * self
                .order
                .iter()
                .zip(u)
                .filter(|(e, _)| **e != 0.0)
                .map(|(&e, &x)| if e == 1.0 { x } else { x.max(0.0).powf(e) })
                .product::<f64>()
    }
}

/// Polynomial system `∂_t u_i − d_iΔu_i = f_i(u)` with (A2) weights `β`
/// and the lower-triangular (A3) matrix `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralSystemSpec {
    pub name: String,
    pub diff: Vec<f64>,
    pub reactions: Vec<Reaction>,
    pub beta: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    /// (A3) constant; `None` until fitted.
    #[serde(default)]
    pub k: Option<f64>,
}

impl GeneralSystemSpec {
    pub fn m(&self) -> usize {
        self.diff.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        ensure!(m > 0, Parameter, "system has no species");
        ensure!(
            self.diff.iter().all(|&d| d > 0.0 && d.is_finite()),
            Parameter,
            "diffusions must be positive"
        );
        ensure!(
            self.beta.len() == m && self.beta.iter().all(|&b| b > 0.0),
            Parameter,
            "need m positive weights β"
        );
        ensure!(
            self.a.len() == m && self.a.iter().all(|r| r.len() == m),
            Parameter,
            "A must be {m}×{m}"
        );
        for (i, row) in self.a.iter().enumerate() {
            ensure!(row[i] > 0.0, Parameter, "a_{i}{i} must be positive");
            for (j, &x) in row.iter().enumerate() {
                ensure!(
                    x >= 0.0 && x.is_finite(),
                    Parameter,
                    "a_{i}{j} = {x} must be nonnegative"
                );
                ensure!(
                    j <= i || x == 0.0,
                    Parameter,
                    "A must be lower triangular (a_{i}{j} = {x})"
                );
            }
        }
        for (r, re) in self.reactions.iter().enumerate() {
            ensure!(
                re.order.len() == m && re.stoich.len() == m,
                Parameter,
                "reaction {r} must have {m} orders and stoichiometric coefficients"
            );
            ensure!(
                re.order.iter().all(|&e| e >= 0.0),
                Parameter,
                "reaction {r} has a negative order"
            );
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for r in &self.reactions {
            let mono = r.monomial(u);
            for (o, &s) in out.iter_mut().zip(&r.stoich) {
                if s != 0.0 {
                    *o += s * mono;
                }
            }
        }
    }

    /// Per-species consumption rate divided by `u_i`.
    fn loss_rate(&self, u: &[f64], i: usize) -> f64 {
        if u[i] <= 1e-300 {
            return 0.0;
        }
        self.reactions
            .iter()
            .filter(|r| r.stoich[i] < 0.0)
            .map(|r| -r.stoich[i] * r.monomial(u) / u[i])
            .sum()
    }

    /// `Σβ_i f_i` as merged monomials, keyed by the order vector.
    pub fn weighted_sum_terms(&self, w: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mut acc: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
        for r in &self.reactions {
            let c: f64 = r.stoich.iter().zip(w).map(|(s, b)| s * b).sum::<f64>() * r.rate;
            let key = r.order.iter().map(|e| e.to_bits()).collect();
            acc.entry(key).or_insert_with(|| (r.order.clone(), 0.0)).1 += c;
        }
        acc.into_values().collect()
    }

    /// True when every merged coefficient of `Σβ_i f_i` is below `1e-12` of the term scale.
    pub fn dissipation_vanishes(&self) -> bool {
        let scale = self.reaction_scale();
        self.weighted_sum_terms(&self.beta)
            .iter()
            .all(|(_, c)| c.abs() <= 1e-12 * scale)
    }

    fn reaction_scale(&self) -> f64 {
        let bmax = self.beta.iter().cloned().fold(0.0, f64::max);
        self.reactions
            .iter()
            .map(|r| r.rate.abs() * r.stoich.iter().fold(0.0f64, |m, s| m.max(s.abs())) * bmax)
            .fold(1e-300, f64::max)
    }

    pub fn b(&self) -> Result<Vec<Vec<f64>>> {
        lower_triangular_inverse(&self.a)
    }

    pub fn c(&self) -> Result<Vec<Vec<f64>>> {
        c_table(&self.a, &self.diff)
    }

    /// Append `u_{m+1}` with `f_{m+1} = −Σβ_i f_i`, weight 1 and `A` row `(β, 1)`.
    pub fn with_companion(&self, diffusion: f64) -> GeneralSystemSpec {
        let mut s = self.clone();
        for r in &mut s.reactions {
            let c: f64 = r.stoich.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
            r.stoich.push(-c);
            r.order.push(0.0);
        }
        s.diff.push(diffusion);
        s.beta.push(1.0);
        for row in &mut s.a {
            row.push(0.0);
        }
        let mut last = self.beta.clone();
        last.push(1.0);
        s.a.push(last);
        s.name = format!("{}+companion", self.name);
        s
    }

    /// `u₁ + u₃ ⇌ u₂ + u₄`, the quadratic four-species system.
    pub fn quad4(diff: [f64; 4]) -> Self {
        GeneralSystemSpec {
            name: "quad4".into(),
            diff: diff.to_vec(),
            reactions: vec![
                Reaction {
                    rate: 1.0,
                    order: vec![1.0, 0.0, 1.0, 0.0],
                    stoich: vec![-1.0, 1.0, -1.0, 1.0],
                },
                Reaction {
                    rate: 1.0,
                    order: vec![0.0, 1.0, 0.0, 1.0],
                    stoich: vec![1.0, -1.0, 1.0, -1.0],
                },
            ],
            beta: vec![1.0; 4],
            a: identity(4),
            k: None,
        }
    }

    /// `b₁S₁ + … + b_mS_m ⇌ S_{m+1} + S_{m+2}`.
    pub fn uum(b: &[u32], diff: &[f64]) -> Result<Self> {
        let m = b.len();
        ensure!(m > 0 && b.iter().all(|&x| x > 0), Parameter, "need positive b_i");
        ensure!(diff.len() == m + 2, Parameter, "need {} diffusions", m + 2);
        let mut fwd_order: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        fwd_order.extend([0.0, 0.0]);
        let mut stoich: Vec<f64> = b.iter().map(|&x| -(x as f64)).collect();
        stoich.extend([1.0, 1.0]);
        let mut bwd_order = vec![0.0; m];
        bwd_order.extend([1.0, 1.0]);
        let mut beta: Vec<f64> = b.iter().map(|&x| 2.0 / (m as f64 * x as f64)).collect();
        beta.extend([1.0, 1.0]);
        let mut a = identity(m + 2);
        a[m][0] = 1.0 / b[0] as f64;
        a[m + 1][0] = 1.0 / b[0] as f64;
        Ok(GeneralSystemSpec {
            name: format!("uum{b:?}"),
            diff: diff.to_vec(),
            reactions: vec![
                Reaction {
                    rate: 1.0,
                    order: fwd_order,
                    stoich: stoich.clone(),
                },
                Reaction {
                    rate: 1.0,
                    order: bwd_order,
                    stoich: stoich.iter().map(|s| -s).collect(),
                },
            ],
            beta,
            a,
            k: None,
        })
    }

    /// `S₁ + 2S₂ ⇌ S₂ + S₃`.
    pub fn s1_2s2(diff: [f64; 3]) -> Self {
        GeneralSystemSpec {
            name: "s1_2s2".into(),
            diff: diff.to_vec(),
            reactions: vec![
                Reaction {
                    rate: 1.0,
                    order: vec![1.0, 2.0, 0.0],
                    stoich: vec![-1.0, -1.0, 1.0],
                },
                Reaction {
                    rate: 1.0,
                    order: vec![0.0, 1.0, 1.0],
                    stoich: vec![1.0, 1.0, -1.0],
                },
            ],
            beta: vec![1.0, 1.0, 2.0],
            a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 2.0]],
            k: None,
        }
    }

    /// `pS₁ + qS₂ ⇌ 2S₃`.
    pub fn p_q_2s3(p: u32, q: u32, diff: [f64; 3]) -> Result<Self> {
        ensure!(p > 0 && q > 0, Parameter, "p and q must be positive");
        let (pf, qf) = (p as f64, q as f64);
        Ok(GeneralSystemSpec {
            name: format!("p{p}_q{q}_2s3"),
            diff: diff.to_vec(),
            reactions: vec![
                Reaction {
                    rate: 1.0,
                    order: vec![pf, qf, 0.0],
                    stoich: vec![-pf, -qf, 2.0],
                },
                Reaction {
                    rate: 1.0,
                    order: vec![0.0, 0.0, 2.0],
                    stoich: vec![pf, qf, -2.0],
                },
            ],
            beta: vec![2.0, 2.0, pf + qf],
            a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![2.0, 2.0, pf + qf]],
            k: None,
        })
    }
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = a.len();
    for (i, row) in a.iter().enumerate() {
        ensure!(row.len() == m, Parameter, "matrix is not square");
        ensure!(row[i] != 0.0, Parameter, "zero diagonal entry at {i}");
        ensure!(
            row[i + 1..].iter().all(|&x| x == 0.0),
            Parameter,
            "row {i} has entries above the diagonal"
        );
    }
    let mut b = vec![vec![0.0; m]; m];
    for k in 0..m {
        b[k][k] = 1.0 / a[k][k];
        for i in k + 1..m {
            let s: f64 = (k..i).map(|j| a[i][j] * b[j][k]).sum();
            b[i][k] = -s / a[i][i];
        }
    }
    Ok(b)
}

/// `c_ik = Σ_{j=k}^{i−1} (d_j − d_i) a_ij b_jk` for `k < i`, zero otherwise.
pub fn c_table(a: &[Vec<f64>], diff: &[f64]) -> Result<Vec<Vec<f64>>> {
    ensure!(diff.len() == a.len(), Parameter, "need one diffusion per row of A");
    let b = lower_triangular_inverse(a)?;
    let m = a.len();
    let mut c = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..i {
            c[i][k] = (k..i).map(|j| (diff[j] - diff[i]) * a[i][j] * b[j][k]).sum();
        }
    }
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct StructuralOptions {
    /// Sample box `[0, upper]^m`.
    pub upper: f64,
    pub samples: usize,
    /// Scale of the ray test for growth exponents.
    pub ray_scale: f64,
    pub rays: usize,
    pub tol: f64,
}

impl Default for StructuralOptions {
    fn default() -> Self {
        StructuralOptions {
            upper: 10.0,
            samples: 100_000,
            ray_scale: 1e3,
            rays: 256,
            tol: 1e-12,
        }
    }
}

/// Sampled and symbolic outcome of the (A1)–(A3) checks.
#[derive(Clone, Debug)]
pub struct StructuralReport {
    pub system: String,
    pub samples: usize,
    /// Most negative `f_i` on the face `u_i = 0`.
    pub a1_worst: f64,
    pub a1_witness: Option<Vec<f64>>,
    /// Largest merged coefficient of `Σβ_i f_i`, relative to the term scale.
    pub a2_symbolic: f64,
    /// Largest sampled `Σβ_i f_i / (1 + Σ|β_i f_i|)`.
    pub a2_sampled: f64,
    pub a2_witness: Option<Vec<f64>>,
    /// Smallest `K` per row of `A` over the samples.
    pub a3_k: Vec<f64>,
    /// Growth exponent of the positive part of row `i` along rays.
    pub a3_growth: Vec<f64>,
    /// Growth exponent of `|Σ_j a_ij f_j|` along rays (informational).
    pub two_sided_growth: Vec<f64>,
    /// `max |(A·B − I)_ij|`.
    pub ab_identity: f64,
    pub report: EstimateReport,
}

impl StructuralReport {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    pub fn k(&self) -> f64 {
        self.a3_k.iter().cloned().fold(0.0, f64::max)
    }
}

/// Van der Corput radical inverse in base `b`.
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

fn primes(m: usize) -> Vec<u64> {
    let mut ps = Vec::with_capacity(m);
    let mut c = 2u64;
    while ps.len() < m {
        if ps.iter().all(|p| c % p != 0) {
            ps.push(c);
        }
        c += 1;
    }
    ps
}

/// Halton point `index` in `[0, 1)^m`.
fn halton(index: u64, bases: &[u64], out: &mut [f64]) {
    for (o, &b) in out.iter_mut().zip(bases) {
        *o = radical_inverse(index + 1, b);
    }
}

/// Evaluate (A1)–(A3) without failing; see [`structural_checks`].
pub fn structural_report(spec: &GeneralSystemSpec, opts: &StructuralOptions) -> Result<StructuralReport> {
    spec.validate()?;
    ensure!(opts.samples > 0 && opts.upper > 0.0, Parameter, "empty sample box");
    let m = spec.m();
    let bases = primes(m);
    let mut u = vec![0.0; m];
    let mut f = vec![0.0; m];
    let mut a1_worst = 0.0f64;
    let mut a1_witness = None;
    let mut a2_sampled = f64::NEG_INFINITY;
    let mut a2_witness = None;
    let mut a3_k = vec![f64::NEG_INFINITY; m];

    for s in 0..opts.samples {
        halton(s as u64, &bases, &mut u);
        u.iter_mut().for_each(|x| *x *= opts.upper);
        spec.eval(&u, &mut f);
        let weighted: f64 = f.iter().zip(&spec.beta).map(|(a, b)| a * b).sum();
        let scale: f64 = f.iter().zip(&spec.beta).map(|(a, b)| (a * b).abs()).sum();
        let rel = weighted / (1.0 + scale);
        if rel > a2_sampled {
            a2_sampled = rel;
            a2_witness = Some(u.clone());
        }
        let norm = (1.0 + u.iter().sum::<f64>()).powi(2);
        for i in 0..m {
            let row: f64 = (0..=i).map(|j| spec.a[i][j] * f[j]).sum();
            a3_k[i] = a3_k[i].max(row / norm);
        }
        for i in 0..m {
            let keep = u[i];
            u[i] = 0.0;
            spec.eval(&u, &mut f);
            if f[i] < a1_worst {
                a1_worst = f[i];
                a1_witness = Some(u.clone());
            }
            u[i] = keep;
        }
    }

    let scale = spec.reaction_scale();
    let a2_symbolic = spec
        .weighted_sum_terms(&spec.beta)
        .iter()
        .map(|(_, c)| c / scale)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let a2_symbolic_abs = spec
        .weighted_sum_terms(&spec.beta)
        .iter()
        .map(|(_, c)| c.abs() / scale)
        .fold(0.0, f64::max);

    let (a3_growth, two_sided_growth) = growth_exponents(spec, opts);

    let b = spec.b()?;
    let mut ab_identity = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let v: f64 = (0..m).map(|k| spec.a[i][k] * b[k][j]).sum();
            ab_identity = ab_identity.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }

    let mut rep = EstimateReport::new(format!("rd.structural.{}", spec.name));
    rep.push(
        CheckRow::le("a1_quasi_positivity", -a1_worst, opts.tol)
            .param("samples", opts.samples as f64)
            .note(witness_note(&a1_witness)),
    );
    rep.push(CheckRow::le("a2_symbolic", a2_symbolic, opts.tol).param("max_abs_coefficient", a2_symbolic_abs));
    rep.push(CheckRow::le("a2_sampled", a2_sampled, opts.tol).note(witness_note(&a2_witness)));
    for i in 0..m {
        rep.push(
            CheckRow::le(format!("a3_row{}_growth", i + 1), a3_growth[i], 2.0 + 0.05)
                .param("k_sampled", a3_k[i])
                .param("two_sided_growth", two_sided_growth[i]),
        );
    }
    rep.push(CheckRow::le("ab_identity", ab_identity, 1e-12));

    Ok(StructuralReport {
        system: spec.name.clone(),
        samples: opts.samples,
        a1_worst,
        a1_witness,
        a2_symbolic,
        a2_sampled,
        a2_witness,
        a3_k,
        a3_growth,
        two_sided_growth,
        ab_identity,
        report: rep,
    })
}

fn witness_note(w: &Option<Vec<f64>>) -> String {
    match w {
        Some(u) => format!("witness {u:?}"),
        None => String::new(),
    }
}

/// Largest `log₂(g(2S·e)/g(S·e))` over rays `e` for the positive part and the
/// absolute value of each `A` row.
fn growth_exponents(spec: &GeneralSystemSpec, opts: &StructuralOptions) -> (Vec<f64>, Vec<f64>) {
    let m = spec.m();
    let bases = primes(m);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        for j in i..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e[j] = 1.0;
            dirs.push(e);
        }
    }
    let mut e = vec![0.0; m];
    for s in 0..opts.rays {
        halton(s as u64 + 7919, &bases, &mut e);
        dirs.push(e.clone());
    }
    dirs.push(vec![1.0; m]);

    let mut f = vec![0.0; m];
    let mut row_at = |x: &[f64]| -> Vec<f64> {
        spec.eval(x, &mut f);
        (0..m).map(|i| (0..=i).map(|j| spec.a[i][j] * f[j]).sum()).collect()
    };
    let mut pos = vec![0.0f64; m];
    let mut abs = vec![0.0f64; m];
    let s = opts.ray_scale;
    for e in &dirs {
        let n: f64 = e.iter().sum();
        let x1: Vec<f64> = e.iter().map(|v| v / n * s).collect();
        let x2: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
        let (r1, r2) = (row_at(&x1), row_at(&x2));
        for i in 0..m {
            let floor = 1e-12 * (1.0 + s).powi(2);
            if r2[i] > floor && r1[i] > floor {
                pos[i] = pos[i].max((r2[i] / r1[i]).log2());
            } else if r2[i] > floor {
                pos[i] = f64::INFINITY;
            }
            if r1[i].abs() > floor {
                abs[i] = abs[i].max((r2[i].abs() / r1[i].abs()).log2());
            }
        }
    }
    (pos, abs)
}

/// Run (A1)–(A3) at `opts.samples` Halton points of `[0, upper]^m`; any
/// violation is a [`Error::Structural`] naming the failing rows.
pub fn structural_checks(spec: &GeneralSystemSpec, opts: &StructuralOptions) -> Result<StructuralReport> {
    let rep = structural_report(spec, opts)?;
    if !rep.passed() {
        let failed: Vec<String> = rep
            .report
            .failures()
            .map(|r| {
                format!(
                    "{} (lhs {:e}, rhs {:e}) {}",
                    r.check,
                    r.lhs.0,
                    r.rhs.0,
                    r.notes.join(" ")
                )
            })
            .collect();
        return Err(Error::Structural(format!("{}: {}", spec.name, failed.join("; "))));
    }
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct GeneralRun {
    /// System actually solved, including the companion species when added.
    pub spec: GeneralSystemSpec,
    pub companion: bool,
    pub u: Vec<Trajectory>,
    /// `v = A·u` per frame.
    pub v: Vec<Trajectory>,
    pub dt: f64,
    pub steps: usize,
    pub clip: ClipAudit,
    /// Sup-norm residual of the transformed equations per interior frame.
    pub uifi5: Vec<f64>,
    pub uifi5_max: f64,
    /// `max |B·(A·u) − u|` over frames.
    pub roundtrip: f64,
    /// Largest state reached, for the verified-box re-check.
    pub state_max: f64,
}

/// Solve `∂_t u_i − d_iΔu_i = f_i(u)` and verify
/// `∂_t v_i − d_iΔv_i = Σ_j a_ij f_j + Σ_{k<i} c_ik Δv_k` for `v = A·u`.
pub fn general_solve(
    spec: &GeneralSystemSpec,
    u_init: &[&Field],
    run: RunSpec,
    opts: &StructuralOptions,
) -> Result<GeneralRun> {
    spec.validate()?;
    ensure!(
        u_init.len() == spec.m(),
        Parameter,
        "need {} initial fields, got {}",
        spec.m(),
        u_init.len()
    );
    let dom = u_init[0].domain().clone();
    check_initial(&dom, u_init)?;
    let init_max = u_init.iter().map(|f| f.max()).fold(0.0, f64::max);
    let mut box_opts = opts.clone();
    box_opts.upper = box_opts.upper.max(init_max);
    structural_checks(spec, &box_opts)?;

    let companion = !spec.dissipation_vanishes();
    let sys = if companion {
        spec.with_companion(spec.diff[0])
    } else {
        spec.clone()
    };
    let m = sys.m();
    let n = dom.len();
    let h2 = dom.h() * dom.h();
    let mut state: Vec<Vec<f64>> = u_init.iter().map(|f| f.values().to_vec()).collect();
    if companion {
        state.push(vec![0.0; n]);
    }

    let dmax = sys.diff.iter().cloned().fold(0.0, f64::max);
    let mut probe = vec![0.0; m];
    let mut react = 0.0f64;
    for i in 0..n {
        for s in 0..m {
            probe[s] = state[s][i];
        }
        for s in 0..m {
            react = react.max(sys.loss_rate(&probe, s));
        }
    }
    let dt_max = 1.0 / (dom.max_center_weight() * dmax / h2 + 2.0 * react);

    let lap_dom = dom.clone();
    let rhs_sys = sys.clone();
    let mut lap = vec![0.0; n];
    let mut ui = vec![0.0; m];
    let mut fi = vec![0.0; m];
    let rhs = move |s: &[Vec<f64>], out: &mut [Vec<f64>]| {
        for i in 0..n {
            for sp in 0..m {
                ui[sp] = s[sp][i];
            }
            rhs_sys.eval(&ui, &mut fi);
            for sp in 0..m {
                out[sp][i] = fi[sp];
            }
        }
        for sp in 0..m {
            lap_dom.apply_laplacian(&s[sp], &mut lap);
            for i in 0..n {
                out[sp][i] += rhs_sys.diff[sp] * lap[i];
            }
        }
    };
    let stiff_dom = dom.clone();
    let stiff_sys = sys.clone();
    let stiffness = move |s: &[Vec<f64>]| {
        let mut u = vec![0.0; m];
        let mut worst = 0.0f64;
        for i in 0..n {
            for sp in 0..m {
                u[sp] = s[sp][i];
            }
            let c = stiff_dom.center_weight(i) / h2;
            for sp in 0..m {
                worst = worst.max(c * stiff_sys.diff[sp] + stiff_sys.loss_rate(&u, sp));
            }
        }
        worst
    };
    let out = integrate(&dom, state, run, dt_max, rhs, stiffness)?;
    let tau = run.t_end / run.frames as f64;

    let state_max = out.frames.iter().flatten().flatten().cloned().fold(0.0, f64::max);
    if state_max > box_opts.upper {
        warn!(
            "state reached {state_max:.3e}, outside the verified box [0, {:.3e}]; re-checking",
            box_opts.upper
        );
        let mut wider = box_opts.clone();
        wider.upper = state_max;
        structural_checks(spec, &wider)?;
    }

    let b = sys.b()?;
    let c = sys.c()?;
    let v_frames: Vec<Vec<Vec<f64>>> = out
        .frames
        .iter()
        .map(|fr| {
            (0..m)
                .map(|i| (0..n).map(|x| (0..=i).map(|j| sys.a[i][j] * fr[j][x]).sum()).collect())
                .collect()
        })
        .collect();
    let mut roundtrip = 0.0f64;
    for (fr, vf) in out.frames.iter().zip(&v_frames) {
        for j in 0..m {
            for x in 0..n {
                let back: f64 = (0..=j).map(|k| b[j][k] * vf[k][x]).sum();
                roundtrip = roundtrip.max((back - fr[j][x]).abs());
            }
        }
    }

    let mut uifi5 = Vec::new();
    let mut ui = vec![0.0; m];
    let mut fi = vec![0.0; m];
    let mut lap_v = vec![vec![0.0; n]; m];
    for k in 1..v_frames.len().saturating_sub(1) {
        for i in 0..m {
            dom.apply_laplacian(&v_frames[k][i], &mut lap_v[i]);
        }
        let mut worst = 0.0f64;
        for x in 0..n {
            for sp in 0..m {
                ui[sp] = out.frames[k][sp][x];
            }
            sys.eval(&ui, &mut fi);
            for i in 0..m {
                let dv = (v_frames[k + 1][i][x] - v_frames[k - 1][i][x]) / (2.0 * tau);
                let g: f64 = (0..=i).map(|j| sys.a[i][j] * fi[j]).sum();
                let cross: f64 = (0..i).map(|kk| c[i][kk] * lap_v[kk][x]).sum();
                worst = worst.max((dv - sys.diff[i] * lap_v[i][x] - g - cross).abs());
            }
        }
        uifi5.push(worst);
    }
    let uifi5_max = uifi5.iter().cloned().fold(0.0, f64::max);

    let u = to_trajectories(&dom, out.frames, tau)?;
    let v = to_trajectories(&dom, v_frames, tau)?;
    Ok(GeneralRun {
        spec: sys,
        companion,
        u,
        v,
        dt: out.dt,
        steps: out.steps,
        clip: out.clip,
        uifi5,
        uifi5_max,
        roundtrip,
        state_max,
    })
}

impl GeneralRun {
    pub fn domain(&self) -> &Arc<crate::grid::Domain> {
        self.u[0].domain()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_species_c_entry() {
        let (a, d1, d2) = (0.7, 0.3, 1.9);
        let c = c_table(&[vec![1.0, 0.0], vec![a, 1.0]], &[d1, d2]).unwrap();
        assert!((c[1][0] - (d1 - d2) * a).abs() < 1e-15);
        assert_eq!(c[0][0], 0.0);
    }

    #[test]
    fn identity_gives_zero_table() {
        let c = c_table(&identity(4), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(c.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn presets_dissipate_exactly() {
        let opts = StructuralOptions {
            samples: 2000,
            ..Default::default()
        };
        for spec in [
            GeneralSystemSpec::quad4([1.0; 4]),
            GeneralSystemSpec::uum(&[1, 2, 3], &[1.0; 5]).unwrap(),
            GeneralSystemSpec::s1_2s2([1.0; 3]),
            GeneralSystemSpec::p_q_2s3(2, 1, [1.0; 3]).unwrap(),
        ] {
            assert!(spec.dissipation_vanishes(), "{}", spec.name);
            let rep = structural_checks(&spec, &opts).unwrap();
            assert!(rep.a2_sampled <= 1e-12, "{}", spec.name);
        }
    }

    #[test]
    fn cubic_rows_grow_cubically_in_absolute_value() {
        let opts = StructuralOptions {
            samples: 500,
            ..Default::default()
        };
        let rep = structural_checks(&GeneralSystemSpec::s1_2s2([1.0; 3]), &opts).unwrap();
        assert!(rep.two_sided_growth[0] > 2.9 && rep.two_sided_growth[1] > 2.9);
        assert!(rep.a3_growth.iter().all(|&g| g <= 2.05));
    }

    #[test]
    fn non_quasi_positive_rejected() {
        let mut spec = GeneralSystemSpec::quad4([1.0; 4]);
        spec.reactions[0].order = vec![0.0, 0.0, 1.0, 0.0];
        let opts = StructuralOptions {
            samples: 200,
            ..Default::default()
        };
        assert!(matches!(structural_checks(&spec, &opts), Err(Error::Structural(_))));
    }
}
