//! Acceptance suite: one PASS/FAIL line per criterion, each under its time budget.
//!
//! `cargo test --test acceptance -- 5 7` runs only the listed criteria.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regularity_lab::grid::{Field, GraphGeometry};
use regularity_lab::harness::{emit, preset_config, run_experiment, Format, RunReport};
use regularity_lab::heat_kernel::{
    gaussian_lower_bound_check, kernel_evolve, kernel_moment, kernel_norm_report, LowerBoundOptions,
};
use regularity_lab::rd::{c_table, quadratic_solve, structural_report, GeneralSystemSpec, RunSpec, StructuralOptions};
use regularity_lab::report::EstimateReport;
use regularity_lab::rough::{
    comparison_pair, explicit_constants, fit_cut_ball_prefactor, oscillation_decay_check, random_rough_case,
    solve_rough, RandomCaseOptions, RoughRun,
};

use common::{dense_inverse, dopri45, matmul, rel_err, unit_box, CONSTANTS_ORACLE};

type Outcome = regularity_lab::Result<(bool, String)>;

struct Criterion {
    id: usize,
    title: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn failures(reports: &[EstimateReport]) -> Vec<String> {
    reports
        .iter()
        .flat_map(|r| {
            r.failures()
                .map(move |row| format!("{}/{} lhs {:e} rhs {:e}", r.name, row.check, row.lhs.0, row.rhs.0))
        })
        .collect()
}

fn constants_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for (args, want) in CONSTANTS_ORACLE {
        let [d, p, q, a0, c0] = args;
        let c = explicit_constants(d as usize, p, q, a0, c0)?;
        let got = [c.gamma, c.beta, c.delta, c.amplitude, c.amplitude_proof, c.alpha, c.k1];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max(rel_err(*g, w));
        }
    }
    Ok((
        worst < 1e-12,
        format!("{} tuples, max relative error {worst:.2e}", CONSTANTS_ORACLE.len()),
    ))
}

fn heat_kernel_norms() -> Outcome {
    let dom = unit_box(2, 96);
    let kernel = kernel_evolve(&dom, dom.nearest_slot(&[0.5, 0.5]), 0.1, None)?;
    let inf = kernel_norm_report(&kernel, &[f64::INFINITY], 0.1)?;
    let two = kernel_norm_report(&kernel, &[2.0], 0.07)?;
    let mass = (0..kernel.len())
        .map(|k| (kernel.mass(k) - 1.0).abs())
        .fold(0.0, f64::max);
    let pass = inf.passed() && two.passed() && mass <= 1e-9;
    Ok((
        pass,
        format!(
            "slope ∞ {:.4}, slope 2 {:.4}, mass error {mass:.1e}",
            inf.rows[0].slope, two.rows[0].slope
        ),
    ))
}

fn heat_kernel_moment() -> Outcome {
    let dom = unit_box(2, 96);
    let kernel = kernel_evolve(&dom, dom.nearest_slot(&[0.5, 0.5]), 0.1, None)?;
    let m = kernel_moment(&kernel)?;
    Ok(((m.slope - 0.5).abs() <= 0.05, format!("moment slope {:.4}", m.slope)))
}

fn gaussian_lower_bound() -> Outcome {
    let r = 1.0;
    let amp = r / 44.0;
    let opts = LowerBoundOptions::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for geom in [
        GraphGeometry::flat(vec![0.0, 0.0], r),
        GraphGeometry::sine(vec![0.0, 0.0], r, amp, 1.0 / r),
    ] {
        let rep = gaussian_lower_bound_check(&geom, &opts)?;
        pass &= rep.pass;
        detail.push(format!(
            "{} violation {:.2e} → {:.2e}",
            geom.label, rep.rows[0].violation, rep.rows[1].violation
        ));
    }
    Ok((pass, detail.join(", ")))
}

fn oscillation_decay() -> Outcome {
    let (a0, c0, p, q, r) = (1.0, 2.0, 4.0, 4.0, 0.5);
    let runs = 50u64;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut passed, mut total, mut degenerate) = (0, 0, 0);
    let mut worst = [0.0f64; 2];
    for d in [1, 2] {
        let n = if d == 1 { 128 } else { 48 };
        let consts = explicit_constants(d, p, q, a0, c0)?;
        let dom = unit_box(d, n);
        let mut x0 = vec![0.5; d];
        x0[d - 1] = 0.0;
        let c_star = fit_cut_ball_prefactor(&GraphGeometry::flat(x0.clone(), 1.0), 2 * n, q, 4)?;
        let t_end = consts.beta * r * r;
        for i in 0..2 * runs {
            let forcing = (i >= runs).then(|| 10f64.powf(rng.gen_range(-1.0..1.0)));
            let opts = RandomCaseOptions {
                a0,
                c0,
                t_end,
                blocks: 8,
                forcing,
                monotone_forcing: false,
                noise: if forcing.is_some() { 0.0 } else { 1.0 },
            };
            let case = random_rough_case(&dom, &opts, rng.gen())?;
            let sol = solve_rough(&case.coeff, &case.f, &case.w_init, RoughRun::new(0.0, t_end))?;
            let rep = oscillation_decay_check(&sol.w, &case.f, t_end, &x0, r, &consts, c_star)?;
            total += 1;
            passed += rep.pass as usize;
            degenerate += rep.degenerate as usize;
            let slot = forcing.is_some() as usize;
            worst[slot] = worst[slot].max(rep.lhs / rep.rhs);
        }
    }
    Ok((
        passed == total && degenerate == 0,
        format!(
            "{passed}/{total} runs, worst lhs/rhs unforced {:.4} forced {:.4}, degenerate {degenerate}",
            worst[0], worst[1]
        ),
    ))
}

fn comparison_pairs() -> Outcome {
    let (a0, c0) = (1.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut reports = Vec::new();
    for d in [1, 2] {
        let dom = unit_box(d, if d == 1 { 128 } else { 48 });
        let t_end = explicit_constants(d, 4.0, 4.0, a0, c0)?.beta * 0.25;
        for _ in 0..100 {
            reports.push(comparison_pair(&dom, a0, c0, t_end, rng.gen())?);
        }
    }
    let rows: usize = reports.iter().map(|r| r.rows.len()).sum();
    let bad = failures(&reports);
    Ok((
        bad.is_empty(),
        format!("{} pairs, {rows} orderings, {} violations", reports.len(), bad.len()),
    ))
}

fn level_failures(report: &RunReport) -> Vec<String> {
    let mut all = report.checks.clone();
    all.extend(report.refinement.iter().flat_map(|l| l.checks.clone()));
    failures(&all)
}

fn skt_pipeline() -> Outcome {
    let mut cfg = preset_config("skt")?;
    cfg.grid.n = 16;
    cfg.refine = 2;
    cfg.seed = 3;
    let report = run_experiment(&cfg)?;
    let bad = level_failures(&report);
    let conv = report
        .convergence
        .iter()
        .find(|c| c.report == "skt.auxiliary" && c.check == "w_evolution_residual")
        .expect("residual convergence row");
    let orders: Vec<f64> = conv.orders.iter().map(|o| o.0).collect();
    let orders_ok = orders.iter().all(|o| (0.8..=2.5).contains(o));
    Ok((
        bad.is_empty() && orders_ok && conv.n == [16, 32, 64],
        format!("n {:?}, residual orders {orders:.3?}, failed rows {bad:?}", conv.n),
    ))
}

fn quadratic_system() -> Outcome {
    let mut cfg = preset_config("quad4")?;
    cfg.grid.n = 16;
    cfg.refine = 2;
    cfg.seed = 5;
    let report = run_experiment(&cfg)?;
    let bad = level_failures(&report);
    let conv = report
        .convergence
        .iter()
        .find(|c| c.check == "laplacian_w_identity_residual")
        .expect("identity convergence row");
    let orders: Vec<f64> = conv.orders.iter().map(|o| o.0).collect();
    let orders_ok = orders.iter().all(|&o| o >= 1.0);

    let dom = unit_box(2, 64);
    let y0 = [1.0, 0.2, 0.7, 0.4];
    let fields: Vec<Field> = y0.iter().map(|&c| Field::constant(&dom, c)).collect();
    let run = quadratic_solve(
        [0.1, 0.4, 1.0, 2.0],
        [&fields[0], &fields[1], &fields[2], &fields[3]],
        RunSpec::new(0.5, 8),
    )?;
    let exact = dopri45(
        |u, out| {
            let r = u[0] * u[2] - u[1] * u[3];
            out.copy_from_slice(&[-r, r, -r, r]);
        },
        &y0,
        0.5,
        1e-12,
        1e-14,
    );
    let ode_err = run
        .u
        .iter()
        .zip(exact)
        .flat_map(|(traj, e)| traj.last().iter().map(move |v| (v - e).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    Ok((
        bad.is_empty() && orders_ok && conv.n.last() == Some(&64) && ode_err <= 1e-6,
        format!(
            "n {:?}, identity orders {orders:.3?}, uniform vs ODE {ode_err:.1e}, failed rows {bad:?}",
            conv.n
        ),
    ))
}

fn random_lower_triangular(m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => rng.gen_range(-2.0..2.0),
                    std::cmp::Ordering::Equal => rng.gen_range(0.5..2.5),
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

fn structural_checks() -> Outcome {
    let opts = StructuralOptions::default();
    let systems = [
        GeneralSystemSpec::quad4([0.1, 0.4, 1.0, 2.0]),
        GeneralSystemSpec::uum(&[1, 2], &[0.3, 0.6, 1.0, 1.4])?,
        GeneralSystemSpec::s1_2s2([0.5, 1.0, 2.0]),
        GeneralSystemSpec::p_q_2s3(1, 2, [0.5, 1.0, 2.0])?,
    ];
    let mut bad = Vec::new();
    for (i, spec) in systems.iter().enumerate() {
        let rep = structural_report(spec, &opts)?;
        if rep.samples < 100_000 || rep.a1_worst < -opts.tol {
            bad.push(format!("{} a1 {:e}", spec.name, rep.a1_worst));
        }
        if i < 2 && (rep.a2_symbolic > 1e-12 || rep.a2_sampled > 1e-12) {
            bad.push(format!("{} a2 {:e}/{:e}", spec.name, rep.a2_symbolic, rep.a2_sampled));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.gen_range(1..=6);
        let a = random_lower_triangular(m, &mut rng);
        let diff: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..3.0)).collect();
        let c = c_table(&a, &diff)?;
        let dmat: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { diff[i] } else { 0.0 }).collect())
            .collect();
        let adb = matmul(&matmul(&a, &dmat), &dense_inverse(&a));
        let scale = 1.0 + adb.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..m {
            for k in 0..i {
                worst = worst.max((c[i][k] - adb[i][k]).abs() / scale);
            }
        }
    }
    if worst > 1e-12 {
        bad.push(format!("c table {worst:e}"));
    }
    Ok((
        bad.is_empty(),
        format!("{} systems, c table worst {worst:.1e}, issues {bad:?}", systems.len()),
    ))
}

fn interpolation() -> Outcome {
    let mut cfg = preset_config("interp")?;
    cfg.grid.n = 32;
    cfg.sampling.calibration = 100;
    cfg.sampling.cases = 100;
    cfg.seed = 11;
    let report = run_experiment(&cfg)?;
    let interp = &report.checks[0];
    let count = |check: &str| {
        let rows: Vec<_> = interp.rows.iter().filter(|r| r.check == check).collect();
        (rows.iter().filter(|r| r.pass).count(), rows.len())
    };
    let (ok, total) = count("interpolation");
    let (overlap_ok, _) = count("cover_overlap");
    let (cover_ok, _) = count("cover_uncovered");
    let homogeneity = report
        .checks
        .iter()
        .find(|r| r.name == "interp.homogeneity")
        .expect("homogeneity report");
    let pass = report.passed() && ok == 100 && total == 100 && homogeneity.rows.len() == 2 && homogeneity.passed();
    Ok((
        pass,
        format!(
            "{ok}/{total} pass, overlap {overlap_ok}/{total}, complete covers {cover_ok}/{total}, homogeneity rows {}",
            homogeneity.rows.len()
        ),
    ))
}

fn determinism() -> Outcome {
    let mut configs = vec![preset_config("quad4")?, preset_config("oscdecay")?];
    configs[0].grid.n = 16;
    configs[0].seed = 21;
    configs[1].grid.n = 24;
    configs[1].seed = 21;
    configs[1].sampling.cases = 2;
    configs[1].sampling.calibration = 2;
    configs[1].sampling.pairs = 2;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = 0;
    for cfg in &configs {
        let mut paths = Vec::new();
        for dir in &dirs {
            let report = run_experiment(cfg)?;
            for f in [Format::Json, Format::Csv] {
                paths.push(emit(&report, f, dir.path())?);
            }
        }
        let (a, b) = paths.split_at(2);
        for (x, y) in a.iter().zip(b) {
            let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| regularity_lab::Error::io(p, e));
            if read(x)? != read(y)? {
                return Ok((false, format!("{} differs", x.display())));
            }
            files += 1;
        }
    }
    Ok((true, format!("{files} report files byte-identical across reruns")))
}

const CRITERIA: [Criterion; 11] = [
    Criterion {
        id: 1,
        title: "explicit constants vs high-precision oracle",
        budget: Duration::from_secs(1),
        run: constants_oracle,
    },
    Criterion {
        id: 2,
        title: "heat kernel norm slopes and mass on 96²",
        budget: Duration::from_secs(60),
        run: heat_kernel_norms,
    },
    Criterion {
        id: 3,
        title: "heat kernel first moment slope",
        budget: Duration::from_secs(30),
        run: heat_kernel_moment,
    },
    Criterion {
        id: 4,
        title: "Gaussian lower bound, flat and sine graphs, h and h/2",
        budget: Duration::from_secs(120),
        run: gaussian_lower_bound,
    },
    Criterion {
        id: 5,
        title: "oscillation decay on random rough runs",
        budget: Duration::from_secs(300),
        run: oscillation_decay,
    },
    Criterion {
        id: 6,
        title: "comparison and sandwich orderings",
        budget: Duration::from_secs(120),
        run: comparison_pairs,
    },
    Criterion {
        id: 7,
        title: "SKT positivity, ceiling, ν bounds, residual order",
        budget: Duration::from_secs(180),
        run: skt_pipeline,
    },
    Criterion {
        id: 8,
        title: "quadratic system mass, μ, identity order, ODE",
        budget: Duration::from_secs(120),
        run: quadratic_system,
    },
    Criterion {
        id: 9,
        title: "structural conditions and c table",
        budget: Duration::from_secs(30),
        run: structural_checks,
    },
    Criterion {
        id: 10,
        title: "one-sided interpolation on 32³",
        budget: Duration::from_secs(300),
        run: interpolation,
    },
    Criterion {
        id: 11,
        title: "byte-identical reports",
        budget: Duration::from_secs(120),
        run: determinism,
    },
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let (pass, detail) = match (c.run)() {
            Ok(out) => out,
            Err(e) => (false, format!("error: {e}")),
        };
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let ok = pass && in_time;
        failed += !ok as usize;
        println!(
            "{} {:>2} {}: {detail} [{:.2}s / {}s{}]",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
