//! Oscillation decay on randomized rough-coefficient runs: the quarter
//! cylinder at the bottom face of the unit box against the full one, with
//! and without forcing, plus the comparison and sandwich orderings.

use std::time::Instant;

use regularity_lab::grid::{Domain, GraphGeometry, GridSpec};
use regularity_lab::rough::{
    comparison_pair, explicit_constants, fit_cut_ball_prefactor, oscillation_decay_check, random_rough_case,
    solve_rough, RandomCaseOptions, RoughRun,
};

fn main() -> regularity_lab::Result<()> {
    let runs: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let (a0, c0, p, q, r) = (1.0, 2.0, 4.0, 4.0, 0.5);
    for d in [1, 2] {
        let start = Instant::now();
        let n = if d == 1 { 128 } else { 48 };
        let consts = explicit_constants(d, p, q, a0, c0)?;
        let dom = Domain::neumann_box(GridSpec::cube(d, 0.0, 1.0, n)?)?;
        let mut x0 = vec![0.5; d];
        x0[d - 1] = 0.0;
        let c_star = fit_cut_ball_prefactor(&GraphGeometry::flat(x0.clone(), 1.0), 2 * n, q, 4)?;
        let t_end = consts.beta * r * r;
        let mut worst = [0.0f64; 2];
        let mut passed = 0;
        for seed in 0..2 * runs {
            let forcing = (seed >= runs).then_some(10f64.powf(seed as f64 % 3.0 - 1.0));
            let opts = RandomCaseOptions {
                a0,
                c0,
                t_end,
                blocks: 8,
                forcing,
                monotone_forcing: false,
                noise: if forcing.is_some() { 0.0 } else { 1.0 },
            };
            let case = random_rough_case(&dom, &opts, seed)?;
            let sol = solve_rough(&case.coeff, &case.f, &case.w_init, RoughRun::new(0.0, t_end))?;
            let rep = oscillation_decay_check(&sol.w, &case.f, t_end, &x0, r, &consts, c_star)?;
            let slot = forcing.is_some() as usize;
            worst[slot] = worst[slot].max(rep.lhs / rep.rhs);
            passed += rep.pass as usize;
        }
        println!(
            "d={d} n={n} δ={:.3e} C*={c_star:.4} pass {passed}/{} worst lhs/rhs f=0 {:.4} f≠0 {:.4} ({:.1}s)",
            consts.delta,
            2 * runs,
            worst[0],
            worst[1],
            start.elapsed().as_secs_f64()
        );
        let mut violations = 0;
        for seed in 0..runs {
            let rep = comparison_pair(&dom, a0, c0, t_end, seed)?;
            violations += rep.failures().count();
        }
        println!(
            "d={d} comparison pairs {runs}: violations {violations} ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
