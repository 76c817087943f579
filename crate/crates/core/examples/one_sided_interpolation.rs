//! One-sided interpolation on the unit cube: calibrate the constant on one
//! half of random convex cases, then check the other half against it.

use std::time::Instant;

use regularity_lab::grid::{Domain, GridSpec};
use regularity_lab::interp::{
    calibrate_constant, interpolation_check, interpolation_measure, random_case, InterpOptions,
};

fn main() -> regularity_lab::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let cases: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let dom = Domain::neumann_box(GridSpec::cube(3, 0.0, 1.0, n)?)?;
    let opts = InterpOptions::usage_point(3, 0.3);
    let start = Instant::now();
    let mut calib = Vec::new();
    for id in 0..cases {
        let (u, w) = random_case(&dom, id)?;
        calib.push(interpolation_measure(&u, &w, &opts, id)?);
    }
    let constant = calibrate_constant(&calib, 2.0)?;
    println!(
        "calibration: {} cases, constant {constant:.4} ({:.1}s)",
        calib.len(),
        start.elapsed().as_secs_f64()
    );

    let mut passed = 0;
    for id in cases..2 * cases {
        let (u, w) = random_case(&dom, id)?;
        let case = interpolation_measure(&u, &w, &opts, id)?;
        let rep = interpolation_check(&case, constant, &opts);
        if rep.passed() {
            passed += 1;
        }
        println!(
            "case {id:3}: ratio {:.4} balls {:4} capped {:4} min R {:.3} overlap {:2} ball ratio {:.3}",
            case.ratio, case.balls, case.capped_balls, case.min_radius, case.max_overlap, case.max_ball_ratio
        );
    }
    println!("test: {passed}/{cases} pass ({:.1}s)", start.elapsed().as_secs_f64());
    Ok(())
}
