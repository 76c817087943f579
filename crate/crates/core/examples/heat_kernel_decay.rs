//! Decay rates of the discrete Neumann heat kernel and the Gaussian lower bound
//! near a flat and a curved boundary piece.
//!
//! `cargo run --release --example heat_kernel_decay`

use regularity_lab::grid::{Domain, GraphGeometry, GridSpec};
use regularity_lab::heat_kernel::{
    gaussian_lower_bound_check, kernel_evolve, kernel_moment, kernel_norm_report, LowerBoundOptions,
};

fn main() -> regularity_lab::Result<()> {
    let dom = Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, 96)?)?;
    let src = dom.nearest_slot(&[0.5, 0.5]);
    let kernel = kernel_evolve(&dom, src, 0.1, None)?;
    let report = kernel_norm_report(&kernel, &[1.0, 2.0, f64::INFINITY], 0.1)?;
    for row in &report.rows {
        println!(
            "p = {:>4}: slope {:+.4} (target {:+.2}), C ≈ {:.4}, regime [{:.2e}, {:.2e}]",
            row.p.0, row.slope, row.target_slope, row.fitted_constant, row.regime[0], row.regime[1]
        );
    }
    let worst_mass = (0..kernel.len())
        .map(|k| (kernel.mass(k) - 1.0).abs())
        .fold(0.0, f64::max);
    println!("max |mass - 1| = {worst_mass:.2e}");

    let moment = kernel_moment(&kernel)?;
    println!("first moment grows like t^{:.4}", moment.slope);

    for geom in [
        GraphGeometry::flat(vec![0.0, 0.0], 1.0),
        GraphGeometry::sine(vec![0.0, 0.0], 1.0, 0.03, 1.5),
    ] {
        let rep = gaussian_lower_bound_check(&geom, &LowerBoundOptions::default())?;
        for r in &rep.rows {
            println!(
                "{:<22} n = {:>3}: max(Ψ-Γ)+ = {:.3e}, excess over slack = {:+.3e} at (t, |x-y|) = ({:.3e}, {:.3})",
                r.label, r.n, r.violation, r.excess, r.worst[0], r.worst[1]
            );
        }
        println!("  shrinking under refinement: {}, pass: {}", rep.shrinking, rep.pass);
    }
    Ok(())
}
