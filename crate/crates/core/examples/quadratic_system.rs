//! Quadratic four-species system: mass balance, `μ` bounds and the `w`
//! identities under grid refinement.

use std::f64::consts::PI;

use regularity_lab::grid::{Domain, Field, GridSpec};
use regularity_lab::rd::{observed_orders, quadratic_solve, RunSpec};

fn main() -> regularity_lab::Result<()> {
    let d = [0.1, 0.4, 1.0, 2.0];
    let mut newu = Vec::new();
    let mut newuu = Vec::new();
    for n in [16, 32, 64] {
        let dom = Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, n)?)?;
        let u1 = Field::from_fn(&dom, |x| 1.0 + 0.5 * (PI * x[0]).cos())?;
        let u2 = Field::from_fn(&dom, |x| 0.5 + 0.4 * (PI * x[1]).cos())?;
        let u3 = Field::from_fn(&dom, |x| 0.8 + 0.3 * (2.0 * PI * x[0]).cos() * (PI * x[1]).cos())?;
        let u4 = Field::from_fn(&dom, |x| 0.3 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).cos())?;
        let run = quadratic_solve(d, [&u1, &u2, &u3, &u4], RunSpec::new(0.5, 2 * n))?;
        let diag = run.diagnostics()?;
        println!(
            "n={n:3} steps={} relative mass drift={:.2e} μ∈[{:.6},{:.6}] Δw residual={:.4e} w-evolution residual={:.4e}",
            run.steps,
            diag.mass_drift / diag.mass[0],
            diag.mu_range[0],
            diag.mu_range[1],
            diag.newu_max,
            diag.newuu_max
        );
        newu.push(diag.newu_max);
        newuu.push(diag.newuu_max);
    }
    println!("Δw identity orders {:?}", observed_orders(&newu));
    println!("w evolution orders {:?}", observed_orders(&newuu));
    Ok(())
}
