//! Structural conditions of the bundled reaction networks and a short run of
//! each through the triangular transform.
//!
//! `cargo run --release --example reaction_structure`

use std::f64::consts::PI;

use regularity_lab::grid::{Domain, Field, GridSpec};
use regularity_lab::rd::{c_table, general_solve, structural_report, GeneralSystemSpec, RunSpec, StructuralOptions};

fn main() -> regularity_lab::Result<()> {
    let systems = [
        GeneralSystemSpec::quad4([0.1, 0.4, 1.0, 2.0]),
        GeneralSystemSpec::uum(&[1, 2], &[0.3, 0.6, 1.0, 1.4])?,
        GeneralSystemSpec::s1_2s2([0.5, 1.0, 2.0]),
        GeneralSystemSpec::p_q_2s3(1, 2, [0.5, 1.0, 2.0])?,
    ];
    let opts = StructuralOptions::default();
    let dom = Domain::neumann_box(GridSpec::cube(1, 0.0, 1.0, 32)?)?;
    for spec in &systems {
        let rep = structural_report(spec, &opts)?;
        println!(
            "{:<10} A1 worst {:+.2e}  A2 symbolic {:.1e} sampled {:+.2e}  K {:.3}  growth {:.2?}  {}",
            spec.name,
            rep.a1_worst,
            rep.a2_symbolic,
            rep.a2_sampled,
            rep.k(),
            rep.a3_growth,
            if rep.passed() { "ok" } else { "FAILED" }
        );
        let c = c_table(&spec.a, &spec.diff)?;
        println!("           c table {c:.3?}");
        let init: Vec<Field> = (0..spec.m())
            .map(|i| Field::from_fn(&dom, |x| 0.6 + 0.3 * ((i + 1) as f64 * PI * x[0]).cos()))
            .collect::<regularity_lab::Result<_>>()?;
        let refs: Vec<&Field> = init.iter().collect();
        let run = general_solve(spec, &refs, RunSpec::new(0.2, 64), &opts)?;
        println!(
            "           run: {} steps, companion {}, transform residual {:.2e}, round trip {:.1e}",
            run.steps, run.companion, run.uifi5_max, run.roundtrip
        );
    }
    Ok(())
}
