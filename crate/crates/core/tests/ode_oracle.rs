//! Spatially uniform states reduce every system to its reaction ODE, which an
//! independent adaptive Dormand–Prince integration resolves to ~1e−12.

mod common;

use common::{dopri45, unit_box};
use regularity_lab::grid::Field;
use regularity_lab::rd::{
    general_solve, quadratic_solve, skt_solve, GeneralSystemSpec, RunSpec, SktParams, StructuralOptions,
};

fn fixed_step(t_end: f64, frames: usize, dt: f64) -> RunSpec {
    RunSpec {
        t_end,
        dt: Some(dt),
        frames,
    }
}

#[test]
fn uniform_quadratic_system_matches_ode() {
    let dom = unit_box(2, 8);
    let y0 = [1.0, 0.2, 0.7, 0.4];
    let fields: Vec<Field> = y0.iter().map(|&c| Field::constant(&dom, c)).collect();
    let run = quadratic_solve(
        [0.1, 0.4, 1.0, 2.0],
        [&fields[0], &fields[1], &fields[2], &fields[3]],
        fixed_step(0.5, 10, 2e-4),
    )
    .unwrap();
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
    for (i, traj) in run.u.iter().enumerate() {
        for v in traj.last() {
            assert!((v - exact[i]).abs() < 1e-6, "species {i}: {v} vs {}", exact[i]);
        }
    }
}

#[test]
fn uniform_skt_matches_lotka_volterra_ode() {
    let dom = unit_box(2, 8);
    let p = SktParams::default();
    let y0 = [0.8, 1.3];
    let run = skt_solve(
        &p,
        &Field::constant(&dom, y0[0]),
        &Field::constant(&dom, y0[1]),
        fixed_step(1.0, 10, 2e-4),
    )
    .unwrap();
    let exact = dopri45(
        |y, out| {
            out[0] = y[0] * (p.ru - p.d11 * y[0] - p.d12 * y[1]);
            out[1] = y[1] * (p.rv - p.d21 * y[0] - p.d22 * y[1]);
        },
        &y0,
        1.0,
        1e-12,
        1e-14,
    );
    for v in run.u.last() {
        assert!((v - exact[0]).abs() < 1e-6);
    }
    for v in run.v.last() {
        assert!((v - exact[1]).abs() < 1e-6);
    }
}

#[test]
fn uniform_reversible_network_matches_ode() {
    let dom = unit_box(1, 16);
    let spec = GeneralSystemSpec::uum(&[1, 2], &[0.3, 0.6, 1.0, 1.4]).unwrap();
    let y0 = [0.9, 0.5, 0.2, 0.3];
    let fields: Vec<Field> = y0.iter().map(|&c| Field::constant(&dom, c)).collect();
    let refs: Vec<&Field> = fields.iter().collect();
    let run = general_solve(&spec, &refs, fixed_step(0.5, 10, 2e-4), &StructuralOptions::default()).unwrap();
    let exact = dopri45(|u, out| spec.eval(u, out), &y0, 0.5, 1e-12, 1e-14);
    for (i, traj) in run.u.iter().take(4).enumerate() {
        for v in traj.last() {
            assert!((v - exact[i]).abs() < 1e-6, "species {i}: {v} vs {}", exact[i]);
        }
    }
}

#[test]
fn dopri_reproduces_exponential() {
    let y = dopri45(|y, out| out[0] = -2.0 * y[0], &[1.0], 1.5, 1e-12, 1e-14);
    assert!((y[0] - (-3.0f64).exp()).abs() < 1e-11);
}
