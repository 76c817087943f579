//! Write a rough-coefficient run to the binary snapshot format and CSV, then
//! read the snapshot back.
//!
//! `cargo run --release --example snapshot_export [DIR]`

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use regularity_lab::grid::io::{read_snapshot, write_snapshot, write_trajectory_csv};
use regularity_lab::grid::{Domain, GridSpec};
use regularity_lab::rough::{random_rough_case, solve_rough, RandomCaseOptions, RoughRun};

fn create(path: &Path) -> regularity_lab::Result<File> {
    File::create(path).map_err(|e| regularity_lab::Error::io(path, e))
}

fn main() -> regularity_lab::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let dom = Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, 32)?)?;
    let opts = RandomCaseOptions {
        a0: 1.0,
        c0: 2.0,
        t_end: 0.05,
        blocks: 4,
        forcing: Some(1.0),
        monotone_forcing: false,
        noise: 0.0,
    };
    let case = random_rough_case(&dom, &opts, 7)?;
    let sol = solve_rough(
        &case.coeff,
        &case.f,
        &case.w_init,
        RoughRun::new(0.0, opts.t_end).stride(16),
    )?;

    let bin = dir.join("rough-w.snap");
    let csv = dir.join("rough-w.csv");
    write_snapshot(BufWriter::new(create(&bin)?), &sol.w)?;
    write_trajectory_csv(BufWriter::new(create(&csv)?), &sol.w)?;

    let back = read_snapshot(BufReader::new(
        File::open(&bin).map_err(|e| regularity_lab::Error::io(&bin, e))?,
    ))?
    .into_trajectory(dom.clone())?;
    let same = back.frames() == sol.w.frames();
    println!("{} frames of {} nodes, dt {:.3e}", sol.w.len(), dom.len(), sol.w.dt());
    println!("wrote {} and {}", bin.display(), csv.display());
    println!("snapshot round trip exact: {same}");
    Ok(())
}
