//! Binary snapshots and CSV export.
//!
//! Snapshot layout (little-endian):
//! `b"RLABSNAP"`, `u32` version, `u32` dim, `u64` n per axis, `f64` origin per
//! axis, `f64` h, `f64` t0, `f64` dt, `u64` frame count, then each frame as
//! `f64` values over the full box in grid order with NaN on inactive nodes.

use std::io::{Read, Write};
use std::sync::Arc;

use super::{Domain, Field, GridSpec, Trajectory};
use crate::error::{ensure, Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"RLABSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Contents of a snapshot file, independent of any mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub grid: GridSpec,
    pub t0: f64,
    pub dt: f64,
    pub frames: Vec<Vec<f64>>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

pub fn write_snapshot<W: Write>(mut out: W, w: &Trajectory) -> Result<()> {
    let dom = w.domain();
    let grid = dom.grid();
    let mut buf = Vec::with_capacity(64 + w.len() * grid.node_count() * 8);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for &k in grid.n() {
        buf.extend_from_slice(&(k as u64).to_le_bytes());
    }
    for &o in grid.origin() {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    for v in [grid.h(), w.t0(), w.dt()] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(w.len() as u64).to_le_bytes());
    let mut full = vec![f64::NAN; grid.node_count()];
    for frame in w.frames() {
        full.iter_mut().for_each(|v| *v = f64::NAN);
        for (s, &g) in dom.active_nodes().iter().enumerate() {
            full[g] = frame[s];
        }
        for v in &full {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    ensure!(cur.take(8)? == SNAPSHOT_MAGIC, Parameter, "not a snapshot file");
    let version = cur.u32()?;
    ensure!(
        version == SNAPSHOT_VERSION,
        Parameter,
        "unsupported snapshot version {version}"
    );
    let dim = cur.u32()? as usize;
    ensure!((1..=3).contains(&dim), Parameter, "snapshot dimension {dim}");
    let n: Vec<usize> = (0..dim).map(|_| cur.u64().map(|v| v as usize)).collect::<Result<_>>()?;
    let origin: Vec<f64> = (0..dim).map(|_| cur.f64()).collect::<Result<_>>()?;
    let h = cur.f64()?;
    let t0 = cur.f64()?;
    let dt = cur.f64()?;
    let count = cur.u64()? as usize;
    let grid = GridSpec::new(origin, n, h)?;
    let nodes = grid.node_count();
    ensure!(
        bytes.len() - cur.pos == count * nodes * 8,
        Parameter,
        "snapshot body holds {} bytes, expected {}",
        bytes.len() - cur.pos,
        count * nodes * 8
    );
    let frames = (0..count)
        .map(|_| (0..nodes).map(|_| cur.f64()).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(Snapshot { grid, t0, dt, frames })
}

impl Snapshot {
    /// Restrict the full-box frames to the active nodes of `domain`.
    pub fn into_trajectory(self, domain: Arc<Domain>) -> Result<Trajectory> {
        ensure!(
            domain.grid() == &self.grid,
            Geometry,
            "snapshot grid differs from the domain grid"
        );
        let frames = self
            .frames
            .into_iter()
            .map(|full| domain.active_nodes().iter().map(|&g| full[g]).collect())
            .collect();
        Trajectory::new(domain, self.t0, self.dt, frames)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + k <= self.bytes.len(), Parameter, "snapshot truncated");
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// One row per active node: coordinates then value.
pub fn write_field_csv<W: Write>(out: W, u: &Field) -> Result<()> {
    let dom = u.domain();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = AXES[..dom.dim()].to_vec();
    header.push("value");
    wtr.write_record(&header)?;
    for (s, v) in u.values().iter().enumerate() {
        let mut rec: Vec<String> = dom.point(s).iter().map(|x| x.to_string()).collect();
        rec.push(v.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(io_err)
}

/// One row per frame and active node: time, coordinates, value.
pub fn write_trajectory_csv<W: Write>(out: W, w: &Trajectory) -> Result<()> {
    let dom = w.domain();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend_from_slice(&AXES[..dom.dim()]);
    header.push("value");
    wtr.write_record(&header)?;
    for (k, frame) in w.frames().iter().enumerate() {
        let t = w.time(k).to_string();
        for (s, v) in frame.iter().enumerate() {
            let mut rec = vec![t.clone()];
            rec.extend(dom.point(s).iter().map(|x| x.to_string()));
            rec.push(v.to_string());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::super::{Boundary, NodeKind};
    use super::*;

    #[test]
    fn snapshot_round_trip_on_masked_domain() {
        let g = GridSpec::cube(2, 0.0, 1.0, 6).unwrap();
        let dom = Domain::from_fn(g, Boundary::Neumann, |x| {
            if x[0] + x[1] < 1.4 {
                NodeKind::Active
            } else {
                NodeKind::Exterior(Boundary::Neumann)
            }
        })
        .unwrap();
        let frames = (0..3)
            .map(|k| (0..dom.len()).map(|s| k as f64 * 0.5 + s as f64).collect())
            .collect();
        let w = Trajectory::new(dom.clone(), 0.25, 0.125, frames).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &w).unwrap();
        let snap = read_snapshot(bytes.as_slice()).unwrap();
        assert!(snap.frames[0].iter().any(|v| v.is_nan()));
        let back = snap.into_trajectory(dom).unwrap();
        assert_eq!(back.frames(), w.frames());
        assert_eq!((back.t0(), back.dt()), (0.25, 0.125));
    }

    #[test]
    fn truncated_snapshot_rejected() {
        let dom = Domain::neumann_box(GridSpec::cube(1, 0.0, 1.0, 4).unwrap()).unwrap();
        let w = Trajectory::steady(&Field::constant(&dom, 1.0));
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &w).unwrap();
        bytes.pop();
        assert!(read_snapshot(bytes.as_slice()).is_err());
    }
}
