//! Versioned JSON/CSV report rows shared by every module.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;
use crate::grid::GridSpec;

pub const SCHEMA_VERSION: &str = "regularity-lab.report/1";

/// `f64` that survives JSON: non-finite values travel as `"inf"`, `"-inf"`, `"nan"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Num(pub f64);

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num(v)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Num, E> {
                match v {
                    "inf" | "Infinity" => Ok(Num(f64::INFINITY)),
                    "-inf" | "-Infinity" => Ok(Num(f64::NEG_INFINITY)),
                    "nan" | "NaN" => Ok(Num(f64::NAN)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Serde adapter storing a plain `f64` field as [`Num`].
pub mod inf_f64 {
    use super::Num;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Num(*v).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Num::deserialize(d).map(|n| n.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dim: usize,
    pub n: Vec<usize>,
    pub h: f64,
}

impl From<&GridSpec> for GridSummary {
    fn from(g: &GridSpec) -> Self {
        GridSummary {
            dim: g.dim(),
            n: g.n().to_vec(),
            h: g.h(),
        }
    }
}

/// One verified inequality `lhs ≤ rhs` (or a comparison reported in that shape).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub lhs: Num,
    pub rhs: Num,
    pub margin: Num,
    pub params: BTreeMap<String, Num>,
    pub grid: Option<GridSummary>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckRow {
    /// Row that passes when `lhs ≤ rhs`.
    pub fn le(check: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::with_pass(check, lhs, rhs, lhs <= rhs)
    }

    pub fn with_pass(check: impl Into<String>, lhs: f64, rhs: f64, pass: bool) -> Self {
        CheckRow {
            check: check.into(),
            lhs: Num(lhs),
            rhs: Num(rhs),
            margin: Num(rhs - lhs),
            params: BTreeMap::new(),
            grid: None,
            pass,
            notes: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), Num(v));
        self
    }

    pub fn on_grid(mut self, g: &GridSpec) -> Self {
        self.grid = Some(g.into());
        self
    }

    /// Append a note; empty strings are dropped.
    pub fn note(mut self, s: impl Into<String>) -> Self {
        let s = s.into();
        if !s.is_empty() {
            self.notes.push(s);
        }
        self
    }
}

/// Named collection of check rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub rows: Vec<CheckRow>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>) -> Self {
        EstimateReport {
            name: name.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: CheckRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: EstimateReport) {
        self.rows.extend(other.rows);
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// Columns: report, check, lhs, rhs, margin, pass, params.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows_csv(out, std::slice::from_ref(self))
    }
}

pub fn write_rows_csv<W: Write>(out: W, reports: &[EstimateReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["schema", "report", "check", "lhs", "rhs", "margin", "pass", "params"])?;
    for rep in reports {
        for r in &rep.rows {
            let params = r
                .params
                .iter()
                .map(|(k, v)| format!("{k}={}", v.0))
                .collect::<Vec<_>>()
                .join(";");
            wtr.write_record([
                SCHEMA_VERSION,
                &rep.name,
                &r.check,
                &r.lhs.0.to_string(),
                &r.rhs.0.to_string(),
                &r.margin.0.to_string(),
                if r.pass { "true" } else { "false" },
                &params,
            ])?;
        }
    }
    wtr.flush().map_err(|e| crate::error::Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_round_trip() {
        let row = CheckRow::le("x", 1.0, f64::INFINITY).param("p", f64::INFINITY);
        let s = serde_json::to_string(&row).unwrap();
        assert!(s.contains("\"inf\""));
        let back: CheckRow = serde_json::from_str(&s).unwrap();
        assert_eq!(back, row);
    }
}
