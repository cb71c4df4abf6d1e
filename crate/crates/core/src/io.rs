//! File interchange for equilibrium solutions and tabular outputs.
//!
//! A solution is a CSV (`M,u,du,p,D,Y,hI,hS`) plus a JSON sidecar holding
//! the barriers, parameters and diagnostics. Floats are written in shortest
//! round-trip form, so a written solution reads back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::MarketParams;
use crate::solver::{Diagnostics, EquilibriumSolution, SweepRow};

pub const SOLUTION_COLUMNS: [&str; 8] = ["M", "u", "du", "p", "D", "Y", "hI", "hS"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    #[serde(rename = "M_low")]
    pub m_low: f64,
    #[serde(rename = "M_high")]
    pub m_high: f64,
    pub params: MarketParams,
    pub diagnostics: Diagnostics,
}

/// Paths of the CSV and JSON files for a solution stem.
pub fn solution_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}

pub fn write_solution(sol: &EquilibriumSolution, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, json_path) = solution_paths(dir, stem);
    write_columns(
        &csv_path,
        &SOLUTION_COLUMNS,
        &[
            &sol.grid,
            &sol.ratio,
            &sol.slope,
            &sol.price,
            &sol.coverage,
            &sol.investment,
            &sol.gen_insurance,
            &sol.gen_financial,
        ],
    )?;
    let sidecar = Sidecar {
        m_low: sol.m_low,
        m_high: sol.m_high,
        params: sol.params,
        diagnostics: sol.diagnostics.clone(),
    };
    write_json(&json_path, &sidecar)?;
    Ok((csv_path, json_path))
}

pub fn read_solution(csv_path: &Path, json_path: &Path) -> Result<EquilibriumSolution> {
    let sidecar: Sidecar = serde_json::from_reader(std::io::BufReader::new(File::open(json_path)?))?;
    sidecar.params.validate()?;
    let cols = read_columns(csv_path, &SOLUTION_COLUMNS)?;
    let [grid, ratio, slope, price, coverage, investment, gen_insurance, gen_financial]: [Vec<f64>; 8] =
        cols.try_into().expect("one vector per column");
    if grid.len() < 3 {
        return Err(Error::InvalidSolution(format!(
            "{} holds {} rows, need at least 3",
            csv_path.display(),
            grid.len()
        )));
    }
    if grid[0] != sidecar.m_low || grid[grid.len() - 1] != sidecar.m_high {
        return Err(Error::InvalidSolution(format!(
            "grid [{}, {}] does not span the sidecar barriers [{}, {}]",
            grid[0],
            grid[grid.len() - 1],
            sidecar.m_low,
            sidecar.m_high
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSolution(
            "capacity grid is not strictly increasing".into(),
        ));
    }
    Ok(EquilibriumSolution {
        params: sidecar.params,
        m_low: sidecar.m_low,
        m_high: sidecar.m_high,
        grid,
        ratio,
        slope,
        price,
        coverage,
        investment,
        gen_insurance,
        gen_financial,
        diagnostics: sidecar.diagnostics,
    })
}

/// Writes equal-length columns under a header row.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    assert_eq!(header.len(), columns.len());
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidConfig(format!(
            "columns written to {} differ in length",
            path.display()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    // `{:?}` is the shortest representation that parses back to the same bits.
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| format!("{:?}", c[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep rows as `value,M_low,M_high,dM,status`; unsolved rows leave the
/// barrier fields empty.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["value", "M_low", "M_high", "dM", "status"])?;
    for r in rows {
        w.write_record([
            format!("{:?}", r.value),
            opt(r.m_low),
            opt(r.m_high),
            opt(r.range),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the named columns, in order, from a headed CSV.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::InvalidSolution(format!("{} has no `{n}` column", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (col, &j) in cols.iter_mut().zip(&idx) {
            let field = rec.get(j).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidSolution(format!(
                    "{} row {}: `{field}` is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
            col.push(v);
        }
    }
    Ok(cols)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// JSON encoding for floats that may be infinite or NaN.
pub(crate) mod lossless_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("unexpected float tag `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_rows_quote_statuses_and_blank_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = [
            SweepRow {
                value: 0.1,
                m_low: Some(0.5),
                m_high: Some(2.0),
                range: Some(1.5),
                status: "solved".into(),
            },
            SweepRow {
                value: -0.2,
                m_low: None,
                m_high: None,
                range: None,
                status: "NoEquilibrium(a, b)".into(),
            },
        ];
        write_sweep(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "value,M_low,M_high,dM,status\n0.1,0.5,2.0,1.5,solved\n-0.2,,,,\"NoEquilibrium(a, b)\"\n"
        );
    }
}
