use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridModel;

/// One episode of load and generation set-points at 5-minute resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeChronic {
    pub id: String,
    /// Month analog (1..=12) of the demand profile, when known.
    pub month: Option<u32>,
    /// T rows of per-generator MW.
    pub gen_p: Vec<Vec<f64>>,
    /// T rows of per-load MW.
    pub load_p: Vec<Vec<f64>>,
}

impl EpisodeChronic {
    pub fn horizon(&self) -> usize {
        self.load_p.len()
    }

    pub fn check(&self, grid: &GridModel) -> Result<()> {
        if self.load_p.is_empty() || self.gen_p.len() != self.load_p.len() {
            return Err(Error::Parse(format!("episode {} has no usable rows", self.id)));
        }
        for (n, (g, d)) in self.gen_p.iter().zip(&self.load_p).enumerate() {
            if g.len() != grid.generators().len() || d.len() != grid.loads().len() {
                return Err(Error::DimensionMismatch(format!(
                    "episode {} row {n}: {} gens / {} loads, grid has {} / {}",
                    self.id,
                    g.len(),
                    d.len(),
                    grid.generators().len(),
                    grid.loads().len()
                )));
            }
            if d.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Parse(format!("episode {} row {n}: negative load", self.id)));
            }
        }
        Ok(())
    }
}

fn expected_header(grid: &GridModel) -> Vec<String> {
    std::iter::once("step".to_string())
        .chain((0..grid.loads().len()).map(|i| format!("load_p_{i}")))
        .chain((0..grid.generators().len()).map(|i| format!("prod_p_{i}")))
        .collect()
}

/// Reads a chronic CSV: `step`, then `load_p_<id>` columns, then `prod_p_<id>` columns.
pub fn load_chronics(path: impl AsRef<Path>, grid: &GridModel) -> Result<EpisodeChronic> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{other:?}")),
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = expected_header(grid);
    if header != expected {
        return Err(Error::DimensionMismatch(format!(
            "{}: header {:?} does not match grid columns {:?}",
            path.display(),
            header,
            expected
        )));
    }
    let n_loads = grid.loads().len();
    let mut gen_p = Vec::new();
    let mut load_p = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let values: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {n}: {v:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() + 1 != expected.len() {
            return Err(Error::Parse(format!("row {n}: wrong column count")));
        }
        if values[..n_loads].iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Parse(format!("row {n}: negative load")));
        }
        load_p.push(values[..n_loads].to_vec());
        gen_p.push(values[n_loads..].to_vec());
    }
    let chronic = EpisodeChronic {
        id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        month: None,
        gen_p,
        load_p,
    };
    chronic.check(grid)?;
    Ok(chronic)
}

pub fn write_chronics(path: impl AsRef<Path>, chronic: &EpisodeChronic, grid: &GridModel) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(expected_header(grid)).map_err(to_err)?;
    for (n, (d, g)) in chronic.load_p.iter().zip(&chronic.gen_p).enumerate() {
        let row = std::iter::once(n.to_string())
            .chain(d.iter().chain(g).map(|v| format!("{v}")));
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cases;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn three_rows_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "ep.csv", "step,load_p_0,prod_p_0\n0,1,1\n1,1,1\n2,1,1\n");
        let c = load_chronics(&p, &cases::triangle([1.0; 3])).unwrap();
        assert_eq!(c.horizon(), 3);
        assert_eq!(c.id, "ep");
    }

    #[test]
    fn negative_load_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "ep.csv", "step,load_p_0,prod_p_0\n0,-1,1\n");
        assert!(matches!(load_chronics(&p, &cases::triangle([1.0; 3])), Err(Error::Parse(_))));
    }

    #[test]
    fn header_mismatch_is_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "ep.csv", "step,load_p_7,prod_p_0\n0,1,1\n");
        assert!(matches!(
            load_chronics(&p, &cases::triangle([1.0; 3])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn write_then_read() {
        let grid = cases::triangle([1.0; 3]);
        let c = EpisodeChronic {
            id: "x".into(),
            month: None,
            gen_p: vec![vec![1.25], vec![0.5]],
            load_p: vec![vec![1.0], vec![0.75]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_chronics(&p, &c, &grid).unwrap();
        assert_eq!(load_chronics(&p, &grid).unwrap(), c);
    }
}
