use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::FeatureVector;
use crate::{Error, Result};

/// Labelled rows of named features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub user_ids: Vec<String>,
    pub session_ids: Vec<String>,
    pub fta: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>) -> Self {
        FeatureMatrix {
            names,
            ..Default::default()
        }
    }

    pub fn from_vectors(vectors: Vec<FeatureVector>) -> Self {
        let mut m = FeatureMatrix::new(super::feature_names().to_vec());
        for v in vectors {
            m.push(v.values, v.user_id, v.session_id, v.fta);
        }
        m
    }

    pub fn push(&mut self, row: Vec<f64>, user: String, session: String, fta: bool) {
        assert_eq!(row.len(), self.names.len(), "row width does not match header");
        self.rows.push(row);
        self.user_ids.push(user);
        self.session_ids.push(session);
        self.fta.push(fta);
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            user_ids: idx.iter().map(|&i| self.user_ids[i].clone()).collect(),
            session_ids: idx.iter().map(|&i| self.session_ids[i].clone()).collect(),
            fta: idx.iter().map(|&i| self.fta[i]).collect(),
        }
    }

    /// Rows that passed the quality gate.
    pub fn post_fta(&self) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| !self.fta[i]).collect();
        self.subset(&idx)
    }

    /// Row indices grouped by user, users in sorted order.
    pub fn rows_by_user(&self) -> BTreeMap<String, Vec<usize>> {
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, u) in self.user_ids.iter().enumerate() {
            map.entry(u.clone()).or_default().push(i);
        }
        map
    }

    /// Header is the feature names followed by `user,session,fta`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for n in &self.names {
            write!(w, "{n},")?;
        }
        writeln!(w, "user,session,fta")?;
        for i in 0..self.n_rows() {
            for v in &self.rows[i] {
                write!(w, "{v},")?;
            }
            writeln!(w, "{},{},{}", self.user_ids[i], self.session_ids[i], self.fta[i] as u8)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let path = path.as_ref();
        let f = fs::File::open(path)?;
        Self::parse_csv(BufReader::new(f)).map_err(|e| e.with_path(path))
    }

    pub fn parse_csv<R: BufRead>(reader: R) -> Result<FeatureMatrix> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "missing header"))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[cols.len() - 3..] != ["user", "session", "fta"] {
            return Err(Error::parse(1, "header must end with user,session,fta"));
        }
        let names: Vec<String> = cols[..cols.len() - 3].iter().map(|s| s.to_string()).collect();
        let width = cols.len();
        let mut m = FeatureMatrix::new(names);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::parse(
                    line_no,
                    format!("expected {width} cells, found {}", cells.len()),
                ));
            }
            let k = width - 3;
            let row = cells[..k]
                .iter()
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(line_no, format!("not a finite number: {c:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let fta = match cells[k + 2].trim() {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(Error::parse(line_no, format!("bad fta flag {other:?}"))),
            };
            m.push(row, cells[k].to_string(), cells[k + 1].to_string(), fta);
        }
        Ok(m)
    }
}
