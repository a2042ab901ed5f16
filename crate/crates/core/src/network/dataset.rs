use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::McParams;
use crate::metrics::csv_error;

/// One training example: `(⟨S⟩, ⟨S'⟩, ⟨S S'⟩)` at the reference edge and `|b|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub input: [f64; 3],
    pub label: f64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    a_s: f64,
    a_sp: f64,
    a_corr: f64,
    label: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub k: Option<usize>,
    pub b_max: f64,
    pub reference_edge: usize,
    /// Sampler settings; `None` for exactly evaluated rows.
    pub mc: Option<McParams>,
    pub seed: u64,
    pub n_rows: usize,
}

impl DatasetMeta {
    pub fn synthetic(b_max: f64) -> Self {
        DatasetMeta {
            k: None,
            b_max,
            reference_edge: 0,
            mc: None,
            seed: 0,
            n_rows: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Checks inputs lie in [-1, 1] and labels in [0, b_max].
    pub fn validate(&self) -> Result<()> {
        for (j, r) in self.rows.iter().enumerate() {
            if r.input.iter().any(|x| !(-1.0..=1.0).contains(x)) {
                return Err(Error::Format(format!("row {j}: input {:?} outside [-1, 1]", r.input)));
            }
            if !(0.0..=self.meta.b_max).contains(&r.label) {
                return Err(Error::Format(format!(
                    "row {j}: label {} outside [0, {}]",
                    r.label, self.meta.b_max
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            let [a_s, a_sp, a_corr] = r.input;
            out.serialize(CsvRow { a_s, a_sp, a_corr, label: r.label })
                .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: DatasetMeta) -> Result<Self> {
        let rows = csv::Reader::from_reader(r)
            .deserialize::<CsvRow>()
            .map(|row| {
                let c = row.map_err(csv_error)?;
                Ok(Row { input: [c.a_s, c.a_sp, c.a_corr], label: c.label })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != meta.n_rows {
            return Err(Error::Format(format!(
                "sidecar promises {} rows, file has {}",
                meta.n_rows,
                rows.len()
            )));
        }
        let d = Dataset { rows, meta };
        d.validate()?;
        Ok(d)
    }

    /// Sidecar path holding the provenance JSON for a dataset CSV.
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes the CSV and its JSON sidecar.
    pub fn save(&self, csv: &Path) -> Result<()> {
        let mut meta = self.meta.clone();
        meta.n_rows = self.rows.len();
        let mut w = BufWriter::new(File::create(csv)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        let side = BufWriter::new(File::create(Self::sidecar_path(csv))?);
        serde_json::to_writer_pretty(side, &meta)?;
        Ok(())
    }

    pub fn load(csv: &Path) -> Result<Self> {
        let meta: DatasetMeta =
            serde_json::from_reader(BufReader::new(File::open(Self::sidecar_path(csv))?))?;
        Self::read_csv(BufReader::new(File::open(csv)?), meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset {
            rows: vec![
                Row { input: [1.0, 1.0, 1.0], label: 0.0 },
                Row { input: [0.61, 0.72, 0.43], label: 0.83 },
            ],
            meta: DatasetMeta { k: Some(3), n_rows: 2, ..DatasetMeta::synthetic(1.7) },
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let d = small();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("a_s,a_sp,a_corr,label\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice(), d.meta.clone()).unwrap(), d);
    }

    #[test]
    fn files_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        small().save(&path).unwrap();
        assert!(dir.path().join("train.json").exists());
        assert_eq!(Dataset::load(&path).unwrap(), small());
    }

    #[test]
    fn rejects_out_of_range_rows() {
        let mut d = small();
        d.rows[1].label = 2.0;
        assert!(d.validate().is_err());
        d.rows[1].label = 0.5;
        d.rows[1].input[0] = 1.2;
        assert!(d.validate().is_err());
    }
}
