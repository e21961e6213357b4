use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// Reads a comma-separated file with a header row. Columns listed in
/// `categorical` are one-hot encoded (levels in sorted order, named
/// `column=level`); every other non-target column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, categorical: &[&str]) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;

    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    for c in categorical {
        if !header.iter().any(|h| h == c) {
            return Err(Error::MissingColumn(c.to_string()));
        }
    }

    enum Col {
        Numeric(usize),
        Categorical(usize, Vec<String>),
    }
    let mut cols = Vec::new();
    let mut names = Vec::new();
    for (j, h) in header.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        if categorical.contains(&h.as_str()) {
            let levels: BTreeSet<String> = records.iter().map(|r| r[j].to_string()).collect();
            let levels: Vec<String> = levels.into_iter().collect();
            names.extend(levels.iter().map(|l| format!("{h}={l}")));
            cols.push(Col::Categorical(j, levels));
        } else {
            names.push(h.clone());
            cols.push(Col::Numeric(j));
        }
    }

    let parse = |row: usize, j: usize, cell: &str| -> Result<f64> {
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::NonNumeric {
                column: header[j].clone(),
                row,
                value: cell.to_string(),
            })
    };

    let mut features = Vec::with_capacity(records.len() * names.len());
    let mut targets = Vec::with_capacity(records.len());
    for (row, rec) in records.iter().enumerate() {
        for col in &cols {
            match col {
                Col::Numeric(j) => features.push(parse(row, *j, &rec[*j])?),
                Col::Categorical(j, levels) => {
                    features.extend(levels.iter().map(|l| if l == &rec[*j] { 1.0 } else { 0.0 }))
                }
            }
        }
        targets.push(parse(row, target_idx, &rec[target_idx])?);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, names, features, targets)
}

/// Writes `features..., y` rows preceded by `# ` comment lines.
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset, header: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for line in header {
        writeln!(out, "# {line}").expect("write to vec");
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut cols = data.feature_names.clone();
        cols.push("y".to_string());
        w.write_record(&cols)?;
        for (x, y) in data.rows() {
            w.write_record(x.iter().chain(std::iter::once(&y)).map(|v| format_f64(*v)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`write_dataset_csv`].
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_csv(path, "y", &[])
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Per-column `(x − mean) / sd` fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Fits on `data`. Columns with zero variance are skipped with a warning.
    pub fn fit(data: &Dataset, columns: &[&str]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut s = Standardizer {
            columns: Vec::new(),
            means: Vec::new(),
            sds: Vec::new(),
        };
        let n = data.len() as f64;
        for name in columns {
            let j = data.column_index(name)?;
            let col = data.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 {
                log::warn!("column `{name}` has zero variance; not standardized");
                continue;
            }
            s.columns.push(j);
            s.means.push(mean);
            s.sds.push(var.sqrt());
        }
        Ok(s)
    }

    pub fn apply(&self, data: &mut Dataset) {
        let d = data.dim();
        for (k, &j) in self.columns.iter().enumerate() {
            for row in data.features_mut().chunks_exact_mut(d) {
                row[j] = (row[j] - self.means[k]) / self.sds[k];
            }
        }
    }
}

/// Affine map of the targets onto `[0, 1]` with its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let (min, max) = data.target_range().ok_or(Error::Empty("dataset"))?;
        if max <= min {
            return Err(Error::Config("constant target cannot be scaled".into()));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn scale(&self, y: f64) -> f64 {
        (y - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }

    pub fn apply(&self, data: &mut Dataset) {
        for y in data.targets_mut() {
            *y = self.scale(*y);
        }
    }
}

/// Provenance written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn one_hot_categorical_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "d.csv",
            "age,region,charge\n20,north,1.5\n30,south,2.5\n40,east,3.0\n50,north,1.0\n",
        );
        let d = load_csv(&p, "charge", &["region"]).unwrap();
        assert_eq!(
            d.feature_names,
            vec!["age", "region=east", "region=north", "region=south"]
        );
        for (x, _) in d.rows() {
            assert_eq!(x[1] + x[2] + x[3], 1.0);
        }
        assert_eq!(d.targets(), &[1.5, 2.5, 3.0, 1.0]);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "a,b\n1,x\n2,3\n");
        assert!(matches!(load_csv(&p, "c", &[]), Err(Error::MissingColumn(_))));
        assert!(matches!(load_csv(&p, "b", &[]), Err(Error::NonNumeric { .. })));
        assert!(matches!(load_csv(&p, "a", &["z"]), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn standardize_and_scale() {
        let xs: Vec<f64> = (0..50).flat_map(|i| [i as f64 * 0.7 + 3.0, 1.0]).collect();
        let ys: Vec<f64> = (0..50).map(|i| (i as f64).sin() * 10.0).collect();
        let mut d = Dataset::new("d", vec!["a".into(), "c".into()], xs, ys.clone()).unwrap();
        let s = Standardizer::fit(&d, &["a", "c"]).unwrap();
        assert_eq!(s.columns, vec![0], "constant column skipped");
        s.apply(&mut d);
        let col = d.column(0);
        let mean = col.iter().sum::<f64>() / 50.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
        assert!(mean.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);

        let t = TargetScaler::fit(&d).unwrap();
        t.apply(&mut d);
        let (lo, hi) = d.target_range().unwrap();
        assert!(lo == 0.0 && (hi - 1.0).abs() < 1e-15);
        for (k, &y) in ys.iter().enumerate() {
            assert!((t.unscale(d.target(k)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::scalar("s", vec![0.1, -1.0 / 3.0], vec![2.0f64.sqrt(), 1e-300]).unwrap();
        let p = dir.path().join("s.csv");
        write_dataset_csv(&p, &d, &["config_hash=0".into()]).unwrap();
        let back = read_dataset_csv(&p).unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.targets(), d.targets());
    }
}
