//! CSV datasets, vertical partitioning and synthetic data.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Task;

/// Column-major table of features with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
    pub label_name: Option<String>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.columns.first().map(|c| c.len()).or(self.labels.as_ref().map(|l| l.len())).unwrap_or(0)
    }

    pub fn features(&self) -> usize {
        self.columns.len()
    }

    /// Reads a CSV with a header row. With `label` set, that column becomes the labels.
    pub fn load_csv(path: &Path, label: Option<&str>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let label_idx = match label {
            Some(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Input(format!("label column '{name}' not found in {}", path.display())))?,
            ),
            None => None,
        };
        let feature_names: Vec<String> =
            headers.iter().enumerate().filter(|(i, _)| Some(*i) != label_idx).map(|(_, h)| h.clone()).collect();
        let mut columns = vec![Vec::new(); feature_names.len()];
        let mut labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Input(format!("row {} has {} fields, expected {}", line + 2, record.len(), headers.len())));
            }
            let mut c = 0;
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Input(format!("row {} column '{}': '{field}' is not a number", line + 2, headers[i])))?;
                if Some(i) == label_idx {
                    labels.push(v);
                } else {
                    columns[c].push(v);
                    c += 1;
                }
            }
        }
        Ok(Dataset {
            feature_names,
            columns,
            labels: label_idx.map(|_| labels),
            label_name: label.map(str::to_string),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        if self.labels.is_some() {
            header.push(self.label_name.clone().unwrap_or_else(|| "label".into()));
        }
        w.write_record(&header)?;
        for i in 0..self.rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            label_name: self.label_name.clone(),
        }
    }

    /// Vertical split into `n` parties by round-robin column assignment.
    /// Labels go to party 1 only.
    pub fn partition(&self, n: usize) -> Result<Vec<Dataset>> {
        let groups = partition_columns(self.features(), n)?;
        Ok(groups
            .iter()
            .enumerate()
            .map(|(p, cols)| Dataset {
                feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
                columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
                labels: if p == 0 { self.labels.clone() } else { None },
                label_name: if p == 0 { self.label_name.clone() } else { None },
            })
            .collect())
    }
}

/// Column indices per party: feature `j` goes to party `j mod n`.
pub fn partition_columns(features: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 parties, got {n}")));
    }
    if features < n {
        return Err(Error::Config(format!("{features} features cannot cover {n} parties")));
    }
    let mut groups = vec![Vec::new(); n];
    for j in 0..features {
        groups[j % n].push(j);
    }
    Ok(groups)
}

/// Seeded shuffle split; returns sorted train and test row indices.
pub fn train_test_split(rows: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let cut = (rows as f64 * train_fraction).round() as usize;
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub samples: usize,
    pub features: usize,
    pub informative: usize,
    pub task: Task,
    pub noise: f64,
    pub seed: u64,
}

/// Linear model plus noise; classification thresholds the noisy score at 0.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    if spec.samples == 0 || spec.features == 0 {
        return Err(Error::Config("samples and features must be at least 1".into()));
    }
    let informative = spec.informative.min(spec.features).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (0..informative).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let columns: Vec<Vec<f64>> = (0..spec.features).map(|_| (0..spec.samples).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let labels = (0..spec.samples)
        .map(|i| {
            let score: f64 = weights.iter().enumerate().map(|(j, w)| w * columns[j][i]).sum();
            let noise = spec.noise * (rng.gen::<f64>() + rng.gen::<f64>() - 1.0);
            match spec.task {
                Task::Regression => score + noise,
                Task::Classification => ((score + noise) > 0.0) as u8 as f64,
            }
        })
        .collect();
    Ok(Dataset {
        feature_names: (0..spec.features).map(|j| format!("x{j}")).collect(),
        columns,
        labels: Some(labels),
        label_name: Some("label".into()),
    })
}
