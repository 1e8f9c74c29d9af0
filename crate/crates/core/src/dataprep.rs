//! Duration-histogram data reduction and the under-penalized error metric.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::rng;

pub const DEFAULT_THETA: f64 = 0.5;

/// Numeric sample table; the last column is the target duration in seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if headers.is_empty() {
            return Err(CcmError::InvalidSpec("table needs at least a target column".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(CcmError::InvalidSpec(format!(
                    "row {i} has {} columns, header has {}",
                    row.len(),
                    headers.len()
                )));
            }
            let t = row[row.len() - 1];
            if !(t.is_finite() && t >= 0.0) {
                return Err(CcmError::Domain(format!("row {i} has invalid duration {t}")));
            }
        }
        Ok(SampleTable { headers, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[r.len() - 1]).collect()
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers: Vec<String> = csv
            .headers()
            .map_err(|e| CcmError::InvalidSpec(format!("csv header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in csv.records().enumerate() {
            let rec = rec.map_err(|e| CcmError::InvalidSpec(format!("csv row {i}: {e}")))?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| CcmError::InvalidSpec(format!("csv row {i}: {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        SampleTable::new(headers, rows)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        SampleTable::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| CcmError::Io(e.to_string());
        csv.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|x| format!("{x:?}"))).map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Equal-width bin of every value over `[min, max]`, last bin right-closed.
pub fn bin_indices(values: &[f64], n_bins: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    values
        .iter()
        .map(|&x| {
            if !(width > 0.0) {
                0
            } else {
                (((x - lo) / width).floor() as usize).min(n_bins - 1)
            }
        })
        .collect()
}

/// One pass of the reduction loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub bin: usize,
    /// Histogram before the pass.
    pub counts_before: Vec<usize>,
    /// Original indices of the removed rows, ascending.
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reduction {
    pub table: SampleTable,
    /// Original indices of the kept rows, in table order.
    pub kept: Vec<usize>,
    pub log: Vec<Removal>,
}

/// Repeatedly drops a random `ceil(theta * n_max)` rows (capped by the
/// remaining deficit) from the currently largest duration bin until
/// `n_target` rows remain.
pub fn dynamic_data_reduce(
    table: &SampleTable,
    n_bins: usize,
    theta: f64,
    n_target: usize,
    seed: u64,
) -> Result<Reduction> {
    if n_bins == 0 {
        return Err(CcmError::Domain("n_bins must be at least 1".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(CcmError::Domain(format!("theta must lie in (0, 1), got {theta}")));
    }
    if n_target > table.len() {
        return Err(CcmError::Domain(format!(
            "target of {n_target} rows exceeds the {} available",
            table.len()
        )));
    }
    let bins = bin_indices(&table.targets(), n_bins);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (row, &b) in bins.iter().enumerate() {
        members[b].push(row);
    }
    let mut rng = rng::stream(seed, &[0xDA7A]);
    let mut alive = vec![true; table.len()];
    let mut deficit = table.len() - n_target;
    let mut log = Vec::new();

    while deficit > 0 {
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        let n_max = *counts.iter().max().expect("at least one bin");
        let bin = counts.iter().position(|&c| c == n_max).expect("max is present");
        let n = ((theta * n_max as f64).ceil() as usize).min(deficit);
        let mut picked: Vec<usize> = index::sample(&mut rng, n_max, n).into_vec();
        picked.sort_unstable();
        let removed: Vec<usize> = picked.iter().map(|&p| members[bin][p]).collect();
        for &row in &removed {
            alive[row] = false;
        }
        members[bin].retain(|&row| alive[row]);
        deficit -= n;
        log.push(Removal {
            bin,
            counts_before: counts,
            removed,
        });
    }

    let kept: Vec<usize> = (0..table.len()).filter(|&i| alive[i]).collect();
    Ok(Reduction {
        table: SampleTable {
            headers: table.headers.clone(),
            rows: kept.iter().map(|&i| table.rows[i].clone()).collect(),
        },
        kept,
        log,
    })
}

/// Root mean square of errors where over-predictions count fully and
/// under-predictions are scaled by `alpha`.
pub fn under_penalized_rmse(predictions: &[f64], truths: &[f64], alpha: f64) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(CcmError::Domain(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(CcmError::Domain("no samples".into()));
    }
    if !(alpha >= 0.0) {
        return Err(CcmError::Domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, g)| {
            let d = p - g;
            if d >= 0.0 {
                d * d
            } else {
                alpha * d * d
            }
        })
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}
