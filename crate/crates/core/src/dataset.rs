//! The 10-input/5-output regression table, the min-max → standardize scaler
//! pipeline, row selection helpers and CSV persistence.
//!
//! CSV layout: a header row `trace_id,t,<10 inputs>,<5 outputs>` followed by
//! one row per one-second sample. Floats are written in Rust's shortest
//! round-trip representation, so a write/read cycle is bit-exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

pub const N_INPUTS: usize = 10;
pub const N_OUTPUTS: usize = 5;

pub const INPUT_NAMES: [&str; N_INPUTS] = [
    "ambient_temp",
    "humidity",
    "valve_timing",
    "compression_ratio",
    "spark_timing",
    "gear_ratio",
    "fuel_flow",
    "air_fuel_ratio",
    "inlet_pressure",
    "intake_air_mass",
];

pub const OUTPUT_NAMES: [&str; N_OUTPUTS] =
    ["exhaust_temp", "exhaust_pressure", "no_ppm", "co_ppm", "torque"];

pub const ID_COLUMN: &str = "trace_id";
pub const TIME_COLUMN: &str = "t";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("column {0} is constant")]
    ConstantColumn(String),
    #[error("at least {needed} rows required, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_error(line: u64, column: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    /// Case label of each row (drive-cycle trace and grid point).
    pub trace_ids: Vec<String>,
    /// Seconds since the start of the trace.
    pub times: Vec<f64>,
    pub inputs: Vec<[f64; N_INPUTS]>,
    pub outputs: Vec<[f64; N_OUTPUTS]>,
}

impl Dataset {
    pub fn new(
        trace_ids: Vec<String>,
        times: Vec<f64>,
        inputs: Vec<[f64; N_INPUTS]>,
        outputs: Vec<[f64; N_OUTPUTS]>,
    ) -> Result<Self, DatasetError> {
        let n = inputs.len();
        if trace_ids.len() != n || times.len() != n || outputs.len() != n {
            return Err(DatasetError::SchemaMismatch(format!(
                "column lengths differ: {} ids, {} times, {} inputs, {} outputs",
                trace_ids.len(),
                times.len(),
                n,
                outputs.len()
            )));
        }
        let data = Self {
            trace_ids,
            times,
            inputs,
            outputs,
        };
        data.check_finite()?;
        Ok(data)
    }

    /// Rows without labels, for synthetic data.
    pub fn from_rows(inputs: Vec<[f64; N_INPUTS]>, outputs: Vec<[f64; N_OUTPUTS]>) -> Result<Self, DatasetError> {
        let n = inputs.len();
        Self::new(vec![String::new(); n], (0..n).map(|i| i as f64).collect(), inputs, outputs)
    }

    fn check_finite(&self) -> Result<(), DatasetError> {
        for (row, (x, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            if let Some(j) = x.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row,
                    column: INPUT_NAMES[j].to_string(),
                });
            }
            if let Some(j) = y.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row,
                    column: OUTPUT_NAMES[j].to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, trace_id: &str, t: f64, inputs: [f64; N_INPUTS], outputs: [f64; N_OUTPUTS]) {
        self.trace_ids.push(trace_id.to_string());
        self.times.push(t);
        self.inputs.push(inputs);
        self.outputs.push(outputs);
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.trace_ids.extend_from_slice(&other.trace_ids);
        self.times.extend_from_slice(&other.times);
        self.inputs.extend_from_slice(&other.inputs);
        self.outputs.extend_from_slice(&other.outputs);
    }

    pub fn concat(parts: &[&Dataset]) -> Dataset {
        let mut out = Dataset::default();
        for p in parts {
            out.extend(p);
        }
        out
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            trace_ids: indices.iter().map(|&i| self.trace_ids[i].clone()).collect(),
            times: indices.iter().map(|&i| self.times[i]).collect(),
            inputs: indices.iter().map(|&i| self.inputs[i]).collect(),
            outputs: indices.iter().map(|&i| self.outputs[i]).collect(),
        }
    }

    /// Distinct trace ids in order of first appearance.
    pub fn trace_order(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut order = Vec::new();
        for id in &self.trace_ids {
            if !seen.contains_key(id) {
                seen.insert(id.clone(), ());
                order.push(id.clone());
            }
        }
        order
    }

    /// Rows whose trace id is in `ids`.
    pub fn filter_traces(&self, ids: &[String]) -> Dataset {
        let keep: HashMap<&str, ()> = ids.iter().map(|s| (s.as_str(), ())).collect();
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep.contains_key(self.trace_ids[i].as_str()))
            .collect();
        self.select(&idx)
    }

    /// Rows of the first `k` traces (whole-cycle granularity).
    pub fn take_traces(&self, k: usize) -> Dataset {
        let order = self.trace_order();
        let take: Vec<String> = order.into_iter().take(k).collect();
        self.filter_traces(&take)
    }

    /// Random split into `n` rows and the remainder, by a seeded permutation.
    pub fn split_random(&self, n: usize, seed: u64) -> (Dataset, Dataset) {
        let mut perm = SeededRng::new(seed).permutation(self.len());
        let n = n.min(self.len());
        let mut first: Vec<usize> = perm.drain(..n).collect();
        first.sort_unstable();
        perm.sort_unstable();
        (self.select(&first), self.select(&perm))
    }

    pub fn input_column(&self, j: usize) -> Vec<f64> {
        self.inputs.iter().map(|r| r[j]).collect()
    }

    pub fn output_column(&self, j: usize) -> Vec<f64> {
        self.outputs.iter().map(|r| r[j]).collect()
    }
}

/// Per-column min-max stage followed by standardization of the min-max
/// scaled values. The standard deviation is the population one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fitted_on: usize,
}

impl ScalerParams {
    pub fn fit<const W: usize>(names: &[&str; W], rows: &[[f64; W]]) -> Result<Self, DatasetError> {
        if rows.len() < 2 {
            return Err(DatasetError::TooFewRows {
                needed: 2,
                got: rows.len(),
            });
        }
        let n = rows.len() as f64;
        let mut min = vec![f64::INFINITY; W];
        let mut max = vec![f64::NEG_INFINITY; W];
        for r in rows {
            for j in 0..W {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        for j in 0..W {
            if !(max[j] > min[j]) {
                return Err(DatasetError::ConstantColumn(names[j].to_string()));
            }
        }
        let mut mean = vec![0.0; W];
        for r in rows {
            for j in 0..W {
                mean[j] += (r[j] - min[j]) / (max[j] - min[j]);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; W];
        for r in rows {
            for j in 0..W {
                let d = (r[j] - min[j]) / (max[j] - min[j]) - mean[j];
                var[j] += d * d;
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        for j in 0..W {
            if !(std[j] > 0.0) {
                return Err(DatasetError::ConstantColumn(names[j].to_string()));
            }
        }
        Ok(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            min,
            max,
            mean,
            std,
            fitted_on: rows.len(),
        })
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    fn check<const W: usize>(&self, names: &[&str; W]) -> Result<(), DatasetError> {
        if self.names.len() != W || self.names.iter().zip(names.iter()).any(|(a, b)| a != b) {
            return Err(DatasetError::SchemaMismatch(format!(
                "scaler columns {:?} do not match {:?}",
                self.names, names
            )));
        }
        Ok(())
    }

    /// Min-max stage only.
    pub fn min_max_row<const W: usize>(&self, row: &[f64; W]) -> [f64; W] {
        std::array::from_fn(|j| (row[j] - self.min[j]) / (self.max[j] - self.min[j]))
    }

    pub fn transform_row<const W: usize>(&self, row: &[f64; W]) -> [f64; W] {
        std::array::from_fn(|j| {
            let u = (row[j] - self.min[j]) / (self.max[j] - self.min[j]);
            (u - self.mean[j]) / self.std[j]
        })
    }

    pub fn inverse_row<const W: usize>(&self, row: &[f64; W]) -> [f64; W] {
        std::array::from_fn(|j| {
            let u = row[j] * self.std[j] + self.mean[j];
            u * (self.max[j] - self.min[j]) + self.min[j]
        })
    }

    pub fn transform_rows<const W: usize>(
        &self,
        names: &[&str; W],
        rows: &[[f64; W]],
    ) -> Result<Vec<[f64; W]>, DatasetError> {
        self.check(names)?;
        Ok(rows.iter().map(|r| self.transform_row(r)).collect())
    }

    pub fn inverse_rows<const W: usize>(
        &self,
        names: &[&str; W],
        rows: &[[f64; W]],
    ) -> Result<Vec<[f64; W]>, DatasetError> {
        self.check(names)?;
        Ok(rows.iter().map(|r| self.inverse_row(r)).collect())
    }
}

/// Input and output scalers together. Both are fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScalers {
    pub inputs: ScalerParams,
    pub outputs: ScalerParams,
}

pub fn fit_scalers(data: &Dataset) -> Result<DatasetScalers, DatasetError> {
    Ok(DatasetScalers {
        inputs: ScalerParams::fit(&INPUT_NAMES, &data.inputs)?,
        outputs: ScalerParams::fit(&OUTPUT_NAMES, &data.outputs)?,
    })
}

pub fn transform(data: &Dataset, params: &DatasetScalers) -> Result<Dataset, DatasetError> {
    Ok(Dataset {
        trace_ids: data.trace_ids.clone(),
        times: data.times.clone(),
        inputs: params.inputs.transform_rows(&INPUT_NAMES, &data.inputs)?,
        outputs: params.outputs.transform_rows(&OUTPUT_NAMES, &data.outputs)?,
    })
}

pub fn inverse_transform(data: &Dataset, params: &DatasetScalers) -> Result<Dataset, DatasetError> {
    Ok(Dataset {
        trace_ids: data.trace_ids.clone(),
        times: data.times.clone(),
        inputs: params.inputs.inverse_rows(&INPUT_NAMES, &data.inputs)?,
        outputs: params.outputs.inverse_rows(&OUTPUT_NAMES, &data.outputs)?,
    })
}

/// A parsed CSV file: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 1-based file line of each row.
    pub lines: Vec<u64>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::SchemaMismatch(format!("missing column {name}")))
    }
}

pub fn read_table_from<R: Read>(reader: R) -> Result<Table, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(1, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(parse_error(1, 1, "empty file or missing header"));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(line, 1, e.to_string())
        })?;
        lines.push(record.position().map(|p| p.line()).unwrap_or(0));
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(Table { headers, rows, lines })
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table, DatasetError> {
    read_table_from(File::open(path)?)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let table = read_table_from(reader)?;
    let id_col = table.column_index(ID_COLUMN)?;
    let t_col = table.column_index(TIME_COLUMN)?;
    let in_cols: Vec<usize> = INPUT_NAMES
        .iter()
        .map(|n| table.column_index(n))
        .collect::<Result<_, _>>()?;
    let out_cols: Vec<usize> = OUTPUT_NAMES
        .iter()
        .map(|n| table.column_index(n))
        .collect::<Result<_, _>>()?;
    let mut data = Dataset::default();
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let num = |col: usize| -> Result<f64, DatasetError> {
            row[col]
                .parse::<f64>()
                .map_err(|_| parse_error(line, col + 1, format!("cannot parse {:?} as a number", row[col])))
        };
        let mut x = [0.0; N_INPUTS];
        for (j, &c) in in_cols.iter().enumerate() {
            x[j] = num(c)?;
        }
        let mut y = [0.0; N_OUTPUTS];
        for (j, &c) in out_cols.iter().enumerate() {
            y[j] = num(c)?;
        }
        data.push(&row[id_col], num(t_col)?, x, y);
    }
    data.check_finite()?;
    Ok(data)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    read_csv_from(File::open(path)?)
}

pub fn csv_header() -> Vec<&'static str> {
    let mut h = vec![ID_COLUMN, TIME_COLUMN];
    h.extend(INPUT_NAMES);
    h.extend(OUTPUT_NAMES);
    h
}

/// Streaming CSV writer in the dataset schema.
pub struct DatasetWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(writer: W) -> Result<Self, DatasetError> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(csv_header()).map_err(csv_io)?;
        Ok(Self { inner })
    }

    pub fn write_row(
        &mut self,
        trace_id: &str,
        t: f64,
        inputs: &[f64; N_INPUTS],
        outputs: &[f64; N_OUTPUTS],
    ) -> Result<(), DatasetError> {
        let mut rec: Vec<String> = Vec::with_capacity(2 + N_INPUTS + N_OUTPUTS);
        rec.push(trace_id.to_string());
        rec.push(t.to_string());
        rec.extend(inputs.iter().map(|v| v.to_string()));
        rec.extend(outputs.iter().map(|v| v.to_string()));
        self.inner.write_record(&rec).map_err(csv_io)
    }

    pub fn finish(mut self) -> Result<W, DatasetError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| DatasetError::Io(std::io::Error::other(e.to_string())))
    }
}

fn csv_io(e: csv::Error) -> DatasetError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<W, DatasetError> {
    let mut w = DatasetWriter::new(writer)?;
    for i in 0..data.len() {
        w.write_row(&data.trace_ids[i], data.times[i], &data.inputs[i], &data.outputs[i])?;
    }
    w.finish()
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = std::io::BufWriter::new(File::create(path)?);
    write_csv_to(data, file)?;
    Ok(())
}
