use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_drive_cycle, DriveCycleError, DriveCycleModel, DriveCycleResult, DriveCycleTrace, GridPoint, RegimeModifiers};
use crate::dataset::DatasetWriter;
use crate::sampling::factorial_indices;

/// Per-parameter level lists of the six varied parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLevels {
    pub spark_deg: Vec<f64>,
    pub gear_scale: Vec<f64>,
    pub ambient_temp: Vec<f64>,
    pub humidity: Vec<f64>,
    pub valve_timing_deg: Vec<f64>,
    pub compression_ratio: Vec<f64>,
}

impl Default for GridLevels {
    /// Five levels per parameter.
    fn default() -> Self {
        Self {
            spark_deg: vec![-35.0, -30.0, -25.0, -20.0, -15.0],
            gear_scale: vec![0.9, 0.95, 1.0, 1.05, 1.1],
            ambient_temp: vec![268.0, 283.0, 298.0, 313.0, 328.0],
            humidity: vec![0.0, 0.005, 0.01, 0.015, 0.02],
            valve_timing_deg: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            compression_ratio: vec![8.0, 9.0, 10.0, 11.0, 12.0],
        }
    }
}

impl GridLevels {
    /// One level per parameter.
    pub fn single(point: &GridPoint) -> Self {
        let [a, b, c, d, e, f] = point.to_array();
        Self {
            spark_deg: vec![a],
            gear_scale: vec![b],
            ambient_temp: vec![c],
            humidity: vec![d],
            valve_timing_deg: vec![e],
            compression_ratio: vec![f],
        }
    }

    pub fn lists(&self) -> [&Vec<f64>; 6] {
        [
            &self.spark_deg,
            &self.gear_scale,
            &self.ambient_temp,
            &self.humidity,
            &self.valve_timing_deg,
            &self.compression_ratio,
        ]
    }

    pub fn validate(&self) -> Result<(), DriveCycleError> {
        for (name, list) in GridPoint::NAMES.iter().zip(self.lists()) {
            if list.is_empty() {
                return Err(DriveCycleError::InvalidConfig(format!("grid parameter {name} has no levels")));
            }
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.lists().iter().map(|l| l.len()).product()
    }

    /// (min, max) of each parameter.
    pub fn bounds(&self) -> [(f64, f64); 6] {
        self.lists().map(|l| {
            l.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
    }

    /// Every grid point in lexicographic order, last parameter fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let lists = self.lists();
        let counts: Vec<usize> = lists.iter().map(|l| l.len()).collect();
        factorial_indices(&counts)
            .into_iter()
            .map(|idx| GridPoint::from_array(std::array::from_fn(|j| lists[j][idx[j]])))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub traces: Vec<DriveCycleTrace>,
    pub grid: GridLevels,
    pub seed: u64,
    pub output_path: PathBuf,
    #[serde(default)]
    pub modifiers: RegimeModifiers,
}

impl CampaignSpec {
    pub fn case_count(&self) -> usize {
        self.traces.len() * self.grid.point_count()
    }

    /// Cases in output order: traces outermost, then grid points.
    pub fn cases(&self) -> Vec<CaseSpec> {
        let points = self.grid.points();
        let mut cases = Vec::with_capacity(self.case_count());
        for (ti, trace) in self.traces.iter().enumerate() {
            for (gi, point) in points.iter().enumerate() {
                cases.push(CaseSpec {
                    case_id: format!("{}/g{gi:05}", trace.id),
                    trace: ti,
                    point: *point,
                    modifiers: self.modifiers,
                });
            }
        }
        cases
    }
}

/// One independent unit of campaign work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: String,
    /// Index into the trace list.
    pub trace: usize,
    pub point: GridPoint,
    pub modifiers: RegimeModifiers,
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case_id: String,
    pub result: DriveCycleResult,
    /// Wall time of the case, s.
    pub seconds: f64,
}

fn run_case(model: &DriveCycleModel, traces: &[DriveCycleTrace], case: &CaseSpec) -> Result<CaseOutcome, DriveCycleError> {
    let start = Instant::now();
    let trace = traces
        .get(case.trace)
        .ok_or_else(|| DriveCycleError::InvalidConfig(format!("case {} names a missing trace", case.case_id)))?;
    let result = simulate_drive_cycle(model, trace, &case.point, &case.modifiers)?;
    Ok(CaseOutcome {
        case_id: case.case_id.clone(),
        result,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Evaluate `cases` on a pool of `workers` threads and hand outcomes to
/// `sink` strictly in case order, whatever the completion order.
/// Returns the number of cases delivered.
pub fn run_cases<F>(
    model: &DriveCycleModel,
    traces: &[DriveCycleTrace],
    cases: &[CaseSpec],
    workers: usize,
    mut sink: F,
) -> Result<usize, DriveCycleError>
where
    F: FnMut(&CaseOutcome) -> Result<(), DriveCycleError>,
{
    if workers == 0 {
        return Err(DriveCycleError::InvalidConfig("at least one worker is required".into()));
    }
    model.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| DriveCycleError::InvalidConfig(e.to_string()))?;
    let chunk = (workers * 8).max(16);
    let mut delivered = 0;
    for block in cases.chunks(chunk) {
        let outcomes: Vec<Result<CaseOutcome, DriveCycleError>> =
            pool.install(|| block.par_iter().map(|c| run_case(model, traces, c)).collect());
        for outcome in outcomes {
            sink(&outcome?)?;
            delivered += 1;
        }
    }
    Ok(delivered)
}

/// Streams case outcomes into a dataset CSV and a wall-time log.
pub struct CampaignWriter {
    data: DatasetWriter<BufWriter<File>>,
    walltime: csv::Writer<BufWriter<File>>,
    pub cases: usize,
    pub rows: usize,
    pub flagged: usize,
    pub total_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl CampaignWriter {
    pub fn create(data_path: &Path, walltime_path: &Path) -> Result<Self, DriveCycleError> {
        let data = DatasetWriter::new(BufWriter::new(File::create(data_path)?))?;
        let mut walltime = csv::Writer::from_writer(BufWriter::new(File::create(walltime_path)?));
        walltime.write_record(["case_id", "seconds"])?;
        Ok(Self {
            data,
            walltime,
            cases: 0,
            rows: 0,
            flagged: 0,
            total_seconds: 0.0,
            min_seconds: f64::INFINITY,
            max_seconds: 0.0,
        })
    }

    /// Unflagged rows go to the dataset; flagged rows are only counted.
    pub fn record(&mut self, outcome: &CaseOutcome) -> Result<(), DriveCycleError> {
        for (row, out) in outcome.result.valid_rows() {
            self.data.write_row(&outcome.case_id, row.t, &row.inputs, out)?;
            self.rows += 1;
        }
        self.flagged += outcome.result.flagged;
        self.walltime
            .write_record([outcome.case_id.clone(), format!("{:.6}", outcome.seconds)])?;
        self.cases += 1;
        self.total_seconds += outcome.seconds;
        self.min_seconds = self.min_seconds.min(outcome.seconds);
        self.max_seconds = self.max_seconds.max(outcome.seconds);
        Ok(())
    }

    pub fn finish(mut self) -> Result<CampaignSummary, DriveCycleError> {
        let summary = self.summary();
        self.walltime.flush()?;
        self.data.finish()?.flush()?;
        Ok(summary)
    }

    pub fn summary(&self) -> CampaignSummary {
        CampaignSummary {
            cases: self.cases,
            rows: self.rows,
            flagged_rows: self.flagged,
            min_case_seconds: if self.cases == 0 { 0.0 } else { self.min_seconds },
            max_case_seconds: self.max_seconds,
            mean_case_seconds: if self.cases == 0 { 0.0 } else { self.total_seconds / self.cases as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub cases: usize,
    pub rows: usize,
    pub flagged_rows: usize,
    pub min_case_seconds: f64,
    pub max_case_seconds: f64,
    pub mean_case_seconds: f64,
}

#[derive(Serialize)]
struct PartialManifest<'a> {
    completed_cases: usize,
    total_cases: usize,
    rows_written: usize,
    flagged_rows: usize,
    error: &'a str,
}

pub fn walltime_path(output: &Path) -> PathBuf {
    with_suffix(output, ".walltime.csv")
}

pub fn partial_manifest_path(output: &Path) -> PathBuf {
    with_suffix(output, ".partial.json")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Run every trace × grid-point case and write the dataset CSV to
/// `spec.output_path`, plus `<output>.walltime.csv`. On an I/O failure a
/// `<output>.partial.json` manifest records how far the run got.
pub fn run_campaign(spec: &CampaignSpec, model: &DriveCycleModel, workers: usize) -> Result<CampaignSummary, DriveCycleError> {
    spec.grid.validate()?;
    run_case_list(model, &spec.traces, &spec.cases(), workers, &spec.output_path)
}

/// Same output contract as [`run_campaign`] for an explicit case list.
pub fn run_case_list(
    model: &DriveCycleModel,
    traces: &[DriveCycleTrace],
    cases: &[CaseSpec],
    workers: usize,
    output_path: &Path,
) -> Result<CampaignSummary, DriveCycleError> {
    for t in traces {
        t.validate()?;
    }
    let mut writer = CampaignWriter::create(output_path, &walltime_path(output_path))?;
    let run = run_cases(model, traces, cases, workers, |o| writer.record(o));
    let progress = writer.summary();
    match run.and_then(|_| writer.finish()) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            let message = e.to_string();
            let manifest = PartialManifest {
                completed_cases: progress.cases,
                total_cases: cases.len(),
                rows_written: progress.rows,
                flagged_rows: progress.flagged_rows,
                error: &message,
            };
            write_partial(output_path, manifest)
        }
    }
}

fn write_partial(output: &Path, manifest: PartialManifest<'_>) -> Result<CampaignSummary, DriveCycleError> {
    let text = serde_json::to_string_pretty(&manifest).unwrap_or_default();
    let _ = std::fs::write(partial_manifest_path(output), text);
    Err(DriveCycleError::Aborted {
        completed: manifest.completed_cases,
        message: manifest.error.to_string(),
    })
}
