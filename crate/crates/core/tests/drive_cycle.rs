use std::path::Path;

use enginecal::dataset::{read_csv, N_OUTPUTS};
use enginecal::drive_cycle::{
    partial_manifest_path, rpm_from_speed, run_campaign, simulate_drive_cycle, walltime_path, CampaignSpec, DriveCycleError,
    DriveCycleModel, DriveCycleTrace, GridLevels, GridPoint, RegimeModifiers, TraceGenerator, VehicleConfig,
};

const NO: usize = 2;
const TORQUE: usize = 4;

fn point() -> GridPoint {
    GridPoint {
        spark_deg: -25.0,
        gear_scale: 1.0,
        ambient_temp: 298.0,
        humidity: 0.01,
        valve_timing_deg: 20.0,
        compression_ratio: 10.0,
    }
}

fn traces(n: usize, len: usize) -> Vec<DriveCycleTrace> {
    let model = DriveCycleModel::default();
    let generator = TraceGenerator {
        length: len,
        ..TraceGenerator::default()
    };
    (0..n)
        .map(|i| generator.generate(format!("c{i}"), 40 + i as u64, &model.vehicle).unwrap())
        .collect()
}

fn small_grid() -> GridLevels {
    GridLevels {
        spark_deg: vec![-30.0, -20.0],
        valve_timing_deg: vec![0.0, 30.0],
        compression_ratio: vec![9.0, 11.0],
        ..GridLevels::single(&point())
    }
}

#[test]
fn constant_trace_gives_identical_rows() {
    let model = DriveCycleModel::default();
    let trace = DriveCycleTrace::constant("flat", 1500, 12.0, 1.6e-3).unwrap();
    let result = simulate_drive_cycle(&model, &trace, &point(), &RegimeModifiers::default()).unwrap();
    assert_eq!(result.rows.len(), 1500);
    assert_eq!(result.flagged, 0);
    let first = result.rows[0].outputs.unwrap();
    for row in &result.rows {
        assert_eq!(row.outputs.unwrap(), first);
        assert_eq!(row.inputs, result.rows[0].inputs);
    }
    for (j, agg) in result.aggregates.iter().enumerate() {
        assert_eq!(agg.peak, first[j]);
        assert!((agg.average - first[j]).abs() <= 1e-12 * first[j].abs());
    }
}

#[test]
fn zero_fuel_trace_has_no_emissions_or_torque() {
    let model = DriveCycleModel::default();
    let trace = DriveCycleTrace::constant("coast", 200, 9.0, 0.0).unwrap();
    let result = simulate_drive_cycle(&model, &trace, &point(), &RegimeModifiers::default()).unwrap();
    assert_eq!(result.aggregates[NO].cumulative, 0.0);
    assert!(result.aggregates[TORQUE].cumulative.abs() < 1e-6 * result.rows.len() as f64);
}

#[test]
fn cumulative_equals_column_sum() {
    let model = DriveCycleModel::default();
    let trace = &traces(1, 300)[0];
    let result = simulate_drive_cycle(&model, trace, &point(), &RegimeModifiers::default()).unwrap();
    assert_eq!(result.rows.len(), 300);
    for j in 0..N_OUTPUTS {
        let column: Vec<f64> = result.valid_rows().map(|(_, o)| o[j]).collect();
        let sum = column.iter().fold(0.0, |a, v| a + v);
        assert_eq!(result.aggregates[j].cumulative, sum);
        assert_eq!(result.aggregates[j].peak, column.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    assert!(result.aggregates[NO].cumulative > 0.0);
}

#[test]
fn rpm_is_continuous_within_a_gear_and_drops_at_each_upshift() {
    let v = VehicleConfig::default();
    assert_eq!(rpm_from_speed(&v, 0.0), v.idle_rpm);
    for &s in &v.upshift_speeds {
        let below = rpm_from_speed(&v, s * (1.0 - 1e-9));
        let at = rpm_from_speed(&v, s);
        assert!(at < 0.9 * below, "no drop at {s}: {below} -> {at}");
    }
    let mut edges = vec![0.0];
    edges.extend(v.upshift_speeds);
    edges.push(30.0);
    for band in edges.windows(2) {
        let samples: Vec<f64> = (1..200).map(|i| band[0] + (band[1] - band[0]) * i as f64 / 200.0).collect();
        for w in samples.windows(2) {
            let (a, b) = (rpm_from_speed(&v, w[0]), rpm_from_speed(&v, w[1]));
            assert!(b >= a && b - a < 100.0, "{} -> {}: {a} -> {b}", w[0], w[1]);
            if a > v.idle_rpm {
                assert!(b > a);
            }
        }
    }
}

#[test]
fn case_count_matches_traces_times_levels() {
    let spec = CampaignSpec {
        traces: traces(3, 10),
        grid: GridLevels::default(),
        seed: 0,
        output_path: "unused.csv".into(),
        modifiers: RegimeModifiers::default(),
    };
    assert_eq!(spec.case_count(), 3 * 15_625);
    assert_eq!(spec.cases().len(), spec.case_count());
    let single = CampaignSpec {
        traces: traces(1, 10),
        grid: GridLevels::single(&point()),
        ..spec
    };
    assert_eq!(single.case_count(), 1);
}

fn run(dir: &Path, name: &str, workers: usize) -> (Vec<u8>, usize) {
    let trace_list = traces(2, 40);
    let spec = CampaignSpec {
        traces: trace_list,
        grid: small_grid(),
        seed: 3,
        output_path: dir.join(name),
        modifiers: RegimeModifiers::default(),
    };
    let summary = run_campaign(&spec, &DriveCycleModel::default(), workers).unwrap();
    assert_eq!(summary.cases, spec.case_count());
    assert_eq!(summary.rows + summary.flagged_rows, spec.case_count() * 40);
    assert!(walltime_path(&spec.output_path).exists());
    (std::fs::read(&spec.output_path).unwrap(), summary.rows)
}

#[test]
fn campaign_output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (one, rows) = run(dir.path(), "w1.csv", 1);
    let (eight, _) = run(dir.path(), "w8.csv", 8);
    assert_eq!(one, eight);
    let data = read_csv(dir.path().join("w1.csv")).unwrap();
    assert_eq!(data.len(), rows);
    let order = data.trace_order();
    assert_eq!(order.len(), 16);
    assert_eq!(order[0], "c0/g00000");
    assert_eq!(order[15], "c1/g00007");
}

#[cfg(target_os = "linux")]
#[test]
fn write_failure_leaves_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("full.csv");
    std::os::unix::fs::symlink("/dev/full", &output).unwrap();
    let spec = CampaignSpec {
        traces: traces(2, 200),
        grid: small_grid(),
        seed: 0,
        output_path: output.clone(),
        modifiers: RegimeModifiers::default(),
    };
    let err = run_campaign(&spec, &DriveCycleModel::default(), 1).unwrap_err();
    let DriveCycleError::Aborted { completed, .. } = err else { panic!("unexpected error {err:?}") };
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(partial_manifest_path(&output)).unwrap()).unwrap();
    assert_eq!(manifest["total_cases"], 16);
    assert_eq!(manifest["completed_cases"], completed);
    assert!(completed < 16);
}

#[test]
fn invalid_trace_is_rejected() {
    let bad = DriveCycleTrace::constant("neg", 10, -1.0, 1e-3);
    assert!(matches!(bad, Err(DriveCycleError::InvalidTrace(_))));
}
