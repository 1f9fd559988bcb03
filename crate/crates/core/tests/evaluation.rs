use enginecal::dataset::{read_table_from, N_OUTPUTS, OUTPUT_NAMES};
use enginecal::evaluation::{emit_report, render_svg, report_rows, score, write_report_csv, MetricReport};

fn reports() -> Vec<MetricReport> {
    let observed: Vec<[f64; N_OUTPUTS]> =
        (1..=50).map(|i| std::array::from_fn(|j| 10.0 * (j + 1) as f64 + i as f64)).collect();
    ["dnn", "lm"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let predicted: Vec<[f64; N_OUTPUTS]> = observed
                .iter()
                .enumerate()
                .map(|(i, r)| r.map(|v| v * (1.0 + 0.01 * (k + 1) as f64 * ((i % 3) as f64 - 1.0))))
                .collect();
            score(name, &observed, &predicted).unwrap()
        })
        .collect()
}

#[test]
fn csv_has_one_row_per_model_output_metric() {
    let r = reports();
    let mut buf = Vec::new();
    write_report_csv(&r, &mut buf).unwrap();
    let table = read_table_from(buf.as_slice()).unwrap();
    assert_eq!(table.headers, ["model", "output", "metric", "value"]);
    assert_eq!(table.rows.len(), 2 * 5 * 2);
}

#[test]
fn csv_round_trips_through_the_table_reader() {
    let r = reports();
    let mut buf = Vec::new();
    write_report_csv(&r, &mut buf).unwrap();
    let table = read_table_from(buf.as_slice()).unwrap();
    for (row, (m, o, k, v)) in table.rows.iter().zip(report_rows(&r)) {
        assert_eq!((&row[0], &row[1], &row[2]), (&m, &o, &k));
        assert_eq!(row[3].parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
    let outputs: Vec<&str> = table.rows.iter().step_by(2).take(5).map(|r| r[1].as_str()).collect();
    assert_eq!(outputs, OUTPUT_NAMES);
}

#[test]
fn svg_has_one_polyline_per_model() {
    for n in 1..=2 {
        let svg = render_svg(&reports()[..n]);
        assert_eq!(svg.matches("<polyline").count(), n);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn emit_report_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, svg) = emit_report(&reports(), dir.path().join("cmp")).unwrap();
    let table = read_table_from(std::fs::File::open(csv).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 20);
    assert_eq!(std::fs::read_to_string(svg).unwrap().matches("<polyline").count(), 2);
}

#[test]
fn zero_observations_are_excluded_and_counted() {
    let observed = vec![[0.0, 1.0, 0.0, 2.0, 3.0], [400.0, 2.0, 5.0, 4.0, 6.0], [500.0, 3.0, 7.0, 5.0, 8.0]];
    let predicted = vec![[1.0, 1.1, 0.3, 2.0, 3.0], [440.0, 2.0, 5.0, 4.0, 6.0], [500.0, 3.0, 7.0, 5.0, 8.0]];
    let r = score("m", &observed, &predicted).unwrap();
    assert_eq!(r.outputs[0].excluded_zero, 1);
    assert!((r.outputs[0].mape - 5.0).abs() < 1e-12);
    assert_eq!(r.outputs[1].excluded_zero, 0);
    assert!((r.outputs[1].mape - 10.0 / 3.0).abs() < 1e-12);
}
