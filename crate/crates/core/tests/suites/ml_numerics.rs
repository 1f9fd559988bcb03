use enginecal::dataset::{fit_scalers, inverse_transform, transform, Dataset, N_INPUTS, N_OUTPUTS};
use enginecal::evaluation::{mape, pearson_r, score};
use enginecal::rng::SeededRng;
use enginecal::sampling::latin_hypercube;
use enginecal::surrogate::{gradients, init_model, train, FreezeMask, MlpModel, MlpSpec, TrainConfig};
use crate::oracles::mlp::{self, Param};

fn normal(rng: &mut SeededRng) -> f64 {
    // Box-Muller
    let u1 = rng.uniform().max(1e-300);
    let u2 = rng.uniform();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_batch(rng: &mut SeededRng, n: usize) -> (Vec<[f64; N_INPUTS]>, Vec<[f64; N_OUTPUTS]>) {
    let x = (0..n).map(|_| std::array::from_fn(|_| normal(rng))).collect();
    let y = (0..n).map(|_| std::array::from_fn(|_| normal(rng))).collect();
    (x, y)
}

/// Central differences against reverse-mode gradients on one (model, batch)
/// pair. Entries whose ±h perturbations see different rectifier patterns are
/// skipped because the loss has a kink there; the count is returned.
fn check_gradients(model: &MlpModel, x: &[[f64; N_INPUTS]], y: &[[f64; N_OUTPUTS]]) -> (usize, usize, f64) {
    let h = 1e-5;
    let xs: Vec<Vec<f64>> = x.iter().map(|r| r.to_vec()).collect();
    let ys: Vec<Vec<f64>> = y.iter().map(|r| r.to_vec()).collect();
    let (grads, value) = gradients(model, x, y, None).unwrap();
    let (reference, _) = mlp::loss(model, &xs, &ys);
    assert!((value - reference).abs() <= 1e-12 * reference.max(1.0));
    let rows = mlp::cached_activations(model, &xs);
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    for (li, layer) in model.layers.iter().enumerate() {
        let entries = (0..layer.weights.len())
            .map(|w| (Param::Weight(w), grads.layers[li].weights[w]))
            .chain((0..layer.biases.len()).map(|b| (Param::Bias(b), grads.layers[li].biases[b])));
        for (param, analytic) in entries {
            let Some(fd) = mlp::central_difference_cached(model, &rows, &ys, li, param, h) else {
                skipped += 1;
                continue;
            };
            checked += 1;
            if analytic == 0.0 && fd == 0.0 {
                continue;
            }
            worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()));
        }
    }
    (checked, skipped, worst)
}

pub fn gradients_match_central_differences_on_100_cases() {
    let spec = MlpSpec::default();
    let mut rng = SeededRng::new(2024);
    let mut total_checked = 0;
    let mut total_skipped = 0;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let model = init_model(&spec, 1000 + case).unwrap();
        let (x, y) = random_batch(&mut rng, 10);
        let (c, s, w) = check_gradients(&model, &x, &y);
        total_checked += c;
        total_skipped += s;
        worst = worst.max(w);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
    assert!(total_skipped * 100 < total_checked, "{total_skipped} entries straddled a kink");
}

pub fn frozen_layers_receive_zero_gradient() {
    let spec = MlpSpec::default();
    let model = init_model(&spec, 3).unwrap();
    let (x, y) = random_batch(&mut SeededRng::new(4), 10);
    let mask = FreezeMask::freeze_first(spec.n_hidden(), 3);
    let (grads, _) = gradients(&model, &x, &y, Some(&mask)).unwrap();
    for (i, g) in grads.layers.iter().enumerate() {
        let zero = g.weights.iter().chain(&g.biases).all(|v| *v == 0.0);
        assert_eq!(zero, i < 3, "layer {i}");
    }
}

pub fn he_initialization_variance_is_two_over_fan_in() {
    let spec = MlpSpec::default();
    let mut sums = vec![0.0; spec.layer_sizes.len() - 1];
    let mut sq = vec![0.0; sums.len()];
    let mut counts = vec![0usize; sums.len()];
    for seed in 0..1000 {
        let m = init_model(&spec, seed).unwrap();
        for (i, l) in m.layers.iter().enumerate() {
            for w in &l.weights {
                sums[i] += w;
                sq[i] += w * w;
                counts[i] += 1;
            }
        }
    }
    for i in 0..sums.len() {
        let fan_in = spec.layer_sizes[i] as f64;
        let n = counts[i] as f64;
        let var = sq[i] / n - (sums[i] / n).powi(2);
        let expected = 2.0 / fan_in;
        assert!((var / expected - 1.0).abs() < 0.2, "layer {i}: {var} vs {expected}");
    }
}

fn synthetic(n: usize, seed: u64, map: impl Fn(&[f64; N_INPUTS]) -> [f64; N_OUTPUTS]) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let x: Vec<[f64; N_INPUTS]> = (0..n).map(|_| std::array::from_fn(|j| 10.0 * j as f64 + rng.uniform_in(-3.0, 7.0))).collect();
    let y = x.iter().map(&map).collect();
    Dataset::from_rows(x, y).unwrap()
}

pub fn linear_target_is_learned_to_small_scaled_error() {
    let mut rng = SeededRng::new(8);
    let a: Vec<[f64; N_INPUTS]> = (0..N_OUTPUTS).map(|_| std::array::from_fn(|_| rng.uniform_in(-2.0, 2.0))).collect();
    let c: [f64; N_OUTPUTS] = std::array::from_fn(|_| rng.uniform_in(-5.0, 5.0));
    let raw = synthetic(4096, 9, |x| std::array::from_fn(|o| c[o] + (0..N_INPUTS).map(|j| a[o][j] * x[j]).sum::<f64>()));
    let scalers = fit_scalers(&raw).unwrap();
    let scaled = transform(&raw, &scalers).unwrap();
    let model = init_model(&MlpSpec::default(), 5).unwrap().with_scalers(scalers);
    let (trained, history) = train(&model, &scaled, &TrainConfig { epochs: 50, ..TrainConfig::default() }).unwrap();
    assert_eq!(history.len(), 50);
    assert!(history[49] < history[0]);
    let final_mse = trained.loss(&scaled.inputs, &scaled.outputs);
    assert!(final_mse < 1e-3, "scaled MSE {final_mse}");
}

pub fn training_is_deterministic_and_respects_freezing() {
    let raw = synthetic(600, 10, |x| std::array::from_fn(|o| (x[o] * 0.1).sin() + x[o + 5] * 0.01));
    let scalers = fit_scalers(&raw).unwrap();
    let scaled = transform(&raw, &scalers).unwrap();
    let spec = MlpSpec::default();
    let model = init_model(&spec, 11).unwrap().with_scalers(scalers);
    let config = TrainConfig {
        epochs: 5,
        shuffle_seed: 12,
        freeze: Some(FreezeMask::freeze_first(spec.n_hidden(), 3)),
        ..TrainConfig::default()
    };
    let (a, ha) = train(&model, &scaled, &config).unwrap();
    let (b, hb) = train(&model, &scaled, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    for i in 0..3 {
        assert_eq!(a.layers[i], model.layers[i]);
    }
    for i in 3..model.layers.len() {
        assert_ne!(a.layers[i], model.layers[i]);
    }
}

pub fn batched_forward_equals_row_by_row() {
    let model = init_model(&MlpSpec::default(), 13).unwrap();
    let (x, _) = random_batch(&mut SeededRng::new(14), 257);
    let batched = model.forward(&x);
    for (row, out) in x.iter().zip(&batched) {
        assert_eq!(model.forward(std::slice::from_ref(row))[0], *out);
        assert_eq!(model.forward_row(row).as_slice(), out.as_slice());
    }
    let xs: Vec<Vec<f64>> = x.iter().map(|r| r.to_vec()).collect();
    let reference = mlp::forward(&model, &xs);
    for (a, b) in reference.outputs.iter().zip(&batched) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}

pub fn scaler_round_trip_is_identity() {
    let mut rng = SeededRng::new(15);
    for trial in 0..20 {
        let spread = 10f64.powi(trial % 7 - 3);
        let x: Vec<[f64; N_INPUTS]> = (0..200).map(|_| std::array::from_fn(|j| 1e3 * j as f64 + spread * normal(&mut rng))).collect();
        let y: Vec<[f64; N_OUTPUTS]> = (0..200).map(|_| std::array::from_fn(|_| 5e4 + spread * normal(&mut rng))).collect();
        let data = Dataset::from_rows(x, y).unwrap();
        let s = fit_scalers(&data).unwrap();
        let back = inverse_transform(&transform(&data, &s).unwrap(), &s).unwrap();
        for (a, b) in data.inputs.iter().flatten().zip(back.inputs.iter().flatten()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }
        for (a, b) in data.outputs.iter().flatten().zip(back.outputs.iter().flatten()) {
            assert!((a - b).abs() <= 1e-10 * a.abs());
        }
    }
}

pub fn standardized_columns_have_zero_mean_unit_std() {
    let data = synthetic(1000, 16, |x| std::array::from_fn(|o| x[o] * x[o]));
    let s = fit_scalers(&data).unwrap();
    let t = transform(&data, &s).unwrap();
    for j in 0..N_INPUTS {
        let col = t.input_column(j);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
    }
}

pub fn lhs_is_exactly_stratified() {
    for n in [8, 64, 256] {
        for seed in 0..10 {
            let d = 6;
            let design = latin_hypercube(n, d, seed);
            assert_eq!(design.n_points(), n);
            for j in 0..d {
                let mut bins = vec![0usize; n];
                for p in &design.points {
                    let u = p[j];
                    assert!((0.0..1.0).contains(&u));
                    bins[(u * n as f64).floor() as usize] += 1;
                }
                assert!(bins.iter().all(|&c| c == 1), "n={n} seed={seed} dim={j}");
            }
        }
    }
    assert_eq!(latin_hypercube(64, 6, 1), latin_hypercube(64, 6, 1));
    assert_ne!(latin_hypercube(64, 6, 1).points, latin_hypercube(64, 6, 2).points);
}

pub fn metric_formula_cases() {
    assert!((pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((pearson_r(&[1.0, 2.0, 3.0, 4.0], &[-1.0 + 7.0, -2.0 + 7.0, -3.0 + 7.0, -4.0 + 7.0]).unwrap() + 1.0).abs() < 1e-12);
    assert!((pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(mape(&[5.0, 6.0], &[5.0, 6.0]).unwrap(), 0.0);
    assert!((mape(&[100.0], &[101.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 10.0).abs() < 1e-12);

    let observed = vec![[1.0, 2.0, 0.0, 4.0, 5.0], [2.0, 3.0, 3.0, 5.0, 6.0], [3.0, 5.0, 6.0, 7.0, 8.0]];
    let predicted = observed.clone();
    let report = score("m", &observed, &predicted).unwrap();
    assert_eq!(report.outputs[2].excluded_zero, 1);
    assert!(report.outputs.iter().all(|o| o.mape == 0.0 && (o.pearson_r - 1.0).abs() < 1e-12));
}
