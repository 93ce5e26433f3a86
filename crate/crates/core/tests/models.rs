use migcast_core::data::{training_windows, WindowSpec};
use migcast_core::models::attention::{multi_head_attention, self_attention, AttentionKind, Mask, MhaVars};
use migcast_core::models::layers::Linear;
use migcast_core::models::{train, ForecastModel, ModelConfig, TrainConfig, Variant};
use migcast_core::tensor::{Graph, Tensor};
use migcast_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seasonal_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|t| 50.0 + 0.1 * t as f64 + 8.0 * (t as f64 * std::f64::consts::PI / 6.0).sin() + rng.gen_range(-1.0..1.0))
        .collect()
}

fn linear(g: &mut Graph, w: Tensor, b: Tensor) -> Linear {
    Linear {
        weight: g.constant(w),
        bias: g.constant(b),
    }
}

fn small() -> ModelConfig {
    ModelConfig {
        encoder_layers: 2,
        decoder_layers: 1,
        model_dim: 8,
        heads: 2,
        ffn_dim: 16,
        decomposition_kernel: 13,
        ..ModelConfig::default()
    }
}

#[test]
fn forecast_has_horizon_length_and_checks_context() {
    for v in Variant::ALL {
        let m = ForecastModel::new(v, small(), 2, 1).unwrap();
        let out = m.forecast(&seasonal_series(24, 0)).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|x| x.is_finite()));
        let err = m.forecast(&seasonal_series(23, 0)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
    }
}

#[test]
fn training_reduces_loss() {
    let series = seasonal_series(72, 3);
    let windows = training_windows(&series, WindowSpec::years(1).unwrap(), series.len(), 2);
    let cfg = TrainConfig {
        epochs: 12,
        learning_rate: 3e-3,
        batch_size: 4,
        ..TrainConfig::default()
    };
    for v in Variant::ALL {
        let mut m = ForecastModel::new(v, small(), 1, 7).unwrap();
        let report = train(&mut m, &windows, &cfg, 11).unwrap();
        let first = report.loss_trace[0];
        let last = *report.loss_trace.last().unwrap();
        assert!(last < first, "{v}: {first} -> {last}");
    }
}

#[test]
fn training_is_deterministic() {
    let series = seasonal_series(48, 5);
    let windows = training_windows(&series, WindowSpec::years(1).unwrap(), series.len(), 3);
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    for v in Variant::ALL {
        let mut a = ForecastModel::new(v, small(), 1, 9).unwrap();
        let mut b = a.clone();
        let ra = train(&mut a, &windows, &cfg, 4).unwrap();
        let rb = train(&mut b, &windows, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let series = seasonal_series(48, 5);
    let windows = training_windows(&series, WindowSpec::years(1).unwrap(), series.len(), 1);
    let mut m = ForecastModel::new(Variant::Informer, small(), 1, 2).unwrap();
    let before = m.clone();
    let report = train(
        &mut m,
        &windows,
        &TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        0,
    )
    .unwrap();
    assert!(report.loss_trace.is_empty());
    assert_eq!(m, before);
}

#[test]
fn mismatched_windows_rejected() {
    let series = seasonal_series(60, 1);
    let windows = training_windows(&series, WindowSpec::years(2).unwrap(), series.len(), 1);
    let mut m = ForecastModel::new(Variant::Transformer, small(), 1, 0).unwrap();
    assert!(train(&mut m, &windows, &TrainConfig::default(), 0).is_err());
}

#[test]
fn zeroed_autoformer_head_forecasts_context_mean() {
    let mut m = ForecastModel::new(Variant::Autoformer, small(), 3, 8).unwrap();
    for (name, t) in m.params.iter_mut() {
        if name.starts_with("head.") {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let ctx = seasonal_series(36, 2);
    let mean = ctx.iter().sum::<f64>() / 36.0;
    for y in m.forecast(&ctx).unwrap() {
        assert!((y - mean).abs() < 1e-9, "{y} vs {mean}");
    }
}

#[test]
fn checkpoint_preserves_forecasts() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = seasonal_series(24, 6);
    for v in Variant::ALL {
        let m = ForecastModel::new(v, small(), 2, 3).unwrap();
        let path = dir.path().join(format!("{v}.json"));
        m.save_file(&path).unwrap();
        let back = ForecastModel::load_file(&path).unwrap();
        assert_eq!(m.forecast(&ctx).unwrap(), back.forecast(&ctx).unwrap());
    }
}

#[test]
fn attention_weights_are_row_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for mask in [Mask::None, Mask::Causal] {
        let mut g = Graph::new();
        let q = g.constant(Tensor::uniform(&[7, 4], 2.0, &mut rng));
        let k = g.constant(Tensor::uniform(&[7, 4], 2.0, &mut rng));
        let v = g.constant(Tensor::uniform(&[7, 4], 2.0, &mut rng));
        let a = self_attention(&mut g, q, k, v, mask).unwrap();
        let w = g.value(a.weights);
        for r in 0..w.rows() {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.row(r).iter().all(|x| *x >= 0.0));
        }
    }
}

#[test]
fn head_permutation_is_invariant() {
    let (d, heads, dh) = (6, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = Tensor::uniform(&[5, d], 1.0, &mut rng);
    let ws: Vec<Tensor> = (0..4).map(|_| Tensor::uniform(&[d, d], 0.5, &mut rng)).collect();
    let bs: Vec<Tensor> = (0..4).map(|_| Tensor::uniform(&[1, d], 0.5, &mut rng)).collect();
    // head order 2, 0, 1
    let perm = [2usize, 0, 1];
    let col_of = |c: usize| perm[c / dh] * dh + c % dh;
    let permute_cols = |t: &Tensor| {
        let mut out = t.clone();
        for r in 0..t.rows() {
            for c in 0..d {
                out.data_mut()[r * d + c] = t.at(r, col_of(c));
            }
        }
        out
    };
    let permute_rows = |t: &Tensor| {
        let mut out = t.clone();
        for r in 0..d {
            for c in 0..d {
                out.data_mut()[r * d + c] = t.at(col_of(r), c);
            }
        }
        out
    };
    let run = |w: [Tensor; 4], b: [Tensor; 4]| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let [wq, wk, wv, wo] = w;
        let [bq, bk, bv, bo] = b;
        let p = MhaVars {
            query: linear(&mut g, wq, bq),
            key: linear(&mut g, wk, bk),
            value: linear(&mut g, wv, bv),
            out: linear(&mut g, wo, bo),
        };
        let y = multi_head_attention(&mut g, &p, xv, xv, heads, AttentionKind::Full(Mask::None)).unwrap();
        g.value(y).clone()
    };
    let base = run(
        [ws[0].clone(), ws[1].clone(), ws[2].clone(), ws[3].clone()],
        [bs[0].clone(), bs[1].clone(), bs[2].clone(), bs[3].clone()],
    );
    let permuted = run(
        [permute_cols(&ws[0]), permute_cols(&ws[1]), permute_cols(&ws[2]), permute_rows(&ws[3])],
        [permute_cols(&bs[0]), permute_cols(&bs[1]), permute_cols(&bs[2]), bs[3].clone()],
    );
    assert!(base.max_abs_diff(&permuted) < 1e-12);
}
