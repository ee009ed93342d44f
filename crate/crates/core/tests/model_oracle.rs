mod support;

use flowbridge::train::loss_on_tape;
use flowbridge::*;
use support::*;

#[test]
fn forward_matches_scalar_loops() {
    let mut r = rng(11);
    for _ in 0..10 {
        let m = random_model(&mut r);
        let batch = random_batch(&m, 6, &mut r);
        let x = Tensor::from_rows(&batch.iter().map(|s| s.x_t.clone()).collect::<Vec<_>>()).unwrap();
        let t: Vec<f32> = batch.iter().map(|s| s.t).collect();
        let labels: Vec<DomainLabel> = batch.iter().map(|s| s.label).collect();
        let out = m.forward(&x, &t, &labels, false).unwrap();
        let p = params_f64(m.params());
        for (i, s) in batch.iter().enumerate() {
            let xr: Vec<f64> = s.x_t.iter().map(|&v| v as f64).collect();
            let want = forward_row(m.spec(), &p, &xr, &time_features_f32(m.spec().time_dim, s.t), s.label);
            for (a, b) in out.row(i).iter().zip(&want) {
                assert!((*a as f64 - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn time_embedding_matches_f64_formula() {
    for t in [0.0f32, 0.001, 0.37, 0.5, 0.999, 1.0] {
        let lib = time_features_f32(64, t);
        let oracle = time_features(64, t as f64);
        for (a, b) in lib.iter().zip(&oracle) {
            // f32 argument rounding at t·1000 bounds the agreement
            assert!((a - b).abs() < 5e-4, "t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(5);
    for _ in 0..5 {
        let m = random_model(&mut r);
        let batch = random_batch(&m, 5, &mut r);
        let (mut tape, vars, l) = loss_on_tape(&m, &batch).unwrap();
        let p = params_f64(m.params());
        let oracle_loss = loss(m.spec(), &p, &batch);
        assert!((tape.value(l).item() as f64 - oracle_loss).abs() < 1e-5 * (1.0 + oracle_loss));
        tape.backward(l).unwrap();
        let fd = fd_gradient(m.spec(), &p, &batch, 1e-6);
        for (v, g) in vars.iter().zip(&fd) {
            let err = max_relative_error(tape.grad(*v).unwrap(), g);
            assert!(err < 1e-3, "relative error {err}");
        }
    }
}

#[test]
fn zero_head_model_is_identity_flow() {
    let m = VectorFieldModel::new(ModelSpec::new(3, vec![16, 16], 2), 9).unwrap();
    let field = ModelField::new(&m, true);
    let x = Tensor::from_rows(&[[0.5f32, -1.0, 2.0], [3.0, 0.0, -0.25]]).unwrap();
    for tau in [0.05f32, 0.3, 0.45, 0.6, 0.95] {
        let cfg = BridgeConfig { tau, ..BridgeConfig::default() };
        let r = flowbridge::bridge::translate(&field, &x, DomainLabel::Domain(0), DomainLabel::Domain(1), &cfg).unwrap();
        assert_eq!(r.x_hat, x);
    }
}
