mod common;

use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rjca::fusion::{rjca_forward, JcaIterationParams};
use rjca::gradcheck::{numeric_gradient, relative_error};
use rjca::metrics::{evaluate_scores, DcfParams, ScoreSet};
use rjca::objective::{aam_loss, cosine_score, AamHead};
use rjca::pipeline::features::{decode_features, encode_features};
use rjca::{Activation, Tape, Tensor};

use common::{oracle_eer, oracle_min_dcf};

fn matrix(rows: usize, cols: usize, seed: u64, bound: f64) -> Tensor<f64> {
    Tensor::uniform(&[rows, cols], bound, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn score_set() -> impl Strategy<Value = ScoreSet<f64>> {
    (
        prop::collection::vec(-20i32..20, 1..40),
        prop::collection::vec(-20i32..20, 1..40),
    )
        .prop_map(|(t, n)| {
            let t: Vec<f64> = t.into_iter().map(|x| x as f64 / 4.0).collect();
            let n: Vec<f64> = n.into_iter().map(|x| x as f64 / 4.0).collect();
            ScoreSet::from_split(&t, &n).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_columns_sum_to_one(rows in 1usize..6, cols in 1usize..6, seed: u64) {
        let mut tape = Tape::new();
        let x = tape.leaf(matrix(rows, cols, seed, 20.0));
        let s = tape.softmax_columns(x).unwrap();
        let out = tape.value(s);
        for c in 0..cols {
            let total: f64 = out.column_values(c).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn composite_gradient_matches_differences(n in 1usize..5, m in 1usize..5, seed: u64) {
        let a = matrix(n, m, seed, 1.0);
        let b = matrix(m, n, seed.wrapping_add(1), 1.0);
        let forward = |x: &Tensor<f64>| -> rjca::Result<f64> {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let bv = tape.leaf(b.clone());
            let p = tape.matmul(xv, bv)?;
            let t = tape.activation(p, Activation::Tanh)?;
            let s = tape.softmax_columns(t)?;
            let q = tape.mul(s, t)?;
            let out = tape.sum(q)?;
            Ok(tape.value(out).data()[0])
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(a.clone());
        let bv = tape.leaf(b.clone());
        let p = tape.matmul(xv, bv).unwrap();
        let t = tape.activation(p, Activation::Tanh).unwrap();
        let s = tape.softmax_columns(t).unwrap();
        let q = tape.mul(s, t).unwrap();
        let out = tape.sum(q).unwrap();
        let grads = tape.backward(out).unwrap();
        let numeric = numeric_gradient(forward, &a, 1e-5).unwrap();
        let err = relative_error(grads.get(xv).unwrap(), &numeric).unwrap();
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_weights_pass_features_through(
        da in 1usize..6, dv in 1usize..6, l in 1usize..6, t in 1usize..5, seed: u64
    ) {
        let a = matrix(da, l, seed, 10.0);
        let v = matrix(dv, l, seed ^ 0x55, 10.0);
        let params = vec![JcaIterationParams::zeros(da, dv, l); t];
        let out = rjca_forward(&a, &v, &params).unwrap();
        prop_assert_eq!(out.attended_audio, a);
        prop_assert_eq!(out.attended_visual, v);
    }

    #[test]
    fn metrics_match_brute_force(s in score_set()) {
        let r = evaluate_scores(&s, &DcfParams::default()).unwrap();
        prop_assert!((r.eer - oracle_eer(&s)).abs() <= 1e-9);
        prop_assert!((r.min_dcf - oracle_min_dcf(&s, 0.05, 1.0, 1.0)).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.eer));
        prop_assert!((0.0..=1.0).contains(&r.min_dcf));
    }

    #[test]
    fn metrics_ignore_monotone_transforms(s in score_set(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let p = DcfParams::default();
        let r = evaluate_scores(&s, &p).unwrap();
        let t = evaluate_scores(&s.map_scores(|x| a * x + b).unwrap(), &p).unwrap();
        let u = evaluate_scores(&s.map_scores(|x| x.tanh()).unwrap(), &p).unwrap();
        prop_assert_eq!((r.eer, r.min_dcf), (t.eer, t.min_dcf));
        prop_assert_eq!((r.eer, r.min_dcf), (u.eer, u.min_dcf));
    }

    #[test]
    fn min_dcf_bounded_for_any_costs(s in score_set(), p in 0.001f64..0.999, cm in 0.1f64..10.0, cf in 0.1f64..10.0) {
        let params = DcfParams { p_target: p, c_miss: cm, c_fa: cf };
        let r = evaluate_scores(&s, &params).unwrap();
        prop_assert!(r.min_dcf >= 0.0 && r.min_dcf <= 1.0 + 1e-12, "{}", r.min_dcf);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_free(e in 1usize..10, seed: u64, k in 0.01f64..100.0) {
        let x = matrix(e, 1, seed, 1.0).reshape(vec![e]).unwrap();
        let y = matrix(e, 1, seed ^ 1, 1.0).reshape(vec![e]).unwrap();
        prop_assume!(x.norm() > 1e-3 && y.norm() > 1e-3);
        let xy = cosine_score(&x, &y).unwrap();
        prop_assert_eq!(xy, cosine_score(&y, &x).unwrap());
        prop_assert!((xy - cosine_score(&x.map(|v| v * k), &y).unwrap()).abs() < 1e-12);
        prop_assert!(xy.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn aam_loss_grows_with_margin(classes in 2usize..6, e in 2usize..6, seed: u64, label_seed: usize) {
        let w = matrix(classes, e, seed, 1.0);
        let x = matrix(e, 1, seed ^ 7, 1.0).reshape(vec![e]).unwrap();
        let label = label_seed % classes;
        let row = Tensor::vector(w.data()[label * e..(label + 1) * e].to_vec()).unwrap();
        let theta = cosine_score(&x, &row).unwrap().clamp(-1.0, 1.0).acos();
        let max_margin = (std::f64::consts::PI - theta).min(0.5);
        let mut last = f64::NEG_INFINITY;
        for step in 0..=10 {
            let m = max_margin * step as f64 / 10.0;
            let head = AamHead::new(w.clone(), 30.0, m).unwrap();
            let loss = aam_loss(&x, label, &head).unwrap().loss;
            prop_assert!(loss >= last - 1e-12, "m={m}: {loss} < {last}");
            last = loss;
        }
    }

    #[test]
    fn feature_files_round_trip(rows in 1usize..8, cols in 1usize..8, seed: u64) {
        let m = matrix(rows, cols, seed, 100.0).map(|v| v as f32 as f64);
        let bytes = encode_features(&m).unwrap();
        let back = decode_features(&bytes, Path::new("x.avf")).unwrap();
        prop_assert_eq!(back, m);
    }
}
