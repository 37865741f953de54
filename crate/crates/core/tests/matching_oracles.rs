use proptest::prelude::*;
use visaid::features::GridSpec;
use visaid::geometry::{Box3D, BoxSet};
use visaid::matching::{class_label, class_order, decode_class, match_3dumm_joint, match_rumm, rumm_expectation, MatchSample};
use visaid::neural::{Tensor, UmanConfig, UmanInput, UmanModel};
use visaid::rng;

fn sample(centers: &[(f64, f64)], truth: usize, features: Tensor) -> MatchSample {
    MatchSample {
        input: UmanInput {
            features,
            beams: vec![1, 3],
        },
        heatmap: None,
        candidates: BoxSet::new(centers.iter().map(|&(x, y)| Box3D::on_ground(4.5, 1.9, 1.5, x, y, 0.0)).collect()),
        truth,
    }
}

#[test]
fn random_matching_hits_expectation() {
    let sizes: Vec<usize> = (0..10_000).map(|k| 1 + k % 8).collect();
    let mut r = rng::stream(401, &[]);
    let mut hits = 0.0;
    for (k, &n) in sizes.iter().enumerate() {
        let centers: Vec<(f64, f64)> = (0..n).map(|i| (0.0, 6.0 * i as f64)).collect();
        let s = sample(&centers, k % n, Tensor::zeros(vec![1, 1, 1]));
        hits += match_rumm(&s, &mut r).unwrap().correct as u8 as f64;
    }
    let expected = rumm_expectation(&sizes).unwrap() * sizes.len() as f64;
    let sd = sizes.iter().map(|&n| (1.0 / n as f64) * (1.0 - 1.0 / n as f64)).sum::<f64>().sqrt();
    assert!((hits - expected).abs() <= 3.0 * sd, "{hits} hits, expected {expected} ± {sd}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn class_slots_round_trip(centers in prop::collection::vec((-8.0..8.0f64, -40.0..40.0f64), 1..=12)) {
        let order = class_order(&sample(&centers, 0, Tensor::zeros(vec![1, 1, 1])).candidates);
        for truth in 0..centers.len() {
            let s = sample(&centers, truth, Tensor::zeros(vec![1, 1, 1]));
            let label = class_label(&s, 12).unwrap();
            prop_assert_eq!(order[label], truth);
            let mut logits = vec![0.0; 12];
            logits[label] = 5.0;
            let m = decode_class(&logits, &s, 12).unwrap();
            prop_assert!(m.correct);
            prop_assert_eq!(m.predicted, truth);
        }
    }
}

#[test]
fn joint_matching_hands_out_distinct_boxes() {
    let mut r = rng::stream(402, &[]);
    let mut model = UmanModel::heatmap(UmanConfig::desk(2, (4, 6), 5), &mut r).unwrap();
    let grid = GridSpec {
        origin: (-2.0, -3.0),
        cell_length: 2.0,
        cell_width: 2.0,
        nx: 2,
        ny: 3,
    };
    // every user sees the same features, so all peaks land on one cell
    let centers = [(0.0, 0.0), (1.0, 1.0), (-1.0, 2.0), (0.5, -2.0)];
    let samples: Vec<MatchSample> = (0..3)
        .map(|u| sample(&centers, u, Tensor::new(vec![6, 4, 6], vec![0.5; 144]).unwrap()))
        .collect();
    let out = match_3dumm_joint(&mut model, &samples, &grid).unwrap();
    let mut picked: Vec<usize> = out.iter().map(|m| m.predicted).collect();
    assert!(out.windows(2).all(|w| w[0].cell == w[1].cell));
    picked.sort_unstable();
    picked.dedup();
    assert_eq!(picked.len(), 3);
    let too_many: Vec<MatchSample> = (0..5).map(|u| sample(&centers[..4], u % 4, samples[0].input.features.clone())).collect();
    assert!(match_3dumm_joint(&mut model, &too_many, &grid).is_err());
}
