use proptest::prelude::*;
use rand::Rng as _;
use visaid::geometry::{ccs_to_gcs, eliminate, gcs_to_ccs, iou3d, wrap_angle, Box3D, BoxSet, CameraPose, Frame};
use visaid::rng::{self, Rng};

use super::{ensure, property, Check};

/// Monte Carlo IoU of two ground boxes, sampling their joint bounding volume.
fn sampled_iou(a: &Box3D, b: &Box3D, r: &mut Rng, n: usize) -> f64 {
    let span = |b: &Box3D| {
        [
            (b.center[0] - b.width / 2.0, b.center[0] + b.width / 2.0),
            (b.center[1] - b.length / 2.0, b.center[1] + b.length / 2.0),
            (0.0, b.height),
        ]
    };
    let (sa, sb) = (span(a), span(b));
    let lo: Vec<f64> = (0..3).map(|i| sa[i].0.min(sb[i].0)).collect();
    let hi: Vec<f64> = (0..3).map(|i| sa[i].1.max(sb[i].1)).collect();
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..n {
        let p: Vec<f64> = (0..3).map(|i| r.random_range(lo[i]..hi[i])).collect();
        let inside = |s: &[(f64, f64); 3]| (0..3).all(|i| p[i] >= s[i].0 && p[i] <= s[i].1);
        let (ia, ib) = (inside(&sa), inside(&sb));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    both as f64 / either as f64
}

fn random_box(r: &mut Rng, spread: f64) -> Box3D {
    Box3D::on_ground(
        r.random_range(3.0..6.0),
        r.random_range(1.6..2.6),
        r.random_range(1.2..3.5),
        r.random_range(-spread..spread),
        r.random_range(-spread..spread),
        if r.random_bool(0.5) { 0.0 } else { std::f64::consts::PI },
    )
}

pub fn iou_monte_carlo(pairs: usize) -> Check {
    let mut r = rng::stream(101, &[]);
    for k in 0..pairs {
        let a = random_box(&mut r, 0.5);
        let b = random_box(&mut r, 3.0);
        let exact = iou3d(&a, &b);
        let sampled = sampled_iou(&a, &b, &mut r, 200_000);
        ensure((exact - sampled).abs() < 1e-2, || {
            format!("pair {k}: iou {exact} but sampling gives {sampled}")
        })?;
    }
    Ok(())
}

pub fn frame_round_trip(cases: usize) -> Check {
    let mut r = rng::stream(102, &[]);
    for k in 0..cases {
        let pose = CameraPose {
            position: [r.random_range(-20.0..20.0), r.random_range(-60.0..60.0), r.random_range(2.0..12.0)],
            elevation: r.random_range(-1.4..1.4),
            azimuth: r.random_range(-3.1..3.1),
            fov: 1.5,
            max_range: 100.0,
        };
        let local = Box3D::new(
            r.random_range(3.0..6.0),
            r.random_range(1.6..2.6),
            r.random_range(1.2..3.5),
            [r.random_range(-30.0..30.0), r.random_range(0.0..60.0), r.random_range(-10.0..10.0)],
            r.random_range(-3.1..3.1),
            Frame::Camera(1),
        )
        .map_err(|e| e.to_string())?;
        let back = gcs_to_ccs(&ccs_to_gcs(&local, &pose), &pose, 1);
        let err = (0..3)
            .map(|i| (back.center[i] - local.center[i]).abs())
            .fold(wrap_angle(back.azimuth - local.azimuth).abs(), f64::max);
        ensure(err < 1e-9 && back.frame == local.frame, || {
            format!("case {k}: round trip error {err:e}")
        })?;
    }
    Ok(())
}

fn box_set() -> impl Strategy<Value = (Vec<Box3D>, f64)> {
    // boxes crowd a short stretch of road so that many sets need merging
    let one = (3.0..6.0f64, 1.6..2.6f64, 1.2..3.5f64, -4.0..4.0f64, -8.0..8.0f64, any::<bool>()).prop_map(
        |(l, w, h, x, y, back)| Box3D::on_ground(l, w, h, x, y, if back { std::f64::consts::PI } else { 0.0 }),
    );
    (prop::collection::vec(one, 0..12), 0.05..0.9f64)
}

pub fn elimination_invariants(cases: u32) -> Check {
    property(cases, box_set(), |(boxes, gamma)| {
        let once = eliminate(&BoxSet::new(boxes.clone()), gamma).unwrap();
        prop_assert!(once.len() <= boxes.len());
        prop_assert_eq!(once.is_empty(), boxes.is_empty());
        for i in 0..once.len() {
            for j in i + 1..once.len() {
                let v = iou3d(&once.boxes[i], &once.boxes[j]);
                prop_assert!(v <= gamma, "boxes {} and {} keep iou {} > {}", i, j, v, gamma);
            }
        }
        let twice = eliminate(&once, gamma).unwrap();
        prop_assert_eq!(twice, once);
        Ok(())
    })
}
