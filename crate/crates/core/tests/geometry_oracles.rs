mod common;

use common::{geometry as g, heatmap as h};

#[test]
fn iou_matches_sampling() {
    g::iou_monte_carlo(200).unwrap();
}

#[test]
fn frames_round_trip() {
    g::frame_round_trip(1000).unwrap();
}

#[test]
fn elimination_is_idempotent_and_separates() {
    g::elimination_invariants(500).unwrap();
}

#[test]
fn heatmap_peak_and_window() {
    h::keypoint_and_window(50).unwrap();
}

#[test]
fn radius_keeps_corner_overlap() {
    h::corner_displacement(100, 0.3).unwrap();
}
