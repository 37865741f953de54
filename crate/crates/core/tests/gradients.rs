//! Finite-difference checks of every backward pass.

mod common;

use common::gradients as g;

#[test]
fn dense() {
    g::dense().unwrap();
}

#[test]
fn conv2d() {
    g::conv2d().unwrap();
}

#[test]
fn pooling_and_activations() {
    g::pooling_and_activations().unwrap();
}

#[test]
fn embedding_and_gru() {
    g::embedding_and_gru().unwrap();
}

#[test]
fn residual_with_channel_change() {
    g::residual_with_channel_change().unwrap();
}

#[test]
fn cell_bias() {
    g::cell_bias().unwrap();
}

#[test]
fn losses() {
    g::losses().unwrap();
}

#[test]
fn uman_end_to_end() {
    g::uman_end_to_end().unwrap();
}

#[test]
fn vran_end_to_end() {
    g::vran_end_to_end().unwrap();
}
