//! Training objectives. Each returns the loss and its gradient with respect
//! to the prediction.

use crate::error::{Error, Result};

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logarithms.
pub const EPS: f64 = 1e-7;

fn clamp(p: f64) -> (f64, bool) {
    if p < EPS {
        (EPS, true)
    } else if p > 1.0 - EPS {
        (1.0 - EPS, true)
    } else {
        (p, false)
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(b.len(), a.len()));
    }
    Ok(())
}

fn is_keypoint(f: f64) -> bool {
    f >= 1.0 - 1e-12
}

/// Penalty-reduced focal loss between a predicted heatmap and its target.
/// Cells with target 1 are keypoints; elsewhere the penalty shrinks by
/// `(1 - target)^eta`.
pub fn focal_loss(pred: &[f64], target: &[f64], beta: f64, eta: f64) -> Result<(f64, Vec<f64>)> {
    check_len(pred, target)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (k, (&raw, &f)) in pred.iter().zip(target).enumerate() {
        let (p, clamped) = clamp(raw);
        let (term, d) = if is_keypoint(f) {
            let a = (1.0 - p).powf(beta);
            (a * p.ln(), -beta * (1.0 - p).powf(beta - 1.0) * p.ln() + a / p)
        } else {
            let w = (1.0 - f).powf(eta);
            let a = p.powf(beta);
            let lg = (1.0 - p).ln();
            (w * a * lg, w * (beta * p.powf(beta - 1.0) * lg - a / (1.0 - p)))
        };
        loss -= term;
        if !clamped {
            grad[k] = -d;
        }
    }
    Ok((loss, grad))
}

fn mask_count(mask: &[bool]) -> Result<usize> {
    match mask.iter().filter(|m| **m).count() {
        0 => Err(Error::Empty("user cell mask")),
        n => Ok(n),
    }
}

/// Station-map loss over user cells. `pred` and `label` are
/// `[stations, cells]` channel-major; `mask` marks the cells holding users.
///
/// Label entries contribute `(1 - p)^beta log p`; all other entries of a user
/// cell contribute `-p^beta`. The sum is negated and divided by
/// `stations × user cells`.
pub fn station_loss(pred: &[f64], label: &[f64], mask: &[bool], beta: f64) -> Result<(f64, Vec<f64>)> {
    check_len(pred, label)?;
    let cells = mask.len();
    if cells == 0 || pred.len() % cells != 0 {
        return Err(Error::shape(cells, pred.len()));
    }
    let stations = pred.len() / cells;
    let norm = (stations * mask_count(mask)?) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for b in 0..stations {
        for (c, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            let k = b * cells + c;
            let (p, clamped) = clamp(pred[k]);
            let (term, d) = if is_keypoint(label[k]) {
                let a = (1.0 - p).powf(beta);
                (a * p.ln(), -beta * (1.0 - p).powf(beta - 1.0) * p.ln() + a / p)
            } else {
                (-p.powf(beta), -beta * p.powf(beta - 1.0))
            };
            loss -= term / norm;
            if !clamped {
                grad[k] = -d / norm;
            }
        }
    }
    Ok((loss, grad))
}

/// Power-map loss: mean over user cells of `|label - pred|^beta`.
pub fn power_loss(pred: &[f64], label: &[f64], mask: &[bool], beta: f64) -> Result<(f64, Vec<f64>)> {
    check_len(pred, label)?;
    if mask.len() != pred.len() {
        return Err(Error::shape(pred.len(), mask.len()));
    }
    let norm = mask_count(mask)? as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (k, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let d = label[k] - pred[k];
        loss += d.abs().powf(beta) / norm;
        if d != 0.0 {
            grad[k] = -beta * d.abs().powf(beta - 1.0) * d.signum() / norm;
        }
    }
    Ok((loss, grad))
}

/// Softmax followed by cross-entropy against class `target`, taking logits.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::shape(logits.len(), target));
    }
    let probs = softmax(logits);
    let loss = -probs[target].max(1e-300).ln();
    let mut grad = probs;
    grad[target] -= 1.0;
    Ok((loss, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
