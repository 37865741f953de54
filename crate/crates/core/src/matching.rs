//! Matching a beam-trained user to one of the fused vehicle boxes.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{heatmap_argmax, GridSpec, GridTensor, Role};
use crate::geometry::BoxSet;
use crate::neural::loss::softmax;
use crate::neural::{UmanInput, UmanModel};
use crate::rng::Rng;

/// Largest candidate set the classifier baseline can index.
pub const DEFAULT_MAX_BOXES: usize = 12;

/// One matching problem: the observation history, the candidate boxes at the
/// latest moment and the index of the user's own box among them.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSample {
    pub input: UmanInput,
    /// Target heatmap of the user; only needed for training.
    pub heatmap: Option<GridTensor>,
    pub candidates: BoxSet,
    pub truth: usize,
}

impl MatchSample {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Empty("candidate boxes"));
        }
        if self.truth >= self.candidates.len() {
            return Err(Error::Config(format!(
                "true box {} not among {} candidates",
                self.truth,
                self.candidates.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Index of the chosen box among the candidates.
    pub predicted: usize,
    /// Heatmap cell the estimate came from, for the heatmap method.
    pub cell: Option<(usize, usize)>,
    /// Plane distance from the estimated location to the chosen box.
    pub distance: Option<f64>,
    pub correct: bool,
}

/// Box whose plane center is closest to `(x, y)`; ties go to the smaller
/// `y`, then the smaller `x`.
pub fn nearest_box(boxes: &BoxSet, point: (f64, f64)) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in boxes.iter().enumerate() {
        let d = (b.center[0] - point.0).hypot(b.center[1] - point.1);
        best = match best {
            None => Some((i, d)),
            Some((j, dj)) => {
                let c = &boxes.boxes[j].center;
                if d < dj {
                    Some((i, d))
                } else if d == dj {
                    log::debug!("boxes {j} and {i} equidistant from ({:.3}, {:.3})", point.0, point.1);
                    let closer = b.center[1].total_cmp(&c[1]).then(b.center[0].total_cmp(&c[0])).is_lt();
                    if closer {
                        Some((i, d))
                    } else {
                        Some((j, dj))
                    }
                } else {
                    Some((j, dj))
                }
            }
        };
    }
    best.ok_or(Error::Empty("candidate boxes"))
}

/// Decodes a heatmap over `grid` into a box choice.
pub fn match_heatmap(map: &GridTensor, grid: &GridSpec, sample: &MatchSample) -> Result<MatchResult> {
    sample.validate()?;
    let (cell, center) = heatmap_argmax(map, grid)?;
    let (predicted, distance) = nearest_box(&sample.candidates, center)?;
    Ok(MatchResult {
        predicted,
        cell: Some(cell),
        distance: Some(distance),
        correct: predicted == sample.truth,
    })
}

/// Heatmap matching with the network's estimate. `grid` is the heatmap grid,
/// half the resolution of the box-feature grid in both directions.
pub fn match_3dumm(model: &mut UmanModel, sample: &MatchSample, grid: &GridSpec) -> Result<MatchResult> {
    sample.validate()?;
    let out = model.forward(&sample.input)?;
    let (_, nx, ny) = out.dims3()?;
    if (nx, ny) != (grid.nx, grid.ny) {
        return Err(Error::shape((grid.nx, grid.ny), (nx, ny)));
    }
    let map = GridTensor {
        role: Role::Heatmap,
        channels: 1,
        nx,
        ny,
        data: out.data,
    };
    match_heatmap(&map, grid, sample)
}

/// Heatmap matching for several users of one moment. Each user still decodes
/// its own heatmap peak, but boxes are handed out closest pair first so no
/// two users share a box.
pub fn match_3dumm_joint(model: &mut UmanModel, samples: &[MatchSample], grid: &GridSpec) -> Result<Vec<MatchResult>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let boxes = &first.candidates;
    if samples.len() > boxes.len() {
        return Err(Error::Constraint(format!(
            "{} users cannot take distinct boxes out of {}",
            samples.len(),
            boxes.len()
        )));
    }
    let mut peaks = Vec::with_capacity(samples.len());
    for s in samples {
        s.validate()?;
        if s.candidates != *boxes {
            return Err(Error::Constraint("joint matching needs one shared candidate set".into()));
        }
        let out = model.forward(&s.input)?;
        let (_, nx, ny) = out.dims3()?;
        if (nx, ny) != (grid.nx, grid.ny) {
            return Err(Error::shape((grid.nx, grid.ny), (nx, ny)));
        }
        let map = GridTensor {
            role: Role::Heatmap,
            channels: 1,
            nx,
            ny,
            data: out.data,
        };
        peaks.push(heatmap_argmax(&map, grid)?);
    }
    let mut pairs = Vec::with_capacity(samples.len() * boxes.len());
    for (u, (_, p)) in peaks.iter().enumerate() {
        for (k, b) in boxes.iter().enumerate() {
            pairs.push(((b.center[0] - p.0).hypot(b.center[1] - p.1), u, k));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut chosen: Vec<Option<(usize, f64)>> = vec![None; samples.len()];
    let mut taken = vec![false; boxes.len()];
    for (d, u, k) in pairs {
        if chosen[u].is_none() && !taken[k] {
            chosen[u] = Some((k, d));
            taken[k] = true;
        }
    }
    Ok(chosen
        .into_iter()
        .zip(samples)
        .zip(peaks)
        .map(|((c, s), (cell, _))| {
            let (predicted, distance) = c.expect("users never outnumber boxes here");
            MatchResult {
                predicted,
                cell: Some(cell),
                distance: Some(distance),
                correct: predicted == s.truth,
            }
        })
        .collect())
}

/// Candidate indices in class order: decreasing `y`, then increasing `x`.
pub fn class_order(boxes: &BoxSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&boxes.boxes[a].center, &boxes.boxes[b].center);
        cb[1].total_cmp(&ca[1]).then(ca[0].total_cmp(&cb[0])).then(a.cmp(&b))
    });
    order
}

/// Class index of the true box for the classifier baseline.
pub fn class_label(sample: &MatchSample, max_boxes: usize) -> Result<usize> {
    sample.validate()?;
    if sample.candidates.len() > max_boxes {
        return Err(Error::TooManyBoxes(sample.candidates.len(), max_boxes));
    }
    Ok(class_order(&sample.candidates)
        .iter()
        .position(|&i| i == sample.truth)
        .expect("truth validated"))
}

/// Picks the most probable occupied class slot and maps it back to a box.
pub fn decode_class(logits: &[f64], sample: &MatchSample, max_boxes: usize) -> Result<MatchResult> {
    let truth_class = class_label(sample, max_boxes)?;
    let n = sample.candidates.len();
    if logits.len() < n {
        return Err(Error::shape(max_boxes, logits.len()));
    }
    // slots past the candidate count hold no box
    let probs = softmax(&logits[..n]);
    let mut class = 0;
    for k in 1..n {
        if probs[k] > probs[class] {
            class = k;
        }
    }
    Ok(MatchResult {
        predicted: class_order(&sample.candidates)[class],
        cell: None,
        distance: None,
        correct: class == truth_class,
    })
}

pub fn match_mcumm(classifier: &mut UmanModel, sample: &MatchSample, max_boxes: usize) -> Result<MatchResult> {
    class_label(sample, max_boxes)?;
    let logits = classifier.forward(&sample.input)?;
    decode_class(&logits.data, sample, max_boxes)
}

pub fn match_rumm(sample: &MatchSample, rng: &mut Rng) -> Result<MatchResult> {
    sample.validate()?;
    let predicted = rng.random_range(0..sample.candidates.len());
    Ok(MatchResult {
        predicted,
        cell: None,
        distance: None,
        correct: predicted == sample.truth,
    })
}

/// Fraction of correct matches.
pub fn umac(results: &[MatchResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("match results"));
    }
    Ok(results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64)
}

/// Expected accuracy of uniform random matching over candidate-set sizes.
pub fn rumm_expectation(sizes: &[usize]) -> Result<f64> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Empty("candidate boxes"));
    }
    Ok(sizes.iter().map(|&n| 1.0 / n as f64).sum::<f64>() / sizes.len() as f64)
}
