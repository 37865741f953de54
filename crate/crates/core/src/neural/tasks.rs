//! Per-sample loss evaluation for each model, plus owned-sample tasks.

use super::loss::{focal_loss, power_loss, softmax_cross_entropy, station_loss};
use super::models::{UmanInput, UmanModel, VranModel};
use super::tensor::Tensor;
use super::train::Task;
use crate::error::Result;

/// Focal loss of the predicted heatmap against `target`.
pub fn heatmap_loss(
    model: &mut UmanModel,
    input: &UmanInput,
    target: &[f64],
    beta: f64,
    eta: f64,
    backprop: bool,
) -> Result<f64> {
    let out = model.forward(input)?;
    let (loss, grad) = focal_loss(&out.data, target, beta, eta)?;
    if backprop {
        model.backward(&Tensor::new(out.shape, grad)?)?;
    }
    Ok(loss)
}

/// Cross-entropy of the classifier logits against box slot `class`.
pub fn class_loss(model: &mut UmanModel, input: &UmanInput, class: usize, backprop: bool) -> Result<f64> {
    let out = model.forward(input)?;
    let (loss, grad) = softmax_cross_entropy(&out.data, class)?;
    if backprop {
        model.backward(&Tensor::new(out.shape, grad)?)?;
    }
    Ok(loss)
}

/// Sum of the station-map and power-map losses on user cells.
pub fn allocation_loss(
    model: &mut VranModel,
    usdf: &Tensor,
    stations: &[f64],
    power: &[f64],
    mask: &[bool],
    beta: f64,
    backprop: bool,
) -> Result<f64> {
    let out = model.forward(usdf)?;
    let (lb, gb) = station_loss(&out.stations.data, stations, mask, beta)?;
    let (lp, gp) = power_loss(&out.power.data, power, mask, beta)?;
    if backprop {
        model.backward(&Tensor::new(out.stations.shape, gb)?, &Tensor::new(out.power.shape, gp)?)?;
    }
    Ok(lb + lp)
}

pub struct HeatmapSample {
    pub input: UmanInput,
    pub target: Vec<f64>,
}

pub struct HeatmapTask {
    pub beta: f64,
    pub eta: f64,
}

impl Task<UmanModel, HeatmapSample> for HeatmapTask {
    fn evaluate(&self, model: &mut UmanModel, s: &HeatmapSample, backprop: bool) -> Result<f64> {
        heatmap_loss(model, &s.input, &s.target, self.beta, self.eta, backprop)
    }
}

pub struct ClassSample {
    pub input: UmanInput,
    pub class: usize,
}

pub struct ClassTask;

impl Task<UmanModel, ClassSample> for ClassTask {
    fn evaluate(&self, model: &mut UmanModel, s: &ClassSample, backprop: bool) -> Result<f64> {
        class_loss(model, &s.input, s.class, backprop)
    }
}

pub struct AllocationSample {
    pub usdf: Tensor,
    pub stations: Vec<f64>,
    pub power: Vec<f64>,
    pub mask: Vec<bool>,
}

pub struct AllocationTask {
    pub beta: f64,
}

impl Task<VranModel, AllocationSample> for AllocationTask {
    fn evaluate(&self, model: &mut VranModel, s: &AllocationSample, backprop: bool) -> Result<f64> {
        allocation_loss(model, &s.usdf, &s.stations, &s.power, &s.mask, self.beta, backprop)
    }
}
