use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocation::WmmseConfig;
use crate::channel::RadioConfig;
use crate::error::{Error, Result};
use crate::features::GridSpec;
use crate::matching::DEFAULT_MAX_BOXES;
use crate::neural::{BeamEncoder, TrainConfig, UmanConfig, VranConfig};
use crate::scene::SceneConfig;

/// Trajectory counts of the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub radio: RadioConfig,
    pub bdf_grid: GridSpec,
    pub heatmap_grid: GridSpec,
    pub usdf_grid: GridSpec,
    /// Moments of history used when matching users for allocation.
    pub history: usize,
    /// Histories compared in the matching evaluation.
    pub history_sweep: Vec<usize>,
    /// Minimum IoU a displaced box keeps inside the heatmap bump.
    pub heatmap_iou: f64,
    /// User counts of the allocation samples.
    pub users: Vec<usize>,
    pub trajectories: SplitSizes,
    /// Beam coherence moments recorded per trajectory.
    pub moments: usize,
    /// User combinations drawn per moment and user count.
    pub combinations: usize,
    /// Station whose matching network is trained.
    pub station: usize,
    pub max_boxes: usize,
    /// Layer widths of the matching network. History, grid and codebook size
    /// are filled in from the rest of the config.
    pub uman: UmanConfig,
    pub classifier_hidden: [usize; 2],
    /// Layer widths of the allocation network; grid and station count are
    /// filled in.
    pub vran: VranConfig,
    pub uman_train: TrainConfig,
    pub classifier_train: TrainConfig,
    pub vran_train: TrainConfig,
    pub wmmse: WmmseConfig,
    pub seed: u64,
}

/// The 20 × 80 box grid over the road with 1.04 m × 0.88 m cells.
pub fn desk_grid() -> GridSpec {
    GridSpec {
        origin: (-8.8, -41.6),
        cell_length: 1.04,
        cell_width: 0.88,
        nx: 20,
        ny: 80,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let radio = RadioConfig::default();
        let grid = desk_grid();
        let pairs = radio.tx_beams * radio.rx_beams;
        let stations = radio.stations();
        let train = |epochs, lr| TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: lr,
            ..TrainConfig::default()
        };
        Self {
            scene: SceneConfig::default(),
            uman: UmanConfig {
                beam_encoder: BeamEncoder::Recurrent,
                ..UmanConfig::desk(5, (grid.nx, grid.ny), pairs)
            },
            vran: VranConfig::desk((grid.nx, grid.ny), stations),
            radio,
            bdf_grid: grid,
            heatmap_grid: grid.coarsen(2),
            usdf_grid: grid,
            history: 5,
            history_sweep: vec![1, 3, 5],
            heatmap_iou: 0.3,
            users: vec![2, 3, 4],
            trajectories: SplitSizes {
                train: 8,
                valid: 1,
                test: 1,
            },
            moments: 100,
            combinations: 3,
            station: 0,
            max_boxes: DEFAULT_MAX_BOXES,
            classifier_hidden: [64, 32],
            uman_train: train(6, 2e-3),
            classifier_train: train(6, 1e-3),
            vran_train: train(3, 6e-3),
            wmmse: WmmseConfig::default(),
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    /// Full-scale settings: 40 × 160 box grid, 20 × 80 heatmap
    /// and distribution grids, 40/5/5 trajectories of 300 moments and the
    /// full network widths.
    pub fn full_scale() -> Self {
        let base = Self::default();
        let bdf = GridSpec {
            origin: (-8.8, -41.6),
            cell_length: 0.52,
            cell_width: 0.44,
            nx: 40,
            ny: 160,
        };
        let pairs = base.radio.tx_beams * base.radio.rx_beams;
        let stations = base.radio.stations();
        Self {
            bdf_grid: bdf,
            heatmap_grid: bdf.coarsen(2),
            usdf_grid: bdf.coarsen(2),
            uman: UmanConfig::full(5, (bdf.nx, bdf.ny), pairs),
            classifier_hidden: [1000, 400],
            vran: VranConfig {
                trunk_channels: 32,
                trunk_blocks: 8,
                head_channels: 32,
                ..VranConfig::desk((20, 80), stations)
            },
            trajectories: SplitSizes {
                train: 40,
                valid: 5,
                test: 5,
            },
            moments: 300,
            combinations: usize::MAX,
            ..base
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn stations(&self) -> usize {
        self.radio.stations()
    }

    pub fn beam_pairs(&self) -> usize {
        self.radio.tx_beams * self.radio.rx_beams
    }

    /// Longest history any sample needs.
    pub fn max_history(&self) -> usize {
        self.history_sweep.iter().copied().chain([self.history]).max().unwrap_or(1)
    }

    /// Every history a matching network is trained for, ascending.
    pub fn histories(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.history_sweep.iter().copied().chain([self.history]).collect();
        h.sort_unstable();
        h.dedup();
        h
    }

    pub fn uman_config(&self, history: usize) -> UmanConfig {
        UmanConfig {
            history,
            grid: (self.bdf_grid.nx, self.bdf_grid.ny),
            beam_pairs: self.beam_pairs(),
            ..self.uman.clone()
        }
    }

    pub fn vran_config(&self) -> VranConfig {
        VranConfig {
            grid: (self.usdf_grid.nx, self.usdf_grid.ny),
            stations: self.stations(),
            ..self.vran.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        for g in [&self.bdf_grid, &self.heatmap_grid, &self.usdf_grid] {
            g.validate()?;
        }
        if (self.heatmap_grid.nx, self.heatmap_grid.ny) != (self.bdf_grid.nx / 2, self.bdf_grid.ny / 2) {
            return Err(Error::Config("heatmap grid must have half the box grid resolution".into()));
        }
        if self.radio.sites.is_empty() || self.beam_pairs() == 0 {
            return Err(Error::Config("radio needs stations and beams".into()));
        }
        if self.station >= self.stations() {
            return Err(Error::Config(format!("station {} does not exist", self.station)));
        }
        if self.history == 0 || self.history_sweep.contains(&0) {
            return Err(Error::Config("histories must be positive".into()));
        }
        if self.users.is_empty() || self.users.iter().any(|&u| u == 0 || u > self.stations()) {
            return Err(Error::Config(format!(
                "user counts {:?} must lie in 1..={}",
                self.users,
                self.stations()
            )));
        }
        if !(self.heatmap_iou > 0.0 && self.heatmap_iou < 1.0) {
            return Err(Error::Config("heatmap IoU must lie in (0, 1)".into()));
        }
        let t = self.trajectories;
        if t.train == 0 || t.test == 0 {
            return Err(Error::Config("train and test splits need trajectories".into()));
        }
        if self.moments < self.max_history() {
            return Err(Error::Config("trajectories are shorter than the history".into()));
        }
        if self.max_boxes < 2 {
            return Err(Error::Config("at least two box slots are needed".into()));
        }
        self.uman_config(self.max_history()).validate()?;
        self.vran_config().validate()?;
        for t in [&self.uman_train, &self.classifier_train, &self.vran_train] {
            t.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for c in [ExperimentConfig::default(), ExperimentConfig::full_scale()] {
            c.validate().unwrap();
            let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"moments": 20, "seed": 3}"#).unwrap();
        assert_eq!(c.moments, 20);
        assert_eq!(c.history, 5);
    }

    #[test]
    fn rejects_bad_users() {
        let c = ExperimentConfig {
            users: vec![5],
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().is_config());
    }
}
