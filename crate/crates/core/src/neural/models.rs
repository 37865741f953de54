//! Network builders: the matching network (box features plus beam history to
//! a location heatmap), its classifier variant, and the allocation network
//! (distribution feature to station and power maps).

use serde::{Deserialize, Serialize};

use super::layers::{AvgPool2, CellBias, Conv2d, Dense, Embedding, Gru, Layer, Relu, Reshape, Residual, Sequential, Sigmoid};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Anything with an ordered list of trainable parameters.
pub trait Network {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// How the beam-index history enters the matching network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeamEncoder {
    /// Embedding then a gated recurrent layer.
    Recurrent,
    /// One-hot codes of all steps concatenated into one dense input.
    Stacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmanConfig {
    /// Number of past beam-training moments fed to the network.
    pub history: usize,
    /// Feature grid size `(nx, ny)`; the output grid is half of it.
    pub grid: (usize, usize),
    /// Size of the beam-pair vocabulary.
    pub beam_pairs: usize,
    pub beam_encoder: BeamEncoder,
    pub embedding: usize,
    pub recurrent: usize,
    pub box_channels: [usize; 3],
    pub beam_channels: [usize; 3],
    pub head_channels: [usize; 2],
}

impl UmanConfig {
    /// Widths about one eighth of the full-size network.
    pub fn desk(history: usize, grid: (usize, usize), beam_pairs: usize) -> Self {
        Self {
            history,
            grid,
            beam_pairs,
            beam_encoder: BeamEncoder::Recurrent,
            embedding: 32,
            recurrent: 64,
            box_channels: [4, 4, 8],
            beam_channels: [2, 4, 8],
            head_channels: [4, 2],
        }
    }

    /// Widths of the full-size network.
    pub fn full(history: usize, grid: (usize, usize), beam_pairs: usize) -> Self {
        Self {
            history,
            grid,
            beam_pairs,
            beam_encoder: BeamEncoder::Recurrent,
            embedding: 1024,
            recurrent: 2048,
            box_channels: [16, 16, 32],
            beam_channels: [8, 16, 32],
            head_channels: [16, 8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.beam_pairs == 0 {
            return Err(Error::Config("history and beam vocabulary must be nonempty".into()));
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(Error::Config("feature grid must be at least 2x2".into()));
        }
        if self.box_channels[2] != self.beam_channels[2] {
            return Err(Error::Config("both branches must end with the same channel count".into()));
        }
        if self.box_channels.iter().chain(&self.beam_channels).chain(&self.head_channels).any(|&c| c == 0)
            || self.embedding == 0
            || self.recurrent == 0
        {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// `conv(a→b), relu, [conv(b→c), relu, conv(c→d)] + shortcut, relu`.
fn residual_stack(input: usize, widths: [usize; 3], rng: &mut Rng) -> Sequential {
    let [a, b, c] = widths;
    Sequential::new()
        .push(Conv2d::new(input, a, rng))
        .push(Relu::default())
        .push(Residual::new(
            Sequential::new()
                .push(Conv2d::new(a, b, rng))
                .push(Relu::default())
                .push(Conv2d::new(b, c, rng)),
        ))
        .push(Relu::default())
}

/// Inputs of one matching sample.
#[derive(Debug, Clone, PartialEq)]
pub struct UmanInput {
    /// Stacked box features, `[3 · history, nx, ny]`.
    pub features: Tensor,
    /// Beam-pair index at each moment, oldest first.
    pub beams: Vec<usize>,
}

enum BeamPath {
    Recurrent { embedding: Embedding, gru: Gru },
    Stacked,
}

/// Output stage on top of the fused, pooled features.
pub enum UmanHead {
    Heatmap(Sequential),
    Classifier(Sequential),
}

pub struct UmanModel {
    pub config: UmanConfig,
    box_branch: Sequential,
    beam_path: BeamPath,
    beam_dense: Dense,
    beam_convs: Sequential,
    pool: AvgPool2,
    head: UmanHead,
}

impl UmanModel {
    fn trunk(config: &UmanConfig, rng: &mut Rng) -> Result<(Sequential, BeamPath, Dense, Sequential)> {
        config.validate()?;
        let (nx, ny) = config.grid;
        let box_branch = residual_stack(3 * config.history, config.box_channels, rng);
        let (beam_path, dense_in) = match config.beam_encoder {
            BeamEncoder::Recurrent => (
                BeamPath::Recurrent {
                    embedding: Embedding::new(config.beam_pairs, config.embedding, rng),
                    gru: Gru::new(config.embedding, config.recurrent, rng),
                },
                config.recurrent,
            ),
            BeamEncoder::Stacked => (BeamPath::Stacked, config.history * config.beam_pairs),
        };
        let beam_dense = Dense::new(dense_in, nx * ny, rng);
        let beam_convs = Sequential::new()
            .push(Reshape::new(vec![1, nx, ny]))
            .push(Relu::default())
            .push(residual_stack(1, config.beam_channels, rng));
        Ok((box_branch, beam_path, beam_dense, beam_convs))
    }

    /// Heatmap network with a sigmoid output over the `(nx/2, ny/2)` grid.
    pub fn heatmap(config: UmanConfig, rng: &mut Rng) -> Result<Self> {
        let (box_branch, beam_path, beam_dense, beam_convs) = Self::trunk(&config, rng)?;
        let c = config.box_channels[2];
        let [h1, h2] = config.head_channels;
        // start the output near a sparse-map prior
        let head = Sequential::new()
            .push(Residual::new(
                Sequential::new()
                    .push(Conv2d::new(c, h1, rng))
                    .push(Relu::default())
                    .push(Conv2d::new(h1, h2, rng)),
            ))
            .push(Relu::default())
            .push(Conv2d::new(h2, 1, rng).with_bias(-4.0))
            .push(Sigmoid::default());
        Ok(Self {
            config,
            box_branch,
            beam_path,
            beam_dense,
            beam_convs,
            pool: AvgPool2::default(),
            head: UmanHead::Heatmap(head),
        })
    }

    /// Classifier over `classes` box slots, emitting logits.
    pub fn classifier(config: UmanConfig, hidden: [usize; 2], classes: usize, rng: &mut Rng) -> Result<Self> {
        let (box_branch, beam_path, beam_dense, beam_convs) = Self::trunk(&config, rng)?;
        let pooled = config.box_channels[2] * (config.grid.0 / 2) * (config.grid.1 / 2);
        let head = Sequential::new()
            .push(Dense::new(pooled, hidden[0], rng))
            .push(Relu::default())
            .push(Dense::new(hidden[0], hidden[1], rng))
            .push(Relu::default())
            .push(Dense::new(hidden[1], classes, rng));
        Ok(Self {
            config,
            box_branch,
            beam_path,
            beam_dense,
            beam_convs,
            pool: AvgPool2::default(),
            head: UmanHead::Classifier(head),
        })
    }

    fn beam_vector(&mut self, beams: &[usize]) -> Result<Tensor> {
        match &mut self.beam_path {
            BeamPath::Recurrent { embedding, gru } => {
                let tokens = Tensor::vector(beams.iter().map(|&b| b as f64).collect());
                let e = embedding.forward(&tokens)?;
                gru.forward(&e)
            }
            BeamPath::Stacked => {
                let p = self.config.beam_pairs;
                let mut v = vec![0.0; beams.len() * p];
                for (k, &b) in beams.iter().enumerate() {
                    if b >= p {
                        return Err(Error::Format(format!("beam pair {b} outside codebook of {p}")));
                    }
                    v[k * p + b] = 1.0;
                }
                Ok(Tensor::vector(v))
            }
        }
    }

    pub fn forward(&mut self, input: &UmanInput) -> Result<Tensor> {
        let (nx, ny) = self.config.grid;
        input.features.expect_shape(&[3 * self.config.history, nx, ny])?;
        if input.beams.len() != self.config.history {
            return Err(Error::shape(self.config.history, input.beams.len()));
        }
        let mut fused = self.box_branch.forward(&input.features)?;
        let v = self.beam_vector(&input.beams)?;
        let v = self.beam_dense.forward(&v)?;
        fused.add_assign(&self.beam_convs.forward(&v)?)?;
        let pooled = self.pool.forward(&fused)?;
        match &mut self.head {
            UmanHead::Heatmap(h) => h.forward(&pooled),
            UmanHead::Classifier(h) => h.forward(&pooled),
        }
    }

    /// Backpropagates the output gradient of the latest forward pass.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let g = match &mut self.head {
            UmanHead::Heatmap(h) => h.backward(grad)?,
            UmanHead::Classifier(h) => h.backward(grad)?,
        };
        let g = self.pool.backward(&g)?;
        self.box_branch.backward(&g)?;
        let gv = self.beam_convs.backward(&g)?;
        let gv = self.beam_dense.backward(&gv)?;
        if let BeamPath::Recurrent { embedding, gru } = &mut self.beam_path {
            let ge = gru.backward(&gv)?;
            embedding.backward(&ge)?;
        }
        Ok(())
    }
}

impl Network for UmanModel {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.box_branch.params();
        if let BeamPath::Recurrent { embedding, gru } = &self.beam_path {
            out.extend(embedding.params());
            out.extend(gru.params());
        }
        out.extend(self.beam_dense.params());
        out.extend(self.beam_convs.params());
        out.extend(match &self.head {
            UmanHead::Heatmap(h) | UmanHead::Classifier(h) => h.params(),
        });
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.box_branch.params_mut();
        if let BeamPath::Recurrent { embedding, gru } = &mut self.beam_path {
            out.extend(embedding.params_mut());
            out.extend(gru.params_mut());
        }
        out.extend(self.beam_dense.params_mut());
        out.extend(self.beam_convs.params_mut());
        out.extend(match &mut self.head {
            UmanHead::Heatmap(h) | UmanHead::Classifier(h) => h.params_mut(),
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VranConfig {
    pub grid: (usize, usize),
    pub stations: usize,
    pub trunk_channels: usize,
    /// Residual blocks of two convolutions each in the shared trunk.
    pub trunk_blocks: usize,
    pub head_channels: usize,
    /// Append normalized cell coordinates as two extra input channels.
    pub coordinates: bool,
    /// Learned per-cell offset on both heads before the sigmoid.
    #[serde(default)]
    pub cell_bias: bool,
}

impl VranConfig {
    pub fn desk(grid: (usize, usize), stations: usize) -> Self {
        Self {
            grid,
            stations,
            trunk_channels: 8,
            trunk_blocks: 3,
            head_channels: 8,
            coordinates: true,
            cell_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations == 0 || self.trunk_channels == 0 || self.head_channels == 0 {
            return Err(Error::Config("allocation network widths must be positive".into()));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::Config("allocation grid is empty".into()));
        }
        Ok(())
    }
}

/// Shared convolutional trunk with a station head and a power head.
pub struct VranModel {
    pub config: VranConfig,
    trunk: Sequential,
    station_head: Sequential,
    power_head: Sequential,
}

/// Station map `[stations, nx, ny]` and power map `[1, nx, ny]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VranOutput {
    pub stations: Tensor,
    pub power: Tensor,
}

impl VranModel {
    pub fn new(config: VranConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let c = config.trunk_channels;
        let input = 4 + if config.coordinates { 2 } else { 0 };
        let mut trunk = Sequential::new().push(Conv2d::new(input, c, rng)).push(Relu::default());
        for _ in 0..config.trunk_blocks {
            trunk = trunk
                .push(Residual::new(
                    Sequential::new()
                        .push(Conv2d::new(c, c, rng))
                        .push(Relu::default())
                        .push(Conv2d::new(c, c, rng)),
                ))
                .push(Relu::default());
        }
        let h = config.head_channels;
        let grid = config.grid;
        let cell_bias = config.cell_bias;
        let head = |out: usize, bias: f64, rng: &mut Rng| {
            let s = Sequential::new()
                .push(Residual::new(
                    Sequential::new()
                        .push(Conv2d::new(c, h, rng))
                        .push(Relu::default())
                        .push(Conv2d::new(h, h, rng)),
                ))
                .push(Relu::default())
                .push(Conv2d::new(h, out, rng).with_bias(bias));
            let s = if cell_bias { s.push(CellBias::new([out, grid.0, grid.1])) } else { s };
            s.push(Sigmoid::default())
        };
        let station_head = head(config.stations, -1.0, rng);
        let power_head = head(1, 1.0, rng);
        Ok(Self {
            config,
            trunk,
            station_head,
            power_head,
        })
    }

    fn with_coordinates(&self, usdf: &Tensor) -> Result<Tensor> {
        let (nx, ny) = self.config.grid;
        usdf.expect_shape(&[4, nx, ny])?;
        if !self.config.coordinates {
            return Ok(usdf.clone());
        }
        let mut data = usdf.data.clone();
        data.extend((0..nx).flat_map(|x| std::iter::repeat_n(x as f64 / nx as f64, ny)));
        data.extend((0..nx).flat_map(|_| (0..ny).map(|y| y as f64 / ny as f64)));
        Tensor::new(vec![6, nx, ny], data)
    }

    pub fn forward(&mut self, usdf: &Tensor) -> Result<VranOutput> {
        let x = self.with_coordinates(usdf)?;
        let z = self.trunk.forward(&x)?;
        Ok(VranOutput {
            stations: self.station_head.forward(&z)?,
            power: self.power_head.forward(&z)?,
        })
    }

    pub fn backward(&mut self, grad_stations: &Tensor, grad_power: &Tensor) -> Result<()> {
        let mut g = self.station_head.backward(grad_stations)?;
        g.add_assign(&self.power_head.backward(grad_power)?)?;
        self.trunk.backward(&g)?;
        Ok(())
    }
}

impl Network for VranModel {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.trunk.params();
        out.extend(self.station_head.params());
        out.extend(self.power_head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.trunk.params_mut();
        out.extend(self.station_head.params_mut());
        out.extend(self.power_head.params_mut());
        out
    }
}
