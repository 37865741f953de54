//! Grid encoders for box sets and the label tensors the networks learn.
//!
//! Tensors are stored channel-major: value `(c, ix, iy)` lives at
//! `(c * nx + ix) * ny + iy`, with `ix` counting cells along `X` and `iy`
//! along `Y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, BoxSet};
use crate::scene::VehicleSpec;

/// Regular grid over the road plane. Cell `(ix, iy)` covers
/// `[x0 + ix·W, x0 + (ix+1)·W) × [y0 + iy·L, y0 + (iy+1)·L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: (f64, f64),
    /// Cell extent along `Y`.
    pub cell_length: f64,
    /// Cell extent along `X`.
    pub cell_width: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_length > 0.0 && self.cell_width > 0.0) || self.nx == 0 || self.ny == 0 {
            return Err(Error::Config(format!("degenerate grid {self:?}")));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Same region with cells `factor` times larger on each side.
    pub fn coarsen(&self, factor: usize) -> Self {
        Self {
            origin: self.origin,
            cell_length: self.cell_length * factor as f64,
            cell_width: self.cell_width * factor as f64,
            nx: self.nx / factor,
            ny: self.ny / factor,
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((
            Self::axis_cell(x, self.origin.0, self.cell_width, self.nx)?,
            Self::axis_cell(y, self.origin.1, self.cell_length, self.ny)?,
        ))
    }

    /// Cell index along one axis. Edges are `origin + k·size` evaluated
    /// exactly as written, so a coordinate built that way lands in cell `k`.
    fn axis_cell(v: f64, origin: f64, size: f64, n: usize) -> Option<usize> {
        let edge = |k: usize| origin + k as f64 * size;
        if !(v >= origin && v < edge(n)) {
            return None;
        }
        let mut k = (((v - origin) / size).floor().max(0.0) as usize).min(n - 1);
        while k > 0 && v < edge(k) {
            k -= 1;
        }
        while k + 1 < n && v >= edge(k + 1) {
            k += 1;
        }
        Some(k)
    }

    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.cell_width,
            self.origin.1 + (iy as f64 + 0.5) * self.cell_length,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Bdf,
    Heatmap,
    Usdf,
    StationMap,
    PowerMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTensor {
    pub role: Role,
    pub channels: usize,
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl GridTensor {
    pub fn zeros(role: Role, channels: usize, nx: usize, ny: usize) -> Self {
        Self {
            role,
            channels,
            nx,
            ny,
            data: vec![0.0; channels * nx * ny],
        }
    }

    pub fn index(&self, c: usize, ix: usize, iy: usize) -> usize {
        (c * self.nx + ix) * self.ny + iy
    }

    pub fn get(&self, c: usize, ix: usize, iy: usize) -> f64 {
        self.data[self.index(c, ix, iy)]
    }

    pub fn set(&mut self, c: usize, ix: usize, iy: usize, v: f64) {
        let i = self.index(c, ix, iy);
        self.data[i] = v;
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.nx, self.ny]
    }
}

/// Normalizers for box sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeNorms {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl SizeNorms {
    /// Largest dimensions across a catalog.
    pub fn of_catalog(catalog: &[VehicleSpec]) -> Self {
        let max = |f: fn(&VehicleSpec) -> f64| catalog.iter().map(f).fold(0.0, f64::max);
        Self {
            length: max(|s| s.length),
            width: max(|s| s.width),
            height: max(|s| s.height),
        }
    }

    fn normalize(&self, b: &Box3D) -> [f64; 3] {
        [b.length / self.length, b.width / self.width, b.height / self.height]
    }
}

impl Default for SizeNorms {
    fn default() -> Self {
        Self::of_catalog(&VehicleSpec::catalog())
    }
}

/// Encoder output plus the number of boxes that fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub tensor: GridTensor,
    pub outside: usize,
}

fn size_means(boxes: &BoxSet, grid: &GridSpec, norms: &SizeNorms) -> (Vec<[f64; 3]>, Vec<usize>, Vec<Option<usize>>) {
    let mut sums = vec![[0.0; 3]; grid.cells()];
    let mut counts = vec![0usize; grid.cells()];
    let cells: Vec<Option<usize>> = boxes
        .iter()
        .map(|b| {
            let (ix, iy) = grid.cell_of(b.center[0], b.center[1])?;
            let k = ix * grid.ny + iy;
            let n = norms.normalize(b);
            for c in 0..3 {
                sums[k][c] += n[c];
            }
            counts[k] += 1;
            Some(k)
        })
        .collect();
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    (sums, counts, cells)
}

fn warn_outside(outside: usize, what: &str) {
    if outside > 0 {
        log::warn!("{outside} boxes outside the {what} grid were ignored");
    }
}

/// Box distribution feature: per cell, the mean normalized
/// `(length, width, height)` of the boxes whose center lies in it.
pub fn encode_bdf(boxes: &BoxSet, grid: &GridSpec, norms: &SizeNorms) -> Encoded {
    let (means, counts, cells) = size_means(boxes, grid, norms);
    let mut t = GridTensor::zeros(Role::Bdf, 3, grid.nx, grid.ny);
    for k in 0..grid.cells() {
        if counts[k] > 0 {
            for c in 0..3 {
                t.set(c, k / grid.ny, k % grid.ny, means[k][c]);
            }
        }
    }
    let outside = cells.iter().filter(|c| c.is_none()).count();
    warn_outside(outside, "feature");
    Encoded { tensor: t, outside }
}

/// Radius within which both corners of a `length × width` cell box may move
/// while the moved box keeps IoU of at least `min_iou` with the original.
///
/// The three candidates cover corners moving the same way, both corners
/// moving inwards, and both moving outwards.
pub fn gaussian_radius(length: usize, width: usize, min_iou: f64) -> Result<f64> {
    if length == 0 || width == 0 {
        return Err(Error::Config("box must cover at least one cell".into()));
    }
    if !(min_iou > 0.0 && min_iou < 1.0) {
        return Err(Error::Config(format!("overlap target {min_iou} must lie in (0, 1)")));
    }
    let (l, w, g) = (length as f64, width as f64, min_iou);
    let s = l + w;
    let root = |disc: f64| {
        if disc < 0.0 {
            Err(Error::NegativeDiscriminant {
                l: length,
                w: width,
                overlap: min_iou,
            })
        } else {
            Ok(disc.sqrt())
        }
    };
    let r1 = (s - root(s * s - 4.0 * l * w * (1.0 - g) / (1.0 + g))?) / 2.0;
    let r2 = (s - root(s * s - 4.0 * l * w * (1.0 - g))?) / 4.0;
    let r3 = (-g * s + root(g * g * s * s + 4.0 * l * w * g * (1.0 - g))?) / (4.0 * g);
    Ok(r1.min(r2).min(r3))
}

/// Cells spanned by a box footprint on `grid`, rounded up.
pub fn footprint_cells(b: &Box3D, grid: &GridSpec) -> (usize, usize) {
    (
        (b.length / grid.cell_length).ceil().max(1.0) as usize,
        (b.width / grid.cell_width).ceil().max(1.0) as usize,
    )
}

/// Gaussian keypoint heatmap centered on the cell holding the box center.
pub fn render_heatmap(user: &Box3D, grid: &GridSpec, min_iou: f64) -> Result<GridTensor> {
    let (kx, ky) = grid.cell_of(user.center[0], user.center[1]).ok_or(Error::OutsideGrid {
        x: user.center[0],
        y: user.center[1],
    })?;
    let (l, w) = footprint_cells(user, grid);
    let r = gaussian_radius(l, w, min_iou)?.floor() as i64;
    let sigma = (2 * r + 1) as f64 / 6.0;
    let mut t = GridTensor::zeros(Role::Heatmap, 1, grid.nx, grid.ny);
    for dx in -r..=r {
        for dy in -r..=r {
            let (x, y) = (kx as i64 + dx, ky as i64 + dy);
            if x < 0 || y < 0 || x >= grid.nx as i64 || y >= grid.ny as i64 {
                continue;
            }
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            t.set(0, x as usize, y as usize, v);
        }
    }
    Ok(t)
}

/// Peak cell of a one-channel map and its center. Ties go to the smallest
/// `ix * ny + iy`.
pub fn heatmap_argmax(t: &GridTensor, grid: &GridSpec) -> Result<((usize, usize), (f64, f64))> {
    if t.data.is_empty() {
        return Err(Error::Empty("heatmap"));
    }
    if (t.nx, t.ny) != (grid.nx, grid.ny) {
        return Err(Error::shape((grid.nx, grid.ny), (t.nx, t.ny)));
    }
    let mut best = 0;
    for k in 1..t.nx * t.ny {
        if t.data[k] > t.data[best] {
            best = k;
        }
    }
    let cell = (best / t.ny, best % t.ny);
    Ok((cell, grid.center(cell.0, cell.1)))
}

/// User and scatterer distribution: per cell the mean normalized sizes and
/// either the number of users in it or `-1` when only non-users occupy it.
pub fn encode_usdf(boxes: &BoxSet, users: &[usize], grid: &GridSpec, norms: &SizeNorms) -> Result<Encoded> {
    if let Some(&u) = users.iter().find(|&&u| u >= boxes.len()) {
        return Err(Error::Config(format!("user box {u} not in a set of {}", boxes.len())));
    }
    let (means, counts, cells) = size_means(boxes, grid, norms);
    let mut user_count = vec![0usize; grid.cells()];
    for &u in users {
        if let Some(k) = cells[u] {
            user_count[k] += 1;
        }
    }
    let mut t = GridTensor::zeros(Role::Usdf, 4, grid.nx, grid.ny);
    for k in 0..grid.cells() {
        if counts[k] == 0 {
            continue;
        }
        let (ix, iy) = (k / grid.ny, k % grid.ny);
        for c in 0..3 {
            t.set(c, ix, iy, means[k][c]);
        }
        let tag = if user_count[k] > 0 { user_count[k] as f64 } else { -1.0 };
        t.set(3, ix, iy, tag);
    }
    let outside = cells.iter().filter(|c| c.is_none()).count();
    warn_outside(outside, "distribution");
    Ok(Encoded { tensor: t, outside })
}

/// Serving-station one-hot map and normalized power map for an allocation.
/// `cells[u]` is the grid cell of user `u`.
pub fn encode_labels(
    stations: &[usize],
    powers: &[f64],
    max_power: &[f64],
    cells: &[(usize, usize)],
    grid: &GridSpec,
) -> Result<(GridTensor, GridTensor)> {
    let b = max_power.len();
    if stations.len() != cells.len() || powers.len() != cells.len() {
        return Err(Error::shape(cells.len(), (stations.len(), powers.len())));
    }
    let mut ob = GridTensor::zeros(Role::StationMap, b, grid.nx, grid.ny);
    let mut op = GridTensor::zeros(Role::PowerMap, 1, grid.nx, grid.ny);
    let mut counts = vec![0usize; grid.cells()];
    for (u, (&s, &(ix, iy))) in stations.iter().zip(cells).enumerate() {
        if s >= b {
            return Err(Error::Constraint(format!("user {u} has no valid serving station ({s})")));
        }
        if ix >= grid.nx || iy >= grid.ny {
            return Err(Error::shape((grid.nx, grid.ny), (ix, iy)));
        }
        ob.set(s, ix, iy, 1.0);
        let k = ix * grid.ny + iy;
        counts[k] += 1;
        op.data[k] += powers[u] / max_power[s];
    }
    for (v, &n) in op.data.iter_mut().zip(&counts) {
        if n > 0 {
            *v /= n as f64;
        }
    }
    Ok((ob, op))
}
