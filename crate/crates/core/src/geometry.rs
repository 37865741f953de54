//! Coordinate frames, oriented 3D boxes and multi-camera box de-duplication.
//!
//! The global frame (GCS) has `X` across the road, `Y` along the lanes and `Z`
//! up. Azimuths are measured from the `+Y` axis towards `+X`, so a heading of
//! `0` travels along `+Y` and a heading of `π` along `-Y`.
//!
//! Each camera defines its own frame (CCS) whose `Y` axis is the optic axis.
//! The camera-to-global map rotates by the camera elevation about `X`, then by
//! the camera azimuth about `Z`, and finally translates by the camera position.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// The frame a box is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Global,
    Camera(usize),
}

/// Oriented 3D bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub center: Vec3,
    pub azimuth: f64,
    pub frame: Frame,
}

impl Box3D {
    pub fn new(length: f64, width: f64, height: f64, center: Vec3, azimuth: f64, frame: Frame) -> Result<Self> {
        if !(length > 0.0 && width > 0.0 && height > 0.0) {
            return Err(Error::Config(format!(
                "box dimensions must be positive, got {length}x{width}x{height}"
            )));
        }
        Ok(Self {
            length,
            width,
            height,
            center,
            azimuth,
            frame,
        })
    }

    /// A box in the global frame resting on the ground plane.
    pub fn on_ground(length: f64, width: f64, height: f64, x: f64, y: f64, azimuth: f64) -> Self {
        Self {
            length,
            width,
            height,
            center: [x, y, height / 2.0],
            azimuth,
            frame: Frame::Global,
        }
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    /// Plane location `(x, y)` of the center.
    pub fn plane(&self) -> (f64, f64) {
        (self.center[0], self.center[1])
    }
}

/// Mounting pose of a camera in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    /// Downward tilt of the optic axis, in `(-π/2, π/2)`.
    pub elevation: f64,
    pub azimuth: f64,
    /// Horizontal field of view, in `(0, π)`.
    pub fov: f64,
    pub max_range: f64,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        if !(self.elevation > -PI / 2.0 && self.elevation < PI / 2.0) {
            return Err(Error::Config(format!("camera elevation {} out of range", self.elevation)));
        }
        if !(self.fov > 0.0 && self.fov < PI) {
            return Err(Error::Config(format!("camera field of view {} out of range", self.fov)));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Config("camera range must be positive".into()));
        }
        Ok(())
    }

    /// Rotation taking camera coordinates to global coordinates.
    pub fn rotation(&self) -> Mat3 {
        let (sp, cp) = self.azimuth.sin_cos();
        let (st, ct) = self.elevation.sin_cos();
        let yaw = [[cp, sp, 0.0], [-sp, cp, 0.0], [0.0, 0.0, 1.0]];
        let pitch = [[1.0, 0.0, 0.0], [0.0, ct, st], [0.0, -st, ct]];
        mat_mul(&yaw, &pitch)
    }

    /// True when a global point lies inside the horizontal frustum and range.
    pub fn sees(&self, point: Vec3) -> bool {
        let local = self.to_camera(point);
        let dist = (0..3).map(|i| (point[i] - self.position[i]).powi(2)).sum::<f64>().sqrt();
        local[1] > 0.0 && local[0].atan2(local[1]).abs() <= self.fov / 2.0 && dist <= self.max_range
    }

    pub fn to_camera(&self, point: Vec3) -> Vec3 {
        let rel = [
            point[0] - self.position[0],
            point[1] - self.position[1],
            point[2] - self.position[2],
        ];
        mat_vec(&transpose(&self.rotation()), rel)
    }

    pub fn to_global(&self, point: Vec3) -> Vec3 {
        let g = mat_vec(&self.rotation(), point);
        [g[0] + self.position[0], g[1] + self.position[1], g[2] + self.position[2]]
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Maps a box detected by camera `b` into the global frame.
pub fn ccs_to_gcs(b: &Box3D, pose: &CameraPose) -> Box3D {
    Box3D {
        center: pose.to_global(b.center),
        azimuth: wrap_angle(pose.azimuth + b.azimuth),
        frame: Frame::Global,
        ..*b
    }
}

/// Inverse of [`ccs_to_gcs`].
pub fn gcs_to_ccs(b: &Box3D, pose: &CameraPose, camera: usize) -> Box3D {
    Box3D {
        center: pose.to_camera(b.center),
        azimuth: wrap_angle(b.azimuth - pose.azimuth),
        frame: Frame::Camera(camera),
        ..*b
    }
}

/// Overlap volume of two lane-aligned boxes on the ground plane.
///
/// Widths lie along `X`, lengths along `Y`, and the vertical overlap is the
/// smaller of the two heights.
pub fn overlap_volume(a: &Box3D, b: &Box3D) -> f64 {
    let dx = (a.center[0] - b.center[0]).abs();
    let dy = (a.center[1] - b.center[1]).abs();
    let ow = a.width.min(b.width).min(0.5 * (a.width + b.width) - dx);
    let ol = a.length.min(b.length).min(0.5 * (a.length + b.length) - dy);
    ow.max(0.0) * ol.max(0.0) * a.height.min(b.height)
}

/// 3D intersection-over-union under the lane alignment assumption.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let overlap = overlap_volume(a, b);
    if overlap <= 0.0 {
        return 0.0;
    }
    (overlap / (a.volume() + b.volume() - overlap)).clamp(0.0, 1.0)
}

/// Set of boxes in the global frame, optionally tagged with the vehicle that
/// produced each one (simulation only).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub boxes: Vec<Box3D>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vehicle_ids: Vec<u64>,
}

impl BoxSet {
    pub fn new(boxes: Vec<Box3D>) -> Self {
        Self {
            boxes,
            vehicle_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Box3D> {
        self.boxes.iter()
    }

    /// Vehicle id attached to box `i`, if ground truth is known.
    pub fn vehicle_of(&self, i: usize) -> Option<u64> {
        self.vehicle_ids.get(i).copied()
    }
}

fn seed_order(a: &Box3D, b: &Box3D) -> std::cmp::Ordering {
    a.center[1]
        .total_cmp(&b.center[1])
        .then(a.center[0].total_cmp(&b.center[0]))
}

fn merge(group: &[Box3D]) -> Box3D {
    let n = group.len() as f64;
    let mean = |f: &dyn Fn(&Box3D) -> f64| group.iter().map(f).sum::<f64>() / n;
    let length = mean(&|b| b.length);
    let width = mean(&|b| b.width);
    let height = mean(&|b| b.height);
    let x = mean(&|b| b.center[0]);
    let y = mean(&|b| b.center[1]);
    let forward = group.iter().filter(|b| b.azimuth.cos() >= 0.0).count();
    let azimuth = if 2 * forward >= group.len() { 0.0 } else { PI };
    Box3D::on_ground(length, width, height, x, y, azimuth)
}

/// One greedy merging pass. Returns the merged boxes and whether any group
/// held more than one box.
fn merge_pass(boxes: &[Box3D], gamma: f64) -> (Vec<Box3D>, bool) {
    let mut remaining: Vec<Box3D> = boxes.to_vec();
    remaining.sort_by(seed_order);
    let mut out = Vec::with_capacity(remaining.len());
    let mut merged_any = false;
    while !remaining.is_empty() {
        let seed = remaining.remove(0);
        let mut group = vec![seed];
        let mut rest = Vec::with_capacity(remaining.len());
        for b in remaining {
            if iou3d(&b, &seed) > gamma {
                group.push(b);
            } else {
                rest.push(b);
            }
        }
        merged_any |= group.len() > 1;
        out.push(merge(&group));
        remaining = rest;
    }
    (out, merged_any)
}

/// Removes redundant detections of the same object.
///
/// Seeds are visited in ascending `(y, x)` order. Every remaining box whose
/// IoU with the seed exceeds `gamma` is averaged with it into one box whose
/// azimuth follows the majority heading and whose center sits at half its
/// height. Passes repeat until no group merges, so the result has pairwise
/// IoU of at most `gamma`.
pub fn eliminate(boxes: &BoxSet, gamma: f64) -> Result<BoxSet> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("IoU threshold {gamma} must lie in (0, 1)")));
    }
    if let Some(b) = boxes.iter().find(|b| b.frame != Frame::Global) {
        return Err(Error::Config(format!("box in frame {:?} passed to elimination", b.frame)));
    }
    let mut current = boxes.boxes.clone();
    loop {
        let (next, merged) = merge_pass(&current, gamma);
        current = next;
        if !merged {
            break;
        }
    }
    Ok(BoxSet::new(current))
}
