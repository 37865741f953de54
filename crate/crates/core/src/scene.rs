//! Two-lane traffic, per-camera noisy detections and fused box sets.
//!
//! Vehicles drive at constant speed along `Y`, held back only by the vehicle
//! in front of them. The right lane (`x > 0`) heads towards `+Y`, the left
//! lane towards `-Y`. Detections are exact camera-frame transforms of the
//! true boxes plus Gaussian noise.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ccs_to_gcs, eliminate, gcs_to_ccs, Box3D, BoxSet, CameraPose, Frame};
use crate::rng::{self, tag, Rng};

/// Vehicle type and its nominal dimensions in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub name: String,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl VehicleSpec {
    fn new(name: &str, length: f64, width: f64, height: f64) -> Self {
        Self {
            name: name.into(),
            length,
            width,
            height,
        }
    }

    /// Car, Sedan, Van and Bus.
    pub fn catalog() -> Vec<VehicleSpec> {
        vec![
            Self::new("Car", 3.71, 1.79, 1.55),
            Self::new("Sedan", 4.86, 2.03, 1.65),
            Self::new("Van", 5.20, 2.61, 2.47),
            Self::new("Bus", 11.08, 3.25, 3.33),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lane {
    Left,
    Right,
}

impl Lane {
    pub fn heading(self) -> f64 {
        match self {
            Lane::Right => 0.0,
            Lane::Left => PI,
        }
    }

    /// +1 when travelling towards +Y.
    pub fn direction(self) -> f64 {
        match self {
            Lane::Right => 1.0,
            Lane::Left => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u64,
    pub spec: VehicleSpec,
    pub lane: Lane,
    pub y: f64,
    pub speed: f64,
    pub is_user: bool,
}

impl Vehicle {
    pub fn heading(&self) -> f64 {
        self.lane.heading()
    }

    pub fn ground_box(&self, road: &RoadGeometry) -> Box3D {
        Box3D::on_ground(
            self.spec.length,
            self.spec.width,
            self.spec.height,
            road.lane_center(self.lane),
            self.y,
            self.heading(),
        )
    }

    /// Distance travelled along the lane direction.
    fn progress(&self) -> f64 {
        self.y * self.lane.direction()
    }
}

/// Straight two-lane road with walls on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub lane_width: f64,
    /// Vehicles exist while their center lies in `[y_min, y_max)`.
    pub y_min: f64,
    pub y_max: f64,
    /// Building walls at `x = ±wall_offset`.
    pub wall_offset: f64,
}

impl RoadGeometry {
    pub fn lane_center(&self, lane: Lane) -> f64 {
        match lane {
            Lane::Right => self.lane_width / 2.0,
            Lane::Left => -self.lane_width / 2.0,
        }
    }

    fn contains(&self, y: f64) -> bool {
        y >= self.y_min && y < self.y_max
    }
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            y_min: -41.6,
            y_max: 41.6,
            wall_offset: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub road: RoadGeometry,
    pub cameras: Vec<CameraPose>,
    pub catalog: Vec<VehicleSpec>,
    /// Relative spawn weights, one per catalog entry.
    pub type_weights: Vec<f64>,
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    /// Chance per step of an extra arrival while below `max_vehicles`.
    pub arrival_rate: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Bumper-to-bumper gap kept inside a lane.
    pub min_gap: f64,
    pub sigma_pos: f64,
    pub sigma_size: f64,
    pub frame_interval: f64,
    /// Detection stride: beams are trained every `stride` frames.
    pub stride: usize,
    /// IoU threshold of box elimination.
    pub iou_threshold: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// Beam coherence time.
    pub fn coherence_time(&self) -> f64 {
        self.frame_interval * self.stride as f64
    }

    /// Four cameras at the roadside, two looking each way along the road.
    pub fn default_cameras() -> Vec<CameraPose> {
        let cam = |x: f64, y: f64, azimuth: f64| CameraPose {
            position: [x, y, 6.0],
            elevation: 0.15,
            azimuth,
            fov: 100f64.to_radians(),
            max_range: 70.0,
        };
        vec![
            cam(7.5, -20.0, 0.0),
            cam(-7.5, 20.0, PI),
            cam(-7.5, -20.0, 0.0),
            cam(7.5, 20.0, PI),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Config("at least one camera is required".into()));
        }
        for c in &self.cameras {
            c.validate()?;
        }
        if self.catalog.is_empty() || self.type_weights.len() != self.catalog.len() {
            return Err(Error::Config("catalog and type weights must be nonempty and aligned".into()));
        }
        if self
            .catalog
            .iter()
            .any(|s| !(s.length > 0.0 && s.width > 0.0 && s.height > 0.0))
        {
            return Err(Error::Config("vehicle sizes must be positive".into()));
        }
        if self.type_weights.iter().any(|w| !(*w >= 0.0)) || self.type_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("type weights must be nonnegative with positive sum".into()));
        }
        if self.min_vehicles > self.max_vehicles {
            return Err(Error::Config("vehicle count range is empty".into()));
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max) {
            return Err(Error::Config("speed range must be positive and ordered".into()));
        }
        if !(self.frame_interval > 0.0) || self.stride == 0 {
            return Err(Error::Config("frame interval and stride must be positive".into()));
        }
        if !(self.sigma_pos >= 0.0 && self.sigma_size >= 0.0) {
            return Err(Error::Config("noise levels must be nonnegative".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config("IoU threshold must lie in (0, 1)".into()));
        }
        if !(self.road.y_min < self.road.y_max && self.road.lane_width > 0.0) {
            return Err(Error::Config("road extent is empty".into()));
        }
        Ok(())
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            road: RoadGeometry::default(),
            cameras: Self::default_cameras(),
            catalog: VehicleSpec::catalog(),
            type_weights: vec![0.4, 0.3, 0.2, 0.1],
            min_vehicles: 3,
            max_vehicles: 8,
            arrival_rate: 0.03,
            speed_min: 8.0,
            speed_max: 14.0,
            min_gap: 2.0,
            sigma_pos: 0.2,
            sigma_size: 0.05,
            frame_interval: 0.05,
            stride: 5,
            iou_threshold: 1.0 / 3.0,
            seed: 0,
        }
    }
}

/// One simulation instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub vehicles: Vec<Vehicle>,
    /// Camera-frame detections, one list per camera.
    pub detections: Vec<Vec<Box3D>>,
    pub fused: BoxSet,
}

impl Snapshot {
    pub fn vehicle(&self, id: u64) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    /// Index into `fused` of the box attributed to vehicle `id`.
    pub fn fused_index_of(&self, id: u64) -> Option<usize> {
        self.fused.vehicle_ids.iter().position(|&v| v == id)
    }
}

/// Evolving traffic state of one trajectory.
#[derive(Debug, Clone)]
pub struct Traffic {
    pub vehicles: Vec<Vehicle>,
    next_id: u64,
    rng: Rng,
}

impl Traffic {
    /// Traffic seeded with an initial random population.
    pub fn new(config: &SceneConfig) -> Result<Self> {
        config.validate()?;
        let mut t = Self::with_vehicles(config, Vec::new());
        let target = t.rng.random_range(config.min_vehicles..=config.max_vehicles);
        let mut attempts = 0;
        while t.vehicles.len() < target && attempts < 1000 {
            attempts += 1;
            let y = t.rng.random_range(config.road.y_min..config.road.y_max);
            t.try_spawn(config, Some(y));
        }
        Ok(t)
    }

    /// Traffic starting from an explicit vehicle list.
    pub fn with_vehicles(config: &SceneConfig, vehicles: Vec<Vehicle>) -> Self {
        let next_id = vehicles.iter().map(|v| v.id + 1).max().unwrap_or(0);
        Self {
            vehicles,
            next_id,
            rng: rng::stream(config.seed, &[tag::TRAFFIC]),
        }
    }

    fn random_spec(&mut self, config: &SceneConfig) -> VehicleSpec {
        let total: f64 = config.type_weights.iter().sum();
        let mut pick = self.rng.random_range(0.0..total);
        for (spec, w) in config.catalog.iter().zip(&config.type_weights) {
            if pick < *w {
                return spec.clone();
            }
            pick -= w;
        }
        config.catalog.last().cloned().expect("catalog validated nonempty")
    }

    fn fits(&self, config: &SceneConfig, lane: Lane, y: f64, length: f64) -> bool {
        self.vehicles.iter().filter(|v| v.lane == lane).all(|v| {
            (v.y - y).abs() >= (v.spec.length + length) / 2.0 + config.min_gap
        })
    }

    /// Places a new vehicle at `y` or, when `None`, at the first free spot
    /// downstream of a lane entrance.
    fn try_spawn(&mut self, config: &SceneConfig, y: Option<f64>) -> bool {
        let spec = self.random_spec(config);
        let first = if self.rng.random_bool(0.5) { Lane::Right } else { Lane::Left };
        let speed = self.rng.random_range(config.speed_min..=config.speed_max);
        let is_user = true;
        let road = &config.road;
        for lane in [first, if first == Lane::Right { Lane::Left } else { Lane::Right }] {
            let candidates: Vec<f64> = match y {
                Some(y) => vec![y],
                None => {
                    let span = road.y_max - road.y_min - spec.length;
                    let n = (span / 0.5).floor().max(0.0) as usize;
                    (0..=n)
                        .map(|k| {
                            let s = spec.length / 2.0 + 0.5 * k as f64;
                            match lane {
                                Lane::Right => road.y_min + s,
                                Lane::Left => road.y_max - s,
                            }
                        })
                        .collect()
                }
            };
            if let Some(&pos) = candidates
                .iter()
                .find(|&&c| road.contains(c) && self.fits(config, lane, c, spec.length))
            {
                self.vehicles.push(Vehicle {
                    id: self.next_id,
                    spec: spec.clone(),
                    lane,
                    y: pos,
                    speed,
                    is_user,
                });
                self.next_id += 1;
                return true;
            }
            if y.is_some() {
                break;
            }
        }
        false
    }

    /// Advances every vehicle by one frame, removes leavers and admits
    /// arrivals.
    pub fn advance(&mut self, config: &SceneConfig) {
        let dt = config.frame_interval;
        for lane in [Lane::Right, Lane::Left] {
            let mut idx: Vec<usize> = (0..self.vehicles.len())
                .filter(|&i| self.vehicles[i].lane == lane)
                .collect();
            idx.sort_by(|&a, &b| self.vehicles[b].progress().total_cmp(&self.vehicles[a].progress()));
            let mut leader: Option<(f64, f64)> = None;
            for i in idx {
                let v = &mut self.vehicles[i];
                let dir = lane.direction();
                let mut s = v.progress() + v.speed * dt;
                if let Some((ls, llen)) = leader {
                    s = s.min(ls - (llen + v.spec.length) / 2.0 - config.min_gap);
                }
                // never reverse
                s = s.max(v.progress());
                v.y = s * dir;
                leader = Some((s, v.spec.length));
            }
        }
        self.vehicles.retain(|v| config.road.contains(v.y));
        while self.vehicles.len() < config.min_vehicles {
            if !self.try_spawn(config, None) {
                break;
            }
        }
        if self.vehicles.len() < config.max_vehicles && self.rng.random_bool(config.arrival_rate.clamp(0.0, 1.0)) {
            self.try_spawn(config, None);
        }
    }
}

/// Noisy camera-frame detections of every vehicle whose center each camera
/// sees. Randomness depends only on `(seed, step)`.
pub fn detect(vehicles: &[Vehicle], step: usize, config: &SceneConfig) -> Vec<Vec<Box3D>> {
    let mut rng = rng::stream(config.seed, &[tag::DETECT, step as u64]);
    let pos = Normal::new(0.0, config.sigma_pos.max(0.0)).expect("finite sigma");
    let size = Normal::new(0.0, config.sigma_size.max(0.0)).expect("finite sigma");
    config
        .cameras
        .iter()
        .enumerate()
        .map(|(c, pose)| {
            vehicles
                .iter()
                .filter_map(|v| {
                    let truth = v.ground_box(&config.road);
                    if !pose.sees(truth.center) {
                        return None;
                    }
                    let mut b = gcs_to_ccs(&truth, pose, c);
                    if config.sigma_pos > 0.0 {
                        for x in b.center.iter_mut() {
                            *x += pos.sample(&mut rng);
                        }
                    }
                    if config.sigma_size > 0.0 {
                        b.length *= (1.0 + size.sample(&mut rng)).max(0.1);
                        b.width *= (1.0 + size.sample(&mut rng)).max(0.1);
                        b.height *= (1.0 + size.sample(&mut rng)).max(0.1);
                    }
                    Some(b)
                })
                .collect()
        })
        .collect()
}

/// Maps detections to the global frame, removes duplicates and attributes
/// each fused box to the vehicle with the nearest true center.
pub fn fuse(detections: &[Vec<Box3D>], vehicles: &[Vehicle], config: &SceneConfig) -> Result<BoxSet> {
    let mut global = Vec::new();
    for (c, list) in detections.iter().enumerate() {
        let pose = config
            .cameras
            .get(c)
            .ok_or_else(|| Error::Config(format!("detections for unknown camera {c}")))?;
        for b in list {
            if b.frame != Frame::Camera(c) {
                return Err(Error::Format(format!("detection in frame {:?} listed under camera {c}", b.frame)));
            }
            global.push(ccs_to_gcs(b, pose));
        }
    }
    let mut fused = eliminate(&BoxSet::new(global), config.iou_threshold)?;
    if !vehicles.is_empty() {
        fused.vehicle_ids = fused
            .boxes
            .iter()
            .map(|b| {
                vehicles
                    .iter()
                    .map(|v| {
                        let d = (config.road.lane_center(v.lane) - b.center[0]).hypot(v.y - b.center[1]);
                        (d, v.id)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, id)| id)
                    .expect("vehicles nonempty")
            })
            .collect();
    }
    Ok(fused)
}

/// Builds the snapshot for the current traffic state.
pub fn observe(vehicles: &[Vehicle], step: usize, config: &SceneConfig) -> Result<Snapshot> {
    let detections = detect(vehicles, step, config);
    let fused = fuse(&detections, vehicles, config)?;
    Ok(Snapshot {
        step,
        time: step as f64 * config.frame_interval,
        vehicles: vehicles.to_vec(),
        detections,
        fused,
    })
}

/// Runs one trajectory for `steps` frames; the first snapshot is the initial
/// state.
pub fn simulate(config: &SceneConfig, steps: usize) -> Result<Vec<Snapshot>> {
    if steps == 0 {
        return Err(Error::Config("at least one step is required".into()));
    }
    let mut traffic = Traffic::new(config)?;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        if step > 0 {
            traffic.advance(config);
        }
        out.push(observe(&traffic.vehicles, step, config)?);
    }
    Ok(out)
}
