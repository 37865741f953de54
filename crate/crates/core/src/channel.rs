//! Geometric multipath channels between roadside ULAs and vehicle ULAs,
//! beam codebooks, exhaustive beam training and cross-link RSRP tables.
//!
//! Paths are the line of sight plus first-order image-source reflections off
//! the two building walls and off the vertical faces of other vehicles. A path
//! survives only if each of its straight segments misses every vehicle body.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rng::{self, tag};
use crate::scene::{RoadGeometry, Vehicle};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// `(1/√N) [1, e^{jπ sin φ}, ..., e^{j(N-1)π sin φ}]`.
pub fn steering(phi: f64, n: usize) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let s = PI * phi.sin();
    (0..n).map(|k| Complex64::from_polar(scale, s * k as f64)).collect()
}

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, c: f64) {
        for z in &mut self.data {
            *z *= c;
        }
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(v.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Beamformed power `|w^H H f|²`.
    pub fn beam_power(&self, rx: &[Complex64], tx: &[Complex64]) -> f64 {
        let hf = self.mul_vec(tx);
        inner(rx, &hf).norm_sqr()
    }
}

/// `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    LineOfSight,
    Wall,
    Vehicle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Departure azimuth in the base-station array frame.
    pub aod: f64,
    /// Arrival azimuth in the vehicle array frame.
    pub aoa: f64,
    pub kind: PathKind,
    pub bounce: Option<Vec3>,
}

/// Channel `H` (receive antennas × transmit antennas) with its paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: CMatrix,
    pub paths: Vec<Path>,
    pub bs: usize,
    pub vehicle: u64,
}

/// Base-station array placement. The array axis runs along the lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsSite {
    pub position: Vec3,
}

impl BsSite {
    pub fn plane(&self) -> (f64, f64) {
        (self.position[0], self.position[1])
    }

    /// Array axis and broadside, both horizontal unit vectors. Broadside
    /// faces the road.
    fn frame(&self) -> ([f64; 2], [f64; 2]) {
        let facing = if self.position[0] > 0.0 { -1.0 } else { 1.0 };
        ([0.0, 1.0], [facing, 0.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub bs_antennas: usize,
    pub user_antennas: usize,
    pub tx_beams: usize,
    pub rx_beams: usize,
    pub carrier_hz: f64,
    pub noise_power: f64,
    /// Average per-link SNR used to calibrate the per-station power budget.
    pub snr_db: f64,
    pub wall_loss_db: f64,
    pub vehicle_loss_db: f64,
    pub max_paths: usize,
    pub sites: Vec<BsSite>,
    /// Height of the vehicle array above the roof.
    pub roof_offset: f64,
}

impl RadioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn stations(&self) -> usize {
        self.sites.len()
    }

    /// Sites at the camera poles, arrays mounted at 4.5 m.
    pub fn default_sites() -> Vec<BsSite> {
        [(7.5, -20.0), (-7.5, 20.0), (-7.5, -20.0), (7.5, 20.0)]
            .into_iter()
            .map(|(x, y)| BsSite { position: [x, y, 4.5] })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bs_antennas == 0 || self.user_antennas == 0 || self.tx_beams == 0 || self.rx_beams == 0 {
            return Err(Error::Config("antenna and beam counts must be positive".into()));
        }
        if self.max_paths == 0 {
            return Err(Error::Config("at least one path must be kept".into()));
        }
        if self.sites.is_empty() {
            return Err(Error::Config("at least one base station is required".into()));
        }
        if !(self.carrier_hz > 0.0 && self.noise_power > 0.0) {
            return Err(Error::Config("carrier frequency and noise power must be positive".into()));
        }
        Ok(())
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 16,
            user_antennas: 8,
            tx_beams: 16,
            rx_beams: 8,
            carrier_hz: 28e9,
            noise_power: 1.0,
            snr_db: 25.0,
            wall_loss_db: 10.0,
            vehicle_loss_db: 6.0,
            max_paths: 25,
            sites: Self::default_sites(),
            roof_offset: 0.05,
        }
    }
}

/// Axis-aligned body of a vehicle.
#[derive(Debug, Clone, Copy)]
struct Body {
    min: Vec3,
    max: Vec3,
}

impl Body {
    fn of(v: &Vehicle, road: &RoadGeometry) -> Self {
        let x = road.lane_center(v.lane);
        Self {
            min: [x - v.spec.width / 2.0, v.y - v.spec.length / 2.0, 0.0],
            max: [x + v.spec.width / 2.0, v.y + v.spec.length / 2.0, v.spec.height],
        }
    }

    /// Slab test for the open segment `a → b`.
    fn blocks(&self, a: Vec3, b: Vec3) -> bool {
        const EPS: f64 = 1e-9;
        let mut t0 = EPS;
        let mut t1 = 1.0 - EPS;
        for k in 0..3 {
            let d = b[k] - a[k];
            if d.abs() < 1e-15 {
                if a[k] < self.min[k] || a[k] > self.max[k] {
                    return false;
                }
                continue;
            }
            let mut ta = (self.min[k] - a[k]) / d;
            let mut tb = (self.max[k] - a[k]) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// Vehicle array position: roof center plus a small offset.
pub fn user_antenna(v: &Vehicle, road: &RoadGeometry, radio: &RadioConfig) -> Vec3 {
    [road.lane_center(v.lane), v.y, v.spec.height + radio.roof_offset]
}

fn local_azimuth(dir: Vec3, axis: [f64; 2], broadside: [f64; 2]) -> f64 {
    let along = dir[0] * axis[0] + dir[1] * axis[1];
    let across = dir[0] * broadside[0] + dir[1] * broadside[1];
    along.atan2(across)
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// A flat reflector: points with coordinate `axis` equal to `at`, bounded in
/// the other two coordinates. `outward` is the side a wave must arrive from.
struct Reflector {
    axis: usize,
    at: f64,
    outward: f64,
    lo: Vec3,
    hi: Vec3,
    loss_db: f64,
    kind: PathKind,
    owner: Option<usize>,
}

impl Reflector {
    fn bounce(&self, tx: Vec3, rx: Vec3) -> Option<(Vec3, f64)> {
        let a = self.axis;
        if self.outward * (tx[a] - self.at) <= 0.0 || self.outward * (rx[a] - self.at) <= 0.0 {
            return None;
        }
        let mut image = tx;
        image[a] = 2.0 * self.at - tx[a];
        let t = (self.at - image[a]) / (rx[a] - image[a]);
        let q = [
            image[0] + t * (rx[0] - image[0]),
            image[1] + t * (rx[1] - image[1]),
            image[2] + t * (rx[2] - image[2]),
        ];
        for k in 0..3 {
            if k != a && (q[k] < self.lo[k] || q[k] > self.hi[k]) {
                return None;
            }
        }
        Some((q, norm(sub(rx, image))))
    }
}

fn reflectors(vehicles: &[Vehicle], user: usize, road: &RoadGeometry, radio: &RadioConfig) -> Vec<Reflector> {
    let inf = f64::INFINITY;
    let mut out = Vec::new();
    for (at, outward) in [(road.wall_offset, -1.0), (-road.wall_offset, 1.0)] {
        out.push(Reflector {
            axis: 0,
            at,
            outward,
            lo: [-inf, -inf, 0.0],
            hi: [inf, inf, inf],
            loss_db: radio.wall_loss_db,
            kind: PathKind::Wall,
            owner: None,
        });
    }
    for (i, v) in vehicles.iter().enumerate() {
        if i == user {
            continue;
        }
        let b = Body::of(v, road);
        for axis in 0..2 {
            for (at, outward) in [(b.min[axis], -1.0), (b.max[axis], 1.0)] {
                out.push(Reflector {
                    axis,
                    at,
                    outward,
                    lo: b.min,
                    hi: b.max,
                    loss_db: radio.vehicle_loss_db,
                    kind: PathKind::Vehicle,
                    owner: Some(i),
                });
            }
        }
    }
    out
}

/// Propagation paths from base station `bs` to vehicle `vehicles[user]`.
///
/// Phases are drawn from a stream keyed by `(seed, step, bs, vehicle id)`, so
/// the result does not depend on evaluation order.
pub fn trace_paths(
    bs: usize,
    user: usize,
    vehicles: &[Vehicle],
    road: &RoadGeometry,
    radio: &RadioConfig,
    seed: u64,
    step: usize,
) -> Vec<Path> {
    let site = radio.sites[bs];
    let target = &vehicles[user];
    let tx = site.position;
    let rx = user_antenna(target, road, radio);
    let bodies: Vec<Body> = vehicles.iter().map(|v| Body::of(v, road)).collect();
    let clear = |a: Vec3, b: Vec3, skip: Option<usize>| {
        bodies
            .iter()
            .enumerate()
            .all(|(i, body)| i == user || Some(i) == skip || !body.blocks(a, b))
    };
    let lambda = radio.wavelength();
    let (bs_axis, bs_broad) = site.frame();
    let (sh, ch) = target.heading().sin_cos();
    let (ue_axis, ue_broad) = ([sh, ch], [ch, -sh]);
    let mut phases = rng::stream(seed, &[tag::PHASE, step as u64, bs as u64, target.id]);

    let mut paths = Vec::new();
    let mut push = |first_hop: Vec3, last_hop: Vec3, length: f64, loss_db: f64, kind, bounce| {
        let phase: f64 = phases.random_range(0.0..2.0 * PI);
        let amp = lambda / (4.0 * PI * length) * 10f64.powf(-loss_db / 20.0);
        paths.push(Path {
            gain: Complex64::from_polar(amp, phase),
            aod: local_azimuth(sub(first_hop, tx), bs_axis, bs_broad),
            aoa: local_azimuth(sub(last_hop, rx), ue_axis, ue_broad),
            kind,
            bounce,
        });
    };
    if clear(tx, rx, None) {
        push(rx, tx, norm(sub(rx, tx)), 0.0, PathKind::LineOfSight, None);
    }
    for r in reflectors(vehicles, user, road, radio) {
        if let Some((q, length)) = r.bounce(tx, rx) {
            if clear(tx, q, r.owner) && clear(q, rx, r.owner) {
                push(q, q, length, r.loss_db, r.kind, Some(q));
            }
        }
    }
    paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    paths.truncate(radio.max_paths);
    paths
}

/// `H = Σ α a_r(φ^r) a_t(φ^t)^H`.
pub fn assemble(paths: &[Path], bs_antennas: usize, user_antennas: usize) -> CMatrix {
    let mut h = CMatrix::zeros(user_antennas, bs_antennas);
    for p in paths {
        let ar = steering(p.aoa, user_antennas);
        let at = steering(p.aod, bs_antennas);
        for (r, ar_r) in ar.iter().enumerate() {
            let g = p.gain * ar_r;
            for (c, at_c) in at.iter().enumerate() {
                h.data[r * bs_antennas + c] += g * at_c.conj();
            }
        }
    }
    h
}

/// Traces and assembles the channel between `bs` and `vehicles[user]`.
pub fn channel(
    bs: usize,
    user: usize,
    vehicles: &[Vehicle],
    road: &RoadGeometry,
    radio: &RadioConfig,
    seed: u64,
    step: usize,
) -> ChannelMatrix {
    let paths = trace_paths(bs, user, vehicles, road, radio, seed, step);
    ChannelMatrix {
        h: assemble(&paths, radio.bs_antennas, radio.user_antennas),
        paths,
        bs,
        vehicle: vehicles[user].id,
    }
}

/// Steering beams on a uniform angle grid over `[-π/2, π/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub tx: Vec<Vec<Complex64>>,
    pub rx: Vec<Vec<Complex64>>,
}

impl Codebook {
    /// Angle of beam `i` (0-based) in a codebook of `n` beams.
    pub fn angle(i: usize, n: usize) -> f64 {
        (2.0 * i as f64 - n as f64) / (2.0 * n as f64) * PI
    }

    pub fn new(tx_beams: usize, bs_antennas: usize, rx_beams: usize, user_antennas: usize) -> Self {
        Self {
            tx: (0..tx_beams).map(|i| steering(Self::angle(i, tx_beams), bs_antennas)).collect(),
            rx: (0..rx_beams).map(|j| steering(Self::angle(j, rx_beams), user_antennas)).collect(),
        }
    }

    pub fn from_radio(radio: &RadioConfig) -> Self {
        Self::new(radio.tx_beams, radio.bs_antennas, radio.rx_beams, radio.user_antennas)
    }

    pub fn pairs(&self) -> usize {
        self.tx.len() * self.rx.len()
    }

    /// Transmit-major pair index.
    pub fn pair_index(&self, tx: usize, rx: usize) -> usize {
        tx * self.rx.len() + rx
    }

    pub fn split(&self, pair: usize) -> (usize, usize) {
        (pair / self.rx.len(), pair % self.rx.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamChoice {
    pub pair: usize,
    pub rsrp: f64,
}

/// Exhaustive search for the beam pair with the largest received power.
/// Ties keep the lowest pair index.
pub fn beam_train(h: &CMatrix, cb: &Codebook) -> BeamChoice {
    let mut best = BeamChoice { pair: 0, rsrp: f64::NEG_INFINITY };
    for (i, f) in cb.tx.iter().enumerate() {
        let hf = h.mul_vec(f);
        for (j, w) in cb.rx.iter().enumerate() {
            let p = inner(w, &hf).norm_sqr();
            if p > best.rsrp {
                best = BeamChoice {
                    pair: cb.pair_index(i, j),
                    rsrp: p,
                };
            }
        }
    }
    best
}

/// Cross-link powers between `B` stations and `U` users.
///
/// `get(b, u, b2, u2)` is the power received by user `u2` through the
/// receive beam it trained with station `b2`, when station `b` transmits on
/// the beam it trained for user `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrpTable {
    pub stations: usize,
    pub users: usize,
    pub values: Vec<f64>,
}

impl RsrpTable {
    pub fn zeros(stations: usize, users: usize) -> Self {
        Self {
            stations,
            users,
            values: vec![0.0; stations * users * stations * users],
        }
    }

    fn offset(&self, b: usize, u: usize, b2: usize, u2: usize) -> usize {
        ((b * self.users + u) * self.stations + b2) * self.users + u2
    }

    pub fn get(&self, b: usize, u: usize, b2: usize, u2: usize) -> f64 {
        self.values[self.offset(b, u, b2, u2)]
    }

    pub fn set(&mut self, b: usize, u: usize, b2: usize, u2: usize, v: f64) {
        let o = self.offset(b, u, b2, u2);
        self.values[o] = v;
    }

    /// Restriction to a subset of users, in the given order.
    pub fn select_users(&self, users: &[usize]) -> Self {
        let mut out = Self::zeros(self.stations, users.len());
        for b in 0..self.stations {
            for (i, &u) in users.iter().enumerate() {
                for b2 in 0..self.stations {
                    for (j, &u2) in users.iter().enumerate() {
                        out.set(b, i, b2, j, self.get(b, u, b2, u2));
                    }
                }
            }
        }
        out
    }
}

/// Fills the table from channels `h[b][u]` and trained beams `beams[b][u]`.
pub fn rsrp_table(h: &[Vec<CMatrix>], beams: &[Vec<BeamChoice>], cb: &Codebook) -> Result<RsrpTable> {
    let stations = h.len();
    let users = h.first().map_or(0, Vec::len);
    if beams.len() != stations {
        return Err(Error::shape(stations, beams.len()));
    }
    if h.iter().any(|r| r.len() != users) || beams.iter().any(|r| r.len() != users) {
        return Err(Error::shape(users, beams.iter().map(Vec::len).collect::<Vec<_>>()));
    }
    let mut table = RsrpTable::zeros(stations, users);
    for b in 0..stations {
        for u in 0..users {
            let (ti, _) = cb.split(beams[b][u].pair);
            for u2 in 0..users {
                // station b transmitting towards u, as heard by u2
                let hf = h[b][u2].mul_vec(&cb.tx[ti]);
                for b2 in 0..stations {
                    let (_, rj) = cb.split(beams[b2][u2].pair);
                    table.set(b, u, b2, u2, inner(&cb.rx[rj], &hf).norm_sqr());
                }
            }
        }
    }
    Ok(table)
}

/// Per-station power budget that makes the average of
/// `P_max ‖H‖_F² / σ²` over `links` channels equal the target SNR.
pub fn calibrate_power(frobenius_sum: &[f64], links: &[usize], radio: &RadioConfig) -> Result<Vec<f64>> {
    let target = 10f64.powf(radio.snr_db / 10.0);
    frobenius_sum
        .iter()
        .zip(links)
        .map(|(&s, &n)| {
            if n == 0 || s <= 0.0 {
                Err(Error::Empty("channels for power calibration"))
            } else {
                Ok(target * radio.noise_power * n as f64 / s)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Lane, VehicleSpec};

    fn vehicle(id: u64, spec: usize, lane: Lane, y: f64) -> Vehicle {
        Vehicle {
            id,
            spec: VehicleSpec::catalog()[spec].clone(),
            lane,
            y,
            speed: 10.0,
            is_user: true,
        }
    }

    #[test]
    fn steering_basics() {
        for z in steering(0.0, 4) {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let a = steering(0.3, 7);
        let b = steering(PI - 0.3, 7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!((inner(&a, &a).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_path_channel() {
        let p = Path {
            gain: Complex64::new(1.0, 0.0),
            aod: 0.0,
            aoa: 0.0,
            kind: PathKind::LineOfSight,
            bounce: None,
        };
        let h = assemble(&[p], 16, 4);
        for z in &h.data {
            assert!((z - Complex64::new(1.0 / 8.0, 0.0)).norm() < 1e-15);
        }
        assert_eq!(assemble(&[], 3, 2), CMatrix::zeros(2, 3));
    }

    #[test]
    fn matched_beam_is_found() {
        let cb = Codebook::new(16, 16, 8, 8);
        let p = Path {
            gain: Complex64::new(1.0, 0.0),
            aod: Codebook::angle(5, 16),
            aoa: Codebook::angle(2, 8),
            kind: PathKind::LineOfSight,
            bounce: None,
        };
        let mut h = assemble(&[p], 16, 8);
        let best = beam_train(&h, &cb);
        assert_eq!(best.pair, cb.pair_index(5, 2));
        assert!((best.rsrp - 1.0).abs() < 1e-12);
        h.scale(3.0);
        let scaled = beam_train(&h, &cb);
        assert_eq!(scaled.pair, best.pair);
        assert!((scaled.rsrp - 9.0).abs() < 1e-10);
        assert_eq!(beam_train(&CMatrix::zeros(8, 16), &cb).pair, 0);
    }

    #[test]
    fn lone_vehicle_has_los_and_wall_paths() {
        let road = RoadGeometry::default();
        let radio = RadioConfig::default();
        let vs = [vehicle(0, 0, Lane::Right, 0.0)];
        let paths = trace_paths(0, 0, &vs, &road, &radio, 1, 0);
        assert_eq!(paths.iter().filter(|p| p.kind == PathKind::LineOfSight).count(), 1);
        assert_eq!(paths.iter().filter(|p| p.kind == PathKind::Wall).count(), 2);
        assert_eq!(paths.len(), 3);
        let los = paths.iter().find(|p| p.kind == PathKind::LineOfSight).unwrap();
        let rx = user_antenna(&vs[0], &road, &radio);
        let d = norm(sub(rx, radio.sites[0].position));
        let friis = radio.wavelength() / (4.0 * PI * d);
        assert!((los.gain.norm() - friis).abs() < 1e-15);
    }

    #[test]
    fn bus_blocks_line_of_sight() {
        let road = RoadGeometry::default();
        let radio = RadioConfig::default();
        // station 0 at (7.5, -20); user car in the left lane at y = -10, bus in
        // the right lane between them
        let vs = [vehicle(0, 0, Lane::Left, -10.0), vehicle(1, 3, Lane::Right, -16.0)];
        let paths = trace_paths(0, 0, &vs, &road, &radio, 1, 0);
        assert!(paths.iter().all(|p| p.kind != PathKind::LineOfSight));
    }

    #[test]
    fn rsrp_diagonal_matches_training() {
        let road = RoadGeometry::default();
        let radio = RadioConfig::default();
        let cb = Codebook::from_radio(&radio);
        let vs = [vehicle(0, 0, Lane::Right, 5.0), vehicle(1, 1, Lane::Left, -12.0)];
        let h: Vec<Vec<CMatrix>> = (0..4)
            .map(|b| (0..2).map(|u| channel(b, u, &vs, &road, &radio, 3, 0).h).collect())
            .collect();
        let beams: Vec<Vec<BeamChoice>> = h.iter().map(|r| r.iter().map(|m| beam_train(m, &cb)).collect()).collect();
        let t = rsrp_table(&h, &beams, &cb).unwrap();
        for b in 0..4 {
            for u in 0..2 {
                assert!((t.get(b, u, b, u) - beams[b][u].rsrp).abs() <= 1e-12 * beams[b][u].rsrp);
            }
        }
        assert!(t.values.iter().all(|v| *v >= 0.0));
        let sub = t.select_users(&[1]);
        assert_eq!(sub.get(2, 0, 3, 0), t.get(2, 1, 3, 1));
    }
}
