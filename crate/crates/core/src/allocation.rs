//! Joint station assignment and power control, with the baselines it is
//! compared against.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::RsrpTable;
use crate::error::{Error, Result};
use crate::features::GridTensor;
use crate::geometry::Vec3;
use crate::neural::{Tensor, VranModel};
use crate::rng::Rng;

/// Slack allowed on the power ceiling when checking solutions.
const POWER_SLACK: f64 = 1e-9;

/// Received powers of every beamformed link, the noise floor and the
/// per-station power budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    pub table: RsrpTable,
    pub noise: f64,
    pub max_power: Vec<f64>,
}

impl GainModel {
    pub fn new(table: RsrpTable, noise: f64, max_power: Vec<f64>) -> Result<Self> {
        if max_power.len() != table.stations {
            return Err(Error::shape(table.stations, max_power.len()));
        }
        if !(noise > 0.0) || max_power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("noise must be positive and power budgets nonnegative".into()));
        }
        if table.values.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("gains must be nonnegative".into()));
        }
        Ok(Self {
            table,
            noise,
            max_power,
        })
    }

    pub fn stations(&self) -> usize {
        self.table.stations
    }

    pub fn users(&self) -> usize {
        self.table.users
    }

    /// `g[u][v]`: power user `u` receives per watt of the link serving `v`.
    pub fn link_gains(&self, stations: &[usize]) -> Vec<Vec<f64>> {
        (0..stations.len())
            .map(|u| {
                (0..stations.len())
                    .map(|v| self.table.get(stations[v], v, stations[u], u))
                    .collect()
            })
            .collect()
    }

    /// Budget of each user's serving station.
    pub fn budgets(&self, stations: &[usize]) -> Vec<f64> {
        stations.iter().map(|&b| self.max_power[b]).collect()
    }

    pub fn check(&self, stations: &[usize], powers: &[f64]) -> Result<()> {
        if stations.len() != self.users() || powers.len() != self.users() {
            return Err(Error::shape(self.users(), (stations.len(), powers.len())));
        }
        for (u, &b) in stations.iter().enumerate() {
            if b >= self.stations() {
                return Err(Error::Constraint(format!("user {u} served by unknown station {b}")));
            }
            if stations[..u].contains(&b) {
                return Err(Error::Constraint(format!("station {b} serves more than one user")));
            }
            let p = powers[u];
            if !(p >= 0.0 && p <= self.max_power[b] * (1.0 + POWER_SLACK)) {
                return Err(Error::Constraint(format!(
                    "power {p} of user {u} outside [0, {}]",
                    self.max_power[b]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub stations: Vec<usize>,
    pub powers: Vec<f64>,
    /// Sum rate in bit/s/Hz.
    pub rate: f64,
}

impl AllocationSolution {
    pub fn new(stations: Vec<usize>, powers: Vec<f64>, gains: &GainModel) -> Result<Self> {
        let rate = total_rate(&stations, &powers, gains)?;
        Ok(Self { stations, powers, rate })
    }

    pub fn full_power(stations: Vec<usize>, gains: &GainModel) -> Result<Self> {
        let powers = gains.budgets(&stations);
        Self::new(stations, powers, gains)
    }
}

fn rates_from(g: &[Vec<f64>], powers: &[f64], noise: f64) -> f64 {
    (0..powers.len())
        .map(|u| {
            let interference: f64 = (0..powers.len()).filter(|&v| v != u).map(|v| powers[v] * g[u][v]).sum();
            (1.0 + powers[u] * g[u][u] / (interference + noise)).log2()
        })
        .sum()
}

/// Sum over users of `log2(1 + SINR)`.
pub fn total_rate(stations: &[usize], powers: &[f64], gains: &GainModel) -> Result<f64> {
    gains.check(stations, powers)?;
    Ok(rates_from(&gains.link_gains(stations), powers, gains.noise))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WmmseConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseResult {
    pub powers: Vec<f64>,
    /// Sum rate at the start and after every iteration.
    pub trace: Vec<f64>,
}

/// Scalar WMMSE power control on link gains `g` (see [`GainModel::link_gains`])
/// starting from full power.
pub fn wmmse(g: &[Vec<f64>], noise: f64, budgets: &[f64], config: &WmmseConfig) -> WmmseResult {
    wmmse_from(g, noise, budgets, budgets, config)
}

/// WMMSE from the given starting powers. A user that starts at zero power
/// stays there.
pub fn wmmse_from(g: &[Vec<f64>], noise: f64, budgets: &[f64], start: &[f64], config: &WmmseConfig) -> WmmseResult {
    let n = budgets.len();
    let root: Vec<f64> = (0..n).map(|u| g[u][u].sqrt()).collect();
    let mut v: Vec<f64> = start.iter().zip(budgets).map(|(p, b)| p.clamp(0.0, *b).sqrt()).collect();
    let powers = |v: &[f64]| v.iter().map(|a| a * a).collect::<Vec<_>>();
    let mut trace = vec![rates_from(g, &powers(&v), noise)];
    let mut recv = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for _ in 0..config.max_iterations {
        for u in 0..n {
            let total: f64 = (0..n).map(|w| v[w] * v[w] * g[u][w]).sum::<f64>() + noise;
            recv[u] = v[u] * root[u] / total;
            let mse = 1.0 - recv[u] * v[u] * root[u];
            weight[u] = 1.0 / mse.max(f64::MIN_POSITIVE);
        }
        for u in 0..n {
            let denom: f64 = (0..n).map(|w| weight[w] * recv[w] * recv[w] * g[w][u]).sum();
            let cap = budgets[u].sqrt();
            v[u] = if denom > 0.0 {
                (weight[u] * recv[u] * root[u] / denom).clamp(0.0, cap)
            } else {
                cap
            };
        }
        let rate = rates_from(g, &powers(&v), noise);
        let last = *trace.last().expect("trace starts nonempty");
        debug_assert!(
            rate >= last - 1e-9 * last.abs().max(1.0),
            "WMMSE rate fell from {last} to {rate}"
        );
        trace.push(rate);
        if (rate - last).abs() < config.tolerance {
            break;
        }
    }
    WmmseResult {
        powers: powers(&v),
        trace,
    }
}

/// Power control for a fixed assignment.
///
/// WMMSE only finds a local optimum; under strong interference the full-power
/// start can end with the wrong user silenced. It is therefore also run from
/// each single-user start and the best rate wins, earliest start on ties. The
/// result never does worse than full power.
pub fn wmmse_power(stations: &[usize], gains: &GainModel, config: &WmmseConfig) -> Result<Vec<f64>> {
    let budgets = gains.budgets(stations);
    gains.check(stations, &budgets)?;
    let g = gains.link_gains(stations);
    let mut best = budgets.clone();
    let mut best_rate = rates_from(&g, &best, gains.noise);
    let mut starts = vec![budgets.clone()];
    if budgets.len() > 1 {
        starts.extend((0..budgets.len()).map(|u| {
            let mut p = vec![0.0; budgets.len()];
            p[u] = budgets[u];
            p
        }));
    }
    for start in &starts {
        let out = wmmse_from(&g, gains.noise, &budgets, start, config);
        let rate = rates_from(&g, &out.powers, gains.noise);
        if rate > best_rate {
            best_rate = rate;
            best = out.powers;
        }
    }
    Ok(best)
}

/// Ordered selections of `k` distinct stations out of `n`, lexicographic.
pub fn arrangements(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for b in 0..n {
            if !prefix.contains(&b) {
                prefix.push(b);
                extend(n, k, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        extend(n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Exhaustive scheduling at full power followed by WMMSE power control.
/// Ties keep the lexicographically first assignment.
pub fn btram(gains: &GainModel, config: &WmmseConfig) -> Result<AllocationSolution> {
    let (u, b) = (gains.users(), gains.stations());
    if u > b {
        return Err(Error::TooManyUsers { users: u, stations: b });
    }
    if u == 0 {
        return Err(Error::Empty("users"));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in arrangements(b, u) {
        let r = rates_from(&gains.link_gains(&s), &gains.budgets(&s), gains.noise);
        if best.as_ref().is_none_or(|(_, br)| r > *br) {
            best = Some((s, r));
        }
    }
    let (stations, _) = best.expect("at least one arrangement");
    let powers = wmmse_power(&stations, gains, config)?;
    AllocationSolution::new(stations, powers, gains)
}

/// Assigns stations to users from a station-probability map.
///
/// Entries are visited from the largest down. An entry in a cell that still
/// holds an unassigned user gives its station to the lowest-indexed such user
/// and retires that station; other entries are skipped.
pub fn decode_ob(ob: &GridTensor, user_cells: &[(usize, usize)]) -> Result<Vec<usize>> {
    let stations = ob.channels;
    if user_cells.len() > stations {
        return Err(Error::TooManyUsers {
            users: user_cells.len(),
            stations,
        });
    }
    if let Some(&(ix, iy)) = user_cells.iter().find(|(ix, iy)| *ix >= ob.nx || *iy >= ob.ny) {
        return Err(Error::shape((ob.nx, ob.ny), (ix, iy)));
    }
    let mut cells: Vec<(usize, usize)> = user_cells.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(stations * cells.len());
    for (k, &(ix, iy)) in cells.iter().enumerate() {
        for b in 0..stations {
            entries.push((ob.get(b, ix, iy), b, k));
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<Option<usize>> = vec![None; user_cells.len()];
    let mut used = vec![false; stations];
    let mut left = user_cells.len();
    for (_, b, k) in entries {
        if left == 0 {
            break;
        }
        if used[b] {
            continue;
        }
        let waiting = (0..user_cells.len()).find(|&u| out[u].is_none() && user_cells[u] == cells[k]);
        if let Some(u) = waiting {
            out[u] = Some(b);
            used[b] = true;
            left -= 1;
        }
    }
    out.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or(Error::Constraint("station map left users unassigned".into()))
}

/// Vision-based allocation: the network's station map is decoded into an
/// assignment and each user transmits at its cell's power fraction.
pub fn vbram(
    model: &mut VranModel,
    usdf: &Tensor,
    user_cells: &[(usize, usize)],
    gains: &GainModel,
) -> Result<AllocationSolution> {
    let out = model.forward(usdf)?;
    let (b, nx, ny) = out.stations.dims3()?;
    let ob = GridTensor {
        role: crate::features::Role::StationMap,
        channels: b,
        nx,
        ny,
        data: out.stations.data,
    };
    let stations = decode_ob(&ob, user_cells)?;
    let powers = stations
        .iter()
        .zip(user_cells)
        .map(|(&s, &(ix, iy))| out.power.data[ix * ny + iy].clamp(0.0, 1.0) * gains.max_power[s])
        .collect();
    AllocationSolution::new(stations, powers, gains)
}

/// Nearest-station allocation at full power. Users are settled closest pair
/// first, so a user that loses its nearest station falls back to the nearest
/// one still free.
pub fn nbbram(users: &[Vec3], sites: &[Vec3], gains: &GainModel) -> Result<AllocationSolution> {
    if users.len() > sites.len() {
        return Err(Error::TooManyUsers {
            users: users.len(),
            stations: sites.len(),
        });
    }
    let dist = |u: &Vec3, s: &Vec3| ((u[0] - s[0]).powi(2) + (u[1] - s[1]).powi(2) + (u[2] - s[2]).powi(2)).sqrt();
    let mut stations: Vec<Option<usize>> = vec![None; users.len()];
    let mut used = vec![false; sites.len()];
    for _ in 0..users.len() {
        let mut best: Option<(f64, usize, usize)> = None;
        for (u, pos) in users.iter().enumerate() {
            if stations[u].is_some() {
                continue;
            }
            for (b, site) in sites.iter().enumerate() {
                let d = dist(pos, site);
                if !used[b] && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, u, b));
                }
            }
        }
        let (_, u, b) = best.expect("a free station remains");
        stations[u] = Some(b);
        used[b] = true;
    }
    AllocationSolution::full_power(stations.into_iter().map(|s| s.expect("all assigned")).collect(), gains)
}

/// Uniformly random assignment at full power.
pub fn rram(gains: &GainModel, rng: &mut Rng) -> Result<AllocationSolution> {
    let (u, b) = (gains.users(), gains.stations());
    if u > b {
        return Err(Error::TooManyUsers { users: u, stations: b });
    }
    let mut order: Vec<usize> = (0..b).collect();
    order.shuffle(rng);
    order.truncate(u);
    AllocationSolution::full_power(order, gains)
}

/// Ratio of summed rates of a method to those of the reference.
pub fn atrr(method: &[f64], reference: &[f64]) -> Result<f64> {
    if method.len() != reference.len() {
        return Err(Error::shape(reference.len(), method.len()));
    }
    let denom: f64 = reference.iter().sum();
    if !(denom > 0.0) {
        return Err(Error::Empty("reference rate"));
    }
    Ok(method.iter().sum::<f64>() / denom)
}
