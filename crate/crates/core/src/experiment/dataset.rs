use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::allocation::{btram, GainModel};
use crate::channel::{beam_train, calibrate_power, channel, rsrp_table, BeamChoice, CMatrix, Codebook, RsrpTable};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scene::{simulate, Snapshot};

pub const SCHEMA_VERSION: u32 = 1;

/// A vehicle that can serve as a matching sample at this moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub vehicle: u64,
    /// Index of the vehicle's fused box.
    pub truth: usize,
}

/// A user combination with its beam-training allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub users: Vec<u64>,
    pub stations: Vec<usize>,
    /// Powers as fractions of the serving station's budget.
    pub powers: Vec<f64>,
    pub rate: f64,
}

/// Everything recorded at one beam coherence moment of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub schema_version: u32,
    pub trajectory: usize,
    pub moment: usize,
    pub snapshot: Snapshot,
    /// `links[b][v]`: trained beam pair between station `b` and
    /// `snapshot.vehicles[v]`.
    pub links: Vec<Vec<BeamChoice>>,
    /// Per station, summed squared Frobenius norms of its channels.
    pub frobenius: Vec<f64>,
    /// Received powers over all vehicles in snapshot order.
    pub rsrp: RsrpTable,
    pub matching: Vec<MatchRecord>,
    pub allocation: Vec<AllocationRecord>,
}

impl MomentRecord {
    pub fn vehicle_index(&self, id: u64) -> Option<usize> {
        self.snapshot.vehicles.iter().position(|v| v.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub seed: u64,
    pub max_power: Vec<f64>,
    pub splits: Splits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub train: Vec<MomentRecord>,
    pub valid: Vec<MomentRecord>,
    pub test: Vec<MomentRecord>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[MomentRecord] {
        match s {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?.as_bytes())?;
        for s in Split::ALL {
            let mut buf = Vec::new();
            for r in self.split(s) {
                serde_json::to_writer(&mut buf, r)?;
                buf.push(b'\n');
            }
            write_atomic(&dir.join(format!("{}.ndjson", s.name())), &buf)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        check_version(meta.schema_version)?;
        let read = |s: Split| -> Result<Vec<MomentRecord>> {
            let file = std::fs::File::open(dir.join(format!("{}.ndjson", s.name())))?;
            let mut out = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let r: MomentRecord = serde_json::from_str(&line)?;
                check_version(r.schema_version)?;
                out.push(r);
            }
            Ok(out)
        };
        Ok(Self {
            train: read(Split::Train)?,
            valid: read(Split::Valid)?,
            test: read(Split::Test)?,
            meta,
        })
    }

    pub fn matching_count(&self, s: Split) -> usize {
        self.split(s).iter().map(|r| r.matching.len()).sum()
    }

    pub fn allocation_count(&self, s: Split) -> usize {
        self.split(s).iter().map(|r| r.allocation.len()).sum()
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Format(format!("dataset schema {v}, expected {SCHEMA_VERSION}")));
    }
    Ok(())
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Scene seed of trajectory `c`.
pub fn trajectory_seed(seed: u64, c: usize) -> u64 {
    rng::stream(seed, &[tag::TRAJECTORY, c as u64]).next_u64()
}

/// Random disjoint assignment of trajectory ids to the three splits.
pub fn split_trajectories(config: &ExperimentConfig) -> Splits {
    let t = config.trajectories;
    let mut ids: Vec<usize> = (0..t.total()).collect();
    ids.shuffle(&mut rng::stream(config.seed, &[tag::SPLIT]));
    let mut take = |n: usize| {
        let mut part: Vec<usize> = ids.drain(..n).collect();
        part.sort_unstable();
        part
    };
    Splits {
        train: take(t.train),
        valid: take(t.valid),
        test: take(t.test),
    }
}

/// Simulates trajectory `c` and records channels and beams at every moment.
fn record_trajectory(config: &ExperimentConfig, c: usize, cb: &Codebook) -> Result<Vec<MomentRecord>> {
    let mut scene = config.scene.clone();
    scene.seed = trajectory_seed(config.seed, c);
    let stride = scene.stride.max(1);
    let frames = (config.moments - 1) * stride + 1;
    let snapshots = simulate(&scene, frames)?;
    let stations = config.stations();
    let mut out = Vec::with_capacity(config.moments);
    for (moment, snapshot) in snapshots.into_iter().step_by(stride).enumerate() {
        let vehicles = &snapshot.vehicles;
        let mut h: Vec<Vec<CMatrix>> = Vec::with_capacity(stations);
        let mut links = Vec::with_capacity(stations);
        let mut frobenius = vec![0.0; stations];
        for (b, frob) in frobenius.iter_mut().enumerate() {
            let row: Vec<CMatrix> = (0..vehicles.len())
                .map(|v| channel(b, v, vehicles, &scene.road, &config.radio, scene.seed, snapshot.step).h)
                .collect();
            *frob = row.iter().map(CMatrix::frobenius_sq).sum();
            links.push(row.iter().map(|m| beam_train(m, cb)).collect::<Vec<_>>());
            h.push(row);
        }
        let rsrp = rsrp_table(&h, &links, cb)?;
        out.push(MomentRecord {
            schema_version: SCHEMA_VERSION,
            trajectory: c,
            moment,
            snapshot,
            links,
            frobenius,
            rsrp,
            matching: Vec::new(),
            allocation: Vec::new(),
        });
    }
    Ok(out)
}

/// Vehicles present over the last `history` moments that own a fused box in
/// a scene with more than one box.
fn eligible(records: &[MomentRecord], i: usize, history: usize, max_boxes: usize) -> Vec<MatchRecord> {
    if i + 1 < history {
        return Vec::new();
    }
    let r = &records[i];
    let boxes = r.snapshot.fused.len();
    if boxes < 2 || boxes > max_boxes {
        return Vec::new();
    }
    r.snapshot
        .vehicles
        .iter()
        .filter(|v| records[i + 1 - history..i].iter().all(|p| p.vehicle_index(v.id).is_some()))
        .filter_map(|v| {
            r.snapshot.fused_index_of(v.id).map(|truth| MatchRecord {
                vehicle: v.id,
                truth,
            })
        })
        .collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            extend(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        extend(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

fn label_moment(
    config: &ExperimentConfig,
    records: &[MomentRecord],
    i: usize,
    max_power: &[f64],
) -> Result<(Vec<MatchRecord>, Vec<AllocationRecord>)> {
    let matching = eligible(records, i, config.max_history(), config.max_boxes);
    let r = &records[i];
    let mut allocation = Vec::new();
    for &u in &config.users {
        let mut combos = combinations(matching.len(), u);
        if combos.len() > config.combinations {
            let mut pick = rng::stream(
                config.seed,
                &[tag::COMBINATION, r.trajectory as u64, r.moment as u64, u as u64],
            );
            let mut keep = index::sample(&mut pick, combos.len(), config.combinations).into_vec();
            keep.sort_unstable();
            combos = keep.into_iter().map(|k| combos[k].clone()).collect();
        }
        for combo in combos {
            let ids: Vec<u64> = combo.iter().map(|&k| matching[k].vehicle).collect();
            let positions: Vec<usize> = ids.iter().map(|&id| r.vehicle_index(id).expect("eligible")).collect();
            let gains = GainModel::new(r.rsrp.select_users(&positions), config.radio.noise_power, max_power.to_vec())?;
            let sol = btram(&gains, &config.wmmse)?;
            allocation.push(AllocationRecord {
                users: ids,
                powers: sol.powers.iter().zip(&sol.stations).map(|(p, &b)| p / max_power[b]).collect(),
                stations: sol.stations,
                rate: sol.rate,
            });
        }
    }
    Ok((matching, allocation))
}

/// Simulates every trajectory, calibrates the station budgets and labels the
/// matching and allocation samples.
pub fn generate(config: &ExperimentConfig) -> Result<Dataset> {
    config.validate()?;
    let cb = Codebook::from_radio(&config.radio);
    let mut trajectories: Vec<Vec<MomentRecord>> = (0..config.trajectories.total())
        .into_par_iter()
        .map(|c| record_trajectory(config, c, &cb))
        .collect::<Result<_>>()?;
    let stations = config.stations();
    let mut frob = vec![0.0; stations];
    let mut links = vec![0usize; stations];
    for r in trajectories.iter().flatten() {
        for b in 0..stations {
            frob[b] += r.frobenius[b];
            links[b] += r.snapshot.vehicles.len();
        }
    }
    let max_power = calibrate_power(&frob, &links, &config.radio)?;
    trajectories.par_iter_mut().try_for_each(|records| -> Result<()> {
        let labels = (0..records.len())
            .map(|i| label_moment(config, records, i, &max_power))
            .collect::<Result<Vec<_>>>()?;
        for (r, (m, a)) in records.iter_mut().zip(labels) {
            r.matching = m;
            r.allocation = a;
        }
        Ok(())
    })?;
    let splits = split_trajectories(config);
    let gather = |ids: &[usize]| ids.iter().flat_map(|&c| trajectories[c].iter().cloned()).collect();
    let dataset = Dataset {
        train: gather(&splits.train),
        valid: gather(&splits.valid),
        test: gather(&splits.test),
        meta: DatasetMeta {
            schema_version: SCHEMA_VERSION,
            seed: config.seed,
            max_power,
            splits,
        },
    };
    log::info!(
        "dataset: {} / {} / {} matching samples, {} / {} / {} allocation samples",
        dataset.matching_count(Split::Train),
        dataset.matching_count(Split::Valid),
        dataset.matching_count(Split::Test),
        dataset.allocation_count(Split::Train),
        dataset.allocation_count(Split::Valid),
        dataset.allocation_count(Split::Test),
    );
    Ok(dataset)
}
