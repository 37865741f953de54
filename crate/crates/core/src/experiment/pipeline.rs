use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::{write_atomic, Dataset, MomentRecord, Split};
use crate::allocation::{atrr, btram, nbbram, rram, vbram, AllocationSolution, GainModel};
use crate::error::{Error, Result};
use crate::features::{encode_bdf, encode_labels, encode_usdf, render_heatmap, GridSpec, GridTensor, SizeNorms};
use crate::matching::{class_label, match_3dumm, match_3dumm_joint, match_mcumm, match_rumm, rumm_expectation, umac, MatchSample};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::tasks;
use crate::neural::train::Task;
use crate::neural::{train, Tensor, TrainReport, UmanConfig, UmanInput, UmanModel, VranConfig, VranModel};
use crate::rng::{self, tag};

pub const UMAN: &str = "uman";
pub const MCUMM: &str = "mcumm";
pub const VRAN: &str = "vran";

/// File locations below an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn model(&self, kind: &str, history: Option<usize>) -> PathBuf {
        self.root.join("models").join(match history {
            Some(m) => format!("{kind}_m{m}.json"),
            None => format!("{kind}.json"),
        })
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn loss(&self, kind: &str, history: Option<usize>) -> PathBuf {
        self.metrics().join(match history {
            Some(m) => format!("loss_{kind}_m{m}.csv"),
            None => format!("loss_{kind}.csv"),
        })
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn grid_tensor(t: GridTensor) -> Tensor {
    Tensor {
        shape: vec![t.channels, t.nx, t.ny],
        data: t.data,
    }
}

/// Cell holding `(x, y)`, clamped onto the grid for points just outside it.
pub fn clamped_cell(grid: &GridSpec, x: f64, y: f64) -> (usize, usize) {
    grid.cell_of(x, y).unwrap_or_else(|| {
        let ix = ((x - grid.origin.0) / grid.cell_width).floor().clamp(0.0, (grid.nx - 1) as f64);
        let iy = ((y - grid.origin.1) / grid.cell_length).floor().clamp(0.0, (grid.ny - 1) as f64);
        (ix as usize, iy as usize)
    })
}

/// Targets of one allocation sample.
pub struct AllocationTarget {
    pub usdf: Tensor,
    pub cells: Vec<(usize, usize)>,
    pub stations: Tensor,
    pub power: Tensor,
    pub mask: Vec<bool>,
}

/// One split with its box features cached per moment.
pub struct SplitData<'a> {
    pub records: &'a [MomentRecord],
    pub config: &'a ExperimentConfig,
    bdf: Vec<Tensor>,
    norms: SizeNorms,
}

impl<'a> SplitData<'a> {
    pub fn new(records: &'a [MomentRecord], config: &'a ExperimentConfig) -> Self {
        let norms = SizeNorms::of_catalog(&config.scene.catalog);
        let bdf = records
            .par_iter()
            .map(|r| grid_tensor(encode_bdf(&r.snapshot.fused, &config.bdf_grid, &norms).tensor))
            .collect();
        Self {
            records,
            config,
            bdf,
            norms,
        }
    }

    /// Record indices of the `history` moments ending at `i`.
    fn history(&self, i: usize, history: usize) -> Result<RangeInclusive<usize>> {
        let start = (i + 1)
            .checked_sub(history)
            .ok_or(Error::Format(format!("moment {i} has no history of {history}")))?;
        let (a, b) = (&self.records[start], &self.records[i]);
        if a.trajectory != b.trajectory || a.moment + history - 1 != b.moment {
            return Err(Error::Format(format!("history of record {i} leaves its trajectory")));
        }
        Ok(start..=i)
    }

    pub fn uman_input(&self, i: usize, vehicle: u64, history: usize) -> Result<UmanInput> {
        let mut features = Vec::with_capacity(3 * history * self.config.bdf_grid.cells());
        let mut beams = Vec::with_capacity(history);
        for j in self.history(i, history)? {
            features.extend_from_slice(&self.bdf[j].data);
            let v = self.records[j]
                .vehicle_index(vehicle)
                .ok_or(Error::Format(format!("vehicle {vehicle} missing from record {j}")))?;
            beams.push(self.records[j].links[self.config.station][v].pair);
        }
        let g = &self.config.bdf_grid;
        Ok(UmanInput {
            features: Tensor::new(vec![3 * history, g.nx, g.ny], features)?,
            beams,
        })
    }

    /// Matching sample `e` of record `i`. The target heatmap is centered on
    /// the vehicle's true position.
    pub fn match_sample(&self, i: usize, e: usize, history: usize, with_heatmap: bool) -> Result<MatchSample> {
        let r = &self.records[i];
        let m = r.matching[e];
        let heatmap = if with_heatmap {
            let v = r
                .snapshot
                .vehicle(m.vehicle)
                .ok_or(Error::Format(format!("vehicle {} missing", m.vehicle)))?;
            let b = v.ground_box(&self.config.scene.road);
            Some(render_heatmap(&b, &self.config.heatmap_grid, self.config.heatmap_iou)?)
        } else {
            None
        };
        Ok(MatchSample {
            input: self.uman_input(i, m.vehicle, history)?,
            heatmap,
            candidates: r.snapshot.fused.clone(),
            truth: m.truth,
        })
    }

    pub fn matching_refs(&self) -> Vec<(usize, usize)> {
        refs(self.records, |r| r.matching.len())
    }

    pub fn allocation_refs(&self) -> Vec<(usize, usize)> {
        refs(self.records, |r| r.allocation.len())
    }

    /// Distribution feature of record `i` with the given user boxes, and
    /// the cell of every user.
    pub fn usdf(&self, i: usize, user_boxes: &[usize]) -> Result<(Tensor, Vec<(usize, usize)>)> {
        let fused = &self.records[i].snapshot.fused;
        let grid = &self.config.usdf_grid;
        let t = encode_usdf(fused, user_boxes, grid, &self.norms)?.tensor;
        let cells = user_boxes
            .iter()
            .map(|&k| {
                let c = fused.boxes[k].center;
                clamped_cell(grid, c[0], c[1])
            })
            .collect();
        Ok((grid_tensor(t), cells))
    }

    /// Training target of allocation sample `a` of record `i`, built from the
    /// users' own boxes.
    pub fn allocation_target(&self, i: usize, a: usize) -> Result<AllocationTarget> {
        let r = &self.records[i];
        let rec = &r.allocation[a];
        let boxes = rec
            .users
            .iter()
            .map(|&id| {
                r.snapshot
                    .fused_index_of(id)
                    .ok_or(Error::Format(format!("user {id} has no box")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (usdf, cells) = self.usdf(i, &boxes)?;
        let grid = &self.config.usdf_grid;
        let unit = vec![1.0; self.config.stations()];
        let (ob, op) = encode_labels(&rec.stations, &rec.powers, &unit, &cells, grid)?;
        let mut mask = vec![false; grid.cells()];
        for &(ix, iy) in &cells {
            mask[ix * grid.ny + iy] = true;
        }
        Ok(AllocationTarget {
            usdf,
            cells,
            stations: grid_tensor(ob),
            power: grid_tensor(op),
            mask,
        })
    }

    /// Link gains among the users of allocation sample `a` of record `i`.
    pub fn gains(&self, i: usize, a: usize, max_power: &[f64]) -> Result<GainModel> {
        let r = &self.records[i];
        let positions = r.allocation[a]
            .users
            .iter()
            .map(|&id| r.vehicle_index(id).ok_or(Error::Format(format!("user {id} missing"))))
            .collect::<Result<Vec<_>>>()?;
        GainModel::new(
            r.rsrp.select_users(&positions),
            self.config.radio.noise_power,
            max_power.to_vec(),
        )
    }
}

fn refs(records: &[MomentRecord], count: impl Fn(&MomentRecord) -> usize) -> Vec<(usize, usize)> {
    records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..count(r)).map(move |e| (i, e)))
        .collect()
}

/// A sample of a split: the split and the `(record, entry)` position.
pub type SampleRef<'s, 'a> = (&'s SplitData<'a>, usize, usize);

struct HeatmapObjective {
    history: usize,
    beta: f64,
    eta: f64,
}

impl Task<UmanModel, SampleRef<'_, '_>> for HeatmapObjective {
    fn evaluate(&self, model: &mut UmanModel, s: &SampleRef, backprop: bool) -> Result<f64> {
        let sample = s.0.match_sample(s.1, s.2, self.history, true)?;
        let target = sample.heatmap.as_ref().expect("heatmap requested");
        tasks::heatmap_loss(model, &sample.input, &target.data, self.beta, self.eta, backprop)
    }
}

struct ClassObjective {
    history: usize,
    max_boxes: usize,
}

impl Task<UmanModel, SampleRef<'_, '_>> for ClassObjective {
    fn evaluate(&self, model: &mut UmanModel, s: &SampleRef, backprop: bool) -> Result<f64> {
        let sample = s.0.match_sample(s.1, s.2, self.history, false)?;
        let class = class_label(&sample, self.max_boxes)?;
        tasks::class_loss(model, &sample.input, class, backprop)
    }
}

struct AllocationObjective {
    beta: f64,
}

impl Task<VranModel, SampleRef<'_, '_>> for AllocationObjective {
    fn evaluate(&self, model: &mut VranModel, s: &SampleRef, backprop: bool) -> Result<f64> {
        let t = s.0.allocation_target(s.1, s.2)?;
        tasks::allocation_loss(
            model,
            &t.usdf,
            &t.stations.data,
            &t.power.data,
            &t.mask,
            self.beta,
            backprop,
        )
    }
}

fn sample_refs<'s, 'a>(data: &'s SplitData<'a>, allocation: bool) -> Vec<SampleRef<'s, 'a>> {
    let r = if allocation {
        data.allocation_refs()
    } else {
        data.matching_refs()
    };
    r.into_iter().map(|(i, e)| (data, i, e)).collect()
}

/// Classifier model description stored in its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub uman: UmanConfig,
    pub hidden: [usize; 2],
    pub classes: usize,
}

pub fn load_uman(ck: &Checkpoint) -> Result<UmanModel> {
    let cfg: UmanConfig = ck.config(UMAN)?;
    let mut m = UmanModel::heatmap(cfg, &mut rng::stream(0, &[]))?;
    ck.apply(UMAN, &mut m)?;
    Ok(m)
}

pub fn load_classifier(ck: &Checkpoint) -> Result<UmanModel> {
    let spec: ClassifierSpec = ck.config(MCUMM)?;
    let mut m = UmanModel::classifier(spec.uman, spec.hidden, spec.classes, &mut rng::stream(0, &[]))?;
    ck.apply(MCUMM, &mut m)?;
    Ok(m)
}

pub fn load_vran(ck: &Checkpoint) -> Result<VranModel> {
    let cfg: VranConfig = ck.config(VRAN)?;
    let mut m = VranModel::new(cfg, &mut rng::stream(0, &[]))?;
    ck.apply(VRAN, &mut m)?;
    Ok(m)
}

/// Trained network with its checkpoint and loss history.
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

fn init_rng(config: &ExperimentConfig, kind: u64, history: usize) -> rng::Rng {
    rng::stream(config.seed, &[tag::INIT, kind, history as u64])
}

pub fn train_uman(config: &ExperimentConfig, data: &Dataset, history: usize) -> Result<Trained> {
    let (tr, va) = (SplitData::new(&data.train, config), SplitData::new(&data.valid, config));
    let cfg = config.uman_config(history);
    let mut model = UmanModel::heatmap(cfg.clone(), &mut init_rng(config, 1, history))?;
    let t = &config.uman_train;
    let task = HeatmapObjective {
        history,
        beta: t.beta,
        eta: t.eta,
    };
    let report = train(&mut model, &task, &sample_refs(&tr, false), &sample_refs(&va, false), t)?;
    Ok(Trained {
        checkpoint: Checkpoint::capture(UMAN, &cfg, &model)?,
        report,
    })
}

pub fn train_classifier(config: &ExperimentConfig, data: &Dataset, history: usize) -> Result<Trained> {
    let (tr, va) = (SplitData::new(&data.train, config), SplitData::new(&data.valid, config));
    let spec = ClassifierSpec {
        uman: config.uman_config(history),
        hidden: config.classifier_hidden,
        classes: config.max_boxes,
    };
    let mut model = UmanModel::classifier(
        spec.uman.clone(),
        spec.hidden,
        spec.classes,
        &mut init_rng(config, 2, history),
    )?;
    let task = ClassObjective {
        history,
        max_boxes: config.max_boxes,
    };
    let t = &config.classifier_train;
    let report = train(&mut model, &task, &sample_refs(&tr, false), &sample_refs(&va, false), t)?;
    Ok(Trained {
        checkpoint: Checkpoint::capture(MCUMM, &spec, &model)?,
        report,
    })
}

pub fn train_vran(config: &ExperimentConfig, data: &Dataset) -> Result<Trained> {
    let (tr, va) = (SplitData::new(&data.train, config), SplitData::new(&data.valid, config));
    let cfg = config.vran_config();
    let mut model = VranModel::new(cfg.clone(), &mut init_rng(config, 3, 0))?;
    let t = &config.vran_train;
    let task = AllocationObjective { beta: t.beta };
    let report = train(&mut model, &task, &sample_refs(&tr, true), &sample_refs(&va, true), t)?;
    Ok(Trained {
        checkpoint: Checkpoint::capture(VRAN, &cfg, &model)?,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRow {
    pub sample: usize,
    pub history: usize,
    pub method: String,
    pub predicted: usize,
    pub truth: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingSummaryRow {
    pub method: String,
    pub history: usize,
    pub samples: usize,
    pub umac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingEval {
    pub rows: Vec<MatchingRow>,
    pub summary: Vec<MatchingSummaryRow>,
    /// Expected accuracy of random matching on the test samples.
    pub rumm_expected: f64,
}

impl MatchingEval {
    pub fn umac(&self, method: &str, history: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.history == history)
            .map(|r| r.umac)
    }
}

/// Scores 3DUMM, MCUMM and RUMM on the test split for every history with a
/// checkpoint pair in `models`.
pub fn eval_matching(
    config: &ExperimentConfig,
    data: &Dataset,
    models: &[(usize, Checkpoint, Checkpoint)],
) -> Result<MatchingEval> {
    let test = SplitData::new(&data.test, config);
    let refs = test.matching_refs();
    if refs.is_empty() {
        return Err(Error::Empty("test matching samples"));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (history, uman, classifier) in models {
        let history = *history;
        let results = refs
            .par_iter()
            .enumerate()
            .map_init(
                || (load_uman(uman), load_classifier(classifier)),
                |(u, c), (k, &(i, e))| -> Result<[crate::matching::MatchResult; 3]> {
                    let (u, c) = (u.as_mut().map_err(clone_err)?, c.as_mut().map_err(clone_err)?);
                    let s = test.match_sample(i, e, history, false)?;
                    Ok([
                        match_3dumm(u, &s, &config.heatmap_grid)?,
                        match_mcumm(c, &s, config.max_boxes)?,
                        match_rumm(&s, &mut rng::stream(config.seed, &[tag::RUMM, k as u64]))?,
                    ])
                },
            )
            .collect::<Result<Vec<_>>>()?;
        for (m, method) in ["3dumm", "mcumm", "rumm"].iter().enumerate() {
            let res: Vec<_> = results.iter().map(|r| r[m]).collect();
            for (k, (r, &(i, e))) in res.iter().zip(&refs).enumerate() {
                rows.push(MatchingRow {
                    sample: k,
                    history,
                    method: method.to_string(),
                    predicted: r.predicted,
                    truth: test.records[i].matching[e].truth,
                    correct: r.correct,
                });
            }
            summary.push(MatchingSummaryRow {
                method: method.to_string(),
                history,
                samples: res.len(),
                umac: umac(&res)?,
            });
        }
    }
    let sizes: Vec<usize> = refs.iter().map(|&(i, _)| test.records[i].snapshot.fused.len()).collect();
    Ok(MatchingEval {
        rows,
        summary,
        rumm_expected: rumm_expectation(&sizes)?,
    })
}

fn clone_err(e: &mut Error) -> Error {
    Error::Format(e.to_string())
}

pub const ALLOCATION_METHODS: [&str; 4] = ["btram", "vbram", "nbbram", "rram"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub sample: usize,
    pub users: usize,
    pub method: String,
    pub stations: String,
    pub powers: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSummaryRow {
    pub method: String,
    /// User count, or 0 for all samples together.
    pub users: usize,
    pub samples: usize,
    pub atrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub users: usize,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationEval {
    pub rows: Vec<AllocationRow>,
    pub summary: Vec<AllocationSummaryRow>,
    pub timing: Vec<TimingRow>,
    /// Every solution with the gains it was scored on, in row order.
    pub solutions: Vec<(GainModel, [AllocationSolution; 4])>,
    /// Fraction of users matched to their own box.
    pub matched_fraction: f64,
}

impl AllocationEval {
    pub fn atrr(&self, method: &str, users: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.users == users)
            .map(|r| r.atrr)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

struct AllocationOutcome {
    users: usize,
    gains: GainModel,
    solutions: [AllocationSolution; 4],
    seconds: [f64; 4],
    matched: usize,
}

/// Runs every allocation method on the test split. User boxes come from the
/// heatmap matcher with the configured history.
pub fn eval_allocation(
    config: &ExperimentConfig,
    data: &Dataset,
    uman: &Checkpoint,
    vran: &Checkpoint,
) -> Result<AllocationEval> {
    let test = SplitData::new(&data.test, config);
    let refs = test.allocation_refs();
    if refs.is_empty() {
        return Err(Error::Empty("test allocation samples"));
    }
    let max_power = &data.meta.max_power;
    let sites: Vec<_> = config.radio.sites.iter().map(|s| s.position).collect();
    let outcomes = refs
        .par_iter()
        .enumerate()
        .map_init(
            || (load_uman(uman), load_vran(vran)),
            |(u, v), (k, &(i, a))| -> Result<AllocationOutcome> {
                let (u, v) = (u.as_mut().map_err(clone_err)?, v.as_mut().map_err(clone_err)?);
                let r = &test.records[i];
                let gains = test.gains(i, a, max_power)?;
                let mut seconds = [0.0; 4];

                let clock = Instant::now();
                let btram_sol = btram(&gains, &config.wmmse)?;
                seconds[0] = clock.elapsed().as_secs_f64();

                let clock = Instant::now();
                let samples = r.allocation[a]
                    .users
                    .iter()
                    .map(|&id| {
                        let e = r
                            .matching
                            .iter()
                            .position(|m| m.vehicle == id)
                            .ok_or(Error::Format(format!("user {id} is not a matching sample")))?;
                        test.match_sample(i, e, config.history, false)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let results = match_3dumm_joint(u, &samples, &config.heatmap_grid)?;
                let matched = results.iter().filter(|m| m.correct).count();
                let boxes: Vec<usize> = results.iter().map(|m| m.predicted).collect();
                let (usdf, cells) = test.usdf(i, &boxes)?;
                let vbram_sol = vbram(v, &usdf, &cells, &gains)?;
                seconds[1] = clock.elapsed().as_secs_f64();

                let clock = Instant::now();
                let positions: Vec<_> = boxes.iter().map(|&b| r.snapshot.fused.boxes[b].center).collect();
                let nbbram_sol = nbbram(&positions, &sites, &gains)?;
                seconds[2] = clock.elapsed().as_secs_f64();

                let clock = Instant::now();
                let rram_sol = rram(&gains, &mut rng::stream(config.seed, &[tag::RRAM, k as u64]))?;
                seconds[3] = clock.elapsed().as_secs_f64();

                Ok(AllocationOutcome {
                    users: r.allocation[a].users.len(),
                    gains,
                    solutions: [btram_sol, vbram_sol, nbbram_sol, rram_sol],
                    seconds,
                    matched,
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (k, o) in outcomes.iter().enumerate() {
        for (m, s) in o.solutions.iter().enumerate() {
            rows.push(AllocationRow {
                sample: k,
                users: o.users,
                method: ALLOCATION_METHODS[m].to_string(),
                stations: join(&s.stations),
                powers: join(&s.powers),
                rate: s.rate,
            });
        }
    }
    let mut groups: Vec<usize> = config.users.clone();
    groups.sort_unstable();
    groups.dedup();
    groups.insert(0, 0);
    let mut summary = Vec::new();
    let mut timing = Vec::new();
    for &users in &groups {
        let sel: Vec<&AllocationOutcome> = outcomes.iter().filter(|o| users == 0 || o.users == users).collect();
        if sel.is_empty() {
            continue;
        }
        let reference: Vec<f64> = sel.iter().map(|o| o.solutions[0].rate).collect();
        for (m, method) in ALLOCATION_METHODS.iter().enumerate() {
            let rates: Vec<f64> = sel.iter().map(|o| o.solutions[m].rate).collect();
            summary.push(AllocationSummaryRow {
                method: method.to_string(),
                users,
                samples: sel.len(),
                atrr: atrr(&rates, &reference)?,
            });
            timing.push(TimingRow {
                method: method.to_string(),
                users,
                mean_ms: 1e3 * sel.iter().map(|o| o.seconds[m]).sum::<f64>() / sel.len() as f64,
            });
        }
    }
    let total_users: usize = outcomes.iter().map(|o| o.users).sum();
    let matched: usize = outcomes.iter().map(|o| o.matched).sum();
    Ok(AllocationEval {
        rows,
        summary,
        timing,
        matched_fraction: matched as f64 / total_users as f64,
        solutions: outcomes.into_iter().map(|o| (o.gains, o.solutions)).collect(),
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, ck.to_json()?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)
}

pub fn load_dataset(layout: &Layout) -> Result<Dataset> {
    Dataset::load(&layout.dataset())
}

/// Generates and stores the dataset.
pub fn run_generate(config: &ExperimentConfig, layout: &Layout) -> Result<Dataset> {
    let d = super::dataset::generate(config)?;
    d.save(&layout.dataset())?;
    Ok(d)
}

/// Trains the heatmap and classifier matchers for every history.
pub fn run_train_uman(config: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let data = load_dataset(layout)?;
    for m in config.histories() {
        log::info!("training heatmap matcher, history {m}");
        let t = train_uman(config, &data, m)?;
        save_checkpoint(&layout.model(UMAN, Some(m)), &t.checkpoint)?;
        write_atomic(&layout.loss(UMAN, Some(m)), t.report.to_csv().as_bytes())?;
        log::info!("training classifier matcher, history {m}");
        let t = train_classifier(config, &data, m)?;
        save_checkpoint(&layout.model(MCUMM, Some(m)), &t.checkpoint)?;
        write_atomic(&layout.loss(MCUMM, Some(m)), t.report.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn run_train_vran(config: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let data = load_dataset(layout)?;
    let t = train_vran(config, &data)?;
    save_checkpoint(&layout.model(VRAN, None), &t.checkpoint)?;
    write_atomic(&layout.loss(VRAN, None), t.report.to_csv().as_bytes())
}

pub fn run_eval_matching(config: &ExperimentConfig, layout: &Layout) -> Result<MatchingEval> {
    let data = load_dataset(layout)?;
    let mut models = Vec::new();
    for m in &config.history_sweep {
        models.push((
            *m,
            read_checkpoint(&layout.model(UMAN, Some(*m)))?,
            read_checkpoint(&layout.model(MCUMM, Some(*m)))?,
        ));
    }
    let eval = eval_matching(config, &data, &models)?;
    write_csv(&layout.metrics().join("matching_samples.csv"), &eval.rows)?;
    let mut summary = eval.summary.clone();
    summary.push(MatchingSummaryRow {
        method: "rumm_expected".into(),
        history: 0,
        samples: summary.first().map_or(0, |r| r.samples),
        umac: eval.rumm_expected,
    });
    write_csv(&layout.metrics().join("matching.csv"), &summary)?;
    Ok(eval)
}

pub fn run_eval_allocation(config: &ExperimentConfig, layout: &Layout) -> Result<AllocationEval> {
    let data = load_dataset(layout)?;
    let uman = read_checkpoint(&layout.model(UMAN, Some(config.history)))?;
    let vran = read_checkpoint(&layout.model(VRAN, None))?;
    let eval = eval_allocation(config, &data, &uman, &vran)?;
    write_csv(&layout.metrics().join("allocation_samples.csv"), &eval.rows)?;
    write_csv(&layout.metrics().join("allocation.csv"), &eval.summary)?;
    // wall-clock numbers vary between runs, so they live apart from the metrics
    write_csv(&layout.report().join("timing.csv"), &eval.timing)?;
    Ok(eval)
}

/// Every split as `(name, records)`, for reporting sample counts.
pub fn split_counts(data: &Dataset) -> Vec<(Split, usize, usize)> {
    Split::ALL
        .iter()
        .map(|&s| (s, data.matching_count(s), data.allocation_count(s)))
        .collect()
}
