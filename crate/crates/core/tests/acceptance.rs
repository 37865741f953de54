//! Acceptance run. Prints one PASS or FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! The end-to-end criteria train on a single worker thread so that wall time
//! stands in for CPU time.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::{allocation, ensure, geometry, gradients, heatmap, Check};
use visaid::experiment::pipeline::{
    eval_allocation, eval_matching, run_eval_allocation, run_eval_matching, run_generate, run_train_uman,
    run_train_vran, train_classifier, train_uman, train_vran, Layout,
};
use visaid::experiment::{dataset, Dataset, ExperimentConfig, Split};
use visaid::neural::checkpoint::Checkpoint;

fn minutes(m: f64) -> Duration {
    Duration::from_secs_f64(m * 60.0)
}

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn record(&mut self, id: usize, name: &str, result: Check, spent: Duration, limit: Duration) {
        let result = result.and_then(|_| {
            ensure(spent <= limit, || {
                format!("took {:.1} s, limit {:.0} s", spent.as_secs_f64(), limit.as_secs_f64())
            })
        });
        match result {
            Ok(()) => println!("PASS {id} {name} ({:.1} s)", spent.as_secs_f64()),
            Err(e) => {
                self.failed += 1;
                println!("FAIL {id} {name} ({:.1} s): {e}", spent.as_secs_f64());
            }
        }
    }
}

fn timed(f: impl FnOnce() -> Check) -> (Check, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

fn err(e: visaid::Error) -> String {
    e.to_string()
}

struct Matchers {
    models: Vec<(usize, Checkpoint, Checkpoint)>,
    /// Training time of every matcher.
    spent: Duration,
    /// Training time of the heatmap matcher the allocation stage uses.
    spent_history: Duration,
}

fn train_matchers(config: &ExperimentConfig, data: &Dataset) -> Result<Matchers, String> {
    let mut out = Matchers {
        models: Vec::new(),
        spent: Duration::ZERO,
        spent_history: Duration::ZERO,
    };
    for &m in &config.history_sweep {
        let t = Instant::now();
        let u = train_uman(config, data, m).map_err(err)?;
        if m == config.history {
            out.spent_history = t.elapsed();
        }
        let c = train_classifier(config, data, m).map_err(err)?;
        out.spent += t.elapsed();
        out.models.push((m, u.checkpoint, c.checkpoint));
    }
    Ok(out)
}

fn check_matching(config: &ExperimentConfig, data: &Dataset, matchers: &Matchers) -> Check {
    let train_count = data.matching_count(Split::Train);
    ensure(train_count >= 2000, || format!("only {train_count} training matching samples"))?;
    let counts = data.train.iter().chain(&data.valid).chain(&data.test).map(|r| r.snapshot.vehicles.len());
    let (lo, hi) = counts.fold((usize::MAX, 0), |(a, b), n| (a.min(n), b.max(n)));
    ensure(lo >= 3 && hi <= 8, || format!("snapshots hold {lo} to {hi} vehicles"))?;
    let eval = eval_matching(config, data, &matchers.models).map_err(err)?;
    let mut line = Vec::new();
    let mut previous = 0.0;
    for &m in &config.history_sweep {
        let get = |method: &str| eval.umac(method, m).ok_or(format!("no {method} score for M={m}"));
        let (d, c, r) = (get("3dumm")?, get("mcumm")?, get("rumm")?);
        line.push(format!("M={m}: 3dumm {d:.3} mcumm {c:.3} rumm {r:.3}"));
        ensure(d > c && c > r, || format!("ordering broken at M={m}: {}", line.join("; ")))?;
        ensure(d >= 2.0 * eval.rumm_expected, || {
            format!("3dumm {d:.3} below twice the random expectation {:.3}", eval.rumm_expected)
        })?;
        ensure(d >= previous, || format!("3dumm drops with history: {}", line.join("; ")))?;
        previous = d;
    }
    println!("  matching: {}; random expectation {:.3}", line.join("; "), eval.rumm_expected);
    Ok(())
}

fn check_allocation(config: &ExperimentConfig, data: &Dataset, matchers: &Matchers) -> Check {
    let uman = matchers
        .models
        .iter()
        .find(|(m, _, _)| *m == config.history)
        .map(|(_, u, _)| u)
        .ok_or(format!("history {} missing from the sweep", config.history))?;
    let vran = train_vran(config, data).map_err(err)?;
    let eval = eval_allocation(config, data, uman, &vran.checkpoint).map_err(err)?;
    let get = |method: &str| eval.atrr(method, 0).ok_or(format!("no {method} score"));
    let (b, v, n, r) = (get("btram")?, get("vbram")?, get("nbbram")?, get("rram")?);
    println!(
        "  allocation: btram {b:.4} vbram {v:.4} nbbram {n:.4} rram {r:.4}; matched {:.3}",
        eval.matched_fraction
    );
    ensure((b - 1.0).abs() < 1e-12, || format!("btram ratio {b}"))?;
    ensure(v >= r + 0.05, || format!("vbram {v:.4} not 0.05 above rram {r:.4}"))?;
    ensure(v >= n, || format!("vbram {v:.4} below nbbram {n:.4}"))?;
    for (k, (gains, solutions)) in eval.solutions.iter().enumerate() {
        for s in solutions {
            gains.check(&s.stations, &s.powers).map_err(|e| format!("sample {k}: {e}"))?;
        }
    }
    Ok(())
}

/// Criteria 6 and 7 share one default run. Each is charged for generation
/// plus the training and evaluation stages it needs.
fn end_to_end(out: &mut Outcome) {
    let config = ExperimentConfig::default();
    let clock = Instant::now();
    let data = dataset::generate(&config).map_err(err);
    let generation = clock.elapsed();
    let matchers = data.as_ref().map_err(Clone::clone).and_then(|d| train_matchers(&config, d));
    let (spent, spent_history) = matchers
        .as_ref()
        .map_or((Duration::ZERO, Duration::ZERO), |m| (m.spent, m.spent_history));
    let both = data.as_ref().map_err(Clone::clone).and_then(|d| Ok((d, matchers.as_ref().map_err(Clone::clone)?)));

    let (r, t) = timed(|| both.clone().and_then(|(d, m)| check_matching(&config, d, m)));
    out.record(6, "end-to-end matching", r, generation + spent + t, minutes(30.0));
    let (r, t) = timed(|| both.clone().and_then(|(d, m)| check_allocation(&config, d, m)));
    out.record(7, "end-to-end allocation", r, generation + spent_history + t, minutes(20.0));
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.trajectories.train = 2;
    c.trajectories.valid = 1;
    c.trajectories.test = 1;
    c.moments = 20;
    c.history = 2;
    c.history_sweep = vec![1, 2];
    for t in [&mut c.uman_train, &mut c.classifier_train, &mut c.vran_train] {
        t.epochs = 1;
    }
    c
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .map(|p| {
                    let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    (name, std::fs::read(&p).unwrap_or_default())
                })
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

/// Two complete runs of a reduced configuration, the second on more
/// threads, must write identical dataset and metric files.
fn determinism() -> Check {
    let config = small_config();
    let mut runs = Vec::new();
    for threads in [1, 2] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let layout = Layout::new(dir.path());
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?
            .install(|| -> visaid::Result<()> {
                run_generate(&config, &layout)?;
                run_train_uman(&config, &layout)?;
                run_train_vran(&config, &layout)?;
                run_eval_matching(&config, &layout)?;
                run_eval_allocation(&config, &layout)?;
                Ok(())
            })
            .map_err(err)?;
        runs.push((files(&layout.dataset()), files(&layout.metrics())));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure(!a.0.is_empty() && !a.1.is_empty(), || "runs wrote no files".into())?;
    for (x, y) in [(&a.0, &b.0), (&a.1, &b.1)] {
        ensure(x.len() == y.len(), || "runs wrote different file sets".into())?;
        for ((name, bytes), (other, bytes2)) in x.iter().zip(y) {
            ensure(name == other && bytes == bytes2, || format!("{name} differs between runs"))?;
        }
    }
    Ok(())
}

fn main() {
    let mut out = Outcome { failed: 0 };

    let (r, t) = timed(|| {
        geometry::iou_monte_carlo(200)?;
        geometry::frame_round_trip(1000)?;
        geometry::elimination_invariants(500)
    });
    out.record(1, "geometry oracles", r, t, minutes(1.0));

    let (r, t) = timed(|| {
        heatmap::keypoint_and_window(50)?;
        heatmap::corner_displacement(100, 0.3)
    });
    out.record(2, "heatmap oracles", r, t, minutes(1.0));

    let (r, t) = timed(gradients::all);
    out.record(3, "gradient checks", r, t, minutes(2.0));

    let (r, t) = timed(|| {
        allocation::wmmse_vs_grid(50)?;
        allocation::wmmse_monotone(200)
    });
    out.record(4, "power control oracle", r, t, minutes(2.0));

    let (r, t) = timed(|| {
        allocation::btram_reenumeration(20)?;
        allocation::decode_distinct(500)
    });
    out.record(5, "scheduling oracle", r, t, minutes(1.0));

    single_thread(|| end_to_end(&mut out));

    let (r, t) = timed(determinism);
    out.record(8, "determinism", r, t, Duration::MAX);

    println!("{} of 8 criteria failed", out.failed);
    if out.failed > 0 {
        std::process::exit(1);
    }
}
