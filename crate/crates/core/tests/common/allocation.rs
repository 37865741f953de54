use proptest::prelude::*;
use rand::Rng as _;
use visaid::allocation::{btram, decode_ob, wmmse, wmmse_power, GainModel, WmmseConfig};
use visaid::channel::RsrpTable;
use visaid::features::{encode_labels, GridSpec, GridTensor, Role};
use visaid::rng::{self, Rng};

use super::{ensure, property, Check};

/// Random received powers spread over several decades.
fn random_gains(r: &mut Rng, stations: usize, users: usize) -> GainModel {
    let mut t = RsrpTable::zeros(stations, users);
    for v in t.values.iter_mut() {
        *v = 10f64.powf(r.random_range(-2.0..1.0));
    }
    let budgets = (0..stations).map(|_| r.random_range(0.5..2.0)).collect();
    GainModel::new(t, 10f64.powf(r.random_range(-2.0..0.0)), budgets).unwrap()
}

/// Sum rate written out directly from the table: user `u` hears its own
/// station `s[u]` beamed at it and every other user's station beamed at
/// that other user.
fn rate(gains: &GainModel, s: &[usize], p: &[f64]) -> f64 {
    let t = &gains.table;
    (0..s.len())
        .map(|u| {
            let signal = p[u] * t.get(s[u], u, s[u], u);
            let interference: f64 = (0..s.len()).filter(|&v| v != u).map(|v| p[v] * t.get(s[v], v, s[u], u)).sum();
            (1.0 + signal / (interference + gains.noise)).log2()
        })
        .sum()
}

fn non_decreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
}

/// Two-user instances against a 200 x 200 search over both powers.
pub fn wmmse_vs_grid(instances: usize) -> Check {
    let mut r = rng::stream(301, &[]);
    let cfg = WmmseConfig::default();
    let s = [0, 1];
    for k in 0..instances {
        let gains = random_gains(&mut r, 2, 2);
        let (p0, p1) = (gains.max_power[0], gains.max_power[1]);
        let mut best = 0.0f64;
        for i in 0..200 {
            for j in 0..200 {
                best = best.max(rate(&gains, &s, &[p0 * i as f64 / 199.0, p1 * j as f64 / 199.0]));
            }
        }
        let powers = wmmse_power(&s, &gains, &cfg).map_err(|e| e.to_string())?;
        let got = rate(&gains, &s, &powers);
        ensure(got >= 0.98 * best, || format!("instance {k}: wmmse rate {got}, grid {best}"))?;
        let trace = wmmse(&gains.link_gains(&s), gains.noise, &gains.budgets(&s), &cfg).trace;
        ensure(non_decreasing(&trace), || format!("instance {k}: rate trace {trace:?} decreases"))?;
    }
    Ok(())
}

pub fn wmmse_monotone(cases: u32) -> Check {
    let cfg = WmmseConfig::default();
    property(cases, (any::<u64>(), 1..=4usize), |(seed, users)| {
        let mut r = rng::stream(seed, &[]);
        let gains = random_gains(&mut r, 4, users);
        let s: Vec<usize> = (0..users).collect();
        let out = wmmse(&gains.link_gains(&s), gains.noise, &gains.budgets(&s), &cfg);
        prop_assert!(non_decreasing(&out.trace), "trace {:?}", out.trace);
        for (u, p) in out.powers.iter().enumerate() {
            prop_assert!(*p >= 0.0 && *p <= gains.max_power[u] * (1.0 + 1e-12));
        }
        Ok(())
    })
}

/// BTRAM scheduling against nested loops over both users' stations.
pub fn btram_reenumeration(instances: usize) -> Check {
    let mut r = rng::stream(302, &[]);
    let cfg = WmmseConfig::default();
    for k in 0..instances {
        let gains = random_gains(&mut r, 4, 2);
        let mut best = (vec![0, 1], f64::NEG_INFINITY);
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                let s = vec![a, b];
                let full = [gains.max_power[a], gains.max_power[b]];
                let v = rate(&gains, &s, &full);
                if v > best.1 {
                    best = (s, v);
                }
            }
        }
        let sol = btram(&gains, &cfg).map_err(|e| e.to_string())?;
        ensure(sol.stations == best.0, || {
            format!("instance {k}: btram picked {:?}, enumeration {:?}", sol.stations, best.0)
        })?;
        gains.check(&sol.stations, &sol.powers).map_err(|e| format!("instance {k}: {e}"))?;
        ensure(sol.rate >= best.1 - 1e-12, || {
            format!("instance {k}: power control lowered the rate to {} from {}", sol.rate, best.1)
        })?;
        ensure((sol.rate - rate(&gains, &sol.stations, &sol.powers)).abs() < 1e-9, || {
            format!("instance {k}: reported rate {} disagrees with the table", sol.rate)
        })?;
    }
    Ok(())
}

fn station_map() -> impl Strategy<Value = (GridTensor, Vec<(usize, usize)>)> {
    (1..=6usize, 1..=4usize, 1..=4usize).prop_flat_map(|(b, nx, ny)| {
        // coarse levels make ties common
        let values = prop::collection::vec((0..5u8).prop_map(|v| v as f64 / 4.0), b * nx * ny);
        let cells = prop::collection::vec((0..nx, 0..ny), 1..=b);
        (values, cells).prop_map(move |(data, cells)| {
            (
                GridTensor {
                    role: Role::StationMap,
                    channels: b,
                    nx,
                    ny,
                    data,
                },
                cells,
            )
        })
    })
}

pub fn decode_distinct(cases: u32) -> Check {
    property(cases, station_map(), |(ob, cells)| {
        let s = decode_ob(&ob, &cells).unwrap();
        prop_assert_eq!(s.len(), cells.len());
        let mut seen = vec![false; ob.channels];
        for b in s {
            prop_assert!(b < ob.channels && !seen[b], "station {} repeated or out of range", b);
            seen[b] = true;
        }
        Ok(())
    })
}

/// Label maps built from an allocation decode back to it: the same stations,
/// and each user's cell power times its station budget gives its power.
/// Users sharing a cell get the cell mean.
pub fn labels_decode_back(cases: u32) -> Check {
    let grid = GridSpec {
        origin: (0.0, 0.0),
        cell_length: 1.0,
        cell_width: 1.0,
        nx: 3,
        ny: 4,
    };
    let strategy = (1..=4usize, any::<u64>());
    property(cases, strategy, |(users, seed)| {
        let mut r = rng::stream(seed, &[]);
        let b = 5;
        let budgets: Vec<f64> = (0..b).map(|_| r.random_range(0.5..2.0)).collect();
        let mut stations: Vec<usize> = (0..b).collect();
        for i in (1..b).rev() {
            stations.swap(i, r.random_range(0..=i));
        }
        stations.truncate(users);
        let powers: Vec<f64> = stations.iter().map(|&s| budgets[s] * r.random_range(0.0..=1.0)).collect();
        let cells: Vec<(usize, usize)> = (0..users).map(|_| (r.random_range(0..3), r.random_range(0..4))).collect();
        let (ob, op) = encode_labels(&stations, &powers, &budgets, &cells, &grid).unwrap();
        let decoded = decode_ob(&ob, &cells).unwrap();
        let mut shared = false;
        for u in 0..users {
            let mates: Vec<usize> = (0..users).filter(|&v| cells[v] == cells[u]).collect();
            let frac = op.get(0, cells[u].0, cells[u].1);
            let mean = mates.iter().map(|&v| powers[v] / budgets[stations[v]]).sum::<f64>() / mates.len() as f64;
            prop_assert!((frac - mean).abs() < 1e-12);
            if mates.len() == 1 {
                prop_assert_eq!(decoded[u], stations[u]);
                prop_assert!((frac * budgets[stations[u]] - powers[u]).abs() < 1e-12);
            } else {
                shared = true;
            }
        }
        if shared {
            // cell mates may swap stations but keep the set they were given
            let mut a = decoded.clone();
            let mut e = stations.clone();
            a.sort_unstable();
            e.sort_unstable();
            prop_assert_eq!(a, e);
        }
        Ok(())
    })
}
