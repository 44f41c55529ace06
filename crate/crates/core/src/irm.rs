//! Impulse-response matrices.
//!
//! `K_ij(t)` is the head at accessible leaf `j` per unit volume injected as
//! an impulse at leaf `i`, every other accessible leaf held closed. It splits
//! into a direct term `a / (A(x_i) g) · δ(t) · δ_ij` and a reflection kernel
//! `k_ij(t)` that vanishes near `t = 0`. The two are stored separately so the
//! inversion never has to represent a delta on its time grid.
//!
//! Two routes produce `k_ij`:
//!
//! - [`oracle_irm`] tracks wavefronts exactly through junction scattering and
//!   closed-end reflection on networks with piecewise-constant area, giving
//!   trains of deltas ([`AnalyticIRM`]), binned onto a grid by [`sample_irm`].
//! - [`simulate_irm`] runs the forward solver with a unit-step inflow at each
//!   leaf and turns the head traces into kernels with
//!   [`irm_row_from_step_response`].

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{junction_scatter, simulate, BoundaryFlow, SimConfig, SimGrid};
use crate::network::Network;

/// Upper bound on processed wave events in [`oracle_irm`].
pub const MAX_ORACLE_EVENTS: usize = 5_000_000;

/// Default relative amplitude below which tracked wavefronts are dropped.
pub const DEFAULT_PRUNE_EPS: f64 = 1e-14;

/// Delta trains of the reflection kernels, plus the direct coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticIRM {
    pub leaves: Vec<String>,
    /// `a / (A(x_i) g)` per accessible leaf.
    pub direct: Vec<f64>,
    /// `deltas[i][j]`: `(arrival time s, coefficient)` pairs sorted by time.
    /// Coefficients are head per unit injected volume (multiply by `δ(t − t0)`).
    pub deltas: Vec<Vec<Vec<(f64, f64)>>>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    nodes: [usize; 2],
    length: f64,
    admittance: f64,
}

fn time_key(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// Exact reflection kernels on a network with piecewise-constant area.
///
/// Every area discontinuity inside a pipe is treated as a two-pipe junction.
/// Waves are processed in arrival order; coincident waves on the same
/// segment and direction are merged. A closed end (every accessible leaf and
/// `x0`) reflects with coefficient `+1`, and a leaf records twice the
/// incident head.
pub fn oracle_irm(net: &Network, horizon: f64, prune_eps: f64) -> Result<AnalyticIRM> {
    let a = net.wave_speed();
    let g = net.gravity();
    let nv = net.vertices().len();

    let mut segments: Vec<Segment> = Vec::new();
    let mut node_segments: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for p in net.pipes() {
        let pieces = p
            .area
            .constant_segments(p.length)
            .ok_or_else(|| Error::NotPiecewiseConstant(p.id.clone()))?;
        let mut prev = p.from;
        for (k, &(x0, x1, area)) in pieces.iter().enumerate() {
            let next = if k + 1 == pieces.len() {
                p.to
            } else {
                node_segments.push(Vec::new());
                node_segments.len() - 1
            };
            node_segments[prev].push(segments.len());
            node_segments[next].push(segments.len());
            segments.push(Segment {
                nodes: [prev, next],
                length: x1 - x0,
                admittance: g * area / a,
            });
            prev = next;
        }
    }

    let n_leaves = net.accessible().len();
    let mut leaf_of = vec![None; node_segments.len()];
    for (j, &v) in net.accessible().iter().enumerate() {
        leaf_of[v] = Some(j);
    }
    let limit = time_key(horizon);

    let rows = (0..n_leaves)
        .map(|src| {
            let src_vertex = net.accessible()[src];
            let amp0 = net.leaf_impedance(src_vertex);
            let floor = prune_eps * amp0;
            let mut recorded: Vec<BTreeMap<i64, f64>> = vec![BTreeMap::new(); n_leaves];
            // (arrival key, segment, heading to nodes[1]) -> head amplitude
            let mut queue: BTreeMap<(i64, usize, bool), f64> = BTreeMap::new();
            let push = |queue: &mut BTreeMap<_, f64>, t: f64, seg: usize, forward: bool, amp: f64| {
                let arrival = t + segments[seg].length / a;
                let key = time_key(arrival);
                if key <= limit && amp.abs() >= floor {
                    *queue.entry((key, seg, forward)).or_insert(0.0) += amp;
                }
            };

            let s0 = node_segments[src_vertex][0];
            push(&mut queue, 0.0, s0, segments[s0].nodes[0] == src_vertex, amp0);

            let mut events = 0usize;
            while let Some(((key, seg, forward), amp)) = queue.pop_first() {
                events += 1;
                if events > MAX_ORACLE_EVENTS {
                    return Err(Error::HorizonTooLarge(MAX_ORACLE_EVENTS));
                }
                if amp.abs() < floor {
                    continue;
                }
                let t = key as f64 * 1e-9;
                let node = segments[seg].nodes[usize::from(forward)];
                let attached = &node_segments[node];
                if attached.len() == 1 {
                    if let Some(j) = leaf_of[node] {
                        *recorded[j].entry(key).or_insert(0.0) += 2.0 * amp;
                    }
                    push(&mut queue, t, seg, !forward, amp);
                    continue;
                }
                let admittances: Vec<f64> = attached.iter().map(|&s| segments[s].admittance).collect();
                let incident = attached.iter().position(|&s| s == seg).expect("segment is attached");
                let scatter = junction_scatter(amp, incident, &admittances);
                push(&mut queue, t, seg, !forward, scatter.reflected);
                for (&s, &m) in attached.iter().filter(|&&s| s != seg).zip(&scatter.transmitted) {
                    push(&mut queue, t, s, segments[s].nodes[0] == node, m);
                }
            }
            Ok(recorded
                .into_iter()
                .map(|m| m.into_iter().map(|(k, c)| (k as f64 * 1e-9, c)).collect())
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AnalyticIRM {
        leaves: net.accessible_ids(),
        direct: net.accessible().iter().map(|&v| net.leaf_impedance(v)).collect(),
        deltas: rows,
        horizon,
    })
}

/// Uniformly sampled impulse-response kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledIRM {
    pub dt: f64,
    pub leaves: Vec<String>,
    pub direct: Vec<f64>,
    /// `k[i][j][n]` is `k_ij(n·dt)`.
    pub k: Vec<Vec<Vec<f64>>>,
    pub horizon: f64,
}

impl SampledIRM {
    pub fn samples(&self) -> usize {
        self.k.first().and_then(|r| r.first()).map_or(0, Vec::len)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples()).map(|n| n as f64 * self.dt).collect()
    }
}

fn sample_count(span: f64, dt: f64) -> usize {
    (span / dt + 1e-9).floor() as usize + 1
}

/// Grid index whose half-open bin `[t_n − dt/2, t_n + dt/2)` holds `t0`.
fn bin_index(t0: f64, dt: f64) -> Option<usize> {
    let n = (t0 / dt + 0.5).floor();
    (n >= 0.0).then_some(n as usize)
}

/// Bins each delta into one sample of height `coefficient / dt`.
pub fn sample_irm(an: &AnalyticIRM, dt: f64) -> SampledIRM {
    let len = sample_count(an.horizon, dt);
    let k = an
        .deltas
        .iter()
        .map(|row| {
            row.iter()
                .map(|deltas| {
                    let mut series = vec![0.0; len];
                    for &(t0, c) in deltas {
                        if let Some(n) = bin_index(t0, dt).filter(|&n| n < len) {
                            series[n] += c / dt;
                        }
                    }
                    series
                })
                .collect()
        })
        .collect();
    SampledIRM {
        dt,
        leaves: an.leaves.clone(),
        direct: an.direct.clone(),
        k,
        horizon: (len - 1) as f64 * dt,
    }
}

/// Head traces at every accessible leaf for a unit-step inflow at `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResponseBundle {
    pub source: usize,
    pub t: Vec<f64>,
    pub traces: Vec<Vec<f64>>,
}

/// Runs the forward solver for a unit step at one accessible leaf, all other
/// accessible leaves closed.
pub fn step_response(net: &Network, cfg: &SimConfig, source: usize) -> Result<StepResponseBundle> {
    let grid = SimGrid::new(net, cfg)?;
    let flows = BoundaryFlow::unit_step(net, source, grid.samples);
    let hist = simulate(net, &flows, cfg)?;
    Ok(StepResponseBundle {
        source,
        t: hist.t,
        traces: hist.leaf_head,
    })
}

/// Subtracts the direct response `a / (g A) · step(t)` from a head trace.
pub fn remove_initial_pulse(h: &[f64], t: &[f64], a: f64, g: f64, leaf_area: f64) -> Vec<f64> {
    let z = a / (g * leaf_area);
    h.iter()
        .zip(t)
        .map(|(&h, &t)| if t >= 0.0 { h - z } else { h })
        .collect()
}

/// Centered running median over `window` samples; the window shrinks at the
/// edges. Even-sized windows average the two middle values.
pub fn median_smooth(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let back = window / 2;
    let ahead = (window - 1) / 2;
    let n = series.len();
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&series[i.saturating_sub(back)..(i + ahead + 1).min(n)]);
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            }
        })
        .collect()
}

/// Central differences inside, one-sided differences at the ends.
pub fn differentiate(series: &[f64], t: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(1), (k + 1).min(n - 1));
            (series[hi] - series[lo]) / (t[hi] - t[lo])
        })
        .collect()
}

/// Linear interpolation of `(t_old, series)` at `t_new`.
pub fn resample(series: &[f64], t_old: &[f64], t_new: &[f64]) -> Result<Vec<f64>> {
    let (first, last) = match (t_old.first(), t_old.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::OutOfRange(t_new.first().copied().unwrap_or(0.0))),
    };
    let tol = 1e-9 * (last - first).abs().max(1.0);
    t_new
        .iter()
        .map(|&t| {
            if t < first - tol || t > last + tol {
                return Err(Error::OutOfRange(t));
            }
            let k = t_old.partition_point(|&x| x <= t);
            if k == 0 {
                return Ok(series[0]);
            }
            if k >= t_old.len() {
                return Ok(series[t_old.len() - 1]);
            }
            let w = (t - t_old[k - 1]) / (t_old[k] - t_old[k - 1]);
            Ok(series[k - 1] + w * (series[k] - series[k - 1]))
        })
        .collect()
}

/// One IRM row `k_i·` on the simulation grid: remove the direct term from the
/// source's own trace, median-smooth, then differentiate.
pub fn irm_row_from_step_response(
    bundle: &StepResponseBundle,
    net: &Network,
    smooth_window_s: f64,
) -> Result<Vec<Vec<f64>>> {
    let len = bundle.t.len();
    let dt = if len > 1 { bundle.t[1] - bundle.t[0] } else { 1.0 };
    let window = ((smooth_window_s / dt + 1e-9).floor() as usize).max(1);
    if window > len {
        return Err(Error::WindowTooLarge { window, len });
    }
    let source = net.accessible()[bundle.source];
    Ok(bundle
        .traces
        .iter()
        .enumerate()
        .map(|(j, trace)| {
            let h = if j == bundle.source {
                remove_initial_pulse(trace, &bundle.t, net.wave_speed(), net.gravity(), net.leaf_area(source))
            } else {
                trace.clone()
            };
            differentiate(&median_smooth(&h, window), &bundle.t)
        })
        .collect())
}

/// Full measurement pipeline: one forward run per accessible leaf, rows
/// processed on the simulation grid, then resampled onto a grid of step
/// `resample_dt` (the simulation grid itself when `None`).
pub fn simulate_irm(
    net: &Network,
    cfg: &SimConfig,
    smooth_window_s: f64,
    resample_dt: Option<f64>,
) -> Result<SampledIRM> {
    let rows = (0..net.accessible().len())
        .into_par_iter()
        .map(|i| {
            let bundle = step_response(net, cfg, i)?;
            let row = irm_row_from_step_response(&bundle, net, smooth_window_s)?;
            Ok((bundle.t, row))
        })
        .collect::<Result<Vec<_>>>()?;
    let t_sim = rows.first().map(|(t, _)| t.clone()).unwrap_or_default();
    let sim_dt = SimGrid::new(net, cfg)?.dt;
    let dt = resample_dt.unwrap_or(sim_dt);
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("resample dt must be positive, got {dt}")));
    }
    let span = t_sim.last().copied().unwrap_or(0.0);
    let len = sample_count(span, dt);
    let t_new: Vec<f64> = (0..len).map(|n| n as f64 * dt).collect();
    let k = rows
        .iter()
        .map(|(_, row)| {
            row.iter()
                .map(|series| match resample_dt {
                    None => Ok(series.clone()),
                    Some(_) => resample(series, &t_sim, &t_new),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledIRM {
        dt,
        leaves: net.accessible_ids(),
        direct: net.accessible().iter().map(|&v| net.leaf_impedance(v)).collect(),
        k,
        horizon: (len - 1) as f64 * dt,
    })
}

/// First line of an IRM file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrmHeader {
    pub dt: f64,
    /// Samples per kernel.
    pub n: usize,
    pub leaves: Vec<String>,
    pub direct: Vec<f64>,
    pub horizon: f64,
}

/// Writes the IRM as a JSON header line followed by a CSV body `i,j,t,k`
/// (0-based leaf indices, every sample).
pub fn write_irm<W: Write>(mut out: W, irm: &SampledIRM) -> io::Result<()> {
    let header = IrmHeader {
        dt: irm.dt,
        n: irm.samples(),
        leaves: irm.leaves.clone(),
        direct: irm.direct.clone(),
        horizon: irm.horizon,
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(io::Error::other)?)?;
    writeln!(out, "i,j,t,k")?;
    for (i, row) in irm.k.iter().enumerate() {
        for (j, series) in row.iter().enumerate() {
            for (n, k) in series.iter().enumerate() {
                writeln!(out, "{i},{j},{},{k}", n as f64 * irm.dt)?;
            }
        }
    }
    Ok(())
}

pub fn read_irm<R: BufRead>(input: R) -> Result<SampledIRM> {
    let bad = |msg: String| Error::MalformedIrm(msg);
    let mut lines = input.lines();
    let mut next = || -> Result<Option<String>> {
        lines.next().transpose().map_err(|e| Error::MalformedIrm(e.to_string()))
    };
    let header_line = next()?.ok_or_else(|| bad("empty file".into()))?;
    let header: IrmHeader =
        serde_json::from_str(&header_line).map_err(|e| bad(format!("header: {e}")))?;
    if header.direct.len() != header.leaves.len() {
        return Err(bad("direct coefficients do not match leaves".into()));
    }
    if next()?.as_deref().map(str::trim) != Some("i,j,t,k") {
        return Err(bad("missing `i,j,t,k` column header".into()));
    }
    let nl = header.leaves.len();
    let mut k = vec![vec![vec![0.0; header.n]; nl]; nl];
    let mut expected = 0usize;
    while let Some(line) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("row {}: expected 4 fields", expected + 1)));
        }
        let parse_idx = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("row {}: {e}", expected + 1)));
        let (i, j) = (parse_idx(fields[0])?, parse_idx(fields[1])?);
        let value: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|e| bad(format!("row {}: {e}", expected + 1)))?;
        let n = expected % header.n.max(1);
        let (ei, ej) = (expected / header.n.max(1) / nl, expected / header.n.max(1) % nl);
        if (i, j) != (ei, ej) || i >= nl {
            return Err(bad(format!("row {}: out-of-order entry ({i},{j})", expected + 1)));
        }
        k[i][j][n] = value;
        expected += 1;
    }
    if expected != nl * nl * header.n {
        return Err(bad(format!("expected {} rows, found {expected}", nl * nl * header.n)));
    }
    Ok(SampledIRM {
        dt: header.dt,
        leaves: header.leaves,
        direct: header.direct,
        k,
        horizon: header.horizon,
    })
}
