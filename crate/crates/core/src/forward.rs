//! Direct problem: frictionless waterhammer transients on a tree network.
//!
//! Each pipe is split into cells of constant area. Node values of head `H`
//! and discharge `Q` are advanced with the method of characteristics: the
//! invariants `H ± B Q` (with cell impedance `B = a / (g A)`) are carried
//! along `dx/dt = ±a`, and read back by linear interpolation between the two
//! nodes of the cell when the Courant number is below one. Every node that
//! joins cell ends (interior nodes, junctions, leaves) is closed by the same
//! algebraic solve: one shared head and `Σ ν Q = F`, with `F` the prescribed
//! inflow at accessible leaves and zero elsewhere. The inaccessible end is a
//! closed end (`Q = 0`).

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::network::{End, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Target cell length, m.
    pub dx: f64,
    pub courant: f64,
    /// Simulated time span, s.
    pub duration: f64,
}

impl SimConfig {
    pub fn new(dx: f64, courant: f64, duration: f64) -> Self {
        Self { dx, courant, duration }
    }

    fn validate(&self) -> Result<()> {
        if self.courant > 1.0 {
            return Err(Error::UnstableConfig(self.courant));
        }
        if !(self.courant > 0.0) {
            return Err(Error::InvalidConfig(format!("courant must be positive, got {}", self.courant)));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidConfig(format!("dx must be positive, got {}", self.dx)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("duration must be non-negative, got {}", self.duration)));
        }
        Ok(())
    }
}

/// Space-time grid derived from a network and a [`SimConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    pub dt: f64,
    /// Number of time samples, including `t = 0`.
    pub samples: usize,
    /// Cells per pipe.
    pub cells: Vec<usize>,
    /// Cell length per pipe, m.
    pub cell_len: Vec<f64>,
}

impl SimGrid {
    pub fn new(net: &Network, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let cells: Vec<usize> = net
            .pipes()
            .iter()
            .map(|p| ((p.length / cfg.dx).round() as usize).max(1))
            .collect();
        let cell_len: Vec<f64> = net
            .pipes()
            .iter()
            .zip(&cells)
            .map(|(p, &n)| p.length / n as f64)
            .collect();
        // Rounding may shorten some cells below dx; the time step follows the
        // shortest cell so no pipe runs above the requested Courant number.
        let shortest = cell_len.iter().copied().fold(cfg.dx, f64::min);
        let dt = cfg.courant * shortest / net.wave_speed();
        let samples = (cfg.duration / dt + 1e-9).floor() as usize + 1;
        Ok(Self {
            dt,
            samples,
            cells,
            cell_len,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples).map(|n| n as f64 * self.dt).collect()
    }
}

/// Prescribed inflow `ν Q` at each accessible leaf, sampled on the simulation
/// time grid (in accessible-leaf order). Flow before `t = 0` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFlow {
    pub series: Vec<Vec<f64>>,
}

impl BoundaryFlow {
    pub fn zeros(net: &Network, samples: usize) -> Self {
        Self {
            series: vec![vec![0.0; samples]; net.accessible().len()],
        }
    }

    /// Unit step (1 m³/s from `t = 0` on) at one accessible leaf.
    pub fn unit_step(net: &Network, leaf: usize, samples: usize) -> Self {
        let mut flow = Self::zeros(net, samples);
        flow.series[leaf].fill(1.0);
        flow
    }

    pub fn from_fn(net: &Network, times: &[f64], f: impl Fn(usize, f64) -> f64) -> Self {
        Self {
            series: (0..net.accessible().len())
                .map(|j| times.iter().map(|&t| f(j, t)).collect())
                .collect(),
        }
    }
}

/// Node values along one pipe, indexed `[time][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeHistory {
    pub x: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// Area of each cell.
    pub cell_area: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histories {
    pub t: Vec<f64>,
    pub dt: f64,
    pub pipes: Vec<PipeHistory>,
    /// Head trace at each accessible leaf, accessible-leaf order.
    pub leaf_head: Vec<Vec<f64>>,
}

impl Histories {
    /// `ν Q` at an accessible leaf.
    pub fn leaf_inflow(&self, net: &Network, leaf: usize) -> Vec<f64> {
        let v = net.accessible()[leaf];
        let (p, end) = net.leaf_end(v);
        let node = self.end_node(p, end);
        self.pipes[p].q.iter().map(|row| end.normal() * row[node]).collect()
    }

    fn end_node(&self, pipe: usize, end: End) -> usize {
        match end {
            End::Start => 0,
            End::Finish => self.pipes[pipe].x.len() - 1,
        }
    }

    /// Largest `|Σ ν Q|` over all junctions and steps, relative to the
    /// largest `|Q|` anywhere.
    pub fn kirchhoff_residual(&self, net: &Network) -> f64 {
        let qmax = self
            .pipes
            .iter()
            .flat_map(|p| p.q.iter().flatten())
            .fold(0.0_f64, |m, q| m.max(q.abs()));
        if qmax == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for v in 0..net.vertices().len() {
            if net.degree(v) < 3 {
                continue;
            }
            for n in 0..self.t.len() {
                let sum: f64 = net
                    .incidence(v)
                    .iter()
                    .map(|&(p, end)| end.normal() * self.pipes[p].q[n][self.end_node(p, end)])
                    .sum();
                worst = worst.max(sum.abs());
            }
        }
        worst / qmax
    }

    /// Stored volume `∫ H g A / a² dx` at time sample `n` (trapezoid per cell).
    pub fn storage(&self, net: &Network, n: usize) -> f64 {
        let scale = net.gravity() / (net.wave_speed() * net.wave_speed());
        self.pipes
            .iter()
            .map(|p| {
                let h = &p.h[n];
                p.cell_area
                    .iter()
                    .enumerate()
                    .map(|(c, &area)| area * (p.x[c + 1] - p.x[c]) * 0.5 * (h[c] + h[c + 1]))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * scale
    }
}

/// Solves the network wave model for the given boundary inflows.
pub fn simulate(net: &Network, flows: &BoundaryFlow, cfg: &SimConfig) -> Result<Histories> {
    let grid = SimGrid::new(net, cfg)?;
    if flows.series.len() != net.accessible().len() {
        return Err(Error::MismatchedSeriesLength {
            expected: net.accessible().len(),
            got: flows.series.len(),
        });
    }
    if let Some(s) = flows.series.iter().find(|s| s.len() != grid.samples) {
        return Err(Error::MismatchedSeriesLength {
            expected: grid.samples,
            got: s.len(),
        });
    }
    let mut pipes: Vec<PipeHistory> = net
        .pipes()
        .iter()
        .zip(grid.cells.iter().zip(&grid.cell_len))
        .map(|(p, (&n, &len))| {
            let x: Vec<f64> = (0..=n).map(|k| k as f64 * len).collect();
            PipeHistory {
                cell_area: (0..n).map(|c| p.area.at((c as f64 + 0.5) * len)).collect(),
                x,
                h: Vec::with_capacity(grid.samples),
                q: Vec::with_capacity(grid.samples),
            }
        })
        .collect();
    run_moc(net, flows, &grid, &mut pipes);

    let leaf_head = net
        .accessible()
        .iter()
        .map(|&v| {
            let (p, end) = net.leaf_end(v);
            let node = match end {
                End::Start => 0,
                End::Finish => pipes[p].x.len() - 1,
            };
            pipes[p].h.iter().map(|row| row[node]).collect()
        })
        .collect();

    Ok(Histories {
        t: grid.times(),
        dt: grid.dt,
        pipes,
        leaf_head,
    })
}

/// Accessible-leaf index per vertex.
fn sources(net: &Network) -> Vec<Option<usize>> {
    let mut source = vec![None; net.vertices().len()];
    for (j, &v) in net.accessible().iter().enumerate() {
        source[v] = Some(j);
    }
    source
}

fn run_moc(net: &Network, flows: &BoundaryFlow, grid: &SimGrid, pipes: &mut [PipeHistory]) {
    let a = net.wave_speed();
    let g = net.gravity();
    let dt = grid.dt;
    let impedance: Vec<Vec<f64>> = pipes
        .iter()
        .map(|p| p.cell_area.iter().map(|&area| a / (g * area)).collect())
        .collect();
    let theta: Vec<f64> = grid.cell_len.iter().map(|&len| a * dt / len).collect();

    let source = sources(net);

    let mut h: Vec<Vec<f64>> = pipes.iter().map(|p| vec![0.0; p.x.len()]).collect();
    let mut q = h.clone();
    let mut h_new = h.clone();
    let mut q_new = q.clone();

    for step in 0..grid.samples {
        let first = step == 0;
        for (p, imp) in impedance.iter().enumerate() {
            let n = imp.len();
            let th = theta[p];
            let (ho, qo) = (&h[p], &q[p]);
            for k in 1..n {
                let (bl, br) = (imp[k - 1], imp[k]);
                let (cp, cm) = if first {
                    (0.0, 0.0)
                } else {
                    let hl = ho[k] + th * (ho[k - 1] - ho[k]);
                    let ql = qo[k] + th * (qo[k - 1] - qo[k]);
                    let hr = ho[k] + th * (ho[k + 1] - ho[k]);
                    let qr = qo[k] + th * (qo[k + 1] - qo[k]);
                    (hl + bl * ql, hr - br * qr)
                };
                let qk = (cp - cm) / (bl + br);
                q_new[p][k] = qk;
                h_new[p][k] = cp - bl * qk;
            }
        }
        for (v, src) in source.iter().enumerate() {
            let inflow = src.map_or(0.0, |j| flows.series[j][step]);
            let mut sum_cy = 0.0;
            let mut sum_y = 0.0;
            let ends: Vec<(usize, End, f64, f64)> = net
                .incidence(v)
                .iter()
                .map(|&(p, end)| {
                    let (c, y) = incoming_invariant(&h[p], &q[p], &impedance[p], theta[p], end, first);
                    sum_cy += c * y;
                    sum_y += y;
                    (p, end, c, y)
                })
                .collect();
            let head = (inflow + sum_cy) / sum_y;
            for (p, end, c, y) in ends {
                let node = match end {
                    End::Start => 0,
                    End::Finish => impedance[p].len(),
                };
                h_new[p][node] = head;
                q_new[p][node] = end.normal() * (head - c) * y;
            }
        }
        std::mem::swap(&mut h, &mut h_new);
        std::mem::swap(&mut q, &mut q_new);
        for (hist, (hp, qp)) in pipes.iter_mut().zip(h.iter().zip(&q)) {
            hist.h.push(hp.clone());
            hist.q.push(qp.clone());
        }
    }
}

/// Characteristic invariant arriving at a pipe end and the admittance `1/B`
/// of the adjacent cell. At the end, the flow into the pipe is
/// `ν Q = (H − c) / B`.
fn incoming_invariant(h: &[f64], q: &[f64], imp: &[f64], theta: f64, end: End, first: bool) -> (f64, f64) {
    let n = imp.len();
    let (node, nb, b) = match end {
        End::Start => (0, 1, imp[0]),
        End::Finish => (n, n - 1, imp[n - 1]),
    };
    if first {
        return (0.0, 1.0 / b);
    }
    let hf = h[node] + theta * (h[nb] - h[node]);
    let qf = q[node] + theta * (q[nb] - q[node]);
    // At x = 0 the C⁻ characteristic arrives (H − B Q), at x = ℓ the C⁺ one.
    let c = match end {
        End::Start => hf - b * qf,
        End::Finish => hf + b * qf,
    };
    (c, 1.0 / b)
}

/// Reflection and transmission of a head wave at a junction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub reflected: f64,
    /// Transmitted heads on the other pipes, in admittance order with the
    /// incident pipe skipped.
    pub transmitted: Vec<f64>,
}

/// Splits an incident head wave at a junction whose pipes have admittances
/// `Y_i = g A_i / a`. With `T = 2 Y_m / Σ Y`, each outgoing pipe carries
/// `T·M` and the incident pipe gets `(T − 1)·M` back.
pub fn junction_scatter(incident_head: f64, incident_pipe: usize, admittances: &[f64]) -> Scatter {
    let total: f64 = admittances.iter().sum();
    let t = 2.0 * admittances[incident_pipe] / total;
    Scatter {
        reflected: (t - 1.0) * incident_head,
        transmitted: admittances
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != incident_pipe)
            .map(|_| t * incident_head)
            .collect(),
    }
}

impl Scatter {
    /// Net flow into the junction: incident minus reflected minus transmitted.
    pub fn flow_imbalance(&self, incident_head: f64, incident_pipe: usize, admittances: &[f64]) -> f64 {
        let ym = admittances[incident_pipe];
        let out: f64 = admittances
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != incident_pipe)
            .zip(&self.transmitted)
            .map(|((_, y), m)| y * m)
            .sum();
        ym * incident_head - ym * self.reflected - out
    }
}

/// Relative mismatch between the volume injected through the boundary over
/// `(0, τ)` and the change in stored volume `∫ H g A / a² dx`.
///
/// The injected volume is a trapezoid sum of the leaf inflows; storage uses
/// cell trapezoids. A step that switches on at `t = 0` already fills half a
/// cell at the first sample, so the stored volume at `t = 0` is subtracted.
pub fn conservation_residual(hist: &Histories, net: &Network, tau: f64) -> Result<f64> {
    // Integrate up to the last sample at or before tau.
    let n = (tau / hist.dt + 1e-9).floor() as usize;
    if n >= hist.t.len() {
        let last = *hist.t.last().unwrap_or(&0.0);
        return Err(Error::InvalidConfig(format!(
            "tau = {tau} s exceeds simulated duration {last} s"
        )));
    }
    let mut injected = 0.0;
    for j in 0..net.accessible().len() {
        let inflow = hist.leaf_inflow(net, j);
        injected += trapezoid(&inflow[..=n], hist.dt);
    }
    let stored = hist.storage(net, n) - hist.storage(net, 0);
    let scale = injected.abs().max(stored.abs());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((injected - stored).abs() / scale)
}

fn trapezoid(y: &[f64], dt: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dt * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[n - 1])),
    }
}

/// Writes a probe trace as CSV with columns `t,H`.
pub fn write_probe_csv<W: Write>(mut out: W, t: &[f64], head: &[f64]) -> io::Result<()> {
    writeln!(out, "t,H")?;
    for (t, h) in t.iter().zip(head) {
        writeln!(out, "{t},{h}")?;
    }
    Ok(())
}

/// Writes the full field of one pipe as CSV with columns `t,x,H,Q`.
pub fn write_field_csv<W: Write>(mut out: W, t: &[f64], pipe: &PipeHistory) -> io::Result<()> {
    writeln!(out, "t,x,H,Q")?;
    for (n, t) in t.iter().enumerate() {
        for (k, x) in pipe.x.iter().enumerate() {
            writeln!(out, "{t},{x},{},{}", pipe.h[n][k], pipe.q[n][k])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{validate_network, AreaProfile, NetworkSpec, PipeSpec};
    use crate::presets;

    fn single_pipe(length: f64, area: f64) -> Network {
        validate_network(&NetworkSpec {
            wave_speed: 1000.0,
            gravity: 9.81,
            vertices: vec!["A".into(), "B".into()],
            pipes: vec![PipeSpec {
                id: "AB".into(),
                from: "A".into(),
                to: "B".into(),
                length,
                area: AreaProfile::uniform(area),
            }],
            x0: "B".into(),
            accessible: None,
        })
        .unwrap()
    }

    #[test]
    fn grid_matches_requested_step() {
        let net = presets::example2();
        let grid = SimGrid::new(&net, &SimConfig::new(5.0, 0.95, 1.9)).unwrap();
        assert!((grid.dt - 0.00475).abs() < 1e-15);
        assert_eq!(grid.samples, 401);
        assert_eq!(grid.cells, vec![60, 80, 80, 100]);
    }

    #[test]
    fn rejects_supercritical_courant() {
        let net = presets::example2();
        let err = SimGrid::new(&net, &SimConfig::new(5.0, 1.2, 1.0)).unwrap_err();
        assert_eq!(err, Error::UnstableConfig(1.2));
    }

    #[test]
    fn rejects_mismatched_series() {
        let net = presets::example1();
        let cfg = SimConfig::new(10.0, 1.0, 0.1);
        let flows = BoundaryFlow::zeros(&net, 3);
        assert!(matches!(simulate(&net, &flows, &cfg), Err(Error::MismatchedSeriesLength { .. })));
    }

    #[test]
    fn pulse_travels_at_wave_speed() {
        let net = single_pipe(1000.0, 2.0);
        let cfg = SimConfig::new(10.0, 1.0, 0.5);
        let grid = SimGrid::new(&net, &cfg).unwrap();
        let flows = BoundaryFlow::from_fn(&net, &grid.times(), |_, t| if t < 0.015 { 1.0 } else { 0.0 });
        let hist = simulate(&net, &flows, &cfg).unwrap();
        let z = 1000.0 / (9.81 * 2.0);
        // At t = 0.3 s the two-sample pulse occupies x = 290 m and 300 m.
        let n = 30;
        let p = &hist.pipes[0];
        for (k, &x) in p.x.iter().enumerate() {
            let expect = if (x - 290.0).abs() < 1e-9 || (x - 300.0).abs() < 1e-9 { 1.0 } else { 0.0 };
            assert!((p.q[n][k] - expect).abs() < 1e-12, "x = {x}");
            assert!((p.h[n][k] - z * expect).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_end_doubles_head() {
        let net = single_pipe(100.0, 1.0);
        let cfg = SimConfig::new(10.0, 1.0, 0.5);
        let grid = SimGrid::new(&net, &cfg).unwrap();
        let flows = BoundaryFlow::from_fn(&net, &grid.times(), |_, t| if t < 0.005 { 1.0 } else { 0.0 });
        let hist = simulate(&net, &flows, &cfg).unwrap();
        let z = 1000.0 / 9.81;
        let p = &hist.pipes[0];
        let end = p.x.len() - 1;
        assert!((p.h[10][end] - 2.0 * z).abs() < 1e-9);
        // The reflection returns with the same sign.
        assert!((hist.leaf_head[0][20] - 2.0 * z).abs() < 1e-9);
    }

    #[test]
    fn junction_splits_pulse() {
        let net = presets::example1();
        let cfg = SimConfig::new(10.0, 1.0, 1.0);
        let grid = SimGrid::new(&net, &cfg).unwrap();
        let flows = BoundaryFlow::from_fn(&net, &grid.times(), |j, t| if j == 0 && t < 0.005 { 1.0 } else { 0.0 });
        let hist = simulate(&net, &flows, &cfg).unwrap();
        let m = 1000.0 / 9.81;
        // t = 0.5 s: 100 m past D on BD and DC, 100 m back up AD.
        let n = 50;
        let bd = &hist.pipes[1];
        let dc = &hist.pipes[2];
        let ad = &hist.pipes[0];
        assert!((bd.h[n][20] - 2.0 / 3.0 * m).abs() < 1e-9);
        assert!((dc.h[n][10] - 2.0 / 3.0 * m).abs() < 1e-9);
        assert!((ad.h[n][30] + m / 3.0).abs() < 1e-9);
        assert!(hist.kirchhoff_residual(&net) <= 1e-9);
    }

    #[test]
    fn zero_flow_is_quiescent() {
        let net = presets::example2();
        let cfg = SimConfig::new(5.0, 0.95, 0.5);
        let grid = SimGrid::new(&net, &cfg).unwrap();
        let hist = simulate(&net, &BoundaryFlow::zeros(&net, grid.samples), &cfg).unwrap();
        assert_eq!(conservation_residual(&hist, &net, 0.5).unwrap(), 0.0);
        assert!(hist.pipes.iter().all(|p| p.h.iter().flatten().all(|&h| h == 0.0)));
    }

    #[test]
    fn scatter_three_equal_pipes() {
        let s = junction_scatter(1.0, 0, &[1.0, 1.0, 1.0]);
        assert!((s.reflected + 1.0 / 3.0).abs() < 1e-15);
        assert!(s.transmitted.iter().all(|&t| (t - 2.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn scatter_matched_and_n_pipes() {
        let s = junction_scatter(1.0, 0, &[2.0, 1.0, 1.0]);
        assert!(s.reflected.abs() < 1e-15);
        assert!(s.transmitted.iter().all(|&t| (t - 1.0).abs() < 1e-15));
        for n in 3..8 {
            let s = junction_scatter(1.0, 1, &vec![1.0; n]);
            let t = 2.0 / n as f64;
            assert!((s.reflected - (t - 1.0)).abs() < 1e-15);
            assert_eq!(s.transmitted.len(), n - 1);
        }
    }

    #[test]
    fn csv_exports() {
        let mut buf = Vec::new();
        write_probe_csv(&mut buf, &[0.0, 0.5], &[1.0, 2.5]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,H\n0,1\n0.5,2.5\n");
    }
}
