//! Boundary-control reconstruction.
//!
//! For a cut point `p`, each accessible leaf beyond `p` injects a flow during
//! the last `f(x_j)` seconds before `τ`, chosen so that the head at those
//! leaves is `h0` on the active window. The injected volume then equals
//! `h0 g / a² · V(p)`, where `V(p)` is the internal volume of the part of the
//! network cut off by `p`. Sweeping `p` along a pipe and differencing the
//! volumes gives the cross-sectional area.
//!
//! The integral equation is discretised piecewise-constant on the IRM grid.
//! Rows and columns outside the active windows are dropped and the square
//! remainder is solved as a Tikhonov-regularised least-squares problem.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::irm::SampledIRM;
use crate::network::{action_times_unchecked, ActionTimes, End, Network, PointOnPipe};

/// Shift applied to the second (reflected-time) kernel argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelShift {
    /// `k(2τ − t − s + dt)`: the one-sample shift of the reference discretisation.
    #[default]
    OneSample,
    /// `k(2τ − t − s)`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub tau: f64,
    pub h0: f64,
    /// Must equal the IRM sample step.
    pub dt: f64,
    /// Spacing of reconstruction points along a pipe, m.
    pub dx: f64,
    /// Regularisation weight per pipe (network pipe order). A single entry
    /// applies to every pipe.
    pub lambda: Vec<f64>,
    pub shift: KernelShift,
}

impl ReconConfig {
    pub fn new(tau: f64, dt: f64, dx: f64, lambda: f64) -> Self {
        Self {
            tau,
            h0: 1.0,
            dt,
            dx,
            lambda: vec![lambda],
            shift: KernelShift::default(),
        }
    }

    pub fn lambda_for(&self, pipe: usize) -> f64 {
        match self.lambda.as_slice() {
            [single] => *single,
            list => list.get(pipe).copied().unwrap_or(0.0),
        }
    }

    /// Samples per leaf, `floor(τ/dt)`.
    pub fn samples(&self) -> usize {
        (self.tau / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self, pipes: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau > 0.0) || !(self.dt > 0.0) || !(self.dx > 0.0) {
            return bad("tau, dt and dx must be positive".into());
        }
        if self.h0 == 0.0 || !self.h0.is_finite() {
            return bad("h0 must be finite and non-zero".into());
        }
        if self.lambda.len() != 1 && self.lambda.len() != pipes {
            return bad(format!(
                "expected 1 or {pipes} regularisation weights, got {}",
                self.lambda.len()
            ));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return bad("regularisation weights must be finite and non-negative".into());
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        0.25 * self.dt
    }
}

/// Discretised boundary-control system for one cut point.
#[derive(Debug, Clone, PartialEq)]
pub struct BCSystem {
    /// Samples per leaf; sample `l` (0-based) sits at `t = (l + 1)·dt`.
    pub m: usize,
    /// Accessible-leaf count.
    pub n: usize,
    pub dt: f64,
    /// `(n·m)²` block matrix; row block `j`, column block `i`.
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Per `(leaf, sample)`, flattened as `leaf·m + sample`.
    pub active: Vec<bool>,
    pub nu: Vec<f64>,
}

impl BCSystem {
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&r| self.active[r]).collect()
    }
}

/// Boundary flows `Q_p(t_l, x_i)` per leaf on `t_l = l·dt`, `l = 1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFlows {
    pub dt: f64,
    pub series: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
}

// Block indices mirror the matrix layout; iterators would hide it.
#[allow(clippy::needless_range_loop)]
pub fn assemble_system(irm: &SampledIRM, f: &ActionTimes, cfg: &ReconConfig, net: &Network) -> Result<BCSystem> {
    if (irm.dt - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(Error::GridMismatch { irm: irm.dt, cfg: cfg.dt });
    }
    let m = cfg.samples();
    if irm.samples() < 2 * m {
        return Err(Error::HorizonTooShort { needed: 2 * m, have: irm.samples() });
    }
    let tol = cfg.tol();
    for (j, &fj) in f.f.iter().enumerate() {
        if fj > cfg.tau + tol {
            return Err(Error::ActionTimeExceedsTau {
                leaf: irm.leaves[j].clone(),
                f: fj,
                tau: cfg.tau,
            });
        }
    }
    let n = irm.leaf_count();
    let dt = cfg.dt;
    let nu: Vec<f64> = net.accessible().iter().map(|&v| net.leaf_normal(v)).collect();
    let active: Vec<bool> = (0..n * m)
        .map(|r| {
            let (leaf, l) = (r / m, r % m + 1);
            l as f64 * dt > cfg.tau - f.f[leaf] + tol
        })
        .collect();
    let base = match cfg.shift {
        KernelShift::OneSample => 2 * m + 1,
        KernelShift::None => 2 * m,
    };

    let size = n * m;
    let mut matrix = DMatrix::<f64>::zeros(size, size);
    for j in 0..n {
        for i in 0..n {
            let k = &irm.k[i][j];
            let scale = 0.5 * dt * nu[i];
            for l in 1..=m {
                let row = j * m + l - 1;
                if !active[row] {
                    continue;
                }
                for s in 1..=m {
                    let col = i * m + s - 1;
                    if !active[col] {
                        continue;
                    }
                    matrix[(row, col)] = scale * (k[l.abs_diff(s)] + k[base - l - s]);
                }
            }
        }
        let direct = nu[j] * irm.direct[j];
        for l in 0..m {
            matrix[(j * m + l, j * m + l)] += direct;
        }
    }
    let rhs = DVector::from_iterator(size, active.iter().map(|&a| if a { cfg.h0 } else { 0.0 }));
    Ok(BCSystem { m, n, dt, matrix, rhs, active, nu })
}

/// Solves the active part of the system, minimising
/// `‖H q − b‖² + λ ‖q‖²`; inactive samples are exactly zero.
pub fn solve_boundary_flows(sys: &BCSystem, lambda: f64) -> Result<BoundaryFlows> {
    let idx = sys.active_indices();
    let k = idx.len();
    let mut flat = vec![0.0; sys.n * sys.m];
    if k > 0 {
        let rows = if lambda > 0.0 { 2 * k } else { k };
        let mut a = DMatrix::<f64>::zeros(rows, k);
        let mut b = DVector::<f64>::zeros(rows);
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                a[(r, c)] = sys.matrix[(gr, gc)];
            }
            b[r] = sys.rhs[gr];
        }
        if lambda > 0.0 {
            let w = lambda.sqrt();
            for r in 0..k {
                a[(k + r, r)] = w;
            }
        }
        let qr = a.qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let floor = diag_max * f64::EPSILON * k as f64;
        if diag_max == 0.0 || r.diagonal().iter().any(|v| v.abs() <= floor) {
            return Err(Error::SingularSystem);
        }
        qr.q_tr_mul(&mut b);
        let q = r
            .solve_upper_triangular(&b.rows(0, k).into_owned())
            .ok_or(Error::SingularSystem)?;
        for (c, &gc) in idx.iter().enumerate() {
            flat[gc] = q[c];
        }
    }
    Ok(BoundaryFlows {
        dt: sys.dt,
        series: flat.chunks(sys.m.max(1)).take(sys.n).map(<[f64]>::to_vec).collect(),
        nu: sys.nu.clone(),
    })
}

/// Internal volume cut off by the point, `a²/(h0 g) · Σ_i ν_i Σ_l Q_i(t_l) dt`.
pub fn volume(flows: &BoundaryFlows, cfg: &ReconConfig, net: &Network) -> f64 {
    let a = net.wave_speed();
    let injected: f64 = flows
        .series
        .iter()
        .zip(&flows.nu)
        .map(|(q, nu)| nu * q.iter().sum::<f64>() * flows.dt)
        .sum();
    a * a / (cfg.h0 * net.gravity()) * injected
}

/// Offset in pipe coordinates of the point `distance` metres from the pipe's
/// far end (the end facing away from `x0`).
pub fn offset_from_far_end(net: &Network, pipe: usize, distance: f64) -> f64 {
    match net.far_end(pipe) {
        End::Start => distance,
        End::Finish => net.pipe(pipe).length - distance,
    }
}

/// Number of reconstruction steps on `pipe`: the pipe length, capped by how far
/// the waves from the leaves beyond it can reach within `τ`.
pub fn reachable_steps(net: &Network, pipe: usize, cfg: &ReconConfig) -> usize {
    let reach = net.wave_speed() * cfg.tau - net.max_leaf_distance_beyond(pipe);
    let max_len = net.pipe(pipe).length.min(reach);
    if max_len <= 0.0 {
        return 0;
    }
    (max_len / cfg.dx + 1e-9).floor() as usize
}

/// `V(p)` for the point `distance` metres from the far end of `pipe`. At either
/// end of the pipe the point is the limit from inside the pipe.
pub fn volume_at(net: &Network, irm: &SampledIRM, pipe: usize, distance: f64, cfg: &ReconConfig) -> Result<f64> {
    let p = PointOnPipe::limit(pipe, offset_from_far_end(net, pipe, distance));
    let f = action_times_unchecked(net, p);
    let sys = assemble_system(irm, &f, cfg, net)?;
    let flows = solve_boundary_flows(&sys, cfg.lambda_for(pipe))?;
    Ok(volume(&flows, cfg, net))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    pub pipe: String,
    /// Distances from the pipe's far end, `k·Δx`, `k = 1..=M_P`.
    pub positions: Vec<f64>,
    pub volumes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaProfile {
    pub pipe: String,
    /// Interval starts, same frame as [`VolumeProfile::positions`].
    pub positions: Vec<f64>,
    pub areas: Vec<f64>,
}

/// Volumes at `k·Δx` from the far end of `pipe`; the points are solved
/// independently and in parallel.
pub fn volume_profile(net: &Network, irm: &SampledIRM, pipe: usize, cfg: &ReconConfig) -> Result<VolumeProfile> {
    volume_profile_steps(net, irm, pipe, cfg, reachable_steps(net, pipe, cfg))
}

/// [`volume_profile`] over an explicit number of steps; points beyond the
/// reach of the waves fail with [`Error::ActionTimeExceedsTau`].
pub fn volume_profile_steps(
    net: &Network,
    irm: &SampledIRM,
    pipe: usize,
    cfg: &ReconConfig,
    steps: usize,
) -> Result<VolumeProfile> {
    cfg.validate(net.pipes().len())?;
    let length = net.pipe(pipe).length;
    if steps as f64 * cfg.dx > length * (1.0 + 1e-12) {
        return Err(Error::PointOutOfRange {
            pipe: net.pipe(pipe).id.clone(),
            offset: offset_from_far_end(net, pipe, steps as f64 * cfg.dx),
        });
    }
    let positions: Vec<f64> = (1..=steps).map(|k| k as f64 * cfg.dx).collect();
    let volumes = positions
        .par_iter()
        .map(|&d| volume_at(net, irm, pipe, d, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(VolumeProfile {
        pipe: net.pipe(pipe).id.clone(),
        positions,
        volumes,
    })
}

/// Forward difference quotient of the volumes.
pub fn area_profile(vp: &VolumeProfile, dx: f64) -> Result<AreaProfile> {
    if vp.volumes.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    Ok(AreaProfile {
        pipe: vp.pipe.clone(),
        positions: vp.positions[..vp.positions.len() - 1].to_vec(),
        areas: vp.volumes.windows(2).map(|w| (w[1] - w[0]) / dx).collect(),
    })
}

pub fn write_volume_csv<W: Write>(mut out: W, profiles: &[VolumeProfile]) -> io::Result<()> {
    writeln!(out, "pipe,x_m,V_m3")?;
    for vp in profiles {
        for (x, v) in vp.positions.iter().zip(&vp.volumes) {
            writeln!(out, "{},{x},{v}", vp.pipe)?;
        }
    }
    Ok(())
}

pub fn write_area_csv<W: Write>(mut out: W, profiles: &[AreaProfile]) -> io::Result<()> {
    writeln!(out, "pipe,x_m,A_m2")?;
    for ap in profiles {
        for (x, a) in ap.positions.iter().zip(&ap.areas) {
            writeln!(out, "{},{x},{a}", ap.pipe)?;
        }
    }
    Ok(())
}
