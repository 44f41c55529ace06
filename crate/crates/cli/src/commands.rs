//! The work behind each subcommand. Every run writes its outputs and then a
//! manifest next to them; a manifest holds the fully resolved settings, so
//! replaying it repeats the run exactly.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pipescope_core::forward::SimConfig;
use pipescope_core::inversion::{
    area_profile, reachable_steps, volume_profile_steps, write_area_csv, write_volume_csv, ReconConfig,
};
use pipescope_core::irm::{oracle_irm, read_irm, sample_irm, simulate_irm, write_irm, SampledIRM};
use pipescope_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::plot;
use crate::settings::{OracleRun, PlotRun, ReconstructRun, SimulateRun};

const MANIFEST_NAME: &str = "manifest.json";
const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    /// Resolved settings of the command.
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Run {
    OracleIrm(OracleRun),
    SimulateIrm(SimulateRun),
    Reconstruct(ReconstructRun),
    Plot(PlotRun),
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::OracleIrm(_) => "oracle-irm",
            Run::SimulateIrm(_) => "simulate-irm",
            Run::Reconstruct(_) => "reconstruct",
            Run::Plot(_) => "plot",
        }
    }

    fn config(&self) -> serde_json::Value {
        match self {
            Run::OracleIrm(r) => serde_json::to_value(r),
            Run::SimulateIrm(r) => serde_json::to_value(r),
            Run::Reconstruct(r) => serde_json::to_value(r),
            Run::Plot(r) => serde_json::to_value(r),
        }
        .expect("settings serialise to JSON")
    }

    pub fn from_manifest(m: &RunManifest) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::Config(format!("manifest config: {e}"));
        let cfg = m.config.clone();
        Ok(match m.command.as_str() {
            "oracle-irm" => Run::OracleIrm(serde_json::from_value(cfg).map_err(bad)?),
            "simulate-irm" => Run::SimulateIrm(serde_json::from_value(cfg).map_err(bad)?),
            "reconstruct" => Run::Reconstruct(serde_json::from_value(cfg).map_err(bad)?),
            "plot" => Run::Plot(serde_json::from_value(cfg).map_err(bad)?),
            other => return Err(CliError::Config(format!("manifest names unknown command `{other}`"))),
        })
    }

    /// Redirects the outputs: a file for the IRM and plot commands, a
    /// directory for `reconstruct`.
    pub fn with_out(mut self, out: PathBuf) -> Self {
        match &mut self {
            Run::OracleIrm(r) => r.out = out,
            Run::SimulateIrm(r) => r.out = out,
            Run::Reconstruct(r) => r.out = out,
            Run::Plot(r) => r.out = out,
        }
        self
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let net = |src: &crate::settings::NetworkSource| src.path().map(Path::to_path_buf);
        match self {
            Run::OracleIrm(r) => net(&r.network).into_iter().collect(),
            Run::SimulateIrm(r) => net(&r.network).into_iter().collect(),
            Run::Reconstruct(r) => net(&r.network).into_iter().chain([r.irm.clone()]).collect(),
            Run::Plot(r) => r
                .inputs
                .iter()
                .cloned()
                .chain(r.truth.as_ref().and_then(net))
                .collect(),
        }
    }

    fn manifest_path(&self) -> PathBuf {
        match self {
            Run::Reconstruct(r) => r.out.join(MANIFEST_NAME),
            Run::OracleIrm(OracleRun { out, .. })
            | Run::SimulateIrm(SimulateRun { out, .. })
            | Run::Plot(PlotRun { out, .. }) => {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(MANIFEST_SUFFIX);
                out.with_file_name(name)
            }
        }
    }

    fn execute(&self) -> Result<Vec<PathBuf>, CliError> {
        match self {
            Run::OracleIrm(r) => oracle(r),
            Run::SimulateIrm(r) => simulate(r),
            Run::Reconstruct(r) => reconstruct(r),
            Run::Plot(r) => plot_run(r),
        }
    }

    /// Executes the run and writes its manifest; returns the manifest path.
    pub fn run_and_record(&self) -> Result<PathBuf, CliError> {
        let start = Instant::now();
        let outputs = self.execute()?;
        let manifest = RunManifest {
            command: self.name().to_string(),
            inputs: self.inputs(),
            config: self.config(),
            outputs,
            wall_time_s: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let path = self.manifest_path();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises to JSON");
        write_file(&path, (text + "\n").as_bytes())?;
        Ok(path)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = crate::settings::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<(), CliError> {
    match values.into_iter().find(|v| !v.is_finite()) {
        Some(v) => Err(CliError::Numeric(format!("{what} contains a non-finite value ({v})"))),
        None => Ok(()),
    }
}

fn save_irm(irm: &SampledIRM, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_finite(irm.k.iter().flatten().flatten(), "impulse response")?;
    let mut buf = Vec::new();
    write_irm(&mut buf, irm).map_err(|e| CliError::io(out, e))?;
    write_file(out, &buf)?;
    Ok(vec![out.to_path_buf()])
}

fn oracle(r: &OracleRun) -> Result<Vec<PathBuf>, CliError> {
    require(r.horizon >= 0.0 && r.horizon.is_finite(), || {
        format!("horizon must be finite and non-negative, got {}", r.horizon)
    })?;
    require(r.dt > 0.0 && r.dt.is_finite(), || format!("dt must be positive, got {}", r.dt))?;
    require(r.prune_eps >= 0.0, || format!("prune-eps must be non-negative, got {}", r.prune_eps))?;
    let net = r.network.load()?;
    let irm = sample_irm(&oracle_irm(&net, r.horizon, r.prune_eps)?, r.dt);
    save_irm(&irm, &r.out)
}

fn simulate(r: &SimulateRun) -> Result<Vec<PathBuf>, CliError> {
    require(r.smooth_window >= 0.0 && r.smooth_window.is_finite(), || {
        format!("smooth window must be finite and non-negative, got {}", r.smooth_window)
    })?;
    let net = r.network.load()?;
    let cfg = SimConfig::new(r.dx, r.courant, r.duration);
    let irm = simulate_irm(&net, &cfg, r.smooth_window, r.resample_dt)?;
    save_irm(&irm, &r.out)
}

fn reconstruct(r: &ReconstructRun) -> Result<Vec<PathBuf>, CliError> {
    let net = r.network.load()?;
    let file = File::open(&r.irm).map_err(|e| CliError::io(&r.irm, e))?;
    let irm = read_irm(BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", r.irm.display())))?;
    require(irm.leaves == net.accessible_ids(), || {
        format!(
            "impulse response covers leaves {:?} but the network's accessible ends are {:?}",
            irm.leaves,
            net.accessible_ids()
        )
    })?;
    let cfg = ReconConfig {
        tau: r.tau,
        h0: 1.0,
        dt: irm.dt,
        dx: r.dx,
        lambda: r.lambda.clone(),
        shift: r.shift.into(),
    };
    cfg.validate(net.pipes().len())?;
    let pipes = if r.pipes.is_empty() {
        (0..net.pipes().len()).collect()
    } else {
        r.pipes.iter().map(|id| net.pipe_index(id)).collect::<Result<Vec<_>, _>>()?
    };
    if let Some(ext) = &r.extent {
        require(ext.len() == 1 || ext.len() == pipes.len(), || {
            format!("expected 1 or {} extents, got {}", pipes.len(), ext.len())
        })?;
        require(ext.iter().all(|e| *e >= 0.0 && e.is_finite()), || "extents must be non-negative".into())?;
    }

    let mut outputs = Vec::new();
    for (n, &pipe) in pipes.iter().enumerate() {
        let id = &net.pipe(pipe).id;
        let reach = reachable_steps(&net, pipe, &cfg);
        let steps = match &r.extent {
            Some(ext) => (ext[n.min(ext.len() - 1)] / cfg.dx + 1e-9).floor() as usize,
            None => reach,
        };
        let vp = volume_profile_steps(&net, &irm, pipe, &cfg, steps).map_err(|e| match e {
            Error::ActionTimeExceedsTau { .. } => CliError::BeyondReach(format!(
                "pipe `{id}`: point {} m from its far end: {e}",
                (reach + 1) as f64 * cfg.dx
            )),
            other => other.into(),
        })?;
        let ap = area_profile(&vp, cfg.dx)?;
        ensure_finite(&vp.volumes, &format!("volume profile of `{id}`"))?;
        ensure_finite(&ap.areas, &format!("area profile of `{id}`"))?;

        let mut buf = Vec::new();
        let path = r.out.join(format!("volume_{id}.csv"));
        write_volume_csv(&mut buf, &[vp]).map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &buf)?;
        outputs.push(path);

        let mut buf = Vec::new();
        let path = r.out.join(format!("area_{id}.csv"));
        write_area_csv(&mut buf, &[ap]).map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &buf)?;
        outputs.push(path);
    }
    Ok(outputs)
}

fn plot_run(r: &PlotRun) -> Result<Vec<PathBuf>, CliError> {
    let tables = r
        .inputs
        .iter()
        .map(|p| plot::Table::read(p))
        .collect::<Result<Vec<_>, _>>()?;
    let truth = r.truth.as_ref().map(|t| t.load()).transpose()?;
    let svg = plot::render(&tables, truth.as_ref())?;
    write_file(&r.out, svg.as_bytes())?;
    Ok(vec![r.out.clone()])
}
