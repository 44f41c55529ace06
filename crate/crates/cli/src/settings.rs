//! Run settings, layered as preset defaults, then a TOML config file, then
//! command-line flags. The resolved form of each command is what the run
//! manifest records and what `replay` reads back.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pipescope_core::inversion::KernelShift;
use pipescope_core::{presets, Network};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Three-pipe star with uniform area.
    Exp1,
    /// Four-pipe star with blockages.
    Exp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Shift {
    OneSample,
    None,
}

impl From<Shift> for KernelShift {
    fn from(s: Shift) -> Self {
        match s {
            Shift::OneSample => KernelShift::OneSample,
            Shift::None => KernelShift::None,
        }
    }
}

/// Where a network comes from: a built-in preset or a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkSource {
    Preset(Preset),
    File(PathBuf),
}

impl NetworkSource {
    pub fn load(&self) -> Result<Network, CliError> {
        match self {
            NetworkSource::Preset(Preset::Exp1) => Ok(presets::example1()),
            NetworkSource::Preset(Preset::Exp2) => Ok(presets::example2()),
            NetworkSource::File(path) => {
                let text = read_to_string(path)?;
                Network::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            NetworkSource::File(p) => Some(p),
            NetworkSource::Preset(_) => None,
        }
    }
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

/// Numeric defaults; every value is one of the reference experiments' constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub horizon: f64,
    pub dt: f64,
    pub sim_dx: f64,
    pub courant: f64,
    pub duration: f64,
    pub resample_dt: Option<f64>,
    pub smooth_window: f64,
    pub tau: f64,
    pub recon_dx: f64,
    pub lambda: Vec<f64>,
}

impl Defaults {
    /// Without a preset the second experiment's constants apply, with a single
    /// regularisation weight shared by all pipes.
    pub fn for_preset(preset: Option<Preset>) -> Self {
        let exp2 = Self {
            horizon: 1.9,
            dt: 0.007,
            sim_dx: 5.0,
            courant: 0.95,
            duration: 1.9,
            resample_dt: Some(0.007),
            smooth_window: 0.02,
            tau: 0.9,
            recon_dx: 7.0,
            lambda: vec![1e-5, 1e-5, 1e-5, 1.0],
        };
        match preset {
            Some(Preset::Exp2) => exp2,
            Some(Preset::Exp1) => Self {
                horizon: 1.61,
                dt: 0.01,
                duration: 1.7,
                resample_dt: Some(0.01),
                tau: 0.8,
                recon_dx: 10.0,
                lambda: vec![1e-5],
                ..exp2
            },
            None => Self {
                lambda: vec![1e-5],
                ..exp2
            },
        }
    }
}

/// The TOML config file. Relative paths are taken relative to the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<Preset>,
    pub network: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub oracle_irm: OracleSection,
    pub simulate_irm: SimulateSection,
    pub reconstruct: ReconstructSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub prune_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub dx: Option<f64>,
    pub courant: Option<f64>,
    pub duration: Option<f64>,
    pub resample_dt: Option<f64>,
    pub smooth_window: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    pub irm: Option<PathBuf>,
    pub tau: Option<f64>,
    pub dx: Option<f64>,
    pub lambda: Option<Vec<f64>>,
    pub pipes: Option<Vec<String>>,
    pub extent: Option<Vec<f64>>,
    pub shift: Option<Shift>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_to_string(path)?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.network);
        rebase(&mut cfg.reconstruct.irm);
        Ok(cfg)
    }
}

/// Picks the network: flag, then config file, then the preset.
pub fn network_source(
    flag: Option<PathBuf>,
    file: &FileConfig,
    preset: Option<Preset>,
) -> Result<NetworkSource, CliError> {
    flag.or_else(|| file.network.clone())
        .map(|p| NetworkSource::File(absolute(&p)))
        .or(preset.map(NetworkSource::Preset))
        .ok_or_else(|| CliError::Config("no network: pass --network or --preset".into()))
}

/// Absolute form of a path so manifests replay from any directory.
pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub network: NetworkSource,
    pub horizon: f64,
    pub dt: f64,
    pub prune_eps: f64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRun {
    pub network: NetworkSource,
    pub dx: f64,
    pub courant: f64,
    pub duration: f64,
    /// `None` keeps the simulation grid.
    pub resample_dt: Option<f64>,
    pub smooth_window: f64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructRun {
    pub network: NetworkSource,
    pub irm: PathBuf,
    pub tau: f64,
    pub dx: f64,
    pub lambda: Vec<f64>,
    /// Empty selects every pipe.
    pub pipes: Vec<String>,
    /// Distance from each selected pipe's far end to reconstruct up to; one
    /// entry applies to all. `None` goes as far as the waves reach.
    pub extent: Option<Vec<f64>>,
    pub shift: Shift,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRun {
    pub inputs: Vec<PathBuf>,
    pub truth: Option<NetworkSource>,
    pub out: PathBuf,
}
