//! Experiment configuration files.
//!
//! A configuration describes one link setup (`[system]`, `[channel]`), how to
//! sweep it (`[sweep]`, `[bound]`, `[papr]`) and an optional list of
//! `[[curves]]`, each of which overrides a few `[system]` keys. Without curves
//! the `[system]` section is the only curve.

use std::path::{Path, PathBuf};

use chirpmod::analysis::BoundNormalization;
use chirpmod::channel::{ChannelParams, DelayProfile};
use chirpmod::harness::{SweepSpec, DEFAULT_BATCH_TRIALS, DEFAULT_MAX_TRIALS, DEFAULT_MIN_ERRORS};
use chirpmod::waveform::{afdm_c1_for_doppler, ChirpDirection, SystemConfig, Waveform};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Preset this configuration was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub output: OutputSection,
    pub system: SystemSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bound: BoundSection,
    #[serde(default)]
    pub papr: PaprSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory for CSV files and reports. Default `results`.
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_output_dir(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub waveform: Waveform,
    pub n: usize,
    pub m: usize,
    pub users: usize,
    pub q: usize,
    /// Chirp modulation order. Default 1.
    #[serde(default = "one")]
    pub p: usize,
    /// Default `1/N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_rate: Option<f64>,
    #[serde(default)]
    pub chirp_direction: ChirpDirection,
    /// Default: the largest channel delay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp_len: Option<usize>,
    /// 1-based comb offsets. Default `1..=users`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcarrier_indices: Option<Vec<usize>>,
    /// Default `(2⌈α⌉ + 1) / 2N` with `α` the normalized maximum Doppler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub afdm_c1: Option<f64>,
    #[serde(default)]
    pub afdm_c2: f64,
    /// Fixed chirp shift of the chirped waveform.
    #[serde(default)]
    pub chirp_shift: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_max_doppler")]
    pub max_doppler_hz: f64,
    #[serde(default = "default_spacing")]
    pub subcarrier_spacing_hz: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "default_velocity")]
    pub velocity_kmh: f64,
    /// Default `paths - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delay: Option<usize>,
    #[serde(default)]
    pub delay_profile: DelayProfile,
}

fn default_paths() -> usize {
    3
}
fn default_max_doppler() -> f64 {
    2e3
}
fn default_spacing() -> f64 {
    15e3
}
fn default_carrier() -> f64 {
    4e9
}
fn default_velocity() -> f64 {
    500.0
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            max_doppler_hz: default_max_doppler(),
            subcarrier_spacing_hz: default_spacing(),
            carrier_hz: default_carrier(),
            velocity_kmh: default_velocity(),
            max_delay: None,
            delay_profile: DelayProfile::Fixed,
        }
    }
}

impl ChannelSection {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            paths: self.paths,
            max_doppler_hz: self.max_doppler_hz,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
            carrier_hz: self.carrier_hz,
            velocity_kmh: self.velocity_kmh,
            max_delay: self.max_delay.unwrap_or(self.paths.saturating_sub(1)),
            delay_profile: self.delay_profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub ebn0_db: Vec<f64>,
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_trials: u64,
}

fn default_min_errors() -> u64 {
    DEFAULT_MIN_ERRORS
}
fn default_max_trials() -> u64 {
    DEFAULT_MAX_TRIALS
}
fn default_batch() -> u64 {
    DEFAULT_BATCH_TRIALS
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ebn0_db: Vec::new(),
            min_errors: DEFAULT_MIN_ERRORS,
            max_trials: DEFAULT_MAX_TRIALS,
            seed: 0,
            batch_trials: DEFAULT_BATCH_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    /// Doppler/delay profiles the bound is averaged over.
    #[serde(default = "default_profiles")]
    pub profiles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub normalization: BoundNormalization,
    /// Default: the sweep points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ebn0_db: Option<Vec<f64>>,
}

fn default_profiles() -> usize {
    20
}

impl Default for BoundSection {
    fn default() -> Self {
        Self {
            profiles: default_profiles(),
            seed: 0,
            normalization: BoundNormalization::default(),
            ebn0_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaprSection {
    /// Symbol vectors per chirp index; all of them when there are fewer.
    #[serde(default = "default_draws")]
    pub max_draws: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_draws() -> usize {
    4096
}

impl Default for PaprSection {
    fn default() -> Self {
        Self {
            max_draws: default_draws(),
            seed: 0,
        }
    }
}

/// Per-curve overrides of `[system]` and the sweep points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    /// Curve name in CSV rows and file names. Default: the waveform name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<Waveform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_direction: Option<ChirpDirection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_shift: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ebn0_db: Option<Vec<f64>>,
}

/// A fully resolved curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub config: SystemConfig,
    pub ebn0_db: Vec<f64>,
}

impl Curve {
    /// File-name stem: lower-case label with runs of other characters turned into `-`.
    pub fn slug(&self) -> String {
        let mut out = String::new();
        for ch in self.label.chars() {
            if ch.is_ascii_alphanumeric() {
                out.push(ch.to_ascii_lowercase());
            } else if !out.ends_with('-') {
                out.push('-');
            }
        }
        out.trim_matches('-').to_string()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn base_config(&self, curve: &CurveSection) -> SystemConfig {
        let s = &self.system;
        let waveform = curve.waveform.unwrap_or(s.waveform);
        let users = curve.users.unwrap_or(s.users);
        let mut cfg = SystemConfig::new(waveform, s.n, s.m, users, curve.q.unwrap_or(s.q), curve.p.unwrap_or(s.p));
        if let Some(rate) = s.chirp_rate {
            cfg.chirp_rate = rate;
        }
        cfg.chirp_direction = curve.chirp_direction.unwrap_or(s.chirp_direction);
        let channel = self.channel.params();
        cfg.cp_len = s.cp_len.unwrap_or_else(|| channel.largest_delay());
        if let Some(idx) = &s.subcarrier_indices {
            cfg.subcarrier_indices = idx.iter().copied().take(users).collect();
        }
        cfg.afdm_c1 = s
            .afdm_c1
            .unwrap_or_else(|| afdm_c1_for_doppler(s.n, channel.normalized_max_doppler()));
        cfg.afdm_c2 = s.afdm_c2;
        cfg.chirp_shift = curve.chirp_shift.unwrap_or(s.chirp_shift);
        cfg
    }

    /// Every curve with defaults applied, validated.
    pub fn curves(&self) -> Result<Vec<Curve>, CliError> {
        let sections = if self.curves.is_empty() {
            vec![CurveSection::default()]
        } else {
            self.curves.clone()
        };
        let channel = self.channel.params();
        channel.validate()?;
        let curves: Vec<Curve> = sections
            .iter()
            .map(|section| {
                let config = self.base_config(section);
                config.validate()?;
                Ok(Curve {
                    label: section
                        .label
                        .clone()
                        .unwrap_or_else(|| config.waveform.name().to_string()),
                    ebn0_db: section.ebn0_db.clone().unwrap_or_else(|| self.sweep.ebn0_db.clone()),
                    config,
                })
            })
            .collect::<Result<_, CliError>>()?;
        let mut slugs: Vec<String> = curves.iter().map(Curve::slug).collect();
        slugs.sort();
        if slugs.windows(2).any(|w| w[0] == w[1]) || slugs.iter().any(String::is_empty) {
            return Err(CliError::Config("curve labels must be distinct and non-empty".into()));
        }
        Ok(curves)
    }

    pub fn sweep_spec(&self, curve: &Curve) -> SweepSpec {
        let mut spec = SweepSpec::new(curve.config.clone(), self.channel.params(), curve.ebn0_db.clone());
        spec.min_errors = self.sweep.min_errors;
        spec.max_trials = self.sweep.max_trials;
        spec.master_seed = self.sweep.seed;
        spec.batch_trials = self.sweep.batch_trials;
        spec
    }
}
