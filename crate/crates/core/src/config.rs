//! Run configuration.
//!
//! The file format is flat `section.key = value` lines. `#` starts a comment,
//! blank lines are ignored, every key may appear at most once and unknown
//! keys are rejected. Keys that are absent keep their defaults.

use std::path::PathBuf;
use std::str::FromStr;

use crate::detection::{BinGeometry, Side};
use crate::error::{Error, Result};
use crate::integrator::{IntegratorSettings, Scheme};
use crate::params::{ExperimentParams, Statistics};
use crate::sampler::{SamplerMode, SamplerSpec};
use crate::state::probability_window;

/// Version stamped into every output file.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ExperimentParams,
    pub sampler: SamplerSpec,
    pub integrator: IntegratorSettings,
    pub n_pairs: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Half-width of the screen histograms; `None` uses the probability
    /// window at the screens.
    pub histogram_half_width: Option<f64>,
    pub histogram_nbins: usize,
    /// Cells per axis of the joint `(y_s1, y_s2)` grid, which always spans
    /// the probability window.
    pub grid_nbins: usize,
    pub selective_side: Side,
    /// Pairs written by the `trajectory` subcommand.
    pub trajectory_pairs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ExperimentParams::default(),
            sampler: SamplerSpec::default(),
            integrator: IntegratorSettings::default(),
            n_pairs: 10_000,
            workers: 0,
            out_dir: PathBuf::from("out"),
            histogram_half_width: None,
            histogram_nbins: 224,
            grid_nbins: 40,
            selective_side: Side::Upper,
            trajectory_pairs: 4,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_f64(value: &str) -> Result<f64, String> {
    let v: f64 = parse(value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{value}` is not a finite number"))
    }
}

impl RunConfig {
    /// Every recognised key, in the order outputs list them.
    pub const KEYS: &'static [&'static str] = &[
        "params.hbar",
        "params.mass",
        "params.sigma0",
        "params.slit_y",
        "params.slit_x",
        "params.kx",
        "params.ky",
        "params.amp",
        "params.statistics",
        "params.screen_dist",
        "sampler.mode",
        "sampler.y0_mean",
        "sampler.y0_sigma",
        "sampler.seed",
        "sampler.max_rejects",
        "integrator.scheme",
        "integrator.dt_init",
        "integrator.tol_rel",
        "integrator.tol_abs",
        "integrator.max_steps",
        "run.n_pairs",
        "run.workers",
        "run.out_dir",
        "histogram.half_width",
        "histogram.nbins",
        "grid.nbins",
        "selective.side",
        "trajectory.pairs",
    ];

    /// Keys that steer execution without changing any result. They are left
    /// out of the resolved config embedded in outputs.
    pub const EXECUTION_KEYS: &'static [&'static str] = &["run.workers", "run.out_dir"];

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::ConfigParse {
                    line,
                    key: content.to_string(),
                    reason: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let err = |reason: String| Error::ConfigParse {
                line,
                key: key.to_string(),
                reason,
            };
            let Some(&known) = Self::KEYS.iter().find(|k| **k == key) else {
                return Err(err("unknown key".into()));
            };
            if seen.contains(&known) {
                return Err(err("duplicate key".into()));
            }
            seen.push(known);
            cfg.set(known, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let p = &mut self.params;
        match key {
            "params.hbar" => p.hbar = parse_f64(value)?,
            "params.mass" => p.mass = parse_f64(value)?,
            "params.sigma0" => p.sigma0 = parse_f64(value)?,
            "params.slit_y" => p.slit_y = parse_f64(value)?,
            "params.slit_x" => p.slit_x = parse_f64(value)?,
            "params.kx" => p.kx = parse_f64(value)?,
            "params.ky" => p.ky = parse_f64(value)?,
            "params.amp" => p.amp = parse_f64(value)?,
            "params.statistics" => p.statistics = parse::<Statistics>(value)?,
            "params.screen_dist" => p.screen_dist = parse_f64(value)?,
            "sampler.mode" => self.sampler.mode = parse::<SamplerMode>(value)?,
            "sampler.y0_mean" => self.sampler.y0_mean = parse_f64(value)?,
            "sampler.y0_sigma" => self.sampler.y0_sigma = parse_f64(value)?,
            "sampler.seed" => self.sampler.seed = parse(value)?,
            "sampler.max_rejects" => self.sampler.max_rejects = parse(value)?,
            "integrator.scheme" => self.integrator.scheme = parse::<Scheme>(value)?,
            "integrator.dt_init" => self.integrator.dt_init = parse_f64(value)?,
            "integrator.tol_rel" => self.integrator.tol_rel = parse_f64(value)?,
            "integrator.tol_abs" => self.integrator.tol_abs = parse_f64(value)?,
            "integrator.max_steps" => self.integrator.max_steps = parse(value)?,
            "run.n_pairs" => self.n_pairs = parse(value)?,
            "run.workers" => self.workers = parse(value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            "histogram.half_width" => {
                self.histogram_half_width = if value == "auto" {
                    None
                } else {
                    Some(parse_f64(value)?)
                }
            }
            "histogram.nbins" => self.histogram_nbins = parse(value)?,
            "grid.nbins" => self.grid_nbins = parse(value)?,
            "selective.side" => self.selective_side = parse::<Side>(value)?,
            "trajectory.pairs" => self.trajectory_pairs = parse(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Textual value of one key, in a form [`RunConfig::set`] reads back.
    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.params;
        Some(match key {
            "params.hbar" => p.hbar.to_string(),
            "params.mass" => p.mass.to_string(),
            "params.sigma0" => p.sigma0.to_string(),
            "params.slit_y" => p.slit_y.to_string(),
            "params.slit_x" => p.slit_x.to_string(),
            "params.kx" => p.kx.to_string(),
            "params.ky" => p.ky.to_string(),
            "params.amp" => p.amp.to_string(),
            "params.statistics" => p.statistics.to_string(),
            "params.screen_dist" => p.screen_dist.to_string(),
            "sampler.mode" => self.sampler.mode.to_string(),
            "sampler.y0_mean" => self.sampler.y0_mean.to_string(),
            "sampler.y0_sigma" => self.sampler.y0_sigma.to_string(),
            "sampler.seed" => self.sampler.seed.to_string(),
            "sampler.max_rejects" => self.sampler.max_rejects.to_string(),
            "integrator.scheme" => self.integrator.scheme.to_string(),
            "integrator.dt_init" => self.integrator.dt_init.to_string(),
            "integrator.tol_rel" => self.integrator.tol_rel.to_string(),
            "integrator.tol_abs" => self.integrator.tol_abs.to_string(),
            "integrator.max_steps" => self.integrator.max_steps.to_string(),
            "run.n_pairs" => self.n_pairs.to_string(),
            "run.workers" => self.workers.to_string(),
            "run.out_dir" => self.out_dir.display().to_string(),
            "histogram.half_width" => self
                .histogram_half_width
                .map_or_else(|| "auto".to_string(), |w| w.to_string()),
            "histogram.nbins" => self.histogram_nbins.to_string(),
            "grid.nbins" => self.grid_nbins.to_string(),
            "selective.side" => self.selective_side.to_string(),
            "trajectory.pairs" => self.trajectory_pairs.to_string(),
            _ => return None,
        })
    }

    /// `(key, value)` for every result-affecting key.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        Self::KEYS
            .iter()
            .filter(|k| !Self::EXECUTION_KEYS.contains(k))
            .map(|&k| (k, self.get(k).expect("every listed key has a value")))
            .collect()
    }

    /// Checks every nested invariant. Errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.sampler.validate(&self.params)?;
        self.integrator.validate()?;
        if self.n_pairs == 0 {
            return Err(Error::invalid("run.n_pairs", "must be > 0"));
        }
        if let Some(w) = self.histogram_half_width {
            if !(w > 0.0) {
                return Err(Error::invalid("histogram.half_width", "must be > 0 or `auto`"));
            }
        }
        if self.histogram_nbins < 2 {
            return Err(Error::invalid("histogram.nbins", "must be >= 2"));
        }
        if self.grid_nbins < 2 {
            return Err(Error::invalid("grid.nbins", "must be >= 2"));
        }
        Ok(())
    }

    /// Screen histogram geometry.
    pub fn histogram_geometry(&self) -> Result<BinGeometry> {
        let half = self
            .histogram_half_width
            .unwrap_or_else(|| probability_window(&self.params, self.params.arrival_time()));
        BinGeometry::symmetric(half, self.histogram_nbins)
    }

    /// Joint-grid geometry, spanning the probability window at the screens.
    pub fn grid_geometry(&self) -> Result<BinGeometry> {
        let half = probability_window(&self.params, self.params.arrival_time());
        BinGeometry::symmetric(half, self.grid_nbins)
    }
}
