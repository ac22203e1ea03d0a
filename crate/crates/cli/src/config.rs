//! Run configuration: defaults, `key=value` config files and flag overrides.

use std::fmt;
use std::str::FromStr;

use periscope_core::geometry::{BorderMode, CropConfig};
use periscope_core::matcher::{Metric, Normalization};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Threads {
    Auto,
    Fixed(usize),
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Fixed(n)),
            _ => Err(format!("threads must be a positive integer or 'auto', got '{s}'")),
        }
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => f.write_str("auto"),
            Threads::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub target_ied: f64,
    pub three_quarter_ied: f64,
    pub min_ied: f64,
    pub frontality_ratio: f64,
    pub border: BorderMode,
    pub metric: Metric,
    pub normalize: Normalization,
    pub strict_embeddings: bool,
    pub threads: Threads,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let crop = CropConfig::default();
        RunConfig {
            target_ied: crop.target_ied,
            three_quarter_ied: crop.three_quarter_ied,
            min_ied: crop.min_ied,
            frontality_ratio: crop.frontality_ratio,
            border: crop.border,
            metric: Metric::Cosine,
            normalize: Normalization::MinMax,
            strict_embeddings: true,
            threads: Threads::Auto,
            seed: 0,
        }
    }
}

fn positive(key: &str, raw: &str) -> Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("{key} must be a positive number, got '{raw}'")),
    }
}

impl RunConfig {
    /// Applies `key=value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped; unknown keys are errors.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
            self.set(key.trim(), value.trim()).map_err(|e| format!("config line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "target_ied" => self.target_ied = positive(key, value)?,
            "three_quarter_ied" => self.three_quarter_ied = positive(key, value)?,
            "min_ied" => self.min_ied = positive(key, value)?,
            "frontality_ratio" => {
                let r = positive(key, value)?;
                if r > 1.0 {
                    return Err(format!("frontality_ratio must lie in (0, 1], got {r}"));
                }
                self.frontality_ratio = r;
            }
            "border" => {
                self.border = match value {
                    "zero" => BorderMode::Zero,
                    "replicate" => BorderMode::Replicate,
                    _ => return Err(format!("border must be zero or replicate, got '{value}'")),
                }
            }
            "metric" => self.metric = value.parse()?,
            "normalize" => self.normalize = value.parse()?,
            "strict_embeddings" => {
                self.strict_embeddings = value.parse().map_err(|_| format!("strict_embeddings must be true or false, got '{value}'"))?
            }
            "threads" => self.threads = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| format!("seed must be a non-negative integer, got '{value}'"))?,
            _ => return Err(format!("unknown config key '{key}'")),
        }
        Ok(())
    }

    pub fn crop_config(&self) -> CropConfig {
        CropConfig {
            target_ied: self.target_ied,
            three_quarter_ied: self.three_quarter_ied,
            min_ied: self.min_ied,
            frontality_ratio: self.frontality_ratio,
            border: self.border,
        }
    }
}
