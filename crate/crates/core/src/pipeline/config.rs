//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::edge::CannyParams;
use crate::error::{Error, Result};
use crate::mask::Placement;

pub const DEFAULT_MASK_RATIO: f64 = 0.25;

/// Dataset-specific preprocessing applied to every loaded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preprocess {
    /// Use images as decoded.
    #[default]
    None,
    /// Centre 178×178 crop, resized to 256×256.
    Celeba,
    /// Three 537×537 crops (left, middle, right), each resized to 256×256.
    Psv,
}

impl FromStr for Preprocess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Preprocess::None),
            "celeba" => Ok(Preprocess::Celeba),
            "psv" => Ok(Preprocess::Psv),
            _ => Err(Error::Config(format!("unknown preprocess '{s}' (expected none, celeba or psv)"))),
        }
    }
}

impl fmt::Display for Preprocess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preprocess::None => "none",
            Preprocess::Celeba => "celeba",
            Preprocess::Psv => "psv",
        })
    }
}

/// Where masks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    /// A square covering `ratio` of the image.
    Regular { ratio: f64, placement: Placement },
    /// Raster masks from a directory, assigned to images cyclically in
    /// file-name order.
    Directory(PathBuf),
}

/// Every knob of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub canny: CannyParams,
    mask_ratio: Option<f64>,
    pub mask_placement: Placement,
    mask_dir: Option<PathBuf>,
    pub g1_weights: Option<PathBuf>,
    pub g2_weights: Option<PathBuf>,
    /// Add a per-bucket Fréchet distance to evaluation reports.
    pub fid: bool,
    /// Chebyshev radius for edge precision/recall matching.
    pub edge_tolerance: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Score the composited image rather than the raw generator output.
    pub composited: bool,
    pub preprocess: Preprocess,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            canny: CannyParams::default(),
            mask_ratio: None,
            mask_placement: Placement::Centered,
            mask_dir: None,
            g1_weights: None,
            g2_weights: None,
            fid: false,
            edge_tolerance: 0,
            output_dir: PathBuf::from("out"),
            seed: 0,
            composited: true,
            preprocess: Preprocess::None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 14] = [
    "sigma",
    "low_ratio",
    "high_ratio",
    "mask_ratio",
    "mask_placement",
    "mask_dir",
    "g1_weights",
    "g2_weights",
    "fid",
    "edge_tolerance",
    "output_dir",
    "seed",
    "composited",
    "preprocess",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    /// Parses `key = value` lines; blank lines and `#` comments are ignored.
    /// The result is validated.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Sets one key. Does not validate cross-key constraints; call
    /// [`PipelineConfig::validate`] after the last override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sigma" => self.canny.sigma = parse(key, value)?,
            "low_ratio" => self.canny.low_ratio = parse(key, value)?,
            "high_ratio" => self.canny.high_ratio = parse(key, value)?,
            "mask_ratio" => {
                self.mask_ratio = if value.is_empty() {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "mask_placement" => {
                self.mask_placement = match value {
                    "centered" | "center" => Placement::Centered,
                    "random" => Placement::Random,
                    _ => return Err(Error::Config(format!("unknown mask placement '{value}'"))),
                }
            }
            "mask_dir" => self.mask_dir = optional_path(value),
            "g1_weights" => self.g1_weights = optional_path(value),
            "g2_weights" => self.g2_weights = optional_path(value),
            "fid" => self.fid = parse_bool(key, value)?,
            "edge_tolerance" => self.edge_tolerance = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "composited" => self.composited = parse_bool(key, value)?,
            "preprocess" => self.preprocess = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.canny.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.mask_ratio.is_some() && self.mask_dir.is_some() {
            return Err(Error::Config("mask_ratio and mask_dir are mutually exclusive".into()));
        }
        if let Some(r) = self.mask_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("mask_ratio must lie in (0, 1], got {r}")));
            }
        }
        Ok(())
    }

    /// The active mask source; a centred 25 % square when none is set.
    pub fn mask_source(&self) -> MaskSource {
        match (&self.mask_dir, self.mask_ratio) {
            (Some(dir), _) => MaskSource::Directory(dir.clone()),
            (None, ratio) => MaskSource::Regular {
                ratio: ratio.unwrap_or(DEFAULT_MASK_RATIO),
                placement: self.mask_placement,
            },
        }
    }

    pub fn set_mask_source(&mut self, source: MaskSource) {
        match source {
            MaskSource::Regular { ratio, placement } => {
                self.mask_ratio = Some(ratio);
                self.mask_placement = placement;
                self.mask_dir = None;
            }
            MaskSource::Directory(dir) => {
                self.mask_ratio = None;
                self.mask_dir = Some(dir);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = PipelineConfig::parse_str("").unwrap();
        assert_eq!(cfg.canny, CannyParams::default());
        assert_eq!(
            cfg.mask_source(),
            MaskSource::Regular {
                ratio: 0.25,
                placement: Placement::Centered
            }
        );
        assert!(cfg.composited);
    }

    #[test]
    fn parses_every_key() {
        let text = "# run\nsigma = 1.5\nlow_ratio=0.05\nhigh_ratio = 0.3\nmask_ratio = 0.4\nmask_placement = random\n\
                    g1_weights = a.ecw\ng2_weights = b.ecw\nfid = true\nedge_tolerance = 1\noutput_dir = res\n\
                    seed = 17\ncomposited = false\npreprocess = celeba\n";
        let cfg = PipelineConfig::parse_str(text).unwrap();
        assert_eq!(cfg.canny.sigma, 1.5);
        assert_eq!(cfg.canny.low_ratio, 0.05);
        assert_eq!(cfg.canny.high_ratio, 0.3);
        assert_eq!(
            cfg.mask_source(),
            MaskSource::Regular {
                ratio: 0.4,
                placement: Placement::Random
            }
        );
        assert_eq!(cfg.g1_weights.as_deref(), Some(Path::new("a.ecw")));
        assert_eq!(cfg.g2_weights.as_deref(), Some(Path::new("b.ecw")));
        assert!(cfg.fid);
        assert_eq!(cfg.edge_tolerance, 1);
        assert_eq!(cfg.output_dir, PathBuf::from("res"));
        assert_eq!(cfg.seed, 17);
        assert!(!cfg.composited);
        assert_eq!(cfg.preprocess, Preprocess::Celeba);
    }

    #[test]
    fn mask_sources_are_exclusive() {
        let err = PipelineConfig::parse_str("mask_ratio = 0.2\nmask_dir = masks\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let cfg = PipelineConfig::parse_str("mask_dir = masks\n").unwrap();
        assert_eq!(cfg.mask_source(), MaskSource::Directory("masks".into()));
        let mut cfg = PipelineConfig::default();
        cfg.set_mask_source(MaskSource::Directory("m".into()));
        cfg.set_mask_source(MaskSource::Regular {
            ratio: 0.1,
            placement: Placement::Centered,
        });
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "sigma = -1",
            "sigma = abc",
            "low_ratio = 0.5\nhigh_ratio = 0.2",
            "mask_ratio = 0",
            "colour = red",
            "no equals sign",
            "fid = maybe",
            "preprocess = imagenet",
        ] {
            assert!(matches!(PipelineConfig::parse_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn every_listed_key_is_settable() {
        for key in CONFIG_KEYS {
            let mut cfg = PipelineConfig::default();
            let value = match key {
                "mask_placement" => "random",
                "fid" | "composited" => "true",
                "preprocess" => "psv",
                "mask_dir" | "g1_weights" | "g2_weights" | "output_dir" => "x",
                "mask_ratio" | "sigma" | "low_ratio" => "0.1",
                "high_ratio" => "0.5",
                _ => "1",
            };
            cfg.set(key, value).unwrap();
        }
    }
}
