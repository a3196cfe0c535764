//! Run configuration files.
//!
//! The grammar is line-based: `[section]` headers, `key = value` pairs,
//! blank lines, and `#` comments. Sections: `[synth]` (generator),
//! `[pipeline]` (classical preprocessing), `[architecture]` (a preset name
//! or a full inline spec, one key per layer), `[train]` (optimizer and
//! protocol). Every key has a default, so an empty file is a valid
//! desk-scale run. See the README for the full key table.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::framework::{self, ArchitectureSpec};
use crate::harness::{EarlyStop, InputMode, TrainConfig};
use crate::nn::OptimizerKind;
use crate::sigproc::{Normalization, PipelineConfig, SlopeFit};
use crate::synth::{RfiConfig, SynthConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad value for {key}: '{value}' ({want})")]
    BadValue {
        key: String,
        value: String,
        want: String,
    },
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Architecture(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        let mut current: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                    line: line_no,
                    msg: "unterminated [section] header".into(),
                })?;
                let name = name.trim().to_string();
                current = Some(
                    sections
                        .iter()
                        .position(|(n, _)| *n == name)
                        .unwrap_or_else(|| {
                            sections.push((name.clone(), Vec::new()));
                            sections.len() - 1
                        }),
                );
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let section = current.ok_or(ConfigError::Parse {
                line: line_no,
                msg: "key before any [section] header".into(),
            })?;
            sections[section]
                .1
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> std::io::Result<Result<ConfigFile>> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn section(&self, name: &str) -> &[(String, String)] {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, pairs)| pairs.as_slice())
            .unwrap_or(&[])
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section)
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse_key<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| ConfigError::BadValue {
                key: format!("{section}.{key}"),
                value: raw.to_string(),
                want: std::any::type_name::<T>().to_string(),
            }),
        }
    }

    fn parse_range(&self, section: &str, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        match self.get(section, key) {
            None => Ok(default),
            Some(raw) => {
                let parts: Vec<&str> = raw.split_whitespace().collect();
                let bad = || ConfigError::BadValue {
                    key: format!("{section}.{key}"),
                    value: raw.to_string(),
                    want: "two floats 'lo hi'".into(),
                };
                if parts.len() != 2 {
                    return Err(bad());
                }
                Ok((
                    parts[0].parse().map_err(|_| bad())?,
                    parts[1].parse().map_err(|_| bad())?,
                ))
            }
        }
    }

    fn check_known_keys(&self, section: &str, known: &[&str]) -> Result<()> {
        for (key, _) in self.section(section) {
            if !known.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    section: section.to_string(),
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }

    /// `[synth]` section over the desk-scale defaults.
    pub fn synth_config(&self) -> Result<SynthConfig> {
        self.check_known_keys(
            "synth",
            &[
                "classes",
                "instances_per_class",
                "train_per_class",
                "measurements",
                "subcarriers",
                "antenna_pairs",
                "paths",
                "delay_spread",
                "path_amp",
                "noise_std",
                "phase_slope",
                "phase_offset",
                "amp_scale",
                "rfi",
                "rfi_subband",
                "rfi_burst_std",
                "rfi_burst_prob",
                "seed",
            ],
        )?;
        let d = SynthConfig::default();
        let rfi = match self.get("synth", "rfi").unwrap_or("off") {
            "off" => None,
            "on" => {
                let base = RfiConfig::default();
                let (start, width) = match self.get("synth", "rfi_subband") {
                    None => (base.subband_start, base.subband_width),
                    Some(raw) => {
                        let parts: Vec<&str> = raw.split_whitespace().collect();
                        let bad = || ConfigError::BadValue {
                            key: "synth.rfi_subband".into(),
                            value: raw.to_string(),
                            want: "two integers 'start width'".into(),
                        };
                        if parts.len() != 2 {
                            return Err(bad());
                        }
                        (
                            parts[0].parse().map_err(|_| bad())?,
                            parts[1].parse().map_err(|_| bad())?,
                        )
                    }
                };
                Some(RfiConfig {
                    subband_start: start,
                    subband_width: width,
                    burst_std: self.parse_key("synth", "rfi_burst_std", base.burst_std)?,
                    burst_prob: self.parse_key("synth", "rfi_burst_prob", base.burst_prob)?,
                })
            }
            other => {
                return Err(ConfigError::BadValue {
                    key: "synth.rfi".into(),
                    value: other.to_string(),
                    want: "on or off".into(),
                })
            }
        };
        Ok(SynthConfig {
            classes: self.parse_key("synth", "classes", d.classes)?,
            instances_per_class: self.parse_key(
                "synth",
                "instances_per_class",
                d.instances_per_class,
            )?,
            m: self.parse_key("synth", "measurements", d.m)?,
            n: self.parse_key("synth", "subcarriers", d.n)?,
            c: self.parse_key("synth", "antenna_pairs", d.c)?,
            paths: self.parse_key("synth", "paths", d.paths)?,
            delay_spread: self.parse_range("synth", "delay_spread", d.delay_spread)?,
            path_amp: self.parse_range("synth", "path_amp", d.path_amp)?,
            noise_std: self.parse_key("synth", "noise_std", d.noise_std)?,
            phase_slope: self.parse_range("synth", "phase_slope", d.phase_slope)?,
            phase_offset: self.parse_range("synth", "phase_offset", d.phase_offset)?,
            amp_scale: self.parse_range("synth", "amp_scale", d.amp_scale)?,
            rfi,
            seed: self.parse_key("synth", "seed", d.seed)?,
        })
    }

    /// Per-class train-split size used when a generated dataset is split
    /// into train/test files (default 200).
    pub fn train_per_class(&self) -> Result<usize> {
        self.parse_key("synth", "train_per_class", 200)
    }

    /// `[pipeline]` section over the classical defaults.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        self.check_known_keys(
            "pipeline",
            &["unwrap_threshold", "normalization", "sanitize", "slope_fit"],
        )?;
        let d = PipelineConfig::default();
        let normalization = match self.get("pipeline", "normalization").unwrap_or("l2") {
            "l2" => Normalization::L2PerMeasurement,
            "max" => Normalization::MaxPerMeasurement,
            "none" => Normalization::None,
            other => {
                return Err(ConfigError::BadValue {
                    key: "pipeline.normalization".into(),
                    value: other.to_string(),
                    want: "l2, max, or none".into(),
                })
            }
        };
        let slope_fit = match self.get("pipeline", "slope_fit").unwrap_or("endpoint") {
            "endpoint" => SlopeFit::Endpoint,
            "least_squares" => SlopeFit::LeastSquares,
            other => {
                return Err(ConfigError::BadValue {
                    key: "pipeline.slope_fit".into(),
                    value: other.to_string(),
                    want: "endpoint or least_squares".into(),
                })
            }
        };
        let unwrap_threshold: f64 =
            self.parse_key("pipeline", "unwrap_threshold", d.unwrap_threshold)?;
        if unwrap_threshold <= 0.0 {
            return Err(ConfigError::BadValue {
                key: "pipeline.unwrap_threshold".into(),
                value: unwrap_threshold.to_string(),
                want: "a positive number of radians".into(),
            });
        }
        Ok(PipelineConfig {
            unwrap_threshold,
            normalization,
            sanitize: self.parse_key("pipeline", "sanitize", d.sanitize)?,
            slope_fit,
        })
    }

    /// `[train]` section over the defaults (adam 1e-3, batch 32, 12
    /// epochs, raw complex input).
    pub fn train_config(&self) -> Result<TrainConfig> {
        self.check_known_keys(
            "train",
            &[
                "optimizer",
                "learning_rate",
                "beta1",
                "beta2",
                "epsilon",
                "batch_size",
                "epochs",
                "seed",
                "input_mode",
                "folds",
                "early_stop_patience",
                "early_stop_min_delta",
            ],
        )?;
        let d = TrainConfig::default();
        let lr = self.parse_key("train", "learning_rate", 1e-3)?;
        let optimizer = match self.get("train", "optimizer").unwrap_or("adam") {
            "sgd" => OptimizerKind::Sgd { lr },
            "adam" => OptimizerKind::Adam {
                lr,
                beta1: self.parse_key("train", "beta1", 0.9)?,
                beta2: self.parse_key("train", "beta2", 0.999)?,
                eps: self.parse_key("train", "epsilon", 1e-8)?,
            },
            other => {
                return Err(ConfigError::BadValue {
                    key: "train.optimizer".into(),
                    value: other.to_string(),
                    want: "sgd or adam".into(),
                })
            }
        };
        let input_mode = match self.get("train", "input_mode") {
            None => InputMode::RawComplex,
            Some(raw) => InputMode::parse(raw).map_err(|_| ConfigError::BadValue {
                key: "train.input_mode".into(),
                value: raw.to_string(),
                want: "raw_complex, amplitude_only, or sanitized_complex".into(),
            })?,
        };
        let early_stop = match self.get("train", "early_stop_patience") {
            None => None,
            Some(_) => Some(EarlyStop {
                patience: self.parse_key("train", "early_stop_patience", 3)?,
                min_delta: self.parse_key("train", "early_stop_min_delta", 1e-4)?,
            }),
        };
        Ok(TrainConfig {
            optimizer,
            batch_size: self.parse_key("train", "batch_size", d.batch_size)?,
            epochs: self.parse_key("train", "epochs", d.epochs)?,
            seed: self.parse_key("train", "seed", d.seed)?,
            input_mode,
            early_stop,
        })
    }

    /// Fold count for cross-validation (default 5).
    pub fn folds(&self) -> Result<usize> {
        self.parse_key("train", "folds", 5)
    }

    /// `[architecture]` section: `preset = signfi|activity` (optionally
    /// with a `filters` override), or a full inline spec. `input_shape`
    /// and `num_classes` fall back to the dataset's when omitted.
    pub fn architecture(
        &self,
        dataset_shape: Option<(usize, usize, usize)>,
        dataset_classes: Option<usize>,
    ) -> Result<ArchitectureSpec> {
        let section = self.section("architecture");
        let preset = self.get("architecture", "preset").unwrap_or("custom");
        let filters: Option<usize> = match self.get("architecture", "filters") {
            None => None,
            Some(raw) => Some(raw.parse().map_err(|_| ConfigError::BadValue {
                key: "architecture.filters".into(),
                value: raw.to_string(),
                want: "positive integer".into(),
            })?),
        };
        let shape_from = |raw: &str| -> Result<(usize, usize, usize)> {
            let dims: Vec<usize> = raw
                .split('x')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| ConfigError::BadValue {
                    key: "architecture.input_shape".into(),
                    value: raw.to_string(),
                    want: "RxNxC".into(),
                })?;
            if dims.len() != 3 {
                return Err(ConfigError::BadValue {
                    key: "architecture.input_shape".into(),
                    value: raw.to_string(),
                    want: "RxNxC".into(),
                });
            }
            Ok((dims[0], dims[1], dims[2]))
        };
        let input_shape = match self.get("architecture", "input_shape") {
            Some(raw) => Some(shape_from(raw)?),
            None => dataset_shape,
        };
        let num_classes = match self.get("architecture", "num_classes") {
            Some(raw) => Some(raw.parse().map_err(|_| ConfigError::BadValue {
                key: "architecture.num_classes".into(),
                value: raw.to_string(),
                want: "positive integer".into(),
            })?),
            None => dataset_classes,
        };

        let spec = match preset {
            "signfi" | "activity" => {
                let shape = input_shape.ok_or_else(|| {
                    ConfigError::Architecture(
                        "preset needs input_shape (or a dataset to take it from)".into(),
                    )
                })?;
                let classes = num_classes.ok_or_else(|| {
                    ConfigError::Architecture(
                        "preset needs num_classes (or a dataset to take it from)".into(),
                    )
                })?;
                let spec = if preset == "signfi" {
                    framework::signfi_preset(shape, classes)
                } else {
                    framework::activity_preset(shape, classes)
                }
                .map_err(|e| ConfigError::Architecture(e.to_string()))?;
                match filters {
                    Some(f) => spec.with_filters(f),
                    None => spec,
                }
            }
            "custom" => {
                let mut pairs: Vec<(String, String)> = section
                    .iter()
                    .filter(|(k, _)| k != "preset" && k != "filters")
                    .cloned()
                    .collect();
                // Fall back to the dataset's shape/classes when the section
                // does not pin them.
                if !pairs.iter().any(|(k, _)| k == "input_shape") {
                    if let Some((r, n, c)) = input_shape {
                        pairs.push(("input_shape".into(), format!("{r}x{n}x{c}")));
                    }
                }
                if !pairs.iter().any(|(k, _)| k == "num_classes") {
                    if let Some(classes) = num_classes {
                        pairs.push(("num_classes".into(), classes.to_string()));
                    }
                }
                let mut spec = framework::from_config_pairs(&pairs)
                    .map_err(|e| ConfigError::Architecture(e.to_string()))?;
                if let Some(f) = filters {
                    spec = spec.with_filters(f);
                }
                spec
            }
            other => {
                return Err(ConfigError::BadValue {
                    key: "architecture.preset".into(),
                    value: other.to_string(),
                    want: "signfi, activity, or custom".into(),
                })
            }
        };
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_defaults() {
        let cf = ConfigFile::parse("").unwrap();
        assert_eq!(cf.synth_config().unwrap(), SynthConfig::default());
        assert_eq!(cf.pipeline_config().unwrap(), PipelineConfig::default());
        assert_eq!(cf.train_config().unwrap(), TrainConfig::default());
        assert_eq!(cf.folds().unwrap(), 5);
    }

    #[test]
    fn full_file_parses() {
        let text = "
# run config
[synth]
classes = 6
instances_per_class = 40
measurements = 5
subcarriers = 16
antenna_pairs = 1
noise_std = 0.05
amp_scale = 0.1 10
rfi = on
rfi_subband = 4 6
rfi_burst_std = 2.5
seed = 42

[pipeline]
normalization = max
sanitize = false

[architecture]
preset = activity
filters = 8

[train]
optimizer = sgd
learning_rate = 0.01
batch_size = 16
epochs = 3
input_mode = amplitude_only
folds = 4
";
        let cf = ConfigFile::parse(text).unwrap();
        let synth = cf.synth_config().unwrap();
        assert_eq!(synth.classes, 6);
        assert_eq!(synth.n, 16);
        assert_eq!(synth.amp_scale, (0.1, 10.0));
        let rfi = synth.rfi.unwrap();
        assert_eq!((rfi.subband_start, rfi.subband_width), (4, 6));
        assert_eq!(rfi.burst_std, 2.5);

        let pipeline = cf.pipeline_config().unwrap();
        assert_eq!(pipeline.normalization, Normalization::MaxPerMeasurement);
        assert!(!pipeline.sanitize);

        let tc = cf.train_config().unwrap();
        assert_eq!(tc.optimizer, OptimizerKind::Sgd { lr: 0.01 });
        assert_eq!(tc.batch_size, 16);
        assert_eq!(tc.input_mode, InputMode::AmplitudeOnly);
        assert_eq!(cf.folds().unwrap(), 4);

        let arch = cf.architecture(Some((10, 16, 1)), Some(6)).unwrap();
        assert_eq!(arch.conv_stages.len(), 7);
        assert!(arch.conv_stages.iter().all(|s| s.filters == 8));
    }

    #[test]
    fn custom_architecture_section() {
        let text = "
[architecture]
preset = custom
input_shape = 4x8x1
num_classes = 3
conv_1 = kernel 2x1 stride 2x1 filters 4 bn on
ap_1 = 1x2
fc_1 = units 16 dropout 0.5
";
        let cf = ConfigFile::parse(text).unwrap();
        let arch = cf.architecture(None, None).unwrap();
        assert_eq!(arch.input_shape, (4, 8, 1));
        assert_eq!(arch.num_classes, 3);
        assert_eq!(arch.conv_stages.len(), 1);
        assert_eq!(arch.pool_bank, vec![(1, 2)]);
        assert_eq!(arch.fc_stages[0].units, 16);
    }

    #[test]
    fn errors_are_loud() {
        assert!(matches!(
            ConfigFile::parse("key = 1"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ConfigFile::parse("[synth\nx = 1"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        let cf = ConfigFile::parse("[synth]\nclasses = many").unwrap();
        assert!(matches!(
            cf.synth_config(),
            Err(ConfigError::BadValue { .. })
        ));
        let cf = ConfigFile::parse("[synth]\nclasss = 3").unwrap();
        assert!(matches!(
            cf.synth_config(),
            Err(ConfigError::UnknownKey { .. })
        ));
        let cf = ConfigFile::parse("[train]\noptimizer = lion").unwrap();
        assert!(matches!(
            cf.train_config(),
            Err(ConfigError::BadValue { .. })
        ));
        let cf = ConfigFile::parse("[pipeline]\nunwrap_threshold = -1").unwrap();
        assert!(matches!(
            cf.pipeline_config(),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn comments_and_inline_comments_are_stripped() {
        let text = "
[train]  # protocol
epochs = 9   # short run
";
        let cf = ConfigFile::parse(text).unwrap();
        assert_eq!(cf.train_config().unwrap().epochs, 9);
    }
}
