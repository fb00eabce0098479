//! Plain-text run configuration for the trainer: `[section]` headers and
//! `key = value` pairs, `#` comments. Small enough to need no format
//! dependency; every diagnostic carries the offending line number.
//!
//! Sections and keys (all optional, defaults in parentheses):
//!
//! ```text
//! [dataset] kind(blobs)|rings, points(2000), classes(4), noise(0.45)
//! [net]     layers(2,32,32,4), bn(range)|standard, bn_affine(true)
//! [quant]   enabled(false), weight_bits(8), activation_bits(8),
//!           activation_chunks(4), bifurcation(true), grad_low_bits(8),
//!           grad_high_bits(full), pin_first_last(false)
//! [train]   epochs(30), batch_size(64), learning_rate(0.1), momentum(0.9),
//!           seed(1), record_every(5), histogram_bins(64)
//! ```

use crate::error::{Error, Result};
use crate::train::data::{DatasetConfig, DatasetKind};
use crate::train::{BifurcationConfig, BnKind, NetConfig, QuantSimConfig, TrainConfig};

pub fn default_train_config() -> TrainConfig {
    TrainConfig {
        dataset: DatasetConfig {
            kind: DatasetKind::Blobs,
            points: 2000,
            classes: 4,
            noise: 0.45,
        },
        net: NetConfig {
            layer_sizes: vec![2, 32, 32, 4],
            bn: BnKind::Range,
            bn_affine: true,
        },
        quant: QuantSimConfig {
            enabled: false,
            weight_bits: 8,
            activation_bits: 8,
            activation_chunks: 4,
            bifurcation: BifurcationConfig {
                enabled: true,
                low_bits: 8,
                high_bits: None,
            },
            pin_first_last: false,
        },
        epochs: 30,
        batch_size: 64,
        learning_rate: 0.1,
        momentum: 0.9,
        seed: 1,
        record_every: 5,
        histogram_bins: 64,
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(line, format!("expected boolean for '{key}', got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str, kind: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(line, format!("expected {kind} for '{key}', got '{v}'")))
}

/// Parse config text; unknown sections or keys are errors.
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = default_train_config();
    let mut section = String::new();
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
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| bad(line_no, "unterminated section header"))?
                .trim();
            if !["dataset", "net", "quant", "train"].contains(&name) {
                return Err(bad(line_no, format!("unknown section '[{name}]'")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line_no, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(bad(line_no, format!("empty value for '{key}'")));
        }
        match (section.as_str(), key) {
            ("dataset", "kind") => {
                cfg.dataset.kind = match value {
                    "blobs" => DatasetKind::Blobs,
                    "rings" => DatasetKind::Rings,
                    _ => return Err(bad(line_no, format!("unknown dataset kind '{value}'"))),
                }
            }
            ("dataset", "points") => cfg.dataset.points = parse_num(line_no, key, value, "integer")?,
            ("dataset", "classes") => {
                cfg.dataset.classes = parse_num(line_no, key, value, "integer")?
            }
            ("dataset", "noise") => cfg.dataset.noise = parse_num(line_no, key, value, "number")?,
            ("net", "layers") => {
                let sizes: Result<Vec<usize>> = value
                    .split(',')
                    .map(|s| parse_num(line_no, key, s.trim(), "integer list"))
                    .collect();
                cfg.net.layer_sizes = sizes?;
            }
            ("net", "bn") => {
                cfg.net.bn = match value {
                    "range" => BnKind::Range,
                    "standard" => BnKind::Standard,
                    _ => return Err(bad(line_no, format!("unknown bn kind '{value}'"))),
                }
            }
            ("net", "bn_affine") => cfg.net.bn_affine = parse_bool(line_no, key, value)?,
            ("quant", "enabled") => cfg.quant.enabled = parse_bool(line_no, key, value)?,
            ("quant", "weight_bits") => {
                cfg.quant.weight_bits = parse_num(line_no, key, value, "integer")?
            }
            ("quant", "activation_bits") => {
                cfg.quant.activation_bits = parse_num(line_no, key, value, "integer")?
            }
            ("quant", "activation_chunks") => {
                cfg.quant.activation_chunks = parse_num(line_no, key, value, "integer")?
            }
            ("quant", "bifurcation") => {
                cfg.quant.bifurcation.enabled = parse_bool(line_no, key, value)?
            }
            ("quant", "grad_low_bits") => {
                cfg.quant.bifurcation.low_bits = parse_num(line_no, key, value, "integer")?
            }
            ("quant", "grad_high_bits") => {
                cfg.quant.bifurcation.high_bits = if value == "full" {
                    None
                } else {
                    Some(parse_num(line_no, key, value, "integer or 'full'")?)
                }
            }
            ("quant", "pin_first_last") => {
                cfg.quant.pin_first_last = parse_bool(line_no, key, value)?
            }
            ("train", "epochs") => cfg.epochs = parse_num(line_no, key, value, "integer")?,
            ("train", "batch_size") => cfg.batch_size = parse_num(line_no, key, value, "integer")?,
            ("train", "learning_rate") => {
                cfg.learning_rate = parse_num(line_no, key, value, "number")?
            }
            ("train", "momentum") => cfg.momentum = parse_num(line_no, key, value, "number")?,
            ("train", "seed") => cfg.seed = parse_num(line_no, key, value, "integer")?,
            ("train", "record_every") => {
                cfg.record_every = parse_num(line_no, key, value, "integer")?
            }
            ("train", "histogram_bins") => {
                cfg.histogram_bins = parse_num(line_no, key, value, "integer")?
            }
            ("", _) => return Err(bad(line_no, "key outside any [section]")),
            (s, k) => return Err(bad(line_no, format!("unknown key '{k}' in section '[{s}]'"))),
        }
    }
    Ok(cfg)
}
