//! `key = value` configuration files. Blank lines and `#` comments are
//! ignored; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::curriculum::{AblationSpec, TrainConfig};
use crate::filterbank::LearnMode;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Keys accepted by `train` and `ablate`.
pub const TRAIN_KEYS: &[&str] = &[
    "levels",
    "mode",
    "iterations",
    "lambda_pr",
    "alpha_lr",
    "alpha_init",
    "lambda_ssim",
    "pr_stride",
    "pr_only",
    "n0",
    "seed",
    "densify_threshold",
    "densify_interval",
    "densify_from",
    "densify_until",
    "split_scale",
    "opacity_floor",
    "lr_mean",
    "lr_mean_final",
    "lr_scale",
    "lr_rotation",
    "lr_color",
    "lr_opacity",
];

/// Extra keys accepted by `ablate` only.
pub const SWEEP_KEYS: &[&str] = &["levels_set", "modes", "seeds"];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value { line, key: key.to_string(), message: e.to_string() })
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(line, key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::Value { line, key: key.to_string(), message: "empty list".into() });
    }
    Ok(items)
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::Value { line, key: key.into(), message: format!("`{other}` is not a boolean") }),
    }
}

/// Splits the text into `(line, key, value)` triples.
fn entries(text: &str, allowed: &[&str]) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax { line, text: body.to_string() });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line, text: body.to_string() });
        }
        if !allowed.contains(&k) {
            return Err(ConfigError::UnknownKey { line, key: k.to_string() });
        }
        if seen.insert(k.to_string(), line).is_some() {
            return Err(ConfigError::Duplicate { line, key: k.to_string() });
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn apply(config: &mut TrainConfig, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
    match key {
        "levels" => config.levels = parse(line, key, v)?,
        "mode" => config.mode = parse::<LearnMode>(line, key, v)?,
        "iterations" => config.iterations = parse(line, key, v)?,
        "lambda_pr" => config.lambda_pr = parse(line, key, v)?,
        "alpha_lr" => config.alpha_lr = parse(line, key, v)?,
        "alpha_init" => config.alpha_init = parse(line, key, v)?,
        "lambda_ssim" => config.lambda_ssim = parse(line, key, v)?,
        "pr_stride" => config.pr_stride = parse(line, key, v)?,
        "pr_only" => config.pr_only = parse_bool(line, key, v)?,
        "n0" => config.n0 = parse(line, key, v)?,
        "seed" => config.seed = parse(line, key, v)?,
        "densify_threshold" => config.densify_threshold = parse(line, key, v)?,
        "densify_interval" => config.densify_interval = parse(line, key, v)?,
        "densify_from" => config.densify_from = parse(line, key, v)?,
        "densify_until" => config.densify_until = parse(line, key, v)?,
        "split_scale" => config.split_scale = parse(line, key, v)?,
        "opacity_floor" => config.opacity_floor = parse(line, key, v)?,
        "lr_mean" => config.lr_mean = parse(line, key, v)?,
        "lr_mean_final" => config.lr_mean_final = parse(line, key, v)?,
        "lr_scale" => config.lr_scale = parse(line, key, v)?,
        "lr_rotation" => config.lr_rotation = parse(line, key, v)?,
        "lr_color" => config.lr_color = parse(line, key, v)?,
        "lr_opacity" => config.lr_opacity = parse(line, key, v)?,
        _ => unreachable!("key list and match arms disagree: {key}"),
    }
    Ok(())
}

/// Parses a `train` config on top of [`TrainConfig::default`].
pub fn parse_train_config(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut config = TrainConfig::default();
    for (line, key, value) in entries(text, TRAIN_KEYS)? {
        apply(&mut config, line, &key, &value)?;
    }
    config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(config)
}

/// Parses an `ablate` config: training keys plus `levels_set`, `modes` and
/// `seeds` lists (defaults `0,1,2`, `scale`, `0`).
pub fn parse_ablation_config(text: &str) -> Result<(TrainConfig, AblationSpec), ConfigError> {
    let allowed: Vec<&str> = TRAIN_KEYS.iter().chain(SWEEP_KEYS).copied().collect();
    let mut config = TrainConfig::default();
    let mut spec = AblationSpec { levels: vec![0, 1, 2], modes: vec![LearnMode::Scale], seeds: vec![0] };
    for (line, key, value) in entries(text, &allowed)? {
        match key.as_str() {
            "levels_set" => spec.levels = parse_list(line, &key, &value)?,
            "modes" => spec.modes = parse_list(line, &key, &value)?,
            "seeds" => spec.seeds = parse_list(line, &key, &value)?,
            _ => apply(&mut config, line, &key, &value)?,
        }
    }
    config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok((config, spec))
}

/// The resolved value of every training key, for manifests.
pub fn resolved(config: &TrainConfig) -> BTreeMap<String, String> {
    let c = config;
    let pairs: [(&str, String); 23] = [
        ("levels", c.levels.to_string()),
        ("mode", c.mode.to_string()),
        ("iterations", c.iterations.to_string()),
        ("lambda_pr", c.lambda_pr.to_string()),
        ("alpha_lr", c.alpha_lr.to_string()),
        ("alpha_init", c.alpha_init.to_string()),
        ("lambda_ssim", c.lambda_ssim.to_string()),
        ("pr_stride", c.pr_stride.to_string()),
        ("pr_only", c.pr_only.to_string()),
        ("n0", c.n0.to_string()),
        ("seed", c.seed.to_string()),
        ("densify_threshold", c.densify_threshold.to_string()),
        ("densify_interval", c.densify_interval.to_string()),
        ("densify_from", c.densify_from.to_string()),
        ("densify_until", c.densify_until.to_string()),
        ("split_scale", c.split_scale.to_string()),
        ("opacity_floor", c.opacity_floor.to_string()),
        ("lr_mean", c.lr_mean.to_string()),
        ("lr_mean_final", c.lr_mean_final.to_string()),
        ("lr_scale", c.lr_scale.to_string()),
        ("lr_rotation", c.lr_rotation.to_string()),
        ("lr_color", c.lr_color.to_string()),
        ("lr_opacity", c.lr_opacity.to_string()),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
