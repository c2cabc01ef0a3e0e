use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::Channel;
use crate::decoder::DecodeMode;
use crate::error::{Error, Result};
use crate::trainer::{LrGrid, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub pretrained: Option<PathBuf>,
    pub model_in: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

/// Everything a command needs. Read from a `key = value` file with dotted
/// keys, then overridden by command-line flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub train: TrainConfig,
    /// `None` until set by a config file or flag; parsing then falls back
    /// to the setting stored in the model archive.
    pub decode: Option<DecodeMode>,
    pub single_root: Option<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            train: TrainConfig::default(),
            decode: None,
            single_root: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{}' for {}", value, key)))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{}' for {}", value, key))),
    }
}

fn parse_channels(value: &str) -> Result<Vec<Channel>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Channel::from_str)
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_file(path)?;
        Ok(config)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Config(format!(
                "{}:{}: {}",
                path.display(),
                line,
                message
            )),
            other => other,
        })
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: String::new(),
                line: i + 1,
                message: format!("expected 'key = value', found '{}'", line),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: String::new(),
                line: i + 1,
                message: match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, found '{}'", assignment)))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        let t = &mut self.train;
        match key {
            "paths.train" => self.paths.train = path(),
            "paths.dev" => self.paths.dev = path(),
            "paths.test" => self.paths.test = path(),
            "paths.pretrained" => self.paths.pretrained = path(),
            "paths.model_in" => self.paths.model_in = path(),
            "paths.model_out" => self.paths.model_out = path(),
            "paths.output" => self.paths.output = path(),
            "paths.log" => self.paths.log = path(),
            "seed" => t.seed = parse_value(key, value)?,
            "train.hidden_size" => t.hidden = parse_value(key, value)?,
            "train.embed_dim" => {
                t.embed_dim = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "train.initial_lr" => t.initial_lr = parse_value(key, value)?,
            "train.lr_search" => {
                t.lr_grid = if parse_bool(key, value)? {
                    Some(t.lr_grid.unwrap_or_default())
                } else {
                    None
                }
            }
            "train.lr_grid.start" => t.lr_grid.get_or_insert_with(LrGrid::default).start = parse_value(key, value)?,
            "train.lr_grid.step" => t.lr_grid.get_or_insert_with(LrGrid::default).step = parse_value(key, value)?,
            "train.lr_grid.count" => t.lr_grid.get_or_insert_with(LrGrid::default).count = parse_value(key, value)?,
            "train.adam.beta1" => t.adam.beta1 = parse_value(key, value)?,
            "train.adam.beta2" => t.adam.beta2 = parse_value(key, value)?,
            "train.adam.epsilon" => t.adam.epsilon = parse_value(key, value)?,
            "train.channels" => t.channels = parse_channels(value)?,
            "train.pretrained_init" => t.pretrained_init = parse_bool(key, value)?,
            "train.use_pos" => t.use_pos = parse_bool(key, value)?,
            "train.directions" => t.directions = value.parse()?,
            "train.feed_soft_head" => t.feed_soft_head = parse_bool(key, value)?,
            "train.soft_head_root" => t.soft_head_root = parse_bool(key, value)?,
            "train.max_epochs" => t.max_epochs = parse_value(key, value)?,
            "decode.mode" => self.decode = Some(value.parse()?),
            "decode.single_root" => self.single_root = Some(parse_bool(key, value)?),
            other => return Err(Error::Config(format!("unknown key '{}'", other))),
        }
        Ok(())
    }

    /// Settings that shape a trained model, as `key = value` lines. Paths
    /// are left out so that identical runs give identical archives.
    pub fn echo(&self) -> Vec<String> {
        let t = &self.train;
        let mut lines = vec![
            format!("seed = {}", t.seed),
            format!("train.hidden_size = {}", t.hidden),
            format!(
                "train.embed_dim = {}",
                t.embed_dim.map_or("auto".to_owned(), |d| d.to_string())
            ),
            format!("train.initial_lr = {:?}", t.initial_lr),
            format!("train.lr_search = {}", t.lr_grid.is_some()),
        ];
        if let Some(g) = t.lr_grid {
            lines.push(format!("train.lr_grid.start = {:?}", g.start));
            lines.push(format!("train.lr_grid.step = {:?}", g.step));
            lines.push(format!("train.lr_grid.count = {}", g.count));
        }
        lines.extend([
            format!("train.adam.beta1 = {:?}", t.adam.beta1),
            format!("train.adam.beta2 = {:?}", t.adam.beta2),
            format!("train.adam.epsilon = {:?}", t.adam.epsilon),
            format!(
                "train.channels = {}",
                t.channels.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
            ),
            format!("train.pretrained_init = {}", t.pretrained_init),
            format!("train.use_pos = {}", t.use_pos),
            format!("train.directions = {}", t.directions),
            format!("train.feed_soft_head = {}", t.feed_soft_head),
            format!("train.soft_head_root = {}", t.soft_head_root),
            format!("train.max_epochs = {}", t.max_epochs),
        ]);
        if let Some(mode) = self.decode {
            lines.push(format!("decode.mode = {}", mode));
        }
        if let Some(single) = self.single_root {
            lines.push(format!("decode.single_root = {}", single));
        }
        lines
    }
}
