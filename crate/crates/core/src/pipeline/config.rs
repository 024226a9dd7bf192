//! `key = value` settings files overriding the built-in defaults.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Settings {
    /// Applies every line of `text`. Blank lines and `#` comments are
    /// ignored; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, found `{line}`", ln + 1)))?;
            let key = key.trim();
            let known = self.model.set(key, value)? || self.train.set(key, value)?;
            if !known {
                return Err(Error::Config(format!("line {}: unknown setting `{key}`", ln + 1)));
            }
        }
        self.model.validate()?;
        self.train.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = Self::default();
        s.apply_text(&fs::read_to_string(path)?)?;
        Ok(s)
    }
}
