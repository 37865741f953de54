//! Text checkpoints: a JSON document holding a format tag, the model
//! configuration and every parameter with its shape.

use serde::{Deserialize, Serialize};

use super::models::Network;
use crate::error::{Error, Result};

pub const FORMAT: &str = "visaid-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub params: Vec<StoredParam>,
}

impl Checkpoint {
    pub fn capture<M: Network>(kind: &str, config: &impl Serialize, model: &M) -> Result<Self> {
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            config: serde_json::to_value(config)?,
            params: model
                .params()
                .iter()
                .map(|p| StoredParam {
                    shape: p.shape.clone(),
                    values: p.value.clone(),
                })
                .collect(),
        })
    }

    pub fn config<C: for<'de> Deserialize<'de>>(&self, kind: &str) -> Result<C> {
        self.check(kind)?;
        Ok(serde_json::from_value(self.config.clone())?)
    }

    fn check(&self, kind: &str) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    /// Copies stored values into a model built from the same configuration.
    pub fn apply<M: Network>(&self, kind: &str, model: &mut M) -> Result<()> {
        self.check(kind)?;
        let mut params = model.params_mut();
        if params.len() != self.params.len() {
            return Err(Error::shape(params.len(), self.params.len()));
        }
        for (p, s) in params.iter_mut().zip(&self.params) {
            if p.shape != s.shape || p.value.len() != s.values.len() {
                return Err(Error::shape(&p.shape, &s.shape));
            }
            p.value.clone_from(&s.values);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
