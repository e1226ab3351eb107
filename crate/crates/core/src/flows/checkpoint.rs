use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowConfig, FlowError, FlowLayer, FlowModel};
use crate::diff::{ParamRecord, ParamStore};

pub const CHECKPOINT_FORMAT: &str = "labelflow-checkpoint/v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    seed: u64,
    config: FlowConfig,
    layers: Vec<FlowLayer>,
    params: Vec<ParamRecord>,
}

impl FlowModel {
    pub fn to_json(&self) -> Result<String, FlowError> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            seed: self.seed,
            config: self.config.clone(),
            layers: self.layers.clone(),
            params: self.params.to_records(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self, FlowError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(FlowError::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        ck.config.validate()?;
        let params = ParamStore::from_records(ck.params)?;
        for (i, layer) in ck.layers.iter().enumerate() {
            let ok = match layer {
                FlowLayer::Coupling(l) => [&l.w_y, &l.w_x, &l.w_b, &l.c_y, &l.c_x, &l.c_b, &l.m_s, &l.m_b]
                    .iter()
                    .all(|m| m.validate(&params)),
                FlowLayer::Affine(l) => l.s_net.validate(&params) && l.b_net.validate(&params),
            };
            if !ok {
                return Err(FlowError::Checkpoint(format!(
                    "layer {i} does not match its parameters"
                )));
            }
        }
        Ok(Self {
            config: ck.config,
            layers: ck.layers,
            params,
            seed: ck.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FlowError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FlowError> {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut text)?;
        Self::from_json(&text)
    }
}
