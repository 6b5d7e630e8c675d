use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, PairModel};
use super::net::{NetConfig, ParamLayout};
use super::DisambigError;

pub const CHECKPOINT_FORMAT: &str = "cmdis-pair-net";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Architecture config plus named parameter tensors with declared shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub arch: Architecture,
    pub config: NetConfig,
    pub tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn of(arch: Architecture, model: &PairModel) -> Self {
        let p = model.params();
        let tensors = model
            .layout()
            .tensors()
            .into_iter()
            .map(|(name, shape, off)| {
                let n: usize = shape.iter().product();
                TensorEntry { name, shape, values: p[off..off + n].to_vec() }
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch,
            config: model.config().clone(),
            tensors,
        }
    }

    pub fn into_model(self) -> Result<(Architecture, PairModel), String> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(format!("unknown format {:?}", self.format));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        self.config.validate().map_err(|e| e.to_string())?;
        let layout = ParamLayout::new(&self.config);
        let expected = layout.tensors();
        if expected.len() != self.tensors.len() {
            return Err(format!("expected {} tensors, found {}", expected.len(), self.tensors.len()));
        }
        let mut params = vec![0.0; layout.total];
        for ((name, shape, off), t) in expected.into_iter().zip(&self.tensors) {
            if t.name != name || t.shape != shape {
                return Err(format!("tensor {} {:?} does not match {name} {shape:?}", t.name, t.shape));
            }
            let n: usize = shape.iter().product();
            if t.values.len() != n {
                return Err(format!("tensor {name} holds {} values, shape needs {n}", t.values.len()));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(format!("tensor {name} has non-finite values"));
            }
            params[off..off + n].copy_from_slice(&t.values);
        }
        let model = PairModel::from_params(self.config, params).map_err(|e| e.to_string())?;
        Ok((self.arch, model))
    }
}

pub fn save_model(path: &Path, arch: Architecture, model: &PairModel) -> Result<(), DisambigError> {
    let text = serde_json::to_string(&Checkpoint::of(arch, model)).expect("serializable checkpoint");
    std::fs::write(path, text).map_err(|source| DisambigError::Io { path: path.to_path_buf(), source })
}

pub fn load_model(path: &Path) -> Result<(Architecture, PairModel), DisambigError> {
    let err = |message: String| DisambigError::Checkpoint { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path)
        .map_err(|source| DisambigError::Io { path: path.to_path_buf(), source })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let ck: Checkpoint = serde_path_to_error::deserialize(de)
        .map_err(|e| err(format!("field `{}`: {}", e.path(), e.inner())))?;
    ck.into_model().map_err(err)
}
