//! JSON checkpoint container.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "task": "classification",
//!   "feature_space": {"hash_dimension": 16384, "ngram_min": 2, "ngram_max": 4},
//!   "outputs": ["neg", "pos"],
//!   "weight_len": 32768,
//!   "weights": [[17, 0.25], [901, -1.5]]
//! }
//! ```
//!
//! `weights` lists the non-zero entries of the dense weight vector as
//! `[index, value]` pairs in ascending index order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::features::FeatureSpace;
use crate::tasks::TaskKind;

use super::{weight_len, ModelError, Result, TaskModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub task: TaskKind,
    pub feature_space: FeatureSpace,
    pub outputs: Vec<String>,
    pub weight_len: usize,
    pub weights: Vec<(usize, f64)>,
}

impl From<&TaskModel> for Checkpoint {
    fn from(m: &TaskModel) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            task: m.task,
            feature_space: m.space,
            outputs: m.outputs.clone(),
            weight_len: m.weights.len(),
            weights: m
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect(),
        }
    }
}

impl TryFrom<Checkpoint> for TaskModel {
    type Error = ModelError;

    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_VERSION})",
                c.format_version
            )));
        }
        let expected = weight_len(c.task, &c.feature_space, c.outputs.len());
        if c.weight_len != expected {
            return Err(ModelError::Checkpoint(format!("weight_len {} does not match layout {expected}", c.weight_len)));
        }
        let mut dense = vec![0.0; expected];
        for (i, w) in c.weights {
            *dense
                .get_mut(i)
                .ok_or_else(|| ModelError::Checkpoint(format!("weight index {i} out of range")))? = w;
        }
        TaskModel::with_weights(c.task, c.feature_space, c.outputs, dense)
    }
}

impl TaskModel {
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        if !self.fitted {
            return Err(ModelError::Untrained);
        }
        serde_json::to_writer(out, &Checkpoint::from(self)).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let c: Checkpoint = serde_json::from_reader(input).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        c.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_version_check() {
        let fs = FeatureSpace {
            hash_dimension: 1024,
            ngram_min: 1,
            ngram_max: 3,
        };
        let mut w = vec![0.0; 2048];
        w[3] = 0.1 + 0.2;
        w[2000] = -1e-300;
        let m = TaskModel::with_weights(TaskKind::Classification, fs, vec!["a".into(), "b".into()], w).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = TaskModel::load(&buf[..]).unwrap();
        assert_eq!(back, m);

        let text = String::from_utf8(buf).unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(TaskModel::load(text.as_bytes()), Err(ModelError::Checkpoint(_))));
    }
}
