//! Versioned JSON model files.
//!
//! ```text
//! { "format": "lbvs-rf/1",
//!   "params": {...}, "num_train_samples": N, "oob_error": e,
//!   "importances": [m, c, i, o],
//!   "trees": [[[feature, threshold, left, right], ["leaf", value], ...], ...] }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved model
//! reproduces it bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forest::{Node, RandomForestModel, RegressionTree, RfParams, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FORMAT_TAG: &str = "lbvs-rf/1";
const LEAF_TAG: &str = "leaf";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    num_trees: usize,
    bootstrap_ratio: f64,
    min_leaf_samples: usize,
    features_per_split: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Split(usize, f64, usize, usize),
    Leaf(String, f64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    params: ParamsDoc,
    num_train_samples: usize,
    oob_error: f64,
    importances: [f64; NUM_FEATURES],
    trees: Vec<Vec<NodeDoc>>,
}

impl<T: Real> RandomForestModel<T> {
    pub fn to_json(&self) -> String {
        let p = &self.params;
        let doc = ModelDoc {
            format: FORMAT_TAG.to_string(),
            params: ParamsDoc {
                num_trees: p.num_trees,
                bootstrap_ratio: p.bootstrap_ratio,
                min_leaf_samples: p.min_leaf_samples,
                features_per_split: p.features_per_split,
                seed: p.seed,
            },
            num_train_samples: self.num_train_samples,
            oob_error: self.oob_error,
            importances: self.importances,
            trees: self
                .trees
                .iter()
                .map(|t| {
                    t.nodes()
                        .iter()
                        .map(|n| match *n {
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => NodeDoc::Split(feature, threshold.to_f64_lossy(), left, right),
                            Node::Leaf(v) => NodeDoc::Leaf(LEAF_TAG.to_string(), v.to_f64_lossy()),
                        })
                        .collect()
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&doc).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if doc.format != FORMAT_TAG {
            return Err(Error::ModelFormat(format!(
                "unsupported format {:?}, expected {FORMAT_TAG:?}",
                doc.format
            )));
        }
        let params = RfParams {
            num_trees: doc.params.num_trees,
            bootstrap_ratio: doc.params.bootstrap_ratio,
            min_leaf_samples: doc.params.min_leaf_samples,
            features_per_split: doc.params.features_per_split,
            seed: doc.params.seed,
        };
        let trees = doc
            .trees
            .into_iter()
            .map(|nodes| {
                let nodes = nodes
                    .into_iter()
                    .map(|n| match n {
                        NodeDoc::Split(feature, threshold, left, right) => Ok(Node::Split {
                            feature,
                            threshold: to_scalar(threshold)?,
                            left,
                            right,
                        }),
                        NodeDoc::Leaf(tag, v) if tag == LEAF_TAG => Ok(Node::Leaf(to_scalar(v)?)),
                        NodeDoc::Leaf(tag, _) => Err(Error::ModelFormat(format!("unknown node tag {tag:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                RegressionTree::from_nodes(nodes)
            })
            .collect::<Result<Vec<_>>>()?;
        RandomForestModel::from_parts(trees, params, doc.num_train_samples, doc.oob_error, doc.importances)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn to_scalar<T: Real>(v: f64) -> Result<T> {
    let t = T::from_f64(v).filter(|t| t.is_finite());
    t.ok_or_else(|| Error::ModelFormat(format!("value {v} not representable")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{rf_train, PixelSample};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> RandomForestModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<PixelSample<f64>> = (0..600)
            .map(|_| {
                let x: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
                PixelSample {
                    features: x,
                    target: (x[0] + x[3] * x[3]) / 2.0,
                }
            })
            .collect();
        rf_train(&s, &RfParams { num_trees: 8, seed: 5, ..RfParams::default() }).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let text = m.to_json();
        assert!(text.starts_with("{\"format\":\"lbvs-rf/1\""));
        let back = RandomForestModel::<f64>::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn f32_models_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<PixelSample<f32>> = (0..300)
            .map(|_| {
                let x: [f32; 4] = std::array::from_fn(|_| rng.random::<f32>());
                PixelSample { features: x, target: x[1] }
            })
            .collect();
        let m = rf_train(&s, &RfParams { num_trees: 4, ..RfParams::default() }).unwrap();
        assert_eq!(RandomForestModel::<f32>::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_wrong_tag_and_corruption() {
        let text = model().to_json();
        let other = text.replace("lbvs-rf/1", "lbvs-rf/2");
        assert!(matches!(RandomForestModel::<f64>::from_json(&other), Err(Error::ModelFormat(_))));
        let bad_leaf = text.replacen("[\"leaf\"", "[\"lief\"", 1);
        assert!(RandomForestModel::<f64>::from_json(&bad_leaf).is_err());
        assert!(RandomForestModel::<f64>::from_json("{}").is_err());
        assert!(RandomForestModel::<f64>::from_json(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        m.save(&path).unwrap();
        assert_eq!(RandomForestModel::<f64>::load(&path).unwrap(), m);
    }
}
