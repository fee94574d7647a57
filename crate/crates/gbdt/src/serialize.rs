//! Versioned JSON model document with pre-order tree encoding.

use serde::{Deserialize, Serialize};

use crate::model::schema_fingerprint;
use crate::tree::{Node, Tree};
use crate::{BinMapper, GbdtError, GbdtModel, GbdtParams, Result};

const FORMAT: &str = "vistacast-gbdt";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    fingerprint: String,
    feature_names: Vec<String>,
    params: GbdtParams,
    base_score: f64,
    cuts: Vec<Vec<f64>>,
    trees: Vec<Vec<NodeRecord>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NodeRecord {
    Split { feature: usize, bin: usize, threshold: f64, missing_left: bool, gain: f64 },
    Leaf { value: f64 },
}

impl GbdtModel {
    pub fn to_json(&self) -> String {
        let trees = self
            .trees
            .iter()
            .map(|tree| {
                tree.preorder()
                    .into_iter()
                    .map(|i| match tree.nodes()[i] {
                        Node::Split { feature, bin, threshold, missing_left, gain, .. } => {
                            NodeRecord::Split { feature, bin, threshold, missing_left, gain }
                        }
                        Node::Leaf { value } => NodeRecord::Leaf { value },
                    })
                    .collect()
            })
            .collect();
        let doc = ModelDocument {
            format: FORMAT.into(),
            version: VERSION,
            fingerprint: self.fingerprint.clone(),
            feature_names: self.feature_names.clone(),
            params: self.params.clone(),
            base_score: self.base_score,
            cuts: self.mapper.cuts().to_vec(),
            trees,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| GbdtError::Format(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(GbdtError::Format(format!("unknown format `{}`", doc.format)));
        }
        if doc.version != VERSION {
            return Err(GbdtError::Format(format!("unsupported version {}", doc.version)));
        }
        if schema_fingerprint(&doc.feature_names) != doc.fingerprint {
            return Err(GbdtError::Format("fingerprint does not match feature names".into()));
        }
        if doc.cuts.len() != doc.feature_names.len() {
            return Err(GbdtError::Format("cut-point table width mismatch".into()));
        }
        let n_features = doc.feature_names.len();
        let trees =
            doc.trees.into_iter().map(|records| decode_tree(&records, n_features)).collect::<Result<Vec<_>>>()?;
        Ok(GbdtModel {
            feature_names: doc.feature_names,
            fingerprint: doc.fingerprint,
            params: doc.params,
            base_score: doc.base_score,
            mapper: BinMapper::from_cuts(doc.cuts),
            trees,
        })
    }
}

fn decode_tree(records: &[NodeRecord], n_features: usize) -> Result<Tree> {
    fn build(records: &[NodeRecord], pos: &mut usize, nodes: &mut Vec<Node>, n_features: usize) -> Result<usize> {
        let record = records.get(*pos).ok_or_else(|| GbdtError::Format("truncated tree".into()))?;
        *pos += 1;
        let idx = nodes.len();
        match *record {
            NodeRecord::Leaf { value } => nodes.push(Node::Leaf { value }),
            NodeRecord::Split { feature, bin, threshold, missing_left, gain } => {
                if feature >= n_features {
                    return Err(GbdtError::Format(format!("split on unknown feature {feature}")));
                }
                nodes.push(Node::Leaf { value: 0.0 });
                let left = build(records, pos, nodes, n_features)?;
                let right = build(records, pos, nodes, n_features)?;
                nodes[idx] = Node::Split { feature, bin, threshold, missing_left, gain, left, right };
            }
        }
        Ok(idx)
    }

    let mut nodes = Vec::with_capacity(records.len());
    let mut pos = 0;
    build(records, &mut pos, &mut nodes, n_features)?;
    if pos != records.len() {
        return Err(GbdtError::Format("trailing nodes after tree".into()));
    }
    Ok(Tree { nodes })
}
