//! JSON interchange format for networks.
//!
//! ```json
//! { "dim_out": 1,
//!   "nodes": [{"id": "v"}, {"id": "u", "bias": 0.5}],
//!   "inputs": ["v"],
//!   "edges": [{"from": "v", "to": "u", "weight": 2.0}],
//!   "outputs": [{"node": "u", "scalars": [1.0]}],
//!   "constants": [0.0],
//!   "nonlinearity": {"kind": "tanh"} }
//! ```
//!
//! A node without `"bias"` is an input. Floats round-trip bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::network::{Network, NodeId};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("malformed network: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeRepr {
    id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeRepr {
    from: NodeId,
    to: NodeId,
    weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutputRepr {
    node: NodeId,
    scalars: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkRepr {
    dim_out: usize,
    nodes: Vec<NodeRepr>,
    inputs: Vec<NodeId>,
    edges: Vec<EdgeRepr>,
    outputs: Vec<OutputRepr>,
    /// Zeros when absent.
    #[serde(default)]
    constants: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nonlinearity: Option<Nonlinearity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = NetworkRepr {
            dim_out: self.dim_out,
            nodes: self
                .nodes
                .iter()
                .map(|v| NodeRepr { id: v.clone(), bias: self.biases.get(v).copied() })
                .collect(),
            inputs: self.inputs.iter().cloned().collect(),
            edges: self
                .edges()
                .map(|(f, t, w)| EdgeRepr { from: f.clone(), to: t.clone(), weight: w })
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|(w, sc)| OutputRepr { node: w.clone(), scalars: sc.clone() })
                .collect(),
            constants: Some(self.constants.clone()),
            nonlinearity: self.nonlinearity.clone(),
            note: self.note.clone(),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = NetworkRepr::deserialize(d)?;
        from_repr(r).map_err(serde::de::Error::custom)
    }
}

fn from_repr(r: NetworkRepr) -> Result<Network, String> {
    let mut nodes = crate::network::NodeSet::new();
    let mut biases = BTreeMap::new();
    for n in r.nodes {
        if !nodes.insert(n.id.clone()) {
            return Err(format!("duplicate node {}", n.id));
        }
        if let Some(b) = n.bias {
            biases.insert(n.id, b);
        }
    }
    let mut incoming: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = BTreeMap::new();
    for e in r.edges {
        if incoming.entry(e.to.clone()).or_default().insert(e.from.clone(), e.weight).is_some() {
            return Err(format!("duplicate edge {} -> {}", e.from, e.to));
        }
    }
    let mut outputs = BTreeMap::new();
    for o in r.outputs {
        if outputs.insert(o.node.clone(), o.scalars).is_some() {
            return Err(format!("duplicate output {}", o.node));
        }
    }
    let inputs: crate::network::NodeSet = r.inputs.into_iter().collect();
    for v in &inputs {
        if biases.contains_key(v) {
            return Err(format!("input {v} carries a bias"));
        }
    }
    for v in &nodes {
        if !inputs.contains(v) && !biases.contains_key(v) {
            return Err(format!("node {v} has no bias but is not listed as an input"));
        }
    }
    Ok(Network {
        dim_out: r.dim_out,
        nodes,
        inputs,
        incoming,
        biases,
        outputs,
        constants: r.constants.unwrap_or_else(|| vec![0.0; r.dim_out]),
        nonlinearity: r.nonlinearity,
        note: r.note,
    })
}

pub fn to_json_string(net: &Network) -> String {
    serde_json::to_string_pretty(net).expect("network serializes")
}

pub fn from_json_str(s: &str) -> Result<Network, JsonError> {
    serde_json::from_str(s).map_err(|e| JsonError::Parse { path: "<string>".into(), source: e })
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Network, JsonError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| JsonError::Io { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&text)
        .map_err(|e| JsonError::Parse { path: path.display().to_string(), source: e })
}

/// SHA-256 of the compact JSON encoding, hex encoded.
pub fn network_hash(net: &Network) -> String {
    let bytes = serde_json::to_vec(net).expect("network serializes");
    hex::encode(Sha256::digest(&bytes))
}
