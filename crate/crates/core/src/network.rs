//! Feed-forward networks on arbitrary DAGs.
//!
//! A [`Network`] stores nodes, weighted edges, biases on non-input nodes and an
//! affine read-out `λ⁽ʳ⁾ + Σ_w λ_w⁽ʳ⁾ O_w` for each of its `D` output
//! coordinates. Values are immutable; rewrites in [`crate::rewrite`] build new
//! networks through [`NetworkBuilder`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nonlinearity::{Nonlinearity, Pole};

/// Node identifier. Ordering is lexicographic and used for every tie-break.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

pub type NodeSet = BTreeSet<NodeId>;

pub fn node_set<I, S>(ids: I) -> NodeSet
where
    I: IntoIterator<Item = S>,
    S: Into<NodeId>,
{
    ids.into_iter().map(Into::into).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("network has a directed cycle through {0}")]
    Cyclic(NodeId),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    InputArity { expected: usize, got: usize },
}

/// One broken structural invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    EmptyNetwork,
    ZeroOutputDim,
    EmptyId,
    Cycle { node: NodeId },
    UnknownEndpoint { from: NodeId, to: NodeId },
    InputHasParents { node: NodeId },
    ParentlessNonInput { node: NodeId },
    UnknownInput { node: NodeId },
    OutputIsInput { node: NodeId },
    UnknownOutput { node: NodeId },
    ZeroWeight { from: NodeId, to: NodeId },
    NonFiniteWeight { from: NodeId, to: NodeId },
    MissingBias { node: NodeId },
    BiasOnInput { node: NodeId },
    NonFiniteBias { node: NodeId },
    ScalarArity { node: NodeId, expected: usize, got: usize },
    NonFiniteScalar { node: NodeId },
    ConstantArity { expected: usize, got: usize },
    NonFiniteConstant,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyNetwork => write!(f, "node set is empty"),
            ZeroOutputDim => write!(f, "output dimension must be positive"),
            EmptyId => write!(f, "node identifiers must be non-empty"),
            Cycle { node } => write!(f, "acyclicity: directed cycle through {node}"),
            UnknownEndpoint { from, to } => write!(f, "edge {from} -> {to} uses an unknown node"),
            InputHasParents { node } => write!(f, "inputs: input {node} has parents"),
            ParentlessNonInput { node } => {
                write!(f, "inputs: {node} has no parents but is not an input")
            }
            UnknownInput { node } => write!(f, "inputs: {node} is not a node"),
            OutputIsInput { node } => write!(f, "outputs: {node} is an input"),
            UnknownOutput { node } => write!(f, "outputs: {node} is not a node"),
            ZeroWeight { from, to } => write!(f, "nonzero-weight: edge {from} -> {to} has weight 0"),
            NonFiniteWeight { from, to } => write!(f, "finite: edge {from} -> {to}"),
            MissingBias { node } => write!(f, "bias: {node} has no bias"),
            BiasOnInput { node } => write!(f, "bias: input {node} carries a bias"),
            NonFiniteBias { node } => write!(f, "finite: bias of {node}"),
            ScalarArity { node, expected, got } => {
                write!(f, "scalars: output {node} has {got} scalars, expected {expected}")
            }
            NonFiniteScalar { node } => write!(f, "finite: scalars of {node}"),
            ConstantArity { expected, got } => {
                write!(f, "scalars: {got} constants, expected {expected}")
            }
            NonFiniteConstant => write!(f, "finite: constant scalars"),
        }
    }
}

/// A feed-forward network on a DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) dim_out: usize,
    pub(crate) nodes: NodeSet,
    pub(crate) inputs: NodeSet,
    /// child -> (parent -> weight)
    pub(crate) incoming: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
    pub(crate) biases: BTreeMap<NodeId, f64>,
    pub(crate) outputs: BTreeMap<NodeId, Vec<f64>>,
    pub(crate) constants: Vec<f64>,
    pub(crate) nonlinearity: Option<Nonlinearity>,
    pub(crate) note: Option<String>,
}

/// Incremental construction of a [`Network`]. No validation happens here.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    net: Network,
}

impl NetworkBuilder {
    pub fn new(dim_out: usize) -> Self {
        NetworkBuilder {
            net: Network {
                dim_out,
                nodes: NodeSet::new(),
                inputs: NodeSet::new(),
                incoming: BTreeMap::new(),
                biases: BTreeMap::new(),
                outputs: BTreeMap::new(),
                constants: vec![0.0; dim_out],
                nonlinearity: None,
                note: None,
            },
        }
    }

    pub fn input(mut self, id: impl Into<NodeId>) -> Self {
        let id = id.into();
        self.net.nodes.insert(id.clone());
        self.net.inputs.insert(id);
        self
    }

    pub fn node(mut self, id: impl Into<NodeId>, bias: f64) -> Self {
        let id = id.into();
        self.net.nodes.insert(id.clone());
        self.net.biases.insert(id, bias);
        self
    }

    pub fn edge(mut self, from: impl Into<NodeId>, to: impl Into<NodeId>, weight: f64) -> Self {
        self.net.incoming.entry(to.into()).or_default().insert(from.into(), weight);
        self
    }

    pub fn output(mut self, id: impl Into<NodeId>, scalars: Vec<f64>) -> Self {
        self.net.outputs.insert(id.into(), scalars);
        self
    }

    pub fn constants(mut self, c: Vec<f64>) -> Self {
        self.net.constants = c;
        self
    }

    pub fn nonlinearity(mut self, rho: Nonlinearity) -> Self {
        self.net.nonlinearity = Some(rho);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.net.note = Some(note.into());
        self
    }

    pub fn build(self) -> Network {
        self.net
    }

    /// Builds and rejects invalid networks.
    pub fn build_valid(self) -> Result<Network, GraphError> {
        let net = self.net;
        let v = net.validate();
        if v.is_empty() {
            Ok(net)
        } else {
            Err(GraphError::Invalid(
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ))
        }
    }
}

impl Network {
    pub fn builder(dim_out: usize) -> NetworkBuilder {
        NetworkBuilder::new(dim_out)
    }

    /// Network with no non-input nodes realizing the zero map.
    pub fn trivial<I, S>(inputs: I, dim_out: usize) -> Network
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        inputs.into_iter().fold(NetworkBuilder::new(dim_out), |b, v| b.input(v)).build()
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn inputs(&self) -> &NodeSet {
        &self.inputs
    }

    pub fn hidden(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().filter(|v| !self.inputs.contains(*v))
    }

    pub fn outputs(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.outputs
    }

    pub fn output_set(&self) -> NodeSet {
        self.outputs.keys().cloned().collect()
    }

    pub fn is_output(&self, v: &NodeId) -> bool {
        self.outputs.contains_key(v)
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn nonlinearity(&self) -> Option<&Nonlinearity> {
        self.nonlinearity.as_ref()
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn with_nonlinearity(mut self, rho: Option<Nonlinearity>) -> Network {
        self.nonlinearity = rho;
        self
    }

    pub fn with_note(mut self, note: Option<String>) -> Network {
        self.note = note;
        self
    }

    pub fn bias(&self, v: &NodeId) -> Option<f64> {
        self.biases.get(v).copied()
    }

    pub fn weight(&self, from: &NodeId, to: &NodeId) -> Option<f64> {
        self.incoming.get(to).and_then(|m| m.get(from)).copied()
    }

    /// Incoming edges of `v` as `parent -> weight`.
    pub fn parents(&self, v: &NodeId) -> &BTreeMap<NodeId, f64> {
        static EMPTY: BTreeMap<NodeId, f64> = BTreeMap::new();
        self.incoming.get(v).unwrap_or(&EMPTY)
    }

    pub fn parent_set(&self, v: &NodeId) -> NodeSet {
        self.parents(v).keys().cloned().collect()
    }

    /// Outgoing edges for every node as `node -> (child -> weight)`.
    pub fn children_map(&self) -> BTreeMap<NodeId, BTreeMap<NodeId, f64>> {
        let mut out: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = BTreeMap::new();
        for (to, ps) in &self.incoming {
            for (from, &w) in ps {
                out.entry(from.clone()).or_default().insert(to.clone(), w);
            }
        }
        out
    }

    pub fn children(&self, v: &NodeId) -> BTreeMap<NodeId, f64> {
        self.incoming
            .iter()
            .filter_map(|(to, ps)| ps.get(v).map(|&w| (to.clone(), w)))
            .collect()
    }

    /// All edges as `(from, to, weight)` in (to, from) order.
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId, f64)> {
        self.incoming
            .iter()
            .flat_map(|(to, ps)| ps.iter().map(move |(from, &w)| (from, to, w)))
    }

    pub fn edge_count(&self) -> usize {
        self.incoming.values().map(BTreeMap::len).sum()
    }

    /// Structural problems, empty for a well-formed network.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim_out == 0 {
            out.push(Violation::ZeroOutputDim);
        }
        if self.nodes.is_empty() {
            out.push(Violation::EmptyNetwork);
        }
        if self.nodes.iter().any(|v| v.0.is_empty()) {
            out.push(Violation::EmptyId);
        }
        for v in &self.inputs {
            if !self.nodes.contains(v) {
                out.push(Violation::UnknownInput { node: v.clone() });
            }
        }
        for (from, to, w) in self.edges() {
            if !self.nodes.contains(from) || !self.nodes.contains(to) {
                out.push(Violation::UnknownEndpoint { from: from.clone(), to: to.clone() });
            }
            if !w.is_finite() {
                out.push(Violation::NonFiniteWeight { from: from.clone(), to: to.clone() });
            } else if w == 0.0 {
                out.push(Violation::ZeroWeight { from: from.clone(), to: to.clone() });
            }
        }
        if let Err(GraphError::Cyclic(v)) = self.topological_order() {
            out.push(Violation::Cycle { node: v });
        }
        for v in &self.nodes {
            let has_parents = !self.parents(v).is_empty();
            let is_input = self.inputs.contains(v);
            if is_input && has_parents {
                out.push(Violation::InputHasParents { node: v.clone() });
            }
            if !is_input && !has_parents {
                out.push(Violation::ParentlessNonInput { node: v.clone() });
            }
            match (is_input, self.biases.get(v)) {
                (false, None) => out.push(Violation::MissingBias { node: v.clone() }),
                (true, Some(_)) => out.push(Violation::BiasOnInput { node: v.clone() }),
                (false, Some(b)) if !b.is_finite() => {
                    out.push(Violation::NonFiniteBias { node: v.clone() })
                }
                _ => {}
            }
        }
        for (w, s) in &self.outputs {
            if !self.nodes.contains(w) {
                out.push(Violation::UnknownOutput { node: w.clone() });
            } else if self.inputs.contains(w) {
                out.push(Violation::OutputIsInput { node: w.clone() });
            }
            if s.len() != self.dim_out {
                out.push(Violation::ScalarArity {
                    node: w.clone(),
                    expected: self.dim_out,
                    got: s.len(),
                });
            }
            if s.iter().any(|x| !x.is_finite()) {
                out.push(Violation::NonFiniteScalar { node: w.clone() });
            }
        }
        if self.constants.len() != self.dim_out {
            out.push(Violation::ConstantArity { expected: self.dim_out, got: self.constants.len() });
        }
        if self.constants.iter().any(|x| !x.is_finite()) {
            out.push(Violation::NonFiniteConstant);
        }
        out
    }

    /// Nodes in dependency order, ties broken lexicographically.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let mut indeg: BTreeMap<&NodeId, usize> = self.nodes.iter().map(|v| (v, 0)).collect();
        let mut kids: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for (from, to, _) in self.edges() {
            if let Some(d) = indeg.get_mut(to) {
                *d += 1;
            }
            kids.entry(from).or_default().push(to);
        }
        let mut ready: BTreeSet<&NodeId> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(v, _)| *v).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(v) = ready.pop_first() {
            order.push(v.clone());
            for &c in kids.get(v).map(Vec::as_slice).unwrap_or(&[]) {
                if let Some(d) = indeg.get_mut(c) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        if order.len() < self.nodes.len() {
            let stuck = indeg.iter().find(|(_, &d)| d > 0).map(|(v, _)| (*v).clone());
            return Err(GraphError::Cyclic(stuck.unwrap_or_else(|| NodeId::new("?"))));
        }
        Ok(order)
    }

    /// Level of every node: 0 on inputs, one more than the deepest parent otherwise.
    pub fn levels(&self) -> Result<BTreeMap<NodeId, usize>, GraphError> {
        let mut lv = BTreeMap::new();
        for v in self.topological_order()? {
            let l = self
                .parents(&v)
                .keys()
                .map(|p| lv.get(p).copied().unwrap_or(0) + 1)
                .max()
                .unwrap_or(0);
            lv.insert(v, l);
        }
        Ok(lv)
    }

    pub fn level(&self, v: &NodeId) -> Result<usize, GraphError> {
        if !self.nodes.contains(v) {
            return Err(GraphError::UnknownNode(v.clone()));
        }
        Ok(self.levels()?[v])
    }

    /// Maximum level; 0 for a trivial network.
    pub fn depth(&self) -> Result<usize, GraphError> {
        Ok(self.levels()?.values().copied().max().unwrap_or(0))
    }

    /// Every edge raises the level by exactly one.
    pub fn is_layered(&self) -> Result<bool, GraphError> {
        let lv = self.levels()?;
        Ok(self.edges().all(|(from, to, _)| lv[to] == lv[from] + 1))
    }

    /// Smallest parent-closed superset of `set`.
    pub fn ancestors(&self, set: &NodeSet) -> Result<NodeSet, GraphError> {
        let mut out = NodeSet::new();
        let mut queue: VecDeque<&NodeId> = VecDeque::new();
        for v in set {
            if !self.nodes.contains(v) {
                return Err(GraphError::UnknownNode(v.clone()));
            }
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            if out.insert(v.clone()) {
                queue.extend(self.parents(v).keys());
            }
        }
        Ok(out)
    }

    /// Nodes having at least one ancestor in `set` (including `set` itself).
    pub fn descendants(&self, set: &NodeSet) -> NodeSet {
        let kids = self.children_map();
        let mut out = NodeSet::new();
        let mut queue: VecDeque<&NodeId> = set.iter().collect();
        while let Some(v) = queue.pop_front() {
            if out.insert(v.clone()) {
                if let Some(k) = kids.get(v) {
                    queue.extend(k.keys());
                }
            }
        }
        out
    }

    /// Subnetwork on `anc(set)` with the given input set and read-out.
    pub fn subnetwork(
        &self,
        set: &NodeSet,
        new_inputs: &NodeSet,
        new_outputs: BTreeMap<NodeId, Vec<f64>>,
        new_constants: Vec<f64>,
    ) -> Result<Network, GraphError> {
        let keep = self.ancestors(set)?;
        let forced: NodeSet = keep.intersection(&self.inputs).cloned().collect();
        if !new_inputs.is_superset(&forced) {
            return Err(GraphError::Invalid(
                "new inputs must contain every original input among the ancestors".into(),
            ));
        }
        if let Some(v) = new_inputs.difference(&forced).next() {
            return Err(GraphError::Invalid(format!(
                "{v} cannot become an input: it is not parentless in the generated node set"
            )));
        }
        if let Some(w) = new_outputs.keys().find(|w| !keep.contains(*w) || new_inputs.contains(*w))
        {
            return Err(GraphError::Invalid(format!("output {w} is not a generated non-input node")));
        }
        let dim = new_constants.len();
        let mut b = NetworkBuilder::new(dim).constants(new_constants);
        for v in &keep {
            b = if self.inputs.contains(v) { b.input(v.clone()) } else { b.node(v.clone(), self.biases[v]) };
            for (p, &w) in self.parents(v) {
                b = b.edge(p.clone(), v.clone(), w);
            }
        }
        for (w, s) in new_outputs {
            b = b.output(w, s);
        }
        let mut net = b.build();
        net.nonlinearity = self.nonlinearity.clone();
        Ok(net)
    }

    /// Compiles the network into an index-based evaluator.
    pub fn evaluator(&self) -> Result<Evaluator, GraphError> {
        let order = self.topological_order()?;
        let index: BTreeMap<&NodeId, usize> = order.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let input_pos: BTreeMap<&NodeId, usize> =
            self.inputs.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut steps = Vec::with_capacity(order.len());
        for v in &order {
            if let Some(&k) = input_pos.get(v) {
                steps.push(Step::Input(k));
            } else {
                let bias = *self
                    .biases
                    .get(v)
                    .ok_or_else(|| GraphError::Invalid(format!("{v} has no bias")))?;
                let parents = self.parents(v).iter().map(|(p, &w)| (index[p], w)).collect();
                steps.push(Step::Neuron { bias, parents });
            }
        }
        let outputs = self
            .outputs
            .iter()
            .map(|(w, s)| {
                index
                    .get(w)
                    .map(|&i| (i, s.clone()))
                    .ok_or_else(|| GraphError::UnknownNode(w.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Evaluator {
            steps,
            n_inputs: self.inputs.len(),
            outputs,
            constants: self.constants.clone(),
            order,
        })
    }

    /// Output map at `t`, with inputs ordered lexicographically.
    pub fn eval_map(&self, rho: &Nonlinearity, t: &[f64]) -> Result<Vec<f64>, GraphError> {
        self.evaluator()?.eval(rho, t)
    }
}

#[derive(Debug, Clone)]
enum Step {
    Input(usize),
    Neuron { bias: f64, parents: Vec<(usize, f64)> },
}

/// Precompiled evaluation order of a network.
#[derive(Debug, Clone)]
pub struct Evaluator {
    steps: Vec<Step>,
    n_inputs: usize,
    outputs: Vec<(usize, Vec<f64>)>,
    constants: Vec<f64>,
    order: Vec<NodeId>,
}

impl Evaluator {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// Node ids in evaluation order, matching [`Evaluator::node_values`].
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    fn check_arity(&self, got: usize) -> Result<(), GraphError> {
        if got != self.n_inputs {
            return Err(GraphError::InputArity { expected: self.n_inputs, got });
        }
        Ok(())
    }

    /// Value of every node at `t`, in evaluation order.
    pub fn node_values(&self, rho: &Nonlinearity, t: &[f64]) -> Result<Vec<f64>, GraphError> {
        self.check_arity(t.len())?;
        let mut vals = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let v = match s {
                Step::Input(k) => t[*k],
                Step::Neuron { bias, parents } => {
                    let pre = parents.iter().fold(*bias, |acc, &(i, w)| acc + w * vals[i]);
                    rho.eval_real(pre)
                }
            };
            vals.push(v);
        }
        Ok(vals)
    }

    pub fn eval(&self, rho: &Nonlinearity, t: &[f64]) -> Result<Vec<f64>, GraphError> {
        let vals = self.node_values(rho, t)?;
        let mut out = self.constants.clone();
        for (i, s) in &self.outputs {
            for (o, l) in out.iter_mut().zip(s) {
                *o += l * vals[*i];
            }
        }
        Ok(out)
    }

    /// Output map over ℂ for a meromorphic nonlinearity. A pole hit anywhere
    /// in the graph is reported as [`Pole`].
    pub fn eval_complex(
        &self,
        rho: &Nonlinearity,
        t: &[Complex64],
    ) -> Result<Result<Vec<Complex64>, Pole>, GraphError> {
        self.check_arity(t.len())?;
        let mut vals: Vec<Complex64> = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let v = match s {
                Step::Input(k) => t[*k],
                Step::Neuron { bias, parents } => {
                    let pre = parents
                        .iter()
                        .fold(Complex64::new(*bias, 0.0), |acc, &(i, w)| acc + w * vals[i]);
                    match rho
                        .eval_complex(pre)
                        .map_err(|e| GraphError::Invalid(e.to_string()))?
                    {
                        Ok(v) => v,
                        Err(p) => return Ok(Err(p)),
                    }
                }
            };
            vals.push(v);
        }
        let mut out: Vec<Complex64> = self.constants.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        for (i, s) in &self.outputs {
            for (o, l) in out.iter_mut().zip(s) {
                *o += l * vals[*i];
            }
        }
        Ok(Ok(out))
    }
}
