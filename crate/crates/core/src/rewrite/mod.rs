//! Symmetry-driven rewrites of networks.
//!
//! * [`reduction`]: detect and remove node groups whose pre-activations obey
//!   an affine symmetry.
//! * [`modification`]: replace a node group by fresh nodes along a symmetry,
//!   compensating weights, biases and read-out scalars.
//! * [`iso`]: sign-isomorphism and a bounded search over modification chains.
//! * [`anchor`]: fix one input to a constant and fold it into biases.

pub mod anchor;
pub mod iso;
pub mod modification;
pub mod reduction;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::network::{GraphError, Network, NodeId, NodeSet};
use crate::nonlinearity::Nonlinearity;
use crate::symmetry::SymmetryError;

pub use anchor::{anchor_input, anchor_samples, anchor_search, zero_map_probe, AnchorSearch, Anchored, ProbeReport, ProbeVerdict};
pub use iso::{rho_isomorphic_bounded, sign_isomorphic, IsoOutcome, SignIsomorphism};
pub use modification::{
    apply_modification, invert_modification, plan_regular_modification, ModificationPlan,
};
pub use reduction::{apply_reduction, find_reduction, reduce_to_regular, ReductionWitness};

/// Edges and scalars below this magnitude are deleted.
pub const ZERO_THRESHOLD: f64 = 1e-12;
/// Relative tolerance for proportional weight vectors.
pub const PROPORTIONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("stale witness: {0}")]
    StaleWitness(String),
    #[error("plan does not match the network: {0}")]
    PlanMismatch(String),
    #[error("network is reducible; modifications need an irreducible host")]
    Reducible,
    #[error("networks are not comparable: {0}")]
    Incomparable(String),
    #[error("search budget exceeded: {0}")]
    Budget(String),
    #[error("{0}")]
    Precondition(String),
    #[error("no regular plan found: {0}")]
    NoRegularPlan(String),
}

/// Structural health of a network with respect to a nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegularityReport {
    pub non_degenerate: bool,
    pub strongly_non_degenerate: bool,
    pub irreducible: bool,
    pub regular: bool,
}

pub fn regularity_report(net: &Network, rho: &Nonlinearity) -> Result<RegularityReport, GraphError> {
    let outs = net.output_set();
    let anc = net.ancestors(&outs)?;
    let hidden_reach = net.hidden().all(|v| anc.contains(v));
    let scalars_live = net.outputs.values().all(|s| s.iter().any(|x| *x != 0.0));
    let non_degenerate = hidden_reach && scalars_live;
    let strongly_non_degenerate = non_degenerate && net.nodes.iter().all(|v| anc.contains(v));
    let irreducible = find_reduction(net, rho).is_none();
    Ok(RegularityReport {
        non_degenerate,
        strongly_non_degenerate,
        irreducible,
        regular: non_degenerate && irreducible,
    })
}

pub(crate) fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Nodes sharing a parent set with proportional incoming weights.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SiblingClass {
    pub parents: Vec<NodeId>,
    /// Direction of the incoming weights, first component 1.
    pub kappa: Vec<f64>,
    /// Members with their scale `β_u` and bias `θ_u`.
    pub members: Vec<(NodeId, f64, f64)>,
}

impl SiblingClass {
    pub fn kappa_map(&self) -> BTreeMap<NodeId, f64> {
        self.parents.iter().cloned().zip(self.kappa.iter().copied()).collect()
    }
}

pub(crate) fn direction(net: &Network, u: &NodeId) -> Option<(Vec<NodeId>, Vec<f64>, f64)> {
    let ps = net.parents(u);
    let (_, &first) = ps.iter().next()?;
    let parents: Vec<NodeId> = ps.keys().cloned().collect();
    let kappa: Vec<f64> = ps.values().map(|w| w / first).collect();
    Some((parents, kappa, first))
}

/// Groups the non-input nodes into sibling classes, in lexicographic order.
pub(crate) fn sibling_classes(net: &Network) -> Vec<SiblingClass> {
    let mut classes: Vec<SiblingClass> = Vec::new();
    for u in net.hidden() {
        let Some((parents, kappa, beta)) = direction(net, u) else { continue };
        let theta = net.biases.get(u).copied().unwrap_or(0.0);
        let slot = classes.iter_mut().find(|c| {
            c.parents == parents
                && c.kappa.iter().zip(&kappa).all(|(a, b)| approx_eq(*a, *b, PROPORTIONALITY_TOL))
        });
        match slot {
            Some(c) => c.members.push((u.clone(), beta, theta)),
            None => classes.push(SiblingClass { parents, kappa, members: vec![(u.clone(), beta, theta)] }),
        }
    }
    classes
}

/// In-place edits used while building a rewritten network.
impl Network {
    pub(crate) fn set_edge(&mut self, from: &NodeId, to: &NodeId, w: f64) {
        let e = self.incoming.entry(to.clone()).or_default();
        if w.abs() < ZERO_THRESHOLD {
            e.remove(from);
        } else {
            e.insert(from.clone(), w);
        }
        if e.is_empty() {
            self.incoming.remove(to);
        }
    }

    pub(crate) fn add_bias(&mut self, v: &NodeId, delta: f64) {
        if let Some(b) = self.biases.get_mut(v) {
            *b += delta;
        }
    }

    pub(crate) fn remove_node(&mut self, v: &NodeId) {
        self.nodes.remove(v);
        self.inputs.remove(v);
        self.biases.remove(v);
        self.outputs.remove(v);
        self.incoming.remove(v);
        for ps in self.incoming.values_mut() {
            ps.remove(v);
        }
        self.incoming.retain(|_, ps| !ps.is_empty());
    }

    pub(crate) fn insert_node(&mut self, v: NodeId, bias: f64) {
        self.nodes.insert(v.clone());
        self.biases.insert(v, bias);
    }

    /// Sets read-out scalars, dropping the node from the outputs when all vanish.
    pub(crate) fn set_scalars(&mut self, v: &NodeId, mut s: Vec<f64>) {
        for x in s.iter_mut() {
            if x.abs() < ZERO_THRESHOLD {
                *x = 0.0;
            }
        }
        if s.iter().all(|x| *x == 0.0) {
            self.outputs.remove(v);
        } else {
            self.outputs.insert(v.clone(), s);
        }
    }

    /// Replaces parentless non-input nodes by their constant value.
    pub(crate) fn fold_constants(&mut self, rho: &Nonlinearity) {
        loop {
            let dead: Vec<NodeId> = self
                .hidden()
                .filter(|v| self.parents(v).is_empty())
                .cloned()
                .collect();
            if dead.is_empty() {
                return;
            }
            for v in dead {
                let a = rho.eval_real(self.biases[&v]);
                for (c, w) in self.children(&v) {
                    self.add_bias(&c, w * a);
                }
                if let Some(s) = self.outputs.get(&v).cloned() {
                    for (k, l) in self.constants.iter_mut().zip(s) {
                        *k += l * a;
                    }
                }
                self.remove_node(&v);
            }
        }
    }

    /// Drops dead read-outs and every non-input node that reaches no output.
    pub(crate) fn prune(&mut self) {
        self.outputs.retain(|_, s| s.iter().any(|x| x.abs() >= ZERO_THRESHOLD));
        let anc = self.ancestors(&self.output_set()).unwrap_or_default();
        let dead: Vec<NodeId> = self.hidden().filter(|v| !anc.contains(*v)).cloned().collect();
        for v in dead {
            self.remove_node(&v);
        }
    }
}

/// Same nodes, inputs, edges and read-outs, with numbers equal up to `tol`
/// relative to their magnitude.
pub fn networks_close(a: &Network, b: &Network, tol: f64) -> bool {
    let vec_close = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| approx_eq(*p, *q, tol))
    };
    a.dim_out == b.dim_out
        && a.nodes == b.nodes
        && a.inputs == b.inputs
        && vec_close(&a.constants, &b.constants)
        && a.biases.len() == b.biases.len()
        && a.biases.iter().all(|(v, x)| b.biases.get(v).is_some_and(|y| approx_eq(*x, *y, tol)))
        && a.outputs.len() == b.outputs.len()
        && a.outputs.iter().all(|(v, x)| b.outputs.get(v).is_some_and(|y| vec_close(x, y)))
        && a.edge_count() == b.edge_count()
        && a.edges().all(|(f, t, w)| b.weight(f, t).is_some_and(|y| approx_eq(w, y, tol)))
}

/// Index subsets of `0..n` with exactly `k` elements, in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

pub(crate) fn fresh_id(taken: &[&NodeSet], stem: &str) -> NodeId {
    (0..)
        .map(|i| NodeId::new(format!("{stem}{i}")))
        .find(|id| taken.iter().all(|s| !s.contains(id)))
        .expect("unbounded")
}
