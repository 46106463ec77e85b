//! Isomorphism up to node renaming and sign flips, and a bounded search for
//! chains of regular modifications between two networks.

use std::collections::BTreeMap;

use serde::Serialize;

use super::modification::{search_regular, NewTerm};
use super::{
    approx_eq, fresh_id, networks_close, regularity_report, sibling_classes, ModificationPlan,
    RewriteError, SiblingClass,
};
use crate::network::{Network, NodeId, NodeSet};
use crate::nonlinearity::Nonlinearity;

/// Largest number of non-input nodes handled by the isomorphism search.
pub const MAX_ISO_NODES: usize = 64;
const ISO_TOL: f64 = 1e-10;

/// `mapping` sends non-input nodes of the first network to the second; node
/// `u` is negated when `signs[u] = −1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignIsomorphism {
    pub mapping: BTreeMap<NodeId, NodeId>,
    pub signs: BTreeMap<NodeId, i8>,
}

struct Shape {
    level: usize,
    indeg: usize,
    outdeg: usize,
    output: bool,
}

fn shapes(n: &Network) -> Result<BTreeMap<NodeId, Shape>, RewriteError> {
    let levels = n.levels()?;
    let kids = n.children_map();
    Ok(n.hidden()
        .map(|u| {
            let s = Shape {
                level: levels[u],
                indeg: n.parents(u).len(),
                outdeg: kids.get(u).map_or(0, |k| k.len()),
                output: n.is_output(u),
            };
            (u.clone(), s)
        })
        .collect())
}

/// Backtracking search for an isomorphism, with or without sign flips.
pub(crate) fn find_isomorphism(
    n1: &Network,
    n2: &Network,
    allow_flips: bool,
) -> Result<Option<SignIsomorphism>, RewriteError> {
    let h1 = n1.hidden().count();
    if h1 > MAX_ISO_NODES || n2.hidden().count() > MAX_ISO_NODES {
        return Err(RewriteError::Budget(format!("more than {MAX_ISO_NODES} non-input nodes")));
    }
    let close_vec = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| approx_eq(*x, *y, ISO_TOL));
    if n1.inputs() != n2.inputs()
        || n1.dim_out() != n2.dim_out()
        || h1 != n2.hidden().count()
        || n1.edge_count() != n2.edge_count()
        || n1.outputs().len() != n2.outputs().len()
        || !close_vec(n1.constants(), n2.constants())
    {
        return Ok(None);
    }
    let s1 = shapes(n1)?;
    let s2 = shapes(n2)?;
    let order: Vec<NodeId> =
        n1.topological_order()?.into_iter().filter(|v| !n1.inputs().contains(v)).collect();
    let cands: Vec<Vec<&NodeId>> = order
        .iter()
        .map(|u| {
            let a = &s1[u];
            let t1 = n1.biases[u].abs();
            s2.iter()
                .filter(|(x, b)| {
                    a.level == b.level
                        && a.indeg == b.indeg
                        && a.outdeg == b.outdeg
                        && a.output == b.output
                        && approx_eq(t1, n2.biases[*x].abs(), ISO_TOL)
                })
                .map(|(x, _)| x)
                .collect()
        })
        .collect();

    struct State<'a> {
        map: BTreeMap<&'a NodeId, (&'a NodeId, f64)>,
        used: NodeSet,
    }
    fn fits(
        n1: &Network,
        n2: &Network,
        st: &State,
        u: &NodeId,
        x: &NodeId,
        s: f64,
    ) -> bool {
        if !approx_eq(n2.biases[x], s * n1.biases[u], ISO_TOL) {
            return false;
        }
        for (p, w) in n1.parents(u) {
            let (px, sp) = match st.map.get(p) {
                Some(&(px, sp)) => (px, sp),
                None => (p, 1.0),
            };
            match n2.weight(px, x) {
                Some(w2) if approx_eq(w2, s * sp * w, ISO_TOL) => {}
                _ => return false,
            }
        }
        match (n1.outputs().get(u), n2.outputs().get(x)) {
            (Some(a), Some(b)) => a.iter().zip(b).all(|(l, m)| approx_eq(*m, s * l, ISO_TOL)),
            (None, None) => true,
            _ => false,
        }
    }
    fn rec<'a>(
        i: usize,
        n1: &'a Network,
        n2: &'a Network,
        order: &'a [NodeId],
        cands: &[Vec<&'a NodeId>],
        flips: bool,
        st: &mut State<'a>,
    ) -> bool {
        if i == order.len() {
            return true;
        }
        let u = &order[i];
        for &x in &cands[i] {
            if st.used.contains(x) {
                continue;
            }
            let signs: &[f64] = if flips { &[1.0, -1.0] } else { &[1.0] };
            for &s in signs {
                if !fits(n1, n2, st, u, x, s) {
                    continue;
                }
                st.map.insert(u, (x, s));
                st.used.insert(x.clone());
                if rec(i + 1, n1, n2, order, cands, flips, st) {
                    return true;
                }
                st.map.remove(u);
                st.used.remove(x);
            }
        }
        false
    }
    let mut st = State { map: BTreeMap::new(), used: NodeSet::new() };
    if !rec(0, n1, n2, &order, &cands, allow_flips, &mut st) {
        return Ok(None);
    }
    Ok(Some(SignIsomorphism {
        mapping: st.map.iter().map(|(u, (x, _))| ((*u).clone(), (*x).clone())).collect(),
        signs: st.map.iter().map(|(u, (_, s))| ((*u).clone(), *s as i8)).collect(),
    }))
}

/// Isomorphism up to renaming non-input nodes and negating them.
pub fn sign_isomorphic(n1: &Network, n2: &Network) -> Result<Option<SignIsomorphism>, RewriteError> {
    find_isomorphism(n1, n2, true)
}

/// One step of a modification chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ChainStep {
    Modify { plan: ModificationPlan, result: Network },
    Rename { mapping: BTreeMap<NodeId, NodeId>, result: Network },
}

impl ChainStep {
    pub fn result(&self) -> &Network {
        match self {
            ChainStep::Modify { result, .. } | ChainStep::Rename { result, .. } => result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum IsoOutcome {
    /// tanh networks: equivalent exactly when sign-isomorphic.
    SignIsomorphic { witness: SignIsomorphism },
    Chain { steps: Vec<ChainStep> },
    /// The explored space holds no chain of at most the given length.
    NoneWithinBudget,
    /// The state cap was hit before the search finished.
    Unknown,
}

/// Candidate new-node terms for a modification of `class`.
fn pool_for(class: &SiblingClass, goal: &Network, rho: &Nonlinearity, taken: &[&NodeSet]) -> Vec<NewTerm> {
    let mut raw: Vec<(Option<NodeId>, f64, f64)> = Vec::new();
    for g in sibling_classes(goal) {
        let same = g.parents == class.parents
            && g.kappa.iter().zip(&class.kappa).all(|(a, b)| approx_eq(*a, *b, 1e-10));
        if same {
            raw.extend(g.members.iter().map(|(u, b, t)| (Some(u.clone()), *b, *t)));
        }
    }
    for &(_, b, g) in &class.members {
        raw.push((None, -b, -g));
        if matches!(rho, Nonlinearity::CRelu) {
            for (nb, ng) in [
                (2.0 * b, 2.0 * g),
                (2.0 * b, 2.0 * g - 1.0),
                (b / 2.0, g / 2.0),
                (b, g - 1.0),
                (b / 2.0, (g + 1.0) / 2.0),
                (b, g + 1.0),
                (-b, 1.0 - g),
            ] {
                raw.push((None, nb, ng));
            }
        }
    }
    let known = |b: f64, g: f64, list: &[(f64, f64)]| {
        list.iter().any(|&(x, y)| approx_eq(x, b, 1e-10) && approx_eq(y, g, 1e-10))
    };
    let mut seen: Vec<(f64, f64)> = class.members.iter().map(|m| (m.1, m.2)).collect();
    let mut taken_ids: NodeSet = taken.iter().flat_map(|s| s.iter().cloned()).collect();
    let mut pool = Vec::new();
    for (id, b, g) in raw {
        if known(b, g, &seen) {
            continue;
        }
        seen.push((b, g));
        let id = match id {
            Some(id) if !taken_ids.contains(&id) => id,
            _ => fresh_id(&[&taken_ids], "x"),
        };
        taken_ids.insert(id.clone());
        pool.push((id, b, g));
    }
    pool
}

fn moves(
    net: &Network,
    goal: &Network,
    rho: &Nonlinearity,
    budget: &mut usize,
) -> Result<Vec<(ModificationPlan, Network)>, RewriteError> {
    let mut out = Vec::new();
    for class in sibling_classes(net) {
        let pool = pool_for(&class, goal, rho, &[net.nodes(), goal.nodes()]);
        for (u, _, _) in &class.members {
            out.extend(search_regular(net, rho, &class, std::slice::from_ref(u), &pool, 2, true, budget)?);
        }
    }
    Ok(out)
}

struct Node {
    net: Network,
    parent: Option<(usize, ModificationPlan)>,
    depth: usize,
}

fn fingerprint(n: &Network) -> (usize, usize, Vec<f64>) {
    let mut b: Vec<f64> = n.biases.values().map(|x| x.abs()).collect();
    b.sort_by(f64::total_cmp);
    (n.hidden().count(), n.edge_count(), b)
}

fn same_fingerprint(a: &(usize, usize, Vec<f64>), b: &(usize, usize, Vec<f64>)) -> bool {
    a.0 == b.0 && a.1 == b.1 && a.2.iter().zip(&b.2).all(|(x, y)| approx_eq(*x, *y, 1e-8))
}

/// Breadth-first layers of regular modifications from `root` towards `goal`.
fn explore(
    root: &Network,
    goal: &Network,
    rho: &Nonlinearity,
    depth: usize,
    max_states: usize,
    budget: &mut usize,
) -> Result<Option<Vec<Node>>, RewriteError> {
    let mut tree = vec![Node { net: root.clone(), parent: None, depth: 0 }];
    let mut prints = vec![fingerprint(root)];
    let mut frontier = vec![0usize];
    for d in 1..=depth {
        let mut next = Vec::new();
        for &i in &frontier {
            let found = match moves(&tree[i].net, goal, rho, budget) {
                Ok(m) => m,
                Err(RewriteError::Budget(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            for (plan, net) in found {
                let fp = fingerprint(&net);
                let mut dup = false;
                for (j, p) in prints.iter().enumerate() {
                    if same_fingerprint(p, &fp) && find_isomorphism(&tree[j].net, &net, false)?.is_some() {
                        dup = true;
                        break;
                    }
                }
                if dup {
                    continue;
                }
                if tree.len() >= max_states {
                    return Ok(None);
                }
                prints.push(fp);
                tree.push(Node { net, parent: Some((i, plan)), depth: d });
                next.push(tree.len() - 1);
            }
        }
        frontier = next;
    }
    Ok(Some(tree))
}

fn path(tree: &[Node], mut i: usize) -> Vec<usize> {
    let mut p = vec![i];
    while let Some((j, _)) = &tree[i].parent {
        i = *j;
        p.push(i);
    }
    p.reverse();
    p
}

impl Network {
    /// Renames non-input nodes; ids missing from `map` are kept.
    pub fn renamed(&self, map: &BTreeMap<NodeId, NodeId>) -> Network {
        let r = |v: &NodeId| map.get(v).cloned().unwrap_or_else(|| v.clone());
        let mut out = self.clone();
        out.nodes = self.nodes.iter().map(r).collect();
        out.biases = self.biases.iter().map(|(v, b)| (r(v), *b)).collect();
        out.outputs = self.outputs.iter().map(|(v, s)| (r(v), s.clone())).collect();
        out.incoming = self
            .incoming
            .iter()
            .map(|(c, ps)| (r(c), ps.iter().map(|(p, w)| (r(p), *w)).collect()))
            .collect();
        out
    }
}

/// Searches for a chain of at most `budget` regular modifications from `n1`
/// to a relabelling of `n2`. tanh networks are decided by sign-isomorphism.
pub fn rho_isomorphic_bounded(
    n1: &Network,
    n2: &Network,
    rho: &Nonlinearity,
    budget: usize,
) -> Result<IsoOutcome, RewriteError> {
    if n1.inputs() != n2.inputs() || n1.dim_out() != n2.dim_out() {
        return Err(RewriteError::Incomparable("input sets or output dimensions differ".into()));
    }
    for (name, n) in [("first", n1), ("second", n2)] {
        if !regularity_report(n, rho)?.regular {
            return Err(RewriteError::Precondition(format!("{name} network is not regular")));
        }
    }
    if matches!(rho, Nonlinearity::Tanh) {
        return Ok(match sign_isomorphic(n1, n2)? {
            Some(witness) => IsoOutcome::SignIsomorphic { witness },
            None => IsoOutcome::NoneWithinBudget,
        });
    }
    let fwd_depth = budget.div_ceil(2);
    let bwd_depth = budget - fwd_depth;
    let mut checks = 1usize << 20;
    let max_states = 20_000;
    let Some(fwd) = explore(n1, n2, rho, fwd_depth, max_states, &mut checks)? else {
        return Ok(IsoOutcome::Unknown);
    };
    let Some(bwd) = explore(n2, n1, rho, bwd_depth, max_states, &mut checks)? else {
        return Ok(IsoOutcome::Unknown);
    };
    let fprints: Vec<_> = fwd.iter().map(|n| fingerprint(&n.net)).collect();
    let bprints: Vec<_> = bwd.iter().map(|n| fingerprint(&n.net)).collect();
    for total in 0..=budget {
        for (i, f) in fwd.iter().enumerate() {
            for (j, b) in bwd.iter().enumerate() {
                if f.depth + b.depth != total || !same_fingerprint(&fprints[i], &bprints[j]) {
                    continue;
                }
                let Some(iso) = find_isomorphism(&f.net, &b.net, false)? else { continue };
                return Ok(IsoOutcome::Chain { steps: assemble(&fwd, i, &bwd, j, iso, rho)? });
            }
        }
    }
    Ok(IsoOutcome::NoneWithinBudget)
}

fn assemble(
    fwd: &[Node],
    i: usize,
    bwd: &[Node],
    j: usize,
    iso: SignIsomorphism,
    rho: &Nonlinearity,
) -> Result<Vec<ChainStep>, RewriteError> {
    let mut steps = Vec::new();
    for &k in path(fwd, i).iter().skip(1) {
        let (_, plan) = fwd[k].parent.as_ref().expect("non-root");
        steps.push(ChainStep::Modify { plan: plan.clone(), result: fwd[k].net.clone() });
    }
    let renamed = fwd[i].net.renamed(&iso.mapping);
    let identity = iso.mapping.iter().all(|(a, b)| a == b);
    if !identity {
        steps.push(ChainStep::Rename { mapping: iso.mapping, result: renamed });
    }
    // Walk the backward path from the meeting point to its root, inverting.
    let bp = path(bwd, j);
    for w in bp.windows(2).rev() {
        let (from, to) = (w[0], w[1]);
        let (_, plan) = bwd[to].parent.as_ref().expect("non-root");
        let inv = super::invert_modification(&bwd[from].net, rho, plan, &bwd[to].net)?;
        steps.push(ChainStep::Modify { plan: inv, result: bwd[from].net.clone() });
    }
    Ok(steps)
}

/// Replays a chain from `start`, checking every step, and returns the final
/// network.
pub fn replay_chain(start: &Network, rho: &Nonlinearity, steps: &[ChainStep]) -> Result<Network, RewriteError> {
    let mut cur = start.clone();
    for s in steps {
        let next = match s {
            ChainStep::Modify { plan, .. } => super::apply_modification(&cur, rho, plan)?,
            ChainStep::Rename { mapping, .. } => cur.renamed(mapping),
        };
        if !networks_close(&next, s.result(), 1e-9) {
            return Err(RewriteError::PlanMismatch("chain step does not reproduce its result".into()));
        }
        cur = next;
    }
    Ok(cur)
}
