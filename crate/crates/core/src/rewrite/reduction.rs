//! Reductions: removing one node of a sibling group whose activations satisfy
//! an affine symmetry, then cleaning up what becomes constant or unreachable.

use serde::Serialize;

use super::{approx_eq, direction, sibling_classes, RewriteError, PROPORTIONALITY_TOL};
use crate::network::{Network, NodeId};
use crate::nonlinearity::Nonlinearity;
use crate::symmetry::{discover_symmetry, AffineSymmetry, Term};

/// Sibling nodes `U` with common parents `P` and weights `ω_uv = β_u κ_v`
/// such that `Σ_u α_u ρ(β_u s + θ_u) = ζ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionWitness {
    pub nodes: Vec<NodeId>,
    pub parents: Vec<NodeId>,
    pub kappa: Vec<f64>,
    /// Terms `(α_u, β_u, θ_u)`, aligned with `nodes`.
    pub symmetry: AffineSymmetry,
}

/// First reducible sibling group, scanning classes in lexicographic order.
///
/// Groups whose numerical certificate is inconclusive are treated as
/// irreducible.
pub fn find_reduction(net: &Network, rho: &Nonlinearity) -> Option<ReductionWitness> {
    for class in sibling_classes(net) {
        let m = &class.members;
        if m.len() < 2 {
            continue;
        }
        let found = if matches!(rho, Nonlinearity::Tanh) {
            tanh_pair(m)
        } else {
            let cands: Vec<(f64, f64)> = m.iter().map(|(_, b, g)| (*b, *g)).collect();
            match discover_symmetry(rho, &cands, None) {
                Ok(Some(s)) => Some(align(m, s)),
                _ => None,
            }
        };
        if let Some((nodes, symmetry)) = found {
            return Some(ReductionWitness {
                nodes,
                parents: class.parents.clone(),
                kappa: class.kappa.clone(),
                symmetry,
            });
        }
    }
    None
}

/// tanh siblings are dependent exactly when two of them agree up to sign.
fn tanh_pair(m: &[(NodeId, f64, f64)]) -> Option<(Vec<NodeId>, AffineSymmetry)> {
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            let (ui, bi, gi) = &m[i];
            let (uj, bj, gj) = &m[j];
            for s in [1.0, -1.0] {
                if approx_eq(*bj, s * bi, PROPORTIONALITY_TOL)
                    && approx_eq(*gj, s * gi, PROPORTIONALITY_TOL)
                {
                    let sym = AffineSymmetry::new(
                        0.0,
                        vec![Term::new(1.0, *bi, *gi), Term::new(-s, *bj, *gj)],
                    );
                    return Some((vec![ui.clone(), uj.clone()], sym));
                }
            }
        }
    }
    None
}

/// Attaches node ids to the terms of a discovered symmetry.
fn align(m: &[(NodeId, f64, f64)], s: AffineSymmetry) -> (Vec<NodeId>, AffineSymmetry) {
    let mut used = vec![false; m.len()];
    let mut pairs: Vec<(NodeId, Term)> = Vec::new();
    for t in s.terms {
        let i = (0..m.len())
            .find(|&i| !used[i] && m[i].1 == t.beta && m[i].2 == t.gamma)
            .expect("discovered terms come from the candidates");
        used[i] = true;
        pairs.push((m[i].0.clone(), t));
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    let nodes = pairs.iter().map(|p| p.0.clone()).collect();
    (nodes, AffineSymmetry::new(s.zeta, pairs.into_iter().map(|p| p.1).collect()))
}

fn check_witness(net: &Network, w: &ReductionWitness) -> Result<(), RewriteError> {
    let stale = |m: String| Err(RewriteError::StaleWitness(m));
    if w.nodes.len() != w.symmetry.terms.len() || w.parents.len() != w.kappa.len() {
        return stale("witness is internally inconsistent".into());
    }
    for (u, t) in w.nodes.iter().zip(&w.symmetry.terms) {
        if !net.nodes().contains(u) || net.inputs().contains(u) {
            return stale(format!("{u} is not a non-input node"));
        }
        if t.alpha == 0.0 {
            return stale(format!("{u} has a zero coefficient"));
        }
        let Some((parents, kappa, beta)) = direction(net, u) else {
            return stale(format!("{u} has no parents"));
        };
        let same = parents == w.parents
            && kappa.iter().zip(&w.kappa).all(|(a, b)| approx_eq(*a, *b, PROPORTIONALITY_TOL))
            && approx_eq(beta, t.beta, PROPORTIONALITY_TOL)
            && approx_eq(net.biases[u], t.gamma, PROPORTIONALITY_TOL);
        if !same {
            return stale(format!("incoming weights or bias of {u} changed"));
        }
    }
    Ok(())
}

/// Removes `remove` (default: the smallest id of the witness) and rewires its
/// children and read-out through the symmetry.
pub fn apply_reduction(
    net: &Network,
    rho: &Nonlinearity,
    w: &ReductionWitness,
    remove: Option<&NodeId>,
) -> Result<Network, RewriteError> {
    check_witness(net, w)?;
    let star = match remove {
        Some(u) => w
            .nodes
            .iter()
            .position(|x| x == u)
            .ok_or_else(|| RewriteError::StaleWitness(format!("{u} is not part of the witness")))?,
        None => (0..w.nodes.len()).min_by_key(|&i| &w.nodes[i]).expect("nonempty witness"),
    };
    let u_star = &w.nodes[star];
    let a_star = w.symmetry.terms[star].alpha;
    let zeta = w.symmetry.zeta;
    let others: Vec<(&NodeId, f64)> = w
        .nodes
        .iter()
        .zip(&w.symmetry.terms)
        .enumerate()
        .filter(|(i, _)| *i != star)
        .map(|(_, (u, t))| (u, t.alpha))
        .collect();

    let mut out = net.clone();
    for (child, c) in net.children(u_star) {
        for &(u, a) in &others {
            let old = net.weight(u, &child).unwrap_or(0.0);
            out.set_edge(u, &child, old - c * a / a_star);
        }
        out.add_bias(&child, c * zeta / a_star);
    }
    if let Some(lam) = net.outputs().get(u_star) {
        for &(u, a) in &others {
            let old = net.outputs().get(u).cloned().unwrap_or_else(|| vec![0.0; net.dim_out()]);
            let new = old.iter().zip(lam).map(|(o, l)| o - l * a / a_star).collect();
            out.set_scalars(u, new);
        }
        for (k, l) in out.constants.iter_mut().zip(lam) {
            *k += l * zeta / a_star;
        }
    }
    out.remove_node(u_star);
    out.fold_constants(rho);
    out.prune();
    Ok(out)
}

/// Applies reductions until none is found. Each step removes a node.
pub fn reduce_to_regular(
    net: &Network,
    rho: &Nonlinearity,
) -> Result<(Network, Vec<ReductionWitness>), RewriteError> {
    let mut cur = net.clone();
    cur.fold_constants(rho);
    cur.prune();
    let mut trail = Vec::new();
    while let Some(w) = find_reduction(&cur, rho) {
        cur = apply_reduction(&cur, rho, &w, None)?;
        trail.push(w);
    }
    Ok((cur, trail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_points;

    fn same_map(a: &Network, b: &Network, rho: &Nonlinearity) -> f64 {
        let d = a.inputs().len();
        random_points(7, 100, d, -3.0, 3.0)
            .iter()
            .map(|t| {
                let x = a.eval_map(rho, t).unwrap();
                let y = b.eval_map(rho, t).unwrap();
                x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn odd_pair() -> Network {
        Network::builder(1)
            .input("v1")
            .input("v2")
            .node("u1", 0.5)
            .node("u2", -0.5)
            .node("w", 3.0)
            .edge("v1", "u1", 1.0)
            .edge("v2", "u1", -2.0)
            .edge("v1", "u2", -1.0)
            .edge("v2", "u2", 2.0)
            .edge("u1", "w", 1.0)
            .edge("u2", "w", 2.0)
            .output("w", vec![1.0])
            .build()
    }

    #[test]
    fn tanh_sign_pair_is_found_and_removed() {
        let n = odd_pair();
        let w = find_reduction(&n, &Nonlinearity::Tanh).unwrap();
        assert_eq!(w.nodes, vec![NodeId::from("u1"), NodeId::from("u2")]);
        let r = apply_reduction(&n, &Nonlinearity::Tanh, &w, None).unwrap();
        assert!(!r.nodes().contains(&"u1".into()));
        assert_eq!(r.weight(&"u2".into(), &"w".into()), Some(1.0));
        assert_eq!(r.bias(&"w".into()), Some(3.0));
        assert!(same_map(&n, &r, &Nonlinearity::Tanh) < 1e-12);
        assert!(find_reduction(&r, &Nonlinearity::Tanh).is_none());
    }

    #[test]
    fn cancelled_node_is_folded_into_the_bias() {
        // w = tanh(u1 + u2 + 3) with u2 = −u1 becomes w = tanh(3): constant.
        let n = Network::builder(1)
            .input("v1")
            .input("v2")
            .node("u1", 0.0)
            .node("u2", 0.0)
            .node("g", 3.0)
            .node("u", 7.0)
            .edge("v1", "u1", 1.0)
            .edge("v1", "u2", -1.0)
            .edge("u1", "g", 1.0)
            .edge("u2", "g", 1.0)
            .edge("g", "u", 1.0)
            .edge("v2", "u", 0.25)
            .output("u", vec![1.0])
            .build();
        let rho = Nonlinearity::Tanh;
        let (r, trail) = reduce_to_regular(&n, &rho).unwrap();
        assert_eq!(trail.len(), 1);
        assert_eq!(r.nodes().len(), 3);
        assert!((r.bias(&"u".into()).unwrap() - (7.0 + 3f64.tanh())).abs() < 1e-15);
        assert!(r.children(&"v1".into()).is_empty());
        assert!(same_map(&n, &r, &rho) < 1e-12);
    }

    #[test]
    fn crelu_three_term_reduction_preserves_the_map() {
        let rho = Nonlinearity::CRelu;
        let n = Network::builder(1)
            .input("v")
            .node("a", 0.0)
            .node("b", 0.0)
            .node("c", -1.0)
            .node("w", 0.1)
            .edge("v", "a", 1.0)
            .edge("v", "b", 2.0)
            .edge("v", "c", 2.0)
            .edge("a", "w", 1.5)
            .edge("b", "w", -0.7)
            .edge("c", "w", 0.2)
            .output("w", vec![2.0])
            .output("a", vec![1.0])
            .build();
        let w = find_reduction(&n, &rho).unwrap();
        assert_eq!(w.nodes.len(), 3);
        let r = apply_reduction(&n, &rho, &w, None).unwrap();
        assert_eq!(r.hidden().count(), 3);
        assert!(same_map(&n, &r, &rho) < 1e-9);
    }

    #[test]
    fn stale_witness_is_rejected() {
        let n = odd_pair();
        let w = find_reduction(&n, &Nonlinearity::Tanh).unwrap();
        let mut m = n.clone();
        m.add_bias(&"u2".into(), 1.0);
        assert!(matches!(
            apply_reduction(&m, &Nonlinearity::Tanh, &w, None),
            Err(RewriteError::StaleWitness(_))
        ));
    }

    #[test]
    fn removing_a_chosen_node() {
        let n = odd_pair();
        let w = find_reduction(&n, &Nonlinearity::Tanh).unwrap();
        let r = apply_reduction(&n, &Nonlinearity::Tanh, &w, Some(&"u2".into())).unwrap();
        assert!(r.nodes().contains(&"u1".into()) && !r.nodes().contains(&"u2".into()));
        assert_eq!(r.weight(&"u1".into(), &"w".into()), Some(-1.0));
    }
}
