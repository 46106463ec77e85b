//! Modifications: trading a sibling group `A` for fresh nodes `C` along an
//! affine symmetry `Σ_{A∪B∪C} α ρ(β s + γ) = ζ`, reweighting the siblings `B`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    approx_eq, combinations, networks_close, regularity_report, sibling_classes, RewriteError,
    SiblingClass,
};
use crate::network::{Network, NodeId, NodeSet};
use crate::nonlinearity::Nonlinearity;
use crate::symmetry::{exact_symmetry, verify_symmetry, AffineSymmetry, Term};

/// Relative tolerance when matching a plan against network parameters.
pub const PLAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationPlan {
    /// Nodes removed.
    pub a: Vec<NodeId>,
    /// Siblings whose outgoing weights are adjusted.
    pub b: Vec<NodeId>,
    /// Fresh ids of the added nodes.
    pub c: Vec<NodeId>,
    /// Terms in the order `a`, `b`, `c`. For `a` and `b` the term is
    /// `(α_u, β_u, θ_u)`, for `c` it is `(α′, β′, γ′)`.
    pub symmetry: AffineSymmetry,
    /// Incoming direction shared by `a ∪ b ∪ c`: `ω_uv = β_u κ_v`.
    pub kappa: BTreeMap<NodeId, f64>,
    /// `ω_wu = ν_w α_u` for every child `w` of `a` and `u ∈ a`.
    pub nu: BTreeMap<NodeId, f64>,
    /// `λ_u = μ α_u` when `a` consists of output nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl ModificationPlan {
    fn term_of(&self, i: usize) -> Term {
        self.symmetry.terms[i]
    }

    fn a_terms(&self) -> impl Iterator<Item = (&NodeId, Term)> {
        self.a.iter().enumerate().map(|(i, u)| (u, self.term_of(i)))
    }

    fn b_terms(&self) -> impl Iterator<Item = (&NodeId, Term)> {
        let off = self.a.len();
        self.b.iter().enumerate().map(move |(i, u)| (u, self.term_of(off + i)))
    }

    fn c_terms(&self) -> impl Iterator<Item = (&NodeId, Term)> {
        let off = self.a.len() + self.b.len();
        self.c.iter().enumerate().map(move |(i, u)| (u, self.term_of(off + i)))
    }
}

fn mismatch<T>(m: impl Into<String>) -> Result<T, RewriteError> {
    Err(RewriteError::PlanMismatch(m.into()))
}

fn symmetry_tol(s: &AffineSymmetry) -> f64 {
    let scale: f64 = s
        .terms
        .iter()
        .map(|t| t.alpha.abs() * (1.0 + 8.0 * t.beta.abs() + t.gamma.abs()))
        .sum();
    1e-8 * (1.0 + scale + s.zeta.abs())
}

/// Children of `A`: the nodes `W` whose weights `ν` must describe.
fn children_of(net: &Network, a: &[NodeId]) -> NodeSet {
    a.iter().flat_map(|u| net.children(u).into_keys()).collect()
}

fn check_plan(
    net: &Network,
    rho: &Nonlinearity,
    plan: &ModificationPlan,
    need_irreducible: bool,
) -> Result<(), RewriteError> {
    let p = plan;
    if p.a.is_empty() || p.c.is_empty() {
        return mismatch("A and C must be nonempty");
    }
    if p.symmetry.terms.len() != p.a.len() + p.b.len() + p.c.len() {
        return mismatch("one symmetry term is needed per node of A, B and C");
    }
    if p.symmetry.terms.iter().any(|t| !t.alpha.is_finite() || t.alpha == 0.0) {
        return mismatch("symmetry coefficients must be nonzero");
    }
    let ab: NodeSet = p.a.iter().chain(&p.b).cloned().collect();
    if ab.len() != p.a.len() + p.b.len() {
        return mismatch("A and B must be disjoint and free of repeats");
    }
    if let Some(u) = ab.iter().find(|u| !net.nodes().contains(*u) || net.inputs().contains(*u)) {
        return mismatch(format!("{u} is not a non-input node"));
    }
    let cs: NodeSet = p.c.iter().cloned().collect();
    if cs.len() != p.c.len() {
        return mismatch("C ids repeat");
    }
    if let Some(u) = cs.iter().find(|u| net.nodes().contains(*u)) {
        return mismatch(format!("{u} is already a node"));
    }
    if p.kappa.is_empty() {
        return mismatch("kappa must name the common parents");
    }
    for (u, t) in p.a_terms().chain(p.b_terms()) {
        let ps = net.parents(u);
        if ps.len() != p.kappa.len() || ps.keys().ne(p.kappa.keys()) {
            return mismatch(format!("parents of {u} differ from kappa"));
        }
        if !ps.iter().all(|(v, w)| approx_eq(*w, t.beta * p.kappa[v], PLAN_TOL)) {
            return mismatch(format!("incoming weights of {u} are not β κ"));
        }
        if !approx_eq(net.biases[u], t.gamma, PLAN_TOL) {
            return mismatch(format!("bias of {u} differs from its term"));
        }
    }
    let check = verify_symmetry(rho, &p.symmetry, symmetry_tol(&p.symmetry));
    if !(check.holds && check.minimal) {
        return mismatch(format!(
            "symmetry fails (holds {}, minimal {}, residual {:e})",
            check.holds, check.minimal, check.max_residual
        ));
    }
    let w = children_of(net, &p.a);
    if w.len() != p.nu.len() || w.iter().ne(p.nu.keys()) {
        return mismatch("nu must be indexed by the children of A");
    }
    for (wn, nu) in &p.nu {
        for (u, t) in p.a_terms() {
            let got = net.weight(u, wn).unwrap_or(0.0);
            if !approx_eq(got, nu * t.alpha, PLAN_TOL) {
                return mismatch(format!("weight {u} -> {wn} is not ν α"));
            }
        }
    }
    let outs_in_a = p.a.iter().filter(|u| net.is_output(u)).count();
    match &p.mu {
        None if outs_in_a > 0 => return mismatch("A contains outputs but mu is missing"),
        None => {}
        Some(mu) => {
            if outs_in_a != p.a.len() {
                return mismatch("with mu, every node of A must be an output");
            }
            if mu.len() != net.dim_out() {
                return mismatch("mu has the wrong length");
            }
            for (u, t) in p.a_terms() {
                let lam = &net.outputs()[u];
                if !lam.iter().zip(mu).all(|(l, m)| approx_eq(*l, m * t.alpha, PLAN_TOL)) {
                    return mismatch(format!("scalars of {u} are not μ α"));
                }
            }
        }
    }
    if need_irreducible && super::find_reduction(net, rho).is_some() {
        return Err(RewriteError::Reducible);
    }
    Ok(())
}

fn build(net: &Network, plan: &ModificationPlan) -> Network {
    let p = plan;
    let mut out = net.clone();
    for u in &p.a {
        out.remove_node(u);
    }
    for (u, t) in p.c_terms() {
        out.insert_node(u.clone(), t.gamma);
        for (v, k) in &p.kappa {
            out.set_edge(v, u, t.beta * k);
        }
    }
    for (w, nu) in &p.nu {
        for (u, t) in p.c_terms() {
            out.set_edge(u, w, -t.alpha * nu);
        }
        for (u, t) in p.b_terms() {
            let old = net.weight(u, w).unwrap_or(0.0);
            out.set_edge(u, w, old - t.alpha * nu);
        }
        out.add_bias(w, p.symmetry.zeta * nu);
    }
    if let Some(mu) = &p.mu {
        for (k, m) in out.constants.iter_mut().zip(mu) {
            *k += p.symmetry.zeta * m;
        }
        for (u, t) in p.c_terms() {
            out.outputs.insert(u.clone(), mu.iter().map(|m| -t.alpha * m).collect());
        }
        for (u, t) in p.b_terms() {
            let old = net.outputs().get(u).cloned().unwrap_or_else(|| vec![0.0; net.dim_out()]);
            out.set_scalars(u, old.iter().zip(mu).map(|(l, m)| l - t.alpha * m).collect());
        }
    }
    out
}

/// Applies the plan to an irreducible network. The output map is unchanged.
pub fn apply_modification(
    net: &Network,
    rho: &Nonlinearity,
    plan: &ModificationPlan,
) -> Result<Network, RewriteError> {
    check_plan(net, rho, plan, true)?;
    Ok(build(net, plan))
}

/// The plan that turns `result` back into `net`, where `result` is `plan`
/// applied to `net`.
pub fn invert_modification(
    net: &Network,
    rho: &Nonlinearity,
    plan: &ModificationPlan,
    result: &Network,
) -> Result<ModificationPlan, RewriteError> {
    check_plan(net, rho, plan, false)?;
    if !networks_close(&build(net, plan), result, 1e-12) {
        return mismatch("result is not the image of the plan");
    }
    let mut terms: Vec<Term> = plan.c_terms().map(|(_, t)| t).collect();
    terms.extend(plan.b_terms().map(|(_, t)| t));
    terms.extend(plan.a_terms().map(|(_, t)| t));
    Ok(ModificationPlan {
        a: plan.c.clone(),
        b: plan.b.clone(),
        c: plan.a.clone(),
        symmetry: AffineSymmetry::new(plan.symmetry.zeta, terms),
        kappa: plan.kappa.clone(),
        nu: plan.nu.iter().map(|(w, x)| (w.clone(), -x)).collect(),
        mu: plan.mu.as_ref().map(|m| m.iter().map(|x| -x).collect()),
    })
}

/// A candidate new node: id, scale and bias relative to the class direction.
pub(crate) type NewTerm = (NodeId, f64, f64);

/// Searches for a plan with `A ⊇ seed` whose result is regular, drawing the
/// new nodes from `pool`. Smaller `C` is preferred, then smaller `B`, then
/// smaller `A`; with `exhaustive` every level is collected.
pub(crate) fn search_regular(
    net: &Network,
    rho: &Nonlinearity,
    class: &SiblingClass,
    seed: &[NodeId],
    pool: &[NewTerm],
    max_c: usize,
    exhaustive: bool,
    budget: &mut usize,
) -> Result<Vec<(ModificationPlan, Network)>, RewriteError> {
    let term_of = |u: &NodeId| {
        let (_, b, g) = class.members.iter().find(|m| &m.0 == u).expect("seed in class");
        (*b, *g)
    };
    let others: Vec<&(NodeId, f64, f64)> =
        class.members.iter().filter(|m| !seed.contains(&m.0)).collect();
    let kappa = class.kappa_map();
    let mut found = Vec::new();
    for k in 1..=max_c.min(pool.len()) {
        for csub in combinations(pool.len(), k) {
            for xs in 0..=others.len() {
                for xsub in combinations(others.len(), xs) {
                    if *budget == 0 {
                        return Err(RewriteError::Budget("symmetry checks exhausted".into()));
                    }
                    *budget -= 1;
                    let mut cands: Vec<(f64, f64)> = seed.iter().map(term_of).collect();
                    cands.extend(xsub.iter().map(|&i| (others[i].1, others[i].2)));
                    cands.extend(csub.iter().map(|&i| (pool[i].1, pool[i].2)));
                    let Ok(Some(sym)) = exact_symmetry(rho, &cands) else { continue };
                    let n_seed = seed.len();
                    let alpha = |i: usize| sym.terms[i].alpha;
                    // Split X into extra A nodes and B, smallest extension first.
                    for es in 0..=xsub.len() {
                        for ext in combinations(xsub.len(), es) {
                            let mut a_idx: Vec<usize> = (0..n_seed).collect();
                            a_idx.extend(ext.iter().map(|&j| n_seed + j));
                            let b_idx: Vec<usize> =
                                (0..xsub.len()).filter(|j| !ext.contains(j)).map(|j| n_seed + j).collect();
                            let id = |i: usize| -> NodeId {
                                if i < n_seed {
                                    seed[i].clone()
                                } else if i < n_seed + xsub.len() {
                                    others[xsub[i - n_seed]].0.clone()
                                } else {
                                    pool[csub[i - n_seed - xsub.len()]].0.clone()
                                }
                            };
                            let c_idx: Vec<usize> = (n_seed + xsub.len()..cands.len()).collect();
                            let a: Vec<NodeId> = a_idx.iter().map(|&i| id(i)).collect();
                            let a0 = &a[0];
                            let nu = children_of(net, &a)
                                .into_iter()
                                .map(|w| {
                                    let x = net.weight(a0, &w).unwrap_or(0.0) / alpha(0);
                                    (w, x)
                                })
                                .collect();
                            let mu = net
                                .outputs()
                                .get(a0)
                                .map(|l| l.iter().map(|x| x / alpha(0)).collect());
                            let order: Vec<usize> =
                                a_idx.iter().chain(&b_idx).chain(&c_idx).copied().collect();
                            let plan = ModificationPlan {
                                a,
                                b: b_idx.iter().map(|&i| id(i)).collect(),
                                c: c_idx.iter().map(|&i| id(i)).collect(),
                                symmetry: AffineSymmetry::new(
                                    sym.zeta,
                                    order.iter().map(|&i| sym.terms[i]).collect(),
                                ),
                                kappa: kappa.clone(),
                                nu,
                                mu,
                            };
                            if check_plan(net, rho, &plan, false).is_err() {
                                continue;
                            }
                            let out = build(net, &plan);
                            if regularity_report(&out, rho).is_ok_and(|r| r.regular) {
                                found.push((plan, out));
                            }
                        }
                    }
                }
                if !exhaustive && !found.is_empty() {
                    return Ok(found);
                }
            }
        }
    }
    Ok(found)
}

/// Finds a modification of a regular network whose result is again regular,
/// reusing the seed `A` and new-node terms of `plan`.
pub fn plan_regular_modification(
    net: &Network,
    rho: &Nonlinearity,
    plan: &ModificationPlan,
) -> Result<ModificationPlan, RewriteError> {
    if !regularity_report(net, rho)?.regular {
        return Err(RewriteError::Precondition("network is not regular".into()));
    }
    check_plan(net, rho, plan, false)?;
    let class = sibling_classes(net)
        .into_iter()
        .find(|c| c.members.iter().any(|m| m.0 == plan.a[0]))
        .expect("A belongs to a class");
    let p0 = &class.parents[0];
    let scale = plan.kappa[p0];
    let pool: Vec<NewTerm> =
        plan.c_terms().map(|(u, t)| (u.clone(), t.beta * scale, t.gamma)).collect();
    let mut budget = 1 << 16;
    let found = search_regular(net, rho, &class, &plan.a, &pool, pool.len(), false, &mut budget)?;
    found
        .into_iter()
        .next()
        .map(|(p, _)| p)
        .ok_or_else(|| RewriteError::NoRegularPlan("no subset of the new terms yields a regular result".into()))
}
