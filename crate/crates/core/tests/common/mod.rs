#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use nnsym::rewrite::{regularity_report, ModificationPlan};
use nnsym::sampling::random_points;
use nnsym::{AffineSymmetry, Network, NodeId, Nonlinearity, Term, Zab};
use num_complex::Complex64;
use rand::Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture(name: &str) -> Network {
    nnsym::json::read_network(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Largest coordinate gap between the two maps on seeded points of `[lo, hi]^d`.
pub fn max_gap(a: &Network, b: &Network, rho: &Nonlinearity, seed: u64, n: usize, lo: f64, hi: f64) -> f64 {
    let ea = a.evaluator().unwrap();
    let eb = b.evaluator().unwrap();
    random_points(seed, n, a.inputs().len(), lo, hi)
        .iter()
        .map(|t| {
            let x = ea.eval(rho, t).unwrap();
            let y = eb.eval(rho, t).unwrap();
            x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Nonzero weight with magnitude in `[0.5, 2]`.
pub fn weight(r: &mut impl Rng) -> f64 {
    let m: f64 = r.gen_range(0.5..=2.0);
    if r.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Layered, fully connected between consecutive layers; the last layer is
/// read out with random scalars.
pub fn layered_net(r: &mut impl Rng, inputs: usize, layers: &[usize]) -> Network {
    let mut b = Network::builder(1);
    let mut prev: Vec<String> = (1..=inputs).map(|i| format!("v{i}")).collect();
    for v in &prev {
        b = b.input(v.as_str());
    }
    for (l, &k) in layers.iter().enumerate() {
        let cur: Vec<String> = (0..k).map(|i| format!("h{l}_{i}")).collect();
        for u in &cur {
            b = b.node(u.as_str(), r.gen_range(-1.0..=1.0));
            for p in &prev {
                b = b.edge(p.as_str(), u.as_str(), weight(r));
            }
        }
        prev = cur;
    }
    for u in &prev {
        b = b.output(u.as_str(), vec![weight(r)]);
    }
    b.build()
}

/// Random tanh net with `hidden` nodes spread over one or two layers.
pub fn random_tanh_net(r: &mut impl Rng, hidden: usize) -> Network {
    let inputs = r.gen_range(1..=2);
    if hidden <= 2 || r.gen_bool(0.4) {
        layered_net(r, inputs, &[hidden])
    } else {
        let first = r.gen_range(1..hidden);
        layered_net(r, inputs, &[first, hidden - first])
    }
}

/// Renames the hidden nodes through a random permutation and flips the sign of
/// a random subset. The result realizes the same map.
pub fn sign_flipped_copy(r: &mut impl Rng, net: &Network) -> Network {
    let hidden: Vec<NodeId> = net.hidden().cloned().collect();
    let mut order: Vec<usize> = (0..hidden.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, r.gen_range(0..=i));
    }
    let name: BTreeMap<NodeId, NodeId> = hidden
        .iter()
        .enumerate()
        .map(|(i, u)| (u.clone(), NodeId::new(format!("x{}", order[i]))))
        .collect();
    let sign: BTreeMap<NodeId, f64> =
        hidden.iter().map(|u| (u.clone(), if r.gen_bool(0.5) { -1.0 } else { 1.0 })).collect();
    let id = |v: &NodeId| name.get(v).cloned().unwrap_or_else(|| v.clone());
    let s = |v: &NodeId| sign.get(v).copied().unwrap_or(1.0);
    let mut b = Network::builder(net.dim_out()).constants(net.constants().to_vec());
    for v in net.nodes() {
        b = match net.bias(v) {
            Some(t) => b.node(id(v), s(v) * t),
            None => b.input(v.clone()),
        };
    }
    for (f, t, w) in net.edges() {
        b = b.edge(id(f), id(t), s(f) * s(t) * w);
    }
    for (u, l) in net.outputs() {
        b = b.output(id(u), l.iter().map(|x| s(u) * x).collect());
    }
    b.build()
}

/// Shifts one bias by `delta`.
pub fn bias_perturbed(net: &Network, delta: f64) -> Network {
    let u = net.hidden().next().expect("hidden node").clone();
    let mut b = Network::builder(net.dim_out()).constants(net.constants().to_vec());
    for v in net.nodes() {
        b = match net.bias(v) {
            Some(t) if *v == u => b.node(v.clone(), t + delta),
            Some(t) => b.node(v.clone(), t),
            None => b.input(v.clone()),
        };
    }
    for (f, t, w) in net.edges() {
        b = b.edge(f.clone(), t.clone(), w);
    }
    for (v, l) in net.outputs() {
        b = b.output(v.clone(), l.clone());
    }
    b.build()
}

/// Plan that replaces `u` along a symmetry whose first term is `u` itself with
/// `α = 1`, followed by the given sibling and new-node terms.
pub fn plan_for(
    net: &Network,
    u: &NodeId,
    zeta: f64,
    b: Vec<(NodeId, Term)>,
    c: Vec<(NodeId, Term)>,
) -> ModificationPlan {
    let ps = net.parents(u);
    let (_, &first) = ps.iter().next().expect("u has parents");
    let kappa: BTreeMap<NodeId, f64> = ps.iter().map(|(p, w)| (p.clone(), w / first)).collect();
    let mut terms = vec![Term::new(1.0, first, net.bias(u).unwrap())];
    terms.extend(b.iter().map(|x| x.1));
    terms.extend(c.iter().map(|x| x.1));
    ModificationPlan {
        a: vec![u.clone()],
        b: b.into_iter().map(|x| x.0).collect(),
        c: c.into_iter().map(|x| x.0).collect(),
        symmetry: AffineSymmetry::new(zeta, terms),
        kappa,
        nu: net.children(u),
        mu: net.outputs().get(u).cloned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    TanhOdd,
    TanhRename,
    CReluSplit,
    CReluReflect,
    CReluSplitWithSibling,
}

pub const PLAN_KINDS: [PlanKind; 5] = [
    PlanKind::TanhOdd,
    PlanKind::TanhRename,
    PlanKind::CReluSplit,
    PlanKind::CReluReflect,
    PlanKind::CReluSplitWithSibling,
];

/// A random irreducible host and a plan of the requested kind on one of its
/// hidden nodes.
pub fn random_plan_case(r: &mut impl Rng, kind: PlanKind) -> (Network, Nonlinearity, ModificationPlan) {
    let rho = match kind {
        PlanKind::TanhOdd | PlanKind::TanhRename => Nonlinearity::Tanh,
        _ => Nonlinearity::CRelu,
    };
    loop {
        let first = r.gen_range(2..=3);
        let second = r.gen_range(1..=2);
        let mut net = layered_net(r, 2, &[first, second]);
        if r.gen_bool(0.5) {
            net = with_extra_output(&net, &NodeId::new("h0_0"), weight(r));
        }
        let hidden: Vec<NodeId> = net.hidden().cloned().collect();
        let u = hidden[r.gen_range(0..hidden.len())].clone();
        let beta = *net.parents(&u).values().next().unwrap();
        let theta = net.bias(&u).unwrap();
        let x = NodeId::new("c0");
        let y = NodeId::new("c1");
        let plan = match kind {
            PlanKind::TanhOdd => plan_for(&net, &u, 0.0, vec![], vec![(x, Term::new(1.0, -beta, -theta))]),
            PlanKind::TanhRename => plan_for(&net, &u, 0.0, vec![], vec![(x, Term::new(-1.0, beta, theta))]),
            PlanKind::CReluSplit => plan_for(
                &net,
                &u,
                0.0,
                vec![],
                vec![
                    (x, Term::new(-0.5, 2.0 * beta, 2.0 * theta)),
                    (y, Term::new(-0.5, 2.0 * beta, 2.0 * theta - 1.0)),
                ],
            ),
            PlanKind::CReluReflect => {
                plan_for(&net, &u, 1.0, vec![], vec![(x, Term::new(1.0, -beta, 1.0 - theta))])
            }
            PlanKind::CReluSplitWithSibling => {
                let s = NodeId::new("s0");
                net = with_sibling(r, &net, &u, &s, 2.0, 2.0 * theta - 1.0);
                plan_for(
                    &net,
                    &u,
                    0.0,
                    vec![(s, Term::new(-0.5, 2.0 * beta, 2.0 * theta - 1.0))],
                    vec![(x, Term::new(-0.5, 2.0 * beta, 2.0 * theta))],
                )
            }
        };
        if regularity_report(&net, &rho).unwrap().regular {
            return (net, rho, plan);
        }
    }
}

fn rebuild(net: &Network) -> nnsym::NetworkBuilder {
    let mut b = Network::builder(net.dim_out()).constants(net.constants().to_vec());
    for v in net.nodes() {
        b = match net.bias(v) {
            Some(t) => b.node(v.clone(), t),
            None => b.input(v.clone()),
        };
    }
    for (f, t, w) in net.edges() {
        b = b.edge(f.clone(), t.clone(), w);
    }
    b
}

fn with_extra_output(net: &Network, u: &NodeId, l: f64) -> Network {
    let mut b = rebuild(net);
    for (v, s) in net.outputs() {
        b = b.output(v.clone(), s.clone());
    }
    if !net.is_output(u) {
        b = b.output(u.clone(), vec![l]);
    }
    b.build()
}

/// Adds `s` with the incoming weights of `u` scaled by `scale`, the given bias
/// and random edges to the children of `u`.
fn with_sibling(r: &mut impl Rng, net: &Network, u: &NodeId, s: &NodeId, scale: f64, bias: f64) -> Network {
    let mut b = rebuild(net).node(s.clone(), bias);
    for (p, w) in net.parents(u) {
        b = b.edge(p.clone(), s.clone(), scale * w);
    }
    let children = net.children(u);
    for c in children.keys() {
        b = b.edge(s.clone(), c.clone(), weight(r));
    }
    for (v, l) in net.outputs() {
        b = b.output(v.clone(), l.clone());
    }
    if children.is_empty() {
        b = b.output(s.clone(), vec![weight(r)]);
    }
    b.build()
}

pub fn random_zab(r: &mut impl Rng) -> Zab {
    let a = r.gen_range(0.5..=2.0);
    let b = r.gen_range(1.0..=4.0);
    let mut coeffs = BTreeMap::new();
    for k in -2i64..=2 {
        if k == 0 || r.gen_bool(0.6) {
            coeffs.insert(k, Complex64::new(r.gen_range(-1.0..=1.0), 0.0));
        }
    }
    Zab::new(a, b, Complex64::new(r.gen_range(-1.0..=1.0), 0.0), coeffs).expect("valid coefficients")
}

/// Strongly regular three-input net where `g*` nodes depend on `v3` only.
pub fn anchoring_case(r: &mut impl Rng) -> Network {
    loop {
        let mut b = Network::builder(1).input("v1").input("v2").input("v3");
        b = b.node("g0", r.gen_range(-1.0..=1.0)).edge("v3", "g0", weight(r));
        b = b.node("g1", r.gen_range(-1.0..=1.0)).edge("g0", "g1", weight(r));
        let firsts = ["a0", "a1", "a2"];
        for u in firsts {
            b = b.node(u, r.gen_range(-1.0..=1.0));
            for p in ["v1", "v2", "v3", "g0"] {
                if r.gen_bool(0.6) {
                    b = b.edge(p, u, weight(r));
                }
            }
            b = b.edge(if r.gen_bool(0.5) { "v1" } else { "v2" }, u, weight(r));
        }
        for w in ["b0", "b1"] {
            b = b.node(w, r.gen_range(-1.0..=1.0));
            for p in ["a0", "a1", "a2", "g1"] {
                if r.gen_bool(0.7) {
                    b = b.edge(p, w, weight(r));
                }
            }
            b = b.output(w, vec![weight(r)]);
        }
        let net = b.build();
        if !net.validate().is_empty() {
            continue;
        }
        let rep = regularity_report(&net, &Nonlinearity::Tanh).unwrap();
        if rep.regular && rep.strongly_non_degenerate {
            return net;
        }
    }
}

