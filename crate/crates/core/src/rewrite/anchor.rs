//! Fixing one input to a constant.

use serde::Serialize;

use super::{regularity_report, RewriteError};
use crate::network::{Network, NodeId, NodeSet};
use crate::nonlinearity::Nonlinearity;
use crate::sampling::{random_points, rng};

/// Below this sup-norm a map counts as zero on the probe grid.
pub const ZERO_PROBE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anchored {
    pub network: Network,
    /// Premises that could not be confirmed. The network is still returned.
    pub warnings: Vec<String>,
}

/// Substitutes `v = a` and folds every node depending only on `v` into the
/// biases and constants of the rest.
pub fn anchor_input(
    net: &Network,
    rho: &Nonlinearity,
    v: &NodeId,
    a: f64,
) -> Result<Anchored, RewriteError> {
    if !net.inputs().contains(v) {
        return Err(RewriteError::Precondition(format!("{v} is not an input")));
    }
    if net.inputs().len() < 2 {
        return Err(RewriteError::Precondition("anchoring needs at least two inputs".into()));
    }
    let rest: NodeSet = net.inputs().iter().filter(|x| *x != v).cloned().collect();
    let kept = net.descendants(&rest);
    let mut value = std::collections::BTreeMap::new();
    for u in net.topological_order()? {
        if kept.contains(&u) {
            continue;
        }
        let x = if &u == v {
            a
        } else {
            let pre: f64 =
                net.parents(&u).iter().map(|(p, w)| w * value[p]).sum::<f64>() + net.biases[&u];
            rho.eval_real(pre)
        };
        value.insert(u, x);
    }
    let mut out = net.clone();
    for (u, x) in &value {
        for (c, w) in net.children(u) {
            if kept.contains(&c) {
                out.add_bias(&c, w * x);
            }
        }
        if let Some(s) = net.outputs().get(u) {
            for (k, l) in out.constants.iter_mut().zip(s) {
                *k += l * x;
            }
        }
        out.remove_node(u);
    }

    let mut warnings = Vec::new();
    let report = regularity_report(net, rho)?;
    if !(report.regular && report.strongly_non_degenerate) {
        warnings.push("input network is not strongly regular".to_string());
    }
    let probe = zero_map_probe(net, rho, 100, crate::sampling::DEFAULT_SEED)?;
    if probe.verdict != ProbeVerdict::ZeroOnGrid {
        warnings.push(format!("input map is not zero on the probe grid (max {:e})", probe.max_abs));
    }
    Ok(Anchored { network: out, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AnchorSearch {
    Found { value: f64, network: Network, tried: usize },
    Exhausted { tried: usize },
}

/// Tries the anchor values in order and returns the first whose anchored
/// network is regular.
pub fn anchor_search(
    net: &Network,
    rho: &Nonlinearity,
    v: &NodeId,
    samples: &[f64],
) -> Result<AnchorSearch, RewriteError> {
    for (i, &a) in samples.iter().enumerate() {
        let m = anchor_input(net, rho, v, a)?.network;
        if regularity_report(&m, rho)?.regular {
            return Ok(AnchorSearch::Found { value: a, network: m, tried: i + 1 });
        }
    }
    Ok(AnchorSearch::Exhausted { tried: samples.len() })
}

/// `count` seeded anchor values, uniform on `[lo, hi]`.
pub fn anchor_samples(seed: u64, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng(seed);
    (0..count).map(|_| r.gen_range(lo..=hi)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    ZeroOnGrid,
    Nonzero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub points: usize,
    pub max_abs: f64,
    pub verdict: ProbeVerdict,
}

/// Sup-norm of the output map on seeded points of [−10, 10]^inputs.
pub fn zero_map_probe(
    net: &Network,
    rho: &Nonlinearity,
    points: usize,
    seed: u64,
) -> Result<ProbeReport, RewriteError> {
    let ev = net.evaluator()?;
    let mut max_abs: f64 = 0.0;
    for t in random_points(seed, points, net.inputs().len(), -10.0, 10.0) {
        for y in ev.eval(rho, &t)? {
            max_abs = max_abs.max(y.abs());
        }
    }
    let verdict = if max_abs < ZERO_PROBE_TOL { ProbeVerdict::ZeroOnGrid } else { ProbeVerdict::Nonzero };
    Ok(ProbeReport { points, max_abs, verdict })
}
