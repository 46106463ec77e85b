//! Finite-window pole geometry of tanh-type maps: pole clouds, ε-clustering
//! depth, windowed densities, alignment of pole lattices, and grid scans for
//! singularities of single-input networks.
//!
//! Everything here is numerical evidence on bounded windows.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::network::{GraphError, Network, NodeId};
use crate::nonlinearity::{pole_lattice, Nonlinearity, NonlinearityError, Zab};
use crate::rewrite::regularity_report;
use crate::symmetry::{residue_of_combination, SymmetryError, Term};

/// Residues below this are treated as cancelled.
pub const RESIDUE_CANCEL_TOL: f64 = 1e-10;
/// Magnitude that certifies a blow-up of a scanned map.
pub const BLOWUP_THRESHOLD: f64 = 1e6;
/// Largest denominator accepted by the rationality test.
pub const MAX_DENOMINATOR: i64 = 1_000_000;
pub const DEFAULT_OCCUPANCY: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Precondition(String),
    #[error("network depth {depth} exceeds the budget {budget}")]
    DepthBudget { depth: usize, budget: usize },
}

/// Finite set of points, generated inside the disk of radius `window`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCloud {
    pub points: Vec<Complex64>,
    /// Surviving residue per point; empty when not applicable.
    pub residues: Vec<Complex64>,
    pub window: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Complex64>, window: f64) -> Self {
        PointCloud { points, residues: Vec::new(), window }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `re,im,residue_re,residue_im` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,residue_re,residue_im\n");
        for (i, p) in self.points.iter().enumerate() {
            let r = self.residues.get(i).copied().unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", p.re, p.im, r.re, r.im));
        }
        s
    }
}

/// A line `x + ℝ y` with `|y| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSpec {
    pub base: Complex64,
    pub direction: Complex64,
}

impl LineSpec {
    pub fn new(base: Complex64, direction: Complex64) -> Result<Self, ComplexError> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(ComplexError::Precondition("line direction must be nonzero".into()));
        }
        Ok(LineSpec { base, direction: direction / n })
    }

    pub fn real_axis() -> Self {
        LineSpec { base: Complex64::new(0.0, 0.0), direction: Complex64::new(1.0, 0.0) }
    }

    pub fn distance(&self, p: Complex64) -> f64 {
        ((p - self.base) * self.direction.conj()).im.abs()
    }
}

fn cmp_c(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Poles of `z ↦ Σ α_s σ(β_s z + γ_s)` in the closed disk of radius `n`,
/// with cancelled poles removed.
pub fn poles_in_window(sigma: &Zab, terms: &[Term], n: f64) -> Result<PointCloud, ComplexError> {
    if !(n > 0.0) {
        return Err(ComplexError::Precondition("window must be positive".into()));
    }
    let rho = Nonlinearity::Zab(sigma.clone());
    let mut cand: Vec<Complex64> = Vec::new();
    for t in terms {
        let lat = pole_lattice(&rho, Complex64::new(t.beta, 0.0), Complex64::new(t.gamma, 0.0))?;
        cand.extend(lat.points_in_disk(n).into_iter().map(|(_, p)| p));
    }
    cand.sort_by(cmp_c);
    let mut unique: Vec<Complex64> = Vec::new();
    for p in cand {
        if !unique.iter().rev().take(64).any(|q| (p - q).norm() <= 1e-9 * (1.0 + p.norm())) {
            unique.push(p);
        }
    }
    let mut points = Vec::new();
    let mut residues = Vec::new();
    for p in unique {
        let r = residue_of_combination(sigma, terms, p)?;
        if r.norm() >= RESIDUE_CANCEL_TOL {
            points.push(p);
            residues.push(r);
        }
    }
    Ok(PointCloud { points, residues, window: n })
}

/// Uniform-grid bucket index for neighbour queries at a fixed radius.
struct Buckets {
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl Buckets {
    fn new(points: &[Complex64], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Buckets { cell, map }
    }

    fn key(p: Complex64, cell: f64) -> (i64, i64) {
        ((p.re / cell).floor() as i64, (p.im / cell).floor() as i64)
    }

    /// Indices of points within `r ≤ cell` of `p`.
    fn near<'a>(&'a self, points: &'a [Complex64], p: Complex64, r: f64) -> impl Iterator<Item = usize> + 'a {
        let (kx, ky) = Self::key(p, self.cell);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).map(move |dy| (kx + dx, ky + dy)))
            .filter_map(|k| self.map.get(&k))
            .flatten()
            .copied()
            .filter(move |&j| (points[j] - p).norm() <= r)
    }
}

/// Points with at least `m` cloud points (itself included) within `eps`,
/// each single-linkage component at distance `eps` collapsed to its densest
/// member.
pub fn cluster_points(points: &[Complex64], eps: f64, m: usize) -> Vec<Complex64> {
    let b = Buckets::new(points, eps);
    let counts: Vec<usize> = points.iter().map(|&p| b.near(points, p, eps).count()).collect();
    let dense: Vec<usize> = (0..points.len()).filter(|&i| counts[i] >= m).collect();
    let sub: Vec<Complex64> = dense.iter().map(|&i| points[i]).collect();
    let sb = Buckets::new(&sub, eps);
    let mut comp = vec![usize::MAX; sub.len()];
    let mut reps = Vec::new();
    for start in 0..sub.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = reps.len();
        comp[start] = id;
        let mut stack = vec![start];
        let mut best = start;
        while let Some(i) = stack.pop() {
            let better = counts[dense[i]] > counts[dense[best]]
                || (counts[dense[i]] == counts[dense[best]] && cmp_c(&sub[i], &sub[best]).is_lt());
            if better {
                best = i;
            }
            for j in sb.near(&sub, sub[i], eps).collect::<Vec<_>>() {
                if comp[j] == usize::MAX {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
        reps.push(sub[best]);
    }
    reps.sort_by(cmp_c);
    reps
}

/// Least `k` with an empty `k`-th iterated cluster set at scale `eps`.
pub fn depth_at(points: &[Complex64], eps: f64, m: usize) -> usize {
    let mut cur = points.to_vec();
    let mut k = 0;
    while !cur.is_empty() {
        cur = cluster_points(&cur, eps, m);
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDepth {
    /// Depth at the last scale of the schedule.
    pub depth: usize,
    pub schedule: Vec<f64>,
    pub per_eps: Vec<usize>,
    /// The last two scales agree.
    pub stable: bool,
}

/// Default scales `0.5 · 2^{−j}`, `j = 0..=6`.
pub fn default_schedule() -> Vec<f64> {
    (0..=6).map(|j| 0.5 * 0.5f64.powi(j)).collect()
}

pub fn cluster_depth_eps(cloud: &PointCloud, schedule: &[f64], m: usize) -> Result<ClusterDepth, ComplexError> {
    if schedule.is_empty() {
        return Err(ComplexError::Precondition("schedule must be nonempty".into()));
    }
    if m < 2 {
        return Err(ComplexError::Precondition("occupancy threshold must be at least 2".into()));
    }
    let per_eps: Vec<usize> = schedule.iter().map(|&e| depth_at(&cloud.points, e, m)).collect();
    let n = per_eps.len();
    let stable = n < 2 || per_eps[n - 1] == per_eps[n - 2];
    Ok(ClusterDepth { depth: per_eps[n - 1], schedule: schedule.to_vec(), per_eps, stable })
}

/// Target of a density computation.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityTarget<'a> {
    Line(LineSpec),
    Cloud(&'a [Complex64]),
}

/// `(1/2N) · #{p : |p| ≤ N, d(p, F) ≤ eps}`.
pub fn density_along(target: &DensityTarget, p: &PointCloud, eps: f64, n: f64) -> Result<f64, ComplexError> {
    if !(eps > 0.0) {
        return Err(ComplexError::Precondition("eps must be positive".into()));
    }
    if n > p.window {
        return Err(ComplexError::Precondition(format!(
            "window {n} exceeds the cloud's window {}",
            p.window
        )));
    }
    let inside = p.points.iter().filter(|q| q.norm() <= n);
    let count = match target {
        DensityTarget::Line(l) => inside.filter(|q| l.distance(**q) <= eps).count(),
        DensityTarget::Cloud(f) => {
            let b = Buckets::new(f, eps);
            inside.filter(|q| b.near(f, **q, eps).next().is_some()).count()
        }
    };
    Ok(count as f64 / (2.0 * n))
}

/// Relative residual below which a continued-fraction convergent is exact.
pub const RATIONAL_RESIDUAL: f64 = 1e-13;

/// The first convergent `p/q` of `x` with `|x − p/q| ≤ RATIONAL_RESIDUAL·max(1, |x|)`,
/// provided `q ≤ MAX_DENOMINATOR`.
pub fn rational_approximation(x: f64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i64;
        let h = a.checked_mul(h1)?.checked_add(h0)?;
        let k = a.checked_mul(k1)?.checked_add(k0)?;
        if k > MAX_DENOMINATOR {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        if (x - h as f64 / k as f64).abs() <= RATIONAL_RESIDUAL * x.abs().max(1.0) {
            return Some((h, k));
        }
        let frac = r - a as f64;
        if frac.abs() < 1e-15 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

/// Whether the pole lattices of two terms share infinitely many points on a
/// common line.
fn lattices_aligned(sigma: &Zab, s1: &Term, s2: &Term) -> bool {
    // β₂/β₁ = p/q in lowest terms.
    let Some((_, q)) = rational_approximation(s2.beta / s1.beta) else { return false };
    let (a, b) = (sigma.a(), sigma.b());
    let ks: Vec<i64> = sigma.coeffs().keys().copied().collect();
    // Column k of term s is the progression x + y ℤ with y = i b/β and
    // x = (a k − γ + i b/2)/β. With y₁ = p g and y₂ = q g, two progressions on
    // one vertical line meet (infinitely often) iff (x₁ − x₂)/g ∈ ℤ.
    let x = |t: &Term, k: i64| Complex64::new(a * k as f64 - t.gamma, b / 2.0) / t.beta;
    let g = b / s2.beta / q as f64;
    for &k1 in &ks {
        let x1 = x(s1, k1);
        for &k2 in &ks {
            let x2 = x(s2, k2);
            if (x1.re - x2.re).abs() > 1e-9 * (1.0 + x1.re.abs()) {
                continue;
            }
            let d = (x1.im - x2.im) / g;
            if (d - d.round()).abs() < 1e-6 {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentPartition {
    pub parts: Vec<Vec<usize>>,
    /// The part's sub-sum has no poles in its probe window.
    pub entire: Vec<bool>,
    pub windows: Vec<f64>,
    pub max_denominator: i64,
}

/// Connected components of the alignment graph on `terms`.
pub fn alignment_partition(sigma: &Zab, terms: &[Term]) -> Result<AlignmentPartition, ComplexError> {
    if terms.iter().any(|t| t.beta == 0.0 || !t.beta.is_finite()) {
        return Err(ComplexError::Precondition("all scales must be nonzero".into()));
    }
    let n = terms.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if lattices_aligned(sigma, &terms[i], &terms[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let parts: Vec<Vec<usize>> = groups.into_values().collect();
    let mut entire = Vec::new();
    let mut windows = Vec::new();
    for part in &parts {
        let sub: Vec<Term> = part.iter().map(|&i| terms[i]).collect();
        let spacing = sub.iter().map(|t| sigma.b() / t.beta.abs()).fold(0.0, f64::max);
        let offset = sub.iter().map(|t| (t.gamma / t.beta).abs()).fold(0.0, f64::max);
        let w = 10.0 * spacing + offset;
        entire.push(poles_in_window(sigma, &sub, w)?.is_empty());
        windows.push(w);
    }
    Ok(AlignmentPartition { parts, entire, windows, max_denominator: MAX_DENOMINATOR })
}

fn single_input_scalar(net: &Network) -> Result<(), ComplexError> {
    if net.inputs().len() != 1 || net.dim_out() != 1 {
        return Err(ComplexError::Precondition("need one input and one-dimensional output".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleLayerPoles {
    pub predicted: PointCloud,
    pub nonempty: bool,
    /// Every predicted pole shows a blow-up of the evaluated map.
    pub confirmed: bool,
}

/// Predicted poles of a regular depth-1 tanh network with one input, checked
/// against complex evaluation.
pub fn single_layer_pole_check(net: &Network, window: f64) -> Result<SingleLayerPoles, ComplexError> {
    single_input_scalar(net)?;
    let depth = net.depth()?;
    if depth != 1 {
        return Err(ComplexError::Precondition(format!("depth is {depth}, not 1")));
    }
    let rho = Nonlinearity::Tanh;
    if !regularity_report(net, &rho)?.regular {
        return Err(ComplexError::Precondition("network is not regular".into()));
    }
    let v = net.inputs().iter().next().expect("one input");
    let terms: Vec<Term> = net
        .outputs()
        .iter()
        .map(|(u, l)| {
            let w = net.weight(v, u).unwrap_or(0.0);
            Term::new(l[0], w, net.bias(u).unwrap_or(0.0))
        })
        .collect();
    let predicted = poles_in_window(&Zab::tanh(), &terms, window)?;
    let ev = net.evaluator()?;
    let mut confirmed = true;
    for (p, r) in predicted.points.iter().zip(&predicted.residues) {
        let d = (1e-4f64).min(r.norm() * 1e-7);
        match ev.eval_complex(&rho, &[p + d])? {
            Ok(val) if val[0].norm() > BLOWUP_THRESHOLD => {}
            Ok(_) => confirmed = false,
            Err(_) => {}
        }
    }
    let nonempty = !predicted.is_empty();
    Ok(SingleLayerPoles { predicted, nonempty, confirmed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDepth {
    pub sampled_singularities: PointCloud,
    pub cluster: ClusterDepth,
    pub eps_depth: usize,
    pub network_depth: usize,
    pub matches_l: bool,
    pub label: &'static str,
}

/// Settings of the singularity scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    /// Half-width of the scanned square.
    pub half_width: f64,
    pub coarse_step: f64,
    pub refine_levels: usize,
    pub refine_factor: f64,
    /// Local maxima below this magnitude are ignored.
    pub seed_threshold: f64,
    pub max_points: usize,
    /// Rounds of ray exploration started from freshly found poles.
    pub ray_rounds: usize,
    /// Samples per ray, log-spaced in radius.
    pub ray_samples: usize,
    /// Rays per direction, spread over `±ray_wedge` around the vertical.
    pub ray_count: usize,
    pub ray_wedge: f64,
    /// Radial extent of each ray.
    pub ray_reach: (f64, f64),
    /// Starting poles explored per round, densest first.
    pub ray_starts: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            half_width: 4.0,
            coarse_step: 0.04,
            refine_levels: 3,
            refine_factor: 8.0,
            seed_threshold: 4.0,
            max_points: 5_000,
            ray_rounds: 5,
            ray_samples: 700,
            ray_count: 41,
            ray_wedge: 0.3,
            ray_reach: (1e-4, 0.6),
            ray_starts: 24,
        }
    }
}

/// Scans `|f|` on a square grid, refines around local maxima and polishes
/// with Newton steps on `1/f`. Returns confirmed blow-up points.
pub fn scan_singularities<F>(f: F, cfg: &ScanConfig) -> Vec<Complex64>
where
    F: Fn(Complex64) -> Option<Complex64>,
{
    scan_singularities_from(f, cfg, &[])
}

/// Like [`scan_singularities`], with extra points where ray exploration
/// starts. The extra points themselves are not reported.
pub fn scan_singularities_from<F>(f: F, cfg: &ScanConfig, extra_starts: &[Complex64]) -> Vec<Complex64>
where
    F: Fn(Complex64) -> Option<Complex64>,
{
    let mag = |z: Complex64| f(z).map_or(f64::INFINITY, |v| v.norm());
    let n = (2.0 * cfg.half_width / cfg.coarse_step).round() as i64;
    let coarse = local_maxima(&mag, Complex64::new(-cfg.half_width, -cfg.half_width), cfg.coarse_step, n, cfg.seed_threshold);
    let mut seeds = coarse;
    let mut step = cfg.coarse_step;
    for _ in 0..cfg.refine_levels {
        let fine = step / cfg.refine_factor;
        let half = (cfg.refine_factor as i64) * 2;
        let mut next = Vec::new();
        for s in &seeds {
            let origin = s - Complex64::new(fine * half as f64, fine * half as f64);
            next.extend(local_maxima(&mag, origin, fine, 2 * half, cfg.seed_threshold));
            if next.len() > cfg.max_points {
                break;
            }
        }
        next = dedup_close(next, fine * 0.5);
        seeds = next;
        step = fine;
    }
    let mut found: Vec<Complex64> = seeds.iter().filter_map(|s| newton_pole(&f, *s, step)).collect();
    found = dedup_close(found, SAME_POLE);

    // Poles of nested tanh layers pile up at the inner poles, approaching
    // them vertically with a shrinking horizontal offset. Such poles are too
    // thin for a square grid, so walk rays from each known pole instead.
    let in_window = |z: &Complex64| z.re.abs() <= cfg.half_width && z.im.abs() <= cfg.half_width;
    let mut frontier: Vec<Complex64> = extra_starts.iter().copied().filter(in_window).collect();
    frontier.truncate(4 * cfg.ray_starts);
    frontier.extend(densest_starts(&found, &found, &frontier, cfg.ray_starts));
    let mut explored = frontier.clone();
    for _ in 0..cfg.ray_rounds {
        if frontier.is_empty() || found.len() >= cfg.max_points {
            break;
        }
        let mut fresh = Vec::new();
        for z0 in &frontier {
            for p in ray_poles(&f, *z0, cfg) {
                if in_window(&p) {
                    fresh.push(p);
                }
            }
        }
        fresh = dedup_close(fresh, SAME_POLE);
        let known = Buckets::new(&found, SAME_POLE);
        fresh.retain(|p| known.near(&found, *p, SAME_POLE).next().is_none());
        found.extend(fresh.iter().copied());
        found.sort_by(cmp_c);
        frontier = densest_starts(&found, &fresh, &explored, cfg.ray_starts);
        explored.extend(frontier.iter().copied());
    }
    found.truncate(cfg.max_points);
    found
}

/// Picks up to `k` candidates with the closest neighbours in `all`, skipping
/// any within 1e-3 of an already chosen or explored start.
fn densest_starts(all: &[Complex64], cand: &[Complex64], explored: &[Complex64], k: usize) -> Vec<Complex64> {
    let nn = |p: &Complex64| {
        all.iter().filter(|q| *q != p).map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
    };
    let mut ranked: Vec<(f64, Complex64)> = cand.iter().map(|p| (nn(p), *p)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(cmp_c(&a.1, &b.1)));
    let mut out: Vec<Complex64> = Vec::new();
    for (_, p) in ranked {
        if out.len() >= k {
            break;
        }
        if out.iter().chain(explored).all(|q| (p - q).norm() >= 1e-3) {
            out.push(p);
        }
    }
    out
}

/// Newton results closer than this are the same pole.
const SAME_POLE: f64 = 1e-6;

/// Sorted points with every point within `tol` of an earlier one dropped.
fn dedup_close(mut pts: Vec<Complex64>, tol: f64) -> Vec<Complex64> {
    pts.sort_by(cmp_c);
    let mut out: Vec<Complex64> = Vec::with_capacity(pts.len());
    for p in pts {
        let dup = out.iter().rev().take_while(|q| p.re - q.re <= tol).any(|q| (p - q).norm() <= tol);
        if !dup {
            out.push(p);
        }
    }
    out
}

fn ray_poles<F>(f: &F, z0: Complex64, cfg: &ScanConfig) -> Vec<Complex64>
where
    F: Fn(Complex64) -> Option<Complex64>,
{
    let (r0, r1) = cfg.ray_reach;
    let n = cfg.ray_samples.max(3);
    let ratio = (r1 / r0).powf(1.0 / (n - 1) as f64);
    let radii: Vec<f64> = (0..n).map(|j| r0 * ratio.powi(j as i32)).collect();
    let da = if cfg.ray_count > 1 { 2.0 * cfg.ray_wedge / (cfg.ray_count - 1) as f64 } else { 0.0 };
    let mut out = Vec::new();
    for up in [1.0, -1.0] {
        for k in 0..cfg.ray_count {
            let a = -cfg.ray_wedge + k as f64 * da;
            let dir = Complex64::from_polar(1.0, up * std::f64::consts::FRAC_PI_2 + a);
            let vals: Vec<f64> = radii
                .iter()
                .map(|r| f(z0 + dir * *r).map_or(f64::INFINITY, |v| v.norm()))
                .collect();
            for j in 1..n - 1 {
                if vals[j] > vals[j - 1] && vals[j] >= vals[j + 1] {
                    let r = radii[j];
                    let step = (r * (ratio - 1.0)).max(r * da);
                    if let Some(p) = newton_pole(f, z0 + dir * r, step) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

fn local_maxima(
    mag: &dyn Fn(Complex64) -> f64,
    origin: Complex64,
    h: f64,
    n: i64,
    threshold: f64,
) -> Vec<Complex64> {
    let size = (n + 1) as usize;
    let at = |i: i64, j: i64| origin + Complex64::new(i as f64 * h, j as f64 * h);
    let mut vals = vec![0.0; size * size];
    for i in 0..=n {
        for j in 0..=n {
            vals[i as usize * size + j as usize] = mag(at(i, j));
        }
    }
    let mut out = Vec::new();
    for i in 1..n {
        for j in 1..n {
            let v = vals[i as usize * size + j as usize];
            if !(v > threshold) {
                continue;
            }
            let mut peak = true;
            'nb: for di in -1..=1i64 {
                for dj in -1..=1i64 {
                    if (di, dj) != (0, 0) && vals[(i + di) as usize * size + (j + dj) as usize] > v {
                        peak = false;
                        break 'nb;
                    }
                }
            }
            if peak {
                out.push(at(i, j));
            }
        }
    }
    out
}

fn newton_pole<F>(f: &F, start: Complex64, step: f64) -> Option<Complex64>
where
    F: Fn(Complex64) -> Option<Complex64>,
{
    let mut z = start;
    for _ in 0..40 {
        let Some(v) = f(z) else { return Some(z) };
        if v.norm() > BLOWUP_THRESHOLD * 1e3 {
            break;
        }
        let h = 1e-7 * (1.0 + z.norm()).min(step.max(1e-12) * 1e3);
        let g = |x: Complex64| f(x).map(|y| 1.0 / y);
        let (Some(g0), Some(gp), Some(gm)) = (g(z), g(z + h), g(z - h)) else { return Some(z) };
        let dg = (gp - gm) / (2.0 * h);
        if dg.norm() == 0.0 || !dg.is_finite() {
            return None;
        }
        let dz = g0 / dg;
        if dz.norm() > 4.0 * step {
            return None;
        }
        z -= dz;
        if dz.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    match f(z) {
        None => Some(z),
        Some(v) if v.norm() > BLOWUP_THRESHOLD => Some(z),
        _ => None,
    }
}

/// Scans the singularities of a regular single-input tanh network and
/// compares their ε-clustering depth with the network depth. Empirical
/// evidence only.
pub fn empirical_cluster_vs_depth(
    net: &Network,
    max_depth: usize,
    cfg: &ScanConfig,
    schedule: &[f64],
) -> Result<EmpiricalDepth, ComplexError> {
    single_input_scalar(net)?;
    if max_depth > 3 {
        return Err(ComplexError::Precondition("depth budget is at most 3".into()));
    }
    if net.hidden().next().is_none() {
        return Err(ComplexError::Precondition("network must be non-trivial".into()));
    }
    let depth = net.depth()?;
    if depth > max_depth {
        return Err(ComplexError::DepthBudget { depth, budget: max_depth });
    }
    let rho = Nonlinearity::Tanh;
    if !regularity_report(net, &rho)?.regular {
        return Err(ComplexError::Precondition("network is not regular".into()));
    }
    let ev = net.evaluator()?;
    let f = |z: Complex64| match ev.eval_complex(&rho, &[z]) {
        Ok(Ok(v)) if v[0].is_finite() => Some(v[0]),
        _ => None,
    };
    // Poles of inner nodes are where the outer poles pile up.
    let mut starts = Vec::new();
    for u in net.hidden() {
        if net.children(u).is_empty() {
            continue;
        }
        let one: BTreeSet<NodeId> = [u.clone()].into();
        let sub = net.subnetwork(&one, net.inputs(), [(u.clone(), vec![1.0])].into(), vec![0.0])?;
        let sev = sub.evaluator()?;
        let g = |z: Complex64| match sev.eval_complex(&rho, &[z]) {
            Ok(Ok(v)) if v[0].is_finite() => Some(v[0]),
            _ => None,
        };
        starts.extend(scan_singularities(g, cfg));
    }
    let pts = scan_singularities_from(f, cfg, &starts);
    let cloud = PointCloud::new(pts, cfg.half_width * std::f64::consts::SQRT_2);
    let cluster = cluster_depth_eps(&cloud, schedule, DEFAULT_OCCUPANCY)?;
    Ok(EmpiricalDepth {
        eps_depth: cluster.depth,
        matches_l: cluster.stable && cluster.depth == depth,
        network_depth: depth,
        cluster,
        sampled_singularities: cloud,
        label: "empirical evidence",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_tanh_term_has_six_poles_in_radius_ten() {
        let cl = poles_in_window(&Zab::tanh(), &[Term::new(1.0, 1.0, 0.0)], 10.0).unwrap();
        assert_eq!(cl.len(), 6);
        assert!(cl.points.iter().all(|p| p.re.abs() < 1e-15));
    }

    #[test]
    fn cancelling_pair_has_no_poles() {
        let t = [Term::new(1.0, 1.0, 0.0), Term::new(-1.0, 1.0, 0.0)];
        assert!(poles_in_window(&Zab::tanh(), &t, 10.0).unwrap().is_empty());
    }

    #[test]
    fn odd_pair_keeps_doubled_residues() {
        // tanh(z) + tanh(−z) = 0, but as a sum of lattices both contribute.
        let t = [Term::new(1.0, 1.0, 0.0), Term::new(1.0, -1.0, 0.0)];
        assert!(poles_in_window(&Zab::tanh(), &t, 10.0).unwrap().is_empty());
    }

    #[test]
    fn depth_of_simple_clouds() {
        let s = default_schedule();
        let empty = PointCloud::new(vec![], 1.0);
        assert_eq!(cluster_depth_eps(&empty, &s, 3).unwrap().depth, 0);
        let sparse = PointCloud::new((0..10).map(|k| c(k as f64, 0.0)).collect(), 10.0);
        assert_eq!(cluster_depth_eps(&sparse, &s, 3).unwrap().depth, 1);
        let mut harmonic: Vec<Complex64> = (1..=1000).map(|n| c(1.0 / n as f64, 0.0)).collect();
        harmonic.push(c(0.0, 0.0));
        let d = cluster_depth_eps(&PointCloud::new(harmonic, 1.0), &s, 3).unwrap();
        assert_eq!(d.depth, 2);
        assert!(d.stable);
    }

    #[test]
    fn integer_density_along_real_axis() {
        let pts: Vec<Complex64> = (-100..=100).map(|k| c(k as f64, 0.0)).collect();
        let cl = PointCloud::new(pts, 100.0);
        let d = density_along(&DensityTarget::Line(LineSpec::real_axis()), &cl, 0.1, 100.0).unwrap();
        assert!((d - 1.005).abs() < 1e-12);
        let empty = PointCloud::new(vec![], 100.0);
        assert_eq!(density_along(&DensityTarget::Line(LineSpec::real_axis()), &empty, 0.1, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn rationality() {
        assert_eq!(rational_approximation(2.0), Some((2, 1)));
        assert_eq!(rational_approximation(-0.75), Some((-3, 4)));
        assert_eq!(rational_approximation(355.0 / 113.0), Some((355, 113)));
        assert_eq!(rational_approximation(2f64.sqrt()), None);
        assert_eq!(rational_approximation(PI), None);
    }

    #[test]
    fn partition_rules() {
        let t = Zab::tanh();
        let odd = alignment_partition(&t, &[Term::new(1.0, 1.0, 0.0), Term::new(1.0, 3.0, 0.0)]).unwrap();
        assert_eq!(odd.parts, vec![vec![0, 1]]);
        let even = alignment_partition(&t, &[Term::new(1.0, 1.0, 0.0), Term::new(1.0, 2.0, 0.0)]).unwrap();
        assert_eq!(even.parts.len(), 2);
        let irr = alignment_partition(&t, &[Term::new(1.0, 1.0, 0.0), Term::new(1.0, 2f64.sqrt(), 0.0)]).unwrap();
        assert_eq!(irr.parts.len(), 2);
        let one = alignment_partition(&t, &[Term::new(1.0, 1.0, 0.0)]).unwrap();
        assert_eq!(one.parts, vec![vec![0]]);
        assert_eq!(one.entire, vec![false]);
        let pair = alignment_partition(&t, &[Term::new(1.0, 1.0, 0.5), Term::new(-1.0, 1.0, 0.5)]).unwrap();
        assert_eq!(pair.entire, vec![true]);
    }

    #[test]
    fn one_neuron_pole_check() {
        let n = Network::builder(1).input("v").node("u", 0.0).edge("v", "u", 1.0).output("u", vec![1.0]).build();
        let r = single_layer_pole_check(&n, 20.0).unwrap();
        assert!(r.nonempty && r.confirmed);
        assert!(r.predicted.points.iter().all(|p| {
            let m = p.im / PI - 0.5;
            p.re.abs() < 1e-12 && (m - m.round()).abs() < 1e-12
        }));
    }

    #[test]
    fn scan_finds_tanh_poles() {
        let f = |z: Complex64| Some(crate::nonlinearity::tanh_c(z));
        let mut p = scan_singularities(f, &ScanConfig::default());
        p.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert_eq!(p.len(), 2, "{p:?}");
        assert!((p[0] - c(0.0, -PI / 2.0)).norm() < 1e-9, "{p:?}");
    }
}
