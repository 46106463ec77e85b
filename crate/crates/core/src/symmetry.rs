//! Affine symmetries `Σ_s α_s ρ(β_s t + γ_s) = ζ` of a nonlinearity.
//!
//! Identities are checked on a fixed sample grid; minimality (no proper
//! sub-combination together with the constant function is dependent) is
//! certified through the singular values of the design matrix
//! `[1, ρ(β_1 t + γ_1), …, ρ(β_n t + γ_n)]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nonlinearity::{pole_lattice, Nonlinearity, NonlinearityError, Zab};
use crate::sampling::{linspace, sorted_svd, symmetry_grid};

/// Below this fraction of the largest singular value a direction is null.
pub const NULL_THRESHOLD: f64 = 1e-8;
/// Above this fraction a direction is certainly not null.
pub const RANK_THRESHOLD: f64 = 1e-4;
/// Relative size for a null-vector coordinate to count as nonzero.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("no candidate terms")]
    NoCandidates,
    #[error("inconclusive: singular value ratio {ratio:e} lies between the null and rank thresholds")]
    Inconclusive { ratio: f64 },
    #[error("coefficients must be finite and nonzero")]
    BadCoefficients,
    #[error("recurrence grows too fast for a finite truncation")]
    Overflow,
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error("{0}")]
    Other(String),
}

/// One term `α ρ(β t + γ)`. Serialized as `[α, β, γ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Term {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Term {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Term { alpha, beta, gamma }
    }
}

impl From<[f64; 3]> for Term {
    fn from(a: [f64; 3]) -> Self {
        Term::new(a[0], a[1], a[2])
    }
}

impl From<Term> for [f64; 3] {
    fn from(t: Term) -> Self {
        [t.alpha, t.beta, t.gamma]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSymmetry {
    pub zeta: f64,
    pub terms: Vec<Term>,
}

impl AffineSymmetry {
    pub fn new(zeta: f64, terms: Vec<Term>) -> Self {
        AffineSymmetry { zeta, terms }
    }

    /// `Σ α_s ρ(β_s t + γ_s) − ζ`.
    pub fn residual(&self, rho: &Nonlinearity, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|s| s.alpha * rho.eval_real(s.beta * t + s.gamma))
            .sum::<f64>()
            - self.zeta
    }

    pub fn scaled(&self, c: f64) -> AffineSymmetry {
        AffineSymmetry {
            zeta: self.zeta * c,
            terms: self.terms.iter().map(|t| Term::new(t.alpha * c, t.beta, t.gamma)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryCheck {
    pub holds: bool,
    pub minimal: bool,
    pub max_residual: f64,
}

fn design(rho: &Nonlinearity, cands: &[(f64, f64)], grid: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(grid.len(), cands.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            let (b, g) = cands[j - 1];
            rho.eval_real(b * grid[i] + g)
        }
    })
}

/// Null space of `m` under the fixed thresholds.
fn null_space(m: &DMatrix<f64>) -> Result<Vec<Vec<f64>>, SymmetryError> {
    let svd = sorted_svd(m);
    let smax = svd.values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(svd.vectors);
    }
    let mut basis = Vec::new();
    for (s, v) in svd.values.iter().zip(svd.vectors) {
        let r = s / smax;
        if r < NULL_THRESHOLD {
            basis.push(v);
        } else if r <= RANK_THRESHOLD {
            return Err(SymmetryError::Inconclusive { ratio: r });
        }
    }
    Ok(basis)
}

fn fully_supported(v: &[f64]) -> bool {
    let inf = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    inf > 0.0 && v.iter().all(|x| x.abs() > SUPPORT_THRESHOLD * inf)
}

/// Whether coordinate `i` is nonzero in some vector of `basis`.
fn coordinate_used(basis: &[Vec<f64>], i: usize) -> bool {
    basis.iter().any(|v| {
        let inf = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        v[i].abs() > SUPPORT_THRESHOLD * inf
    })
}

/// Checks the identity on the sample grid and certifies minimality.
pub fn verify_symmetry(rho: &Nonlinearity, s: &AffineSymmetry, tol: f64) -> SymmetryCheck {
    let grid = symmetry_grid();
    let max_residual = grid.iter().map(|&t| s.residual(rho, t).abs()).fold(0.0, f64::max);
    let cands: Vec<(f64, f64)> = s.terms.iter().map(|t| (t.beta, t.gamma)).collect();
    let svd = sorted_svd(&design(rho, &cands, &grid));
    let n = svd.values.len();
    let smax = svd.values[0];
    let minimal = n >= 2
        && smax > 0.0
        && svd.values[n - 1] < NULL_THRESHOLD * smax
        && svd.values[n - 2] > RANK_THRESHOLD * smax
        && fully_supported(&svd.vectors[n - 1][1..]);
    SymmetryCheck { holds: max_residual <= tol, minimal, max_residual }
}

/// The two symmetry families of `tanh` through the term `(α, β, γ)`: the
/// duplicate pair and the odd pair.
pub fn tanh_symmetry_catalog(beta: f64, gamma: f64, alpha: f64) -> [AffineSymmetry; 2] {
    [
        AffineSymmetry::new(0.0, vec![Term::new(alpha, beta, gamma), Term::new(-alpha, beta, gamma)]),
        AffineSymmetry::new(0.0, vec![Term::new(alpha, beta, gamma), Term::new(alpha, -beta, -gamma)]),
    ]
}

/// Grid used for discovery: the standard grid plus, for every candidate, the
/// preimage of [−4, 4] under `t ↦ βt + γ`.
fn discovery_grid(cands: &[(f64, f64)]) -> Vec<f64> {
    let mut g = symmetry_grid();
    let local = linspace(-4.0, 4.0, 33);
    for &(b, c) in cands {
        g.extend(local.iter().map(|s| (s - c) / b));
    }
    g
}

/// Finds a minimal symmetry among `ρ(β_s t + γ_s)`, containing `required` when
/// given.
pub fn discover_symmetry(
    rho: &Nonlinearity,
    candidates: &[(f64, f64)],
    required: Option<usize>,
) -> Result<Option<AffineSymmetry>, SymmetryError> {
    if candidates.is_empty() {
        return Err(SymmetryError::NoCandidates);
    }
    if candidates.iter().any(|&(b, g)| !(b.is_finite() && g.is_finite()) || b == 0.0) {
        return Err(SymmetryError::BadCoefficients);
    }
    if required.is_some_and(|r| r >= candidates.len()) {
        return Err(SymmetryError::Other("required index out of range".into()));
    }
    let grid = discovery_grid(candidates);
    let columns = design(rho, candidates, &grid);
    let sub = |active: &[usize]| -> DMatrix<f64> {
        let mut idx = vec![0];
        idx.extend(active.iter().map(|i| i + 1));
        columns.select_columns(idx.iter())
    };
    let mut active: Vec<usize> = (0..candidates.len()).collect();
    'outer: loop {
        let basis = null_space(&sub(&active))?;
        if basis.is_empty() {
            return Ok(None);
        }
        let pos = |i: usize| active.iter().position(|&a| a == i).map(|p| p + 1);
        if let Some(r) = required {
            if !coordinate_used(&basis, pos(r).expect("required stays active")) {
                return Ok(None);
            }
        }
        let unused: Vec<usize> =
            active.iter().copied().filter(|&i| !coordinate_used(&basis, pos(i).unwrap())).collect();
        if !unused.is_empty() {
            active.retain(|i| !unused.contains(i));
            continue;
        }
        if basis.len() == 1 {
            let v = &basis[0];
            if !fully_supported(&v[1..]) {
                return Ok(None);
            }
            return Ok(Some(symmetry_from_null_vector(rho, candidates, &active, v, &grid)));
        }
        for k in (0..active.len()).rev() {
            if Some(active[k]) == required {
                continue;
            }
            let mut trial = active.clone();
            trial.remove(k);
            let b2 = null_space(&sub(&trial))?;
            let ok = !b2.is_empty()
                && required.is_none_or(|r| {
                    let p = trial.iter().position(|&a| a == r).unwrap() + 1;
                    coordinate_used(&b2, p)
                });
            if ok {
                active = trial;
                continue 'outer;
            }
        }
        return Err(SymmetryError::Other("could not isolate a minimal dependency".into()));
    }
}

/// The symmetry using every candidate, if the candidates together with the
/// constant have exactly one dependency and it involves all of them.
pub fn exact_symmetry(
    rho: &Nonlinearity,
    candidates: &[(f64, f64)],
) -> Result<Option<AffineSymmetry>, SymmetryError> {
    if candidates.is_empty() {
        return Err(SymmetryError::NoCandidates);
    }
    if candidates.iter().any(|&(b, g)| !(b.is_finite() && g.is_finite()) || b == 0.0) {
        return Err(SymmetryError::BadCoefficients);
    }
    let grid = discovery_grid(candidates);
    let basis = null_space(&design(rho, candidates, &grid))?;
    if basis.len() != 1 || !fully_supported(&basis[0][1..]) {
        return Ok(None);
    }
    let all: Vec<usize> = (0..candidates.len()).collect();
    Ok(Some(symmetry_from_null_vector(rho, candidates, &all, &basis[0], &grid)))
}

fn symmetry_from_null_vector(
    rho: &Nonlinearity,
    cands: &[(f64, f64)],
    active: &[usize],
    v: &[f64],
    grid: &[f64],
) -> AffineSymmetry {
    let scale = v[1];
    let terms: Vec<Term> = active
        .iter()
        .zip(&v[1..])
        .map(|(&i, &x)| Term::new(x / scale, cands[i].0, cands[i].1))
        .collect();
    let mut s = AffineSymmetry::new(0.0, terms);
    let mean = grid.iter().map(|&t| s.residual(rho, t)).sum::<f64>() / grid.len() as f64;
    let amax = s.terms.iter().fold(0.0f64, |a, t| a.max(t.alpha.abs()));
    s.zeta = if mean.abs() < 1e-12 * amax { 0.0 } else { mean };
    s
}

/// A tanh-type function with a prescribed symmetry `Σ_l α_l σ(t − l) = ζ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExoticSymmetry {
    pub sigma: Zab,
    pub zeta: f64,
    pub symmetry: AffineSymmetry,
    /// Coefficients are kept for `|k| ≤ cutoff`.
    pub cutoff: i64,
    /// Largest of `|λ|` and `1/|λ|` over characteristic roots `λ`.
    pub growth: f64,
    /// Some characteristic root has modulus one.
    pub unit_circle: bool,
    /// Bound on the real-axis deviation caused by the truncation.
    pub tail_bound: f64,
}

/// Roots of `α_0 x^n + α_1 x^{n−1} + … + α_n`.
pub fn characteristic_roots(alphas: &[f64]) -> Vec<Complex64> {
    let n = alphas.len() - 1;
    if n == 1 {
        return vec![Complex64::new(-alphas[1] / alphas[0], 0.0)];
    }
    let mut c = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        c[(0, j)] = -alphas[j + 1] / alphas[0];
    }
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues().iter().copied().collect()
}

/// Extends `r_0 = α_n, …, r_{n−1} = α_1` through `Σ_l α_l r_{k−l} = 0` to
/// `−cutoff..=cutoff`. Index `i` holds `r_{i − cutoff}`.
pub fn recurrence_solution(alphas: &[f64], cutoff: i64) -> Vec<f64> {
    let n = alphas.len() - 1;
    let size = (2 * cutoff + 1) as usize;
    let off = cutoff as usize;
    let mut r = vec![0.0; size];
    for j in 0..n.min(size - off) {
        r[off + j] = alphas[n - j];
    }
    for i in off + n..size {
        let s: f64 = (1..=n).map(|l| alphas[l] * r[i - l]).sum();
        r[i] = -s / alphas[0];
    }
    for i in (0..off).rev() {
        let s: f64 = (0..n).map(|l| alphas[l] * r[i + n - l]).sum();
        r[i] = -s / alphas[n];
    }
    r
}

const EXOTIC_DELTA: f64 = 0.1;
const EXOTIC_B_CAP: f64 = 1.0;
const EXOTIC_WINDOW: f64 = 8.0;

/// Builds `σ ∈ Z_{1,b}` whose coefficients solve the recurrence given by
/// `alphas`, so that `Σ_l α_l σ(t − l)` is constant.
pub fn construct_exotic(alphas: &[f64]) -> Result<ExoticSymmetry, SymmetryError> {
    if alphas.len() < 2 || alphas.iter().any(|a| !a.is_finite() || *a == 0.0) {
        return Err(SymmetryError::BadCoefficients);
    }
    let n = alphas.len() - 1;
    let roots = characteristic_roots(alphas);
    let growth = roots
        .iter()
        .map(|z| {
            let m = z.norm();
            m.max(1.0 / m)
        })
        .fold(1.0f64, f64::max);
    let unit_circle = roots.iter().any(|z| (z.norm() - 1.0).abs() < 1e-9);
    let b = (PI / (growth.ln() + EXOTIC_DELTA)).min(EXOTIC_B_CAP);

    let mut cutoff = (2.0 * EXOTIC_WINDOW) as i64 + n as i64;
    let (r, tail) = loop {
        let r = recurrence_solution(alphas, cutoff);
        if r.iter().any(|x| !x.is_finite()) {
            return Err(SymmetryError::Overflow);
        }
        let tail = truncation_tail(alphas, &r, cutoff, b);
        if tail < 1e-12 {
            break (r, tail);
        }
        if cutoff > 1 << 14 {
            return Err(SymmetryError::Overflow);
        }
        cutoff *= 2;
    };

    let coeffs: BTreeMap<i64, Complex64> = r
        .iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, &x)| (i as i64 - cutoff, Complex64::new(x, 0.0)))
        .collect();
    let witness = (b * growth.ln() / PI).clamp(1e-3, 0.999);
    let sigma = Zab::new(1.0, b, Complex64::new(0.0, 0.0), coeffs)
        .map_err(SymmetryError::Nonlinearity)?
        .with_growth_witness(witness)?;
    let rho = Nonlinearity::Zab(sigma.clone());
    let mut symmetry = AffineSymmetry::new(
        0.0,
        alphas.iter().enumerate().map(|(l, &a)| Term::new(a, 1.0, -(l as f64))).collect(),
    );
    let grid = symmetry_grid();
    let zeta = grid.iter().map(|&t| symmetry.residual(&rho, t)).sum::<f64>() / grid.len() as f64;
    symmetry.zeta = zeta;
    Ok(ExoticSymmetry { sigma, zeta, symmetry, cutoff, growth, unit_circle, tail_bound: tail })
}

/// Real-axis deviation on `[−8, 8]` contributed by the unbalanced residues at
/// the two ends of the truncated coefficient sequence.
fn truncation_tail(alphas: &[f64], r: &[f64], cutoff: i64, b: f64) -> f64 {
    let n = alphas.len() - 1;
    let get = |k: i64| -> f64 {
        let i = k + cutoff;
        if i < 0 || i >= r.len() as i64 {
            0.0
        } else {
            r[i as usize]
        }
    };
    let mut tail = 0.0;
    let ends = (-cutoff..-cutoff + n as i64).chain(cutoff - n as i64 + 1..=cutoff + n as i64);
    for k in ends {
        let d: f64 = (0..=n).map(|l| alphas[l] * get(k - l as i64)).sum();
        let dist = (k.abs() as f64 - EXOTIC_WINDOW).max(0.0);
        tail += d.abs() * 2.0 * (-2.0 * PI * dist / b).exp();
    }
    tail
}

/// Sum of `α_s · Res(σ(β_s · + γ_s), z)` over the terms whose pole lattice
/// contains `z`.
pub fn residue_of_combination(
    sigma: &Zab,
    terms: &[Term],
    z: Complex64,
) -> Result<Complex64, SymmetryError> {
    let rho = Nonlinearity::Zab(sigma.clone());
    let tol = 1e-8 * (1.0 + z.norm());
    let mut total = Complex64::new(0.0, 0.0);
    let mut hit = false;
    for t in terms {
        let beta = Complex64::new(t.beta, 0.0);
        let lat = pole_lattice(&rho, beta, Complex64::new(t.gamma, 0.0))?;
        if let Some(idx) = lat.locate(z, tol) {
            hit = true;
            total += t.alpha * sigma.residue(idx.k) / beta;
        }
    }
    if !hit {
        return Err(SymmetryError::Nonlinearity(NonlinearityError::NotALatticePoint {
            re: z.re,
            im: z.im,
        }));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn odd_tanh_symmetry_is_minimal() {
        let s = AffineSymmetry::new(0.0, vec![Term::new(1.0, 1.0, 0.0), Term::new(1.0, -1.0, 0.0)]);
        let c = verify_symmetry(&Nonlinearity::Tanh, &s, 1e-12);
        assert!(c.holds && c.minimal, "{c:?}");
    }

    #[test]
    fn crelu_three_term_symmetry_is_minimal() {
        let s = AffineSymmetry::new(
            0.0,
            vec![Term::new(1.0, 1.0, 0.0), Term::new(-0.5, 2.0, 0.0), Term::new(-0.5, 2.0, -1.0)],
        );
        let c = verify_symmetry(&Nonlinearity::CRelu, &s, 1e-12);
        assert!(c.holds && c.minimal, "{c:?}");
    }

    #[test]
    fn union_of_two_odd_pairs_is_not_minimal() {
        let s = AffineSymmetry::new(
            0.0,
            vec![
                Term::new(1.0, 1.0, 0.0),
                Term::new(1.0, -1.0, 0.0),
                Term::new(1.0, 2.0, 0.0),
                Term::new(1.0, -2.0, 0.0),
            ],
        );
        let c = verify_symmetry(&Nonlinearity::Tanh, &s, 1e-12);
        assert!(c.holds && !c.minimal, "{c:?}");
    }

    #[test]
    fn wrong_identity_does_not_hold() {
        let s = AffineSymmetry::new(0.0, vec![Term::new(1.0, 1.0, 0.0), Term::new(1.0, 2.0, 1.0)]);
        let c = verify_symmetry(&Nonlinearity::Tanh, &s, 1e-6);
        assert!(!c.holds && !c.minimal);
    }

    #[test]
    fn catalog_entries_verify() {
        for (b, g, a) in [(1.0, 0.0, 1.0), (-2.5, 3.0, 0.7), (0.3, -1.0, -4.0)] {
            for s in tanh_symmetry_catalog(b, g, a) {
                let c = verify_symmetry(&Nonlinearity::Tanh, &s, 1e-10);
                assert!(c.holds && c.minimal, "{s:?} {c:?}");
            }
        }
        let odd = &tanh_symmetry_catalog(1.0, 3.0, 1.0)[1];
        assert!(symmetry_grid().iter().all(|&t| odd.residual(&Nonlinearity::Tanh, t).abs() < 1e-15));
    }

    #[test]
    fn crelu_reflection_has_nonzero_constant() {
        // CReLU(t) + CReLU(1 − t) = 1
        let s = AffineSymmetry::new(1.0, vec![Term::new(1.0, 1.0, 0.0), Term::new(1.0, -1.0, 1.0)]);
        let c = verify_symmetry(&Nonlinearity::CRelu, &s, 1e-14);
        assert!(c.holds && c.minimal);
        let d = discover_symmetry(&Nonlinearity::CRelu, &[(1.0, 0.0), (-1.0, 1.0)], None)
            .unwrap()
            .unwrap();
        assert!(close(d.zeta, 1.0, 1e-12));
    }

    #[test]
    fn discover_tanh_pair() {
        let s = discover_symmetry(&Nonlinearity::Tanh, &[(1.0, 0.0), (-1.0, 0.0)], None)
            .unwrap()
            .unwrap();
        assert_eq!(s.terms.len(), 2);
        assert!(close(s.terms[0].alpha, s.terms[1].alpha, 1e-12));
        assert_eq!(s.zeta, 0.0);
    }

    #[test]
    fn discover_nothing_for_independent_tanh_terms() {
        let s = discover_symmetry(&Nonlinearity::Tanh, &[(1.0, 0.0), (2.0, 1.0)], None).unwrap();
        assert!(s.is_none());
    }

    #[test]
    fn discover_crelu_three_terms() {
        let s = discover_symmetry(&Nonlinearity::CRelu, &[(1.0, 0.0), (2.0, 0.0), (2.0, -1.0)], None)
            .unwrap()
            .unwrap();
        let a: Vec<f64> = s.terms.iter().map(|t| t.alpha).collect();
        assert!(close(a[0], 1.0, 1e-12) && close(a[1], -0.5, 1e-10) && close(a[2], -0.5, 1e-10));
        assert!(close(s.zeta, 0.0, 1e-12));
    }

    #[test]
    fn required_index_is_honoured() {
        let cands = [(1.0, 0.0), (-1.0, 0.0), (2.0, 0.3), (-2.0, -0.3), (0.5, 1.0)];
        for r in 0..4 {
            let s = discover_symmetry(&Nonlinearity::Tanh, &cands, Some(r)).unwrap().unwrap();
            assert_eq!(s.terms.len(), 2);
            assert!(s.terms.iter().any(|t| (t.beta, t.gamma) == cands[r]));
        }
        assert!(discover_symmetry(&Nonlinearity::Tanh, &cands, Some(4)).unwrap().is_none());
    }

    #[test]
    fn relu_four_term_symmetry() {
        // ReLU(t) − ReLU(−t) − ReLU(t − 1) + ReLU(1 − t) = 1
        let cands = [(1.0, 0.0), (-1.0, 0.0), (1.0, -1.0), (-1.0, 1.0)];
        let s = discover_symmetry(&Nonlinearity::Relu, &cands, None).unwrap().unwrap();
        assert_eq!(s.terms.len(), 4);
        let c = verify_symmetry(&Nonlinearity::Relu, &s, 1e-9);
        assert!(c.holds && c.minimal);
        assert!(close(s.zeta.abs(), 1.0, 1e-9));
    }

    #[test]
    fn scaling_preserves_the_certificate() {
        let s = AffineSymmetry::new(1.0, vec![Term::new(1.0, 1.0, 0.0), Term::new(1.0, -1.0, 1.0)]);
        let c = verify_symmetry(&Nonlinearity::CRelu, &s.scaled(-3.5), 1e-12);
        assert!(c.holds && c.minimal);
    }

    #[test]
    fn recurrence_alternates_for_unit_pair() {
        let r = recurrence_solution(&[1.0, 1.0], 5);
        for (i, x) in r.iter().enumerate() {
            let k = i as i64 - 5;
            assert_eq!(*x, if k % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn recurrence_initial_values() {
        let a = [2.0, -3.0, 1.0];
        let r = recurrence_solution(&a, 10);
        assert_eq!(r[10], 1.0);
        assert_eq!(r[11], -3.0);
        for i in 2..r.len() {
            let d = a[0] * r[i] + a[1] * r[i - 1] + a[2] * r[i - 2];
            assert!(d.abs() < 1e-9 * r[i].abs().max(1.0));
        }
    }

    #[test]
    fn characteristic_roots_of_quadratic() {
        let mut r = characteristic_roots(&[2.0, -3.0, 1.0]);
        r.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!(close(r[0].re, 0.5, 1e-12) && close(r[1].re, 1.0, 1e-12));
    }

    #[test]
    fn exotic_pair_is_constant() {
        let e = construct_exotic(&[1.0, 1.0]).unwrap();
        assert!(e.unit_circle);
        let rho = Nonlinearity::Zab(e.sigma.clone());
        let vals: Vec<f64> = symmetry_grid()
            .iter()
            .map(|&t| rho.eval_real(t) + rho.eval_real(t - 1.0))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(var < 1e-8, "variance {var}");
    }

    #[test]
    fn exotic_quadratic_verifies() {
        let e = construct_exotic(&[2.0, -3.0, 1.0]).unwrap();
        let c = verify_symmetry(&Nonlinearity::Zab(e.sigma.clone()), &e.symmetry, 1e-6);
        assert!(c.holds, "{c:?}");
        assert!(c.minimal, "{c:?}");
    }

    #[test]
    fn exotic_residues_cancel_inside() {
        let a = [2.0, -3.0, 1.0];
        let e = construct_exotic(&a).unwrap();
        let b = e.sigma.b();
        for k in -3..6 {
            for m in -2..3 {
                let z = Complex64::new(k as f64, b * (m as f64 + 0.5));
                let r = residue_of_combination(&e.sigma, &e.symmetry.terms, z).unwrap();
                assert!(r.norm() < 1e-10, "k={k} m={m} residue {r}");
            }
        }
    }

    #[test]
    fn residue_of_single_and_cancelling_terms() {
        let t = Zab::tanh();
        let z = Complex64::new(0.0, PI / 2.0);
        let one = residue_of_combination(&t, &[Term::new(2.5, 1.0, 0.0)], z).unwrap();
        assert!((one - Complex64::new(2.5, 0.0)).norm() < 1e-15);
        let zero =
            residue_of_combination(&t, &[Term::new(1.0, 1.0, 0.0), Term::new(-1.0, 1.0, 0.0)], z)
                .unwrap();
        assert_eq!(zero.norm(), 0.0);
        assert!(residue_of_combination(&t, &[Term::new(1.0, 1.0, 0.0)], Complex64::new(0.0, 1.0))
            .is_err());
    }

    #[test]
    fn json_layout() {
        let s = AffineSymmetry::new(0.5, vec![Term::new(1.0, 2.0, -1.0)]);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v, serde_json::json!({"zeta": 0.5, "terms": [[1.0, 2.0, -1.0]]}));
    }
}
