//! Scalar nonlinearities over the reals and, for the tanh-type family, over ℂ.
//!
//! The tanh-type family is represented by [`Zab`]: finite sums of shifted and
//! rescaled `tanh` terms. Each such function is periodic in the imaginary
//! direction and has only simple poles, located on a finite union of vertical
//! arithmetic progressions (see [`PoleLattice`]).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points closer than this to a pole evaluate to [`Pole`].
pub const POLE_GUARD_RADIUS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("{0} has no meromorphic extension")]
    NotMeromorphic(&'static str),
    #[error("affine map coefficient must be nonzero")]
    ZeroScale,
    #[error("point {re}+{im}i is not on the pole lattice")]
    NotALatticePoint { re: f64, im: f64 },
    #[error("invalid tanh-type parameters: {0}")]
    InvalidZab(String),
}

/// Marker returned by complex evaluation inside the guard disk of a pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    /// The lattice point that was hit, in the argument's coordinates.
    pub at: Complex64,
}

/// A member of the tanh-type family
/// `σ(z) = C + Σ_k c_k [sgn(k) + tanh(π (z − k a) / b)]` with finitely many
/// nonzero `c_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZabRepr", into = "ZabRepr")]
pub struct Zab {
    a: f64,
    b: f64,
    constant: Complex64,
    coeffs: BTreeMap<i64, Complex64>,
    growth_witness: f64,
}

#[derive(Serialize, Deserialize)]
struct ZabRepr {
    a: f64,
    b: f64,
    #[serde(default)]
    constant: [f64; 2],
    coeffs: Vec<CoeffRepr>,
    #[serde(default)]
    growth_witness: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffRepr {
    k: i64,
    re: f64,
    #[serde(default)]
    im: f64,
}

impl TryFrom<ZabRepr> for Zab {
    type Error = NonlinearityError;

    fn try_from(r: ZabRepr) -> Result<Self, Self::Error> {
        let coeffs = r
            .coeffs
            .into_iter()
            .map(|c| (c.k, Complex64::new(c.re, c.im)))
            .collect();
        let mut z = Zab::new(r.a, r.b, Complex64::new(r.constant[0], r.constant[1]), coeffs)?;
        if let Some(w) = r.growth_witness {
            z = z.with_growth_witness(w)?;
        }
        Ok(z)
    }
}

impl From<Zab> for ZabRepr {
    fn from(z: Zab) -> Self {
        ZabRepr {
            a: z.a,
            b: z.b,
            constant: [z.constant.re, z.constant.im],
            coeffs: z
                .coeffs
                .iter()
                .map(|(&k, c)| CoeffRepr { k, re: c.re, im: c.im })
                .collect(),
            growth_witness: Some(z.growth_witness),
        }
    }
}

impl Zab {
    /// Builds a tanh-type function. Zero coefficients are dropped; at least one
    /// must remain. The growth witness defaults to `a / 2`.
    pub fn new(
        a: f64,
        b: f64,
        constant: Complex64,
        coeffs: BTreeMap<i64, Complex64>,
    ) -> Result<Self, NonlinearityError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(NonlinearityError::InvalidZab(format!("a = {a} must be positive")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(NonlinearityError::InvalidZab(format!("b = {b} must be positive")));
        }
        if !(constant.re.is_finite() && constant.im.is_finite()) {
            return Err(NonlinearityError::InvalidZab("constant must be finite".into()));
        }
        let coeffs: BTreeMap<i64, Complex64> =
            coeffs.into_iter().filter(|(_, c)| c.norm() != 0.0).collect();
        if coeffs.is_empty() {
            return Err(NonlinearityError::InvalidZab("no nonzero coefficient".into()));
        }
        if coeffs.values().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(NonlinearityError::InvalidZab("coefficients must be finite".into()));
        }
        Ok(Zab { a, b, constant, coeffs, growth_witness: a / 2.0 })
    }

    pub fn with_growth_witness(mut self, w: f64) -> Result<Self, NonlinearityError> {
        if !(w > 0.0 && w < self.a) {
            return Err(NonlinearityError::InvalidZab(format!(
                "growth witness {w} must lie in (0, {})",
                self.a
            )));
        }
        self.growth_witness = w;
        Ok(self)
    }

    /// `tanh` itself: `a = 1`, `b = π`, `c_0 = 1`.
    pub fn tanh() -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, Complex64::new(1.0, 0.0));
        Zab::new(1.0, PI, Complex64::new(0.0, 0.0), coeffs).expect("valid parameters")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn constant(&self) -> Complex64 {
        self.constant
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, Complex64> {
        &self.coeffs
    }

    pub fn growth_witness(&self) -> f64 {
        self.growth_witness
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }

    /// True when the constant and all coefficients are real.
    pub fn is_real(&self) -> bool {
        self.constant.im == 0.0 && self.coeffs.values().all(|c| c.im == 0.0)
    }

    /// Value on the real axis. Complex coefficients give complex values.
    pub fn eval_on_real(&self, t: f64) -> Complex64 {
        let mut acc = self.constant;
        for (&k, &c) in &self.coeffs {
            let x = PI * (t - k as f64 * self.a) / self.b;
            acc += c * shifted_tanh_real(k, x);
        }
        acc
    }

    /// Value of the meromorphic extension, or the pole hit.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, Pole> {
        if let Some(p) = self.nearest_pole_within(z, POLE_GUARD_RADIUS) {
            return Err(Pole { at: p });
        }
        Ok(self.eval_unguarded(z))
    }

    /// Series value without the pole guard; infinite or NaN exactly at a pole.
    pub fn eval_unguarded(&self, z: Complex64) -> Complex64 {
        let mut acc = self.constant;
        for (&k, &c) in &self.coeffs {
            let x = (z - k as f64 * self.a) * (PI / self.b);
            acc += c * shifted_tanh_complex(k, x);
        }
        acc
    }

    /// The closest pole of `σ` to `z`, if its distance is below `radius`.
    pub fn nearest_pole_within(&self, z: Complex64, radius: f64) -> Option<Complex64> {
        let mut best: Option<(f64, Complex64)> = None;
        let m = (z.im / self.b - 0.5).round();
        let im = self.b * (m + 0.5);
        for &k in self.coeffs.keys() {
            let p = Complex64::new(k as f64 * self.a, im);
            let d = (z - p).norm();
            if d < radius && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
        best.map(|(_, p)| p)
    }

    /// Residue of `σ` at `k a + i b (m + ½)`.
    pub fn residue(&self, k: i64) -> Complex64 {
        self.coeff(k) * (self.b / PI)
    }
}

/// `sgn(k) + tanh(x)` evaluated without cancellation.
fn shifted_tanh_real(k: i64, x: f64) -> f64 {
    match k.signum() {
        0 => x.tanh(),
        1 => 2.0 / (1.0 + (-2.0 * x).exp()),
        _ => -2.0 / (1.0 + (2.0 * x).exp()),
    }
}

fn one_plus_tanh(x: Complex64) -> Complex64 {
    if x.re >= 0.0 {
        2.0 / (1.0 + (-2.0 * x).exp())
    } else {
        let e = (2.0 * x).exp();
        2.0 * e / (1.0 + e)
    }
}

/// Complex `tanh` that stays finite for large real parts.
pub fn tanh_c(x: Complex64) -> Complex64 {
    if x.re >= 0.0 {
        let e = (-2.0 * x).exp();
        (1.0 - e) / (1.0 + e)
    } else {
        -tanh_c(-x)
    }
}

fn shifted_tanh_complex(k: i64, x: Complex64) -> Complex64 {
    match k.signum() {
        0 => tanh_c(x),
        1 => one_plus_tanh(x),
        _ => -one_plus_tanh(-x),
    }
}

/// The supported nonlinearities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Tanh,
    /// `min(1, max(0, t))`
    #[serde(rename = "crelu")]
    CRelu,
    Relu,
    /// `max(slope·t, t)` with `slope ∈ (0, 1)`
    LeakyRelu { slope: f64 },
    Abs,
    Zab(Zab),
}

impl Nonlinearity {
    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::CRelu => "crelu",
            Nonlinearity::Relu => "relu",
            Nonlinearity::LeakyRelu { .. } => "leaky_relu",
            Nonlinearity::Abs => "abs",
            Nonlinearity::Zab(_) => "zab",
        }
    }

    /// Real value. For tanh-type functions with complex coefficients this is
    /// the real part; use [`Zab::eval_on_real`] for the full value.
    pub fn eval_real(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => t.tanh(),
            Nonlinearity::CRelu => t.clamp(0.0, 1.0),
            Nonlinearity::Relu => t.max(0.0),
            Nonlinearity::LeakyRelu { slope } => (slope * t).max(t),
            Nonlinearity::Abs => t.abs(),
            Nonlinearity::Zab(z) => z.eval_on_real(t).re,
        }
    }

    pub fn is_meromorphic(&self) -> bool {
        matches!(self, Nonlinearity::Tanh | Nonlinearity::Zab(_))
    }

    /// The tanh-type form of a meromorphic nonlinearity.
    pub fn as_zab(&self) -> Result<Zab, NonlinearityError> {
        match self {
            Nonlinearity::Tanh => Ok(Zab::tanh()),
            Nonlinearity::Zab(z) => Ok(z.clone()),
            other => Err(NonlinearityError::NotMeromorphic(other.name())),
        }
    }

    /// Value of the meromorphic extension at `z`.
    pub fn eval_complex(&self, z: Complex64) -> Result<Result<Complex64, Pole>, NonlinearityError> {
        match self {
            Nonlinearity::Tanh => {
                let m = (z.im / PI - 0.5).round();
                let p = Complex64::new(0.0, PI * (m + 0.5));
                if (z - p).norm() < POLE_GUARD_RADIUS {
                    Ok(Err(Pole { at: p }))
                } else {
                    Ok(Ok(tanh_c(z)))
                }
            }
            Nonlinearity::Zab(s) => Ok(s.eval(z)),
            other => Err(NonlinearityError::NotMeromorphic(other.name())),
        }
    }

    /// Checks the parameter ranges of the variant.
    pub fn check(&self) -> Result<(), NonlinearityError> {
        match self {
            Nonlinearity::LeakyRelu { slope } if !(*slope > 0.0 && *slope < 1.0) => Err(
                NonlinearityError::InvalidZab(format!("leaky slope {slope} must lie in (0, 1)")),
            ),
            _ => Ok(()),
        }
    }
}

/// Poles of `z ↦ σ(βz + γ)`: the set `β⁻¹(P_σ − γ)`, where `P_σ` is the union of
/// the vertical progressions `k a + i b (ℤ + ½)` over the support of `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleLattice {
    pub a: f64,
    pub b: f64,
    pub support: Vec<i64>,
    pub beta: Complex64,
    pub gamma: Complex64,
}

/// Lattice location of a pole: column `k` (support index) and row `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeIndex {
    pub k: i64,
    pub m: i64,
}

impl PoleLattice {
    /// The pole with index `(k, m)` in the `z` plane.
    pub fn point(&self, idx: LatticeIndex) -> Complex64 {
        let w = Complex64::new(idx.k as f64 * self.a, self.b * (idx.m as f64 + 0.5));
        (w - self.gamma) / self.beta
    }

    /// Step between consecutive poles of one progression.
    pub fn step(&self) -> Complex64 {
        Complex64::new(0.0, self.b) / self.beta
    }

    pub fn spacing(&self) -> f64 {
        self.b / self.beta.norm()
    }

    /// Finds the lattice index of `z`, with tolerance measured in the `z` plane.
    pub fn locate(&self, z: Complex64, tol: f64) -> Option<LatticeIndex> {
        let w = self.beta * z + self.gamma;
        let m = (w.im / self.b - 0.5).round();
        let mut best: Option<(f64, LatticeIndex)> = None;
        for &k in &self.support {
            let idx = LatticeIndex { k, m: m as i64 };
            let d = (self.point(idx) - z).norm();
            if d <= tol && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, idx));
            }
        }
        best.map(|(_, i)| i)
    }

    /// All lattice points with `|z| ≤ radius`, ordered by index.
    pub fn points_in_disk(&self, radius: f64) -> Vec<(LatticeIndex, Complex64)> {
        // |βz + γ| ≤ |β| radius + |γ| bounds the row index.
        let reach = self.beta.norm() * radius + self.gamma.norm();
        let m_max = (reach / self.b).ceil() as i64 + 1;
        let mut out = Vec::new();
        for &k in &self.support {
            if (k as f64 * self.a).abs() > reach + self.a {
                continue;
            }
            for m in -m_max - 1..=m_max {
                let idx = LatticeIndex { k, m };
                let p = self.point(idx);
                if p.norm() <= radius {
                    out.push((idx, p));
                }
            }
        }
        out
    }
}

/// Symbolic pole lattice of `z ↦ ρ(βz + γ)`.
pub fn pole_lattice(
    rho: &Nonlinearity,
    beta: Complex64,
    gamma: Complex64,
) -> Result<PoleLattice, NonlinearityError> {
    let z = rho.as_zab()?;
    if beta.norm() == 0.0 {
        return Err(NonlinearityError::ZeroScale);
    }
    Ok(PoleLattice {
        a: z.a,
        b: z.b,
        support: z.coeffs.keys().copied().collect(),
        beta,
        gamma,
    })
}

/// Residue of `z ↦ σ(βz + γ)` at the lattice point `p`: `β⁻¹ c_k b / π`.
pub fn residue_at(
    sigma: &Zab,
    beta: Complex64,
    gamma: Complex64,
    p: Complex64,
) -> Result<Complex64, NonlinearityError> {
    let lat = pole_lattice(&Nonlinearity::Zab(sigma.clone()), beta, gamma)?;
    let tol = 1e-8 * (1.0 + p.norm());
    let idx = lat
        .locate(p, tol)
        .ok_or(NonlinearityError::NotALatticePoint { re: p.re, im: p.im })?;
    Ok(sigma.residue(idx.k) / beta)
}
