//! Auxiliary input files and flag values.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nnsym::{AffineSymmetry, Network, Nonlinearity, Term, Zab};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn read_network(path: &Path) -> Result<Network> {
    Ok(nnsym::json::read_network(path)?)
}

/// `Σ α ρ(β t + γ)` for pole and partition queries.
#[derive(Debug, Deserialize)]
pub struct Combination {
    #[serde(default)]
    pub nonlinearity: Option<Nonlinearity>,
    pub terms: Vec<Term>,
}

#[derive(Debug, Deserialize)]
pub struct SymmetryFile {
    #[serde(default)]
    pub nonlinearity: Option<Nonlinearity>,
    #[serde(flatten)]
    pub symmetry: AffineSymmetry,
}

#[derive(Debug, Deserialize)]
pub struct CandidateFile {
    #[serde(default)]
    pub nonlinearity: Option<Nonlinearity>,
    /// `(β, γ)` pairs.
    pub candidates: Vec<(f64, f64)>,
    #[serde(default)]
    pub required: Option<usize>,
}

/// `tanh`, `crelu`, `relu`, `abs`, `leaky_relu:<slope>` or an inline JSON object.
pub fn parse_rho(s: &str) -> Result<Nonlinearity, String> {
    let rho = if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| e.to_string())?
    } else {
        match s.split_once(':') {
            Some(("leaky_relu", slope)) => {
                Nonlinearity::LeakyRelu { slope: slope.parse().map_err(|_| format!("bad slope {slope:?}"))? }
            }
            None => serde_json::from_value(serde_json::json!({ "kind": s })).map_err(|_| format!("unknown nonlinearity {s:?}"))?,
            _ => return Err(format!("unknown nonlinearity {s:?}")),
        }
    };
    rho.check().map_err(|e| e.to_string())?;
    Ok(rho)
}

/// The flag wins over the file.
pub fn pick_rho(flag: &Option<Nonlinearity>, file: Option<&Nonlinearity>) -> Result<Nonlinearity> {
    flag.clone()
        .or_else(|| file.cloned())
        .ok_or_else(|| anyhow!("no nonlinearity: pass --rho or set \"nonlinearity\" in the file"))
}

pub fn zab_of(rho: &Nonlinearity) -> Result<Zab> {
    Ok(rho.as_zab()?)
}

/// Comma-separated reals from one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Reals(pub Vec<f64>);

pub fn parse_reals(s: &str) -> Result<Reals, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("not a number: {x:?}")))
        .collect::<Result<_, _>>()
        .map(Reals)
}

/// Points as a JSON array of `[re, im]`, or CSV lines `re,im[,...]` with an
/// optional header.
pub fn read_points(path: &Path) -> Result<Vec<Complex64>> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let raw: Vec<[f64; 2]> =
            serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        return Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parsed = match cols.as_slice() {
            [re, im, ..] => re.trim().parse::<f64>().ok().zip(im.trim().parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((re, im)) => out.push(Complex64::new(re, im)),
            None if i == 0 => continue,
            None => bail!("{}: line {} is not `re,im`", path.display(), i + 1),
        }
    }
    Ok(out)
}
