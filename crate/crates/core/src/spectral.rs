//! Eigenstructure of the Dirichlet Laplacian on (0,π)^d: sine eigenbasis,
//! midpoint design grids, discrete sine quadrature, ball-shaped mode sets and
//! the spectral Sobolev / Gevrey norms.
//!
//! Everything on Ω = (0,π)^d is represented by its coefficients against the
//! orthonormal basis ψ_p(x) = (√(2/π))^d Π sin(p_k x_k), p ∈ ℕ^d, p_k ≥ 1,
//! with eigenvalues λ_p = |p|² = Σ p_k². Coefficient storage is a sparse map
//! keyed by multi-index: mode sets are balls, so memory scales with their
//! cardinality, and the dimension d can vary at runtime.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Multi-index p = (p₁,…,p_d), every component ≥ 1.
///
/// Ordering is lexicographic (derived from the component vector), which fixes
/// the enumeration order of mode sets and makes every serialized artifact
/// byte-reproducible.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("multi-index must have dimension >= 1"));
        }
        if components.iter().any(|&p| p == 0) {
            return Err(Error::invalid("multi-index components must be >= 1"));
        }
        Ok(MultiIndex(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    /// |p|² = Σ p_k², exact in integer arithmetic.
    pub fn norm_sq(&self) -> u64 {
        self.0.iter().map(|&p| (p as u64) * (p as u64)).sum()
    }

    /// λ_p = |p|² as a float, for spectral scalings.
    pub fn lambda(&self) -> f64 {
        self.norm_sq() as f64
    }
}

/// Convenience for d=1 indices in tests and examples.
impl From<u32> for MultiIndex {
    fn from(p: u32) -> Self {
        MultiIndex::new(vec![p]).unwrap()
    }
}

/// Finite spectral expansion: a sparse map from multi-index to real coefficient.
/// Absent keys mean coefficient zero. Explicit zeros are kept, so the support
/// of an estimator output is exactly its mode set.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl SpectralField {
    pub fn zero(dim: usize) -> Self {
        SpectralField {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_coeffs(dim: usize, entries: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut field = SpectralField::zero(dim);
        for (p, c) in entries {
            field.set(p, c)?;
        }
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set(&mut self, p: MultiIndex, c: f64) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::invalid(format!(
                "mode dimension {} does not match field dimension {}",
                p.dim(),
                self.dim
            )));
        }
        self.coeffs.insert(p, c);
        Ok(())
    }

    pub fn coeff(&self, p: &MultiIndex) -> f64 {
        self.coeffs.get(p).copied().unwrap_or(0.0)
    }

    /// Iterate (mode, coefficient) in lexicographic mode order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(p, &c)| (p, c))
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn modes(&self) -> impl Iterator<Item = &MultiIndex> {
        self.coeffs.keys()
    }

    /// Coefficient-wise map over the stored support.
    pub fn map_coeffs(&self, mut f: impl FnMut(&MultiIndex, f64) -> f64) -> SpectralField {
        SpectralField {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(p, &c)| (p.clone(), f(p, c))).collect(),
        }
    }

    /// self + scale * other, supported on the union of supports.
    pub fn add_scaled(&self, other: &SpectralField, scale: f64) -> SpectralField {
        let mut out = self.clone();
        for (p, c) in other.iter() {
            let v = out.coeff(p) + scale * c;
            out.coeffs.insert(p.clone(), v);
        }
        out
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        self.map_coeffs(|_, c| s * c)
    }

    /// Largest |coefficient| (0 for the empty field).
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Largest mode component over the support, per axis maximum collapsed to
    /// one number. 0 for the empty field.
    pub fn max_mode_component(&self) -> u32 {
        self.coeffs
            .keys()
            .flat_map(|p| p.components().iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Pointwise evaluation Σ_p c_p ψ_p(x).
    pub fn synthesize(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::invalid("point dimension mismatch"));
        }
        let mut sum = 0.0;
        for (p, c) in self.iter() {
            sum += c * eigenfunction_eval(p, x)?;
        }
        Ok(sum)
    }

    /// ‖·‖_{𝓗^γ} = √(Σ |p|^{2γ} c_p²); γ = 0 is the Parseval L² norm.
    pub fn sobolev_norm(&self, gamma: f64) -> f64 {
        let mut sum = 0.0;
        for (p, c) in self.iter() {
            sum += (p.norm_sq() as f64).powf(gamma) * c * c;
        }
        sum.sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// ‖·‖_{𝒵_{γ,B}} = √(Σ |p|^{2+2γ} e^{2B|p|²} c_p²).
    ///
    /// Overflow of the exponential weight for large modes yields an infinite
    /// norm rather than a panic.
    pub fn gevrey_norm(&self, gamma: f64, b: f64) -> f64 {
        let mut sum = 0.0;
        for (p, c) in self.iter() {
            if c == 0.0 {
                continue;
            }
            let nsq = p.norm_sq() as f64;
            sum += nsq.powf(1.0 + gamma) * (2.0 * b * nsq).exp() * c * c;
        }
        sum.sqrt()
    }
}

/// ψ_p(x) = (√(2/π))^d Π sin(p_k x_k).
pub fn eigenfunction_eval(p: &MultiIndex, x: &[f64]) -> Result<f64> {
    if p.dim() != x.len() {
        return Err(Error::invalid("eigenfunction: dimension mismatch"));
    }
    let scale = (2.0 / std::f64::consts::PI).sqrt().powi(p.dim() as i32);
    let mut prod = scale;
    for (&pk, &xk) in p.components().iter().zip(x) {
        prod *= (pk as f64 * xk).sin();
    }
    Ok(prod)
}

/// The deterministic midpoint design grid: x_i = (π(2i₁−1)/(2n₁), …),
/// i_k = 1..n_k, in lexicographic order of i.
#[derive(Debug, Clone)]
pub struct DesignGrid {
    counts: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl DesignGrid {
    pub fn new(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() || counts.iter().any(|&n| n == 0) {
            return Err(Error::invalid("design grid: every n_k must be >= 1"));
        }
        let d = counts.len();
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![1usize; d];
        loop {
            let x: Vec<f64> = idx
                .iter()
                .zip(counts)
                .map(|(&i, &n)| std::f64::consts::PI * (2 * i - 1) as f64 / (2 * n) as f64)
                .collect();
            points.push(x);
            // lexicographic increment, last axis fastest
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(DesignGrid {
                        counts: counts.to_vec(),
                        points,
                    });
                }
                k -= 1;
                if idx[k] < counts[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = 1;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// π^d / Π n_k, the quadrature weight shared by every node.
    pub fn quadrature_weight(&self) -> f64 {
        std::f64::consts::PI.powi(self.dim() as i32) / self.len() as f64
    }
}

/// 𝒲_β = { p ∈ ℕ^d : |p|² ≤ β }, enumerated in lexicographic order.
#[derive(Debug, Clone)]
pub struct ModeSet {
    dim: usize,
    beta: f64,
    members: Vec<MultiIndex>,
}

impl ModeSet {
    /// Exact enumeration by the integer condition |p|² ≤ β; empty when β < d.
    pub fn new(dim: usize, beta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("mode set: dimension must be >= 1"));
        }
        if !(beta >= 0.0) {
            return Err(Error::invalid("mode set: beta must be >= 0"));
        }
        let mut members = Vec::new();
        let mut current = vec![0u32; dim];
        enumerate_ball(dim, beta, 0, 0, &mut current, &mut members);
        Ok(ModeSet { dim, beta, members })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn members(&self) -> &[MultiIndex] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: &MultiIndex) -> bool {
        p.dim() == self.dim && (p.norm_sq() as f64) <= self.beta
    }

    /// Largest single component appearing in the set (0 if empty).
    pub fn max_component(&self) -> u32 {
        self.members
            .iter()
            .flat_map(|p| p.components().iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Volume bound on card(𝒲_β): (2π^{d/2}/(dΓ(d/2)))·β^{d/2}.
    pub fn cardinality_bound(dim: usize, beta: f64) -> f64 {
        let d = dim as f64;
        2.0 * std::f64::consts::PI.powf(d / 2.0) / (d * gamma_half_integer(dim))
            * beta.powf(d / 2.0)
    }
}

fn enumerate_ball(
    dim: usize,
    beta: f64,
    axis: usize,
    partial: u64,
    current: &mut Vec<u32>,
    out: &mut Vec<MultiIndex>,
) {
    let remaining = (dim - axis - 1) as u64; // each remaining component contributes >= 1
    let mut p = 1u32;
    loop {
        let sq = partial + (p as u64) * (p as u64);
        if (sq + remaining) as f64 > beta {
            return;
        }
        current[axis] = p;
        if axis + 1 == dim {
            out.push(MultiIndex(current.clone()));
        } else {
            enumerate_ball(dim, beta, axis + 1, sq, current, out);
        }
        p += 1;
    }
}

/// Γ(d/2) for integer d ≥ 1.
pub fn gamma_half_integer(d: usize) -> f64 {
    // Γ(1/2) = √π, Γ(1) = 1, Γ(x+1) = x Γ(x)
    let mut x = d as f64 / 2.0;
    let mut acc = 1.0;
    while x > 1.0 {
        x -= 1.0;
        acc *= x;
    }
    if (x - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc // x == 1
    }
}

/// Discrete sine quadrature: (π^d / Π n_k) Σ_i samples(x_i) ψ_p(x_i).
///
/// Exact reproduction of ⟨h, ψ_p⟩ is only guaranteed when every frequency in
/// the sampled function plus the target component stays below 2 n_k per axis;
/// higher modes alias (sin((2n−k)x_i) = sin(k x_i) on the midpoint grid). The
/// estimator deliberately evaluates this for all p in its mode set, so the
/// quadrature does not forbid high p.
pub fn quadrature_coefficient(samples: &[f64], grid: &DesignGrid, p: &MultiIndex) -> Result<f64> {
    if samples.len() != grid.len() {
        return Err(Error::invalid(format!(
            "quadrature: {} samples for a grid of {} points",
            samples.len(),
            grid.len()
        )));
    }
    if p.dim() != grid.dim() {
        return Err(Error::invalid("quadrature: mode/grid dimension mismatch"));
    }
    let mut sum = 0.0;
    for (s, x) in samples.iter().zip(grid.points()) {
        sum += s * eigenfunction_eval(p, x)?;
    }
    Ok(grid.quadrature_weight() * sum)
}

/// Quadrature analysis of grid samples onto every mode of a set.
pub fn analyze(samples: &[f64], grid: &DesignGrid, modes: &ModeSet) -> Result<SpectralField> {
    let mut field = SpectralField::zero(grid.dim());
    for p in modes.members() {
        let c = quadrature_coefficient(samples, grid, p)?;
        field.set(p.clone(), c)?;
    }
    Ok(field)
}

/// Table of ψ_p(x_i) for a fixed mode list, reused across many quadratures
/// (one row per mode, one column per grid point).
pub struct BasisTable {
    modes: Vec<MultiIndex>,
    values: Vec<Vec<f64>>,
    weight: f64,
}

impl BasisTable {
    pub fn new(grid: &DesignGrid, modes: &[MultiIndex]) -> Result<Self> {
        let mut values = Vec::with_capacity(modes.len());
        for p in modes {
            let row: Result<Vec<f64>> = grid.points().iter().map(|x| eigenfunction_eval(p, x)).collect();
            values.push(row?);
        }
        Ok(BasisTable {
            modes: modes.to_vec(),
            values,
            weight: grid.quadrature_weight(),
        })
    }

    pub fn modes(&self) -> &[MultiIndex] {
        &self.modes
    }

    /// Quadrature coefficients of the samples against every tabulated mode.
    pub fn analyze(&self, samples: &[f64], dim: usize) -> Result<SpectralField> {
        let mut field = SpectralField::zero(dim);
        for (p, row) in self.modes.iter().zip(&self.values) {
            let dot: f64 = row.iter().zip(samples).map(|(a, b)| a * b).sum();
            field.set(p.clone(), self.weight * dot)?;
        }
        Ok(field)
    }

    /// Pointwise synthesis of a field supported on the tabulated modes.
    pub fn synthesize(&self, field: &SpectralField, out: &mut [f64]) {
        out.fill(0.0);
        for (p, row) in self.modes.iter().zip(&self.values) {
            let c = field.coeff(p);
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(row) {
                *o += c * v;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Text format: header `d=<dim>`, then one `p1 ... pd coeff` line per mode,
// coefficients in round-trip decimal precision.
// ---------------------------------------------------------------------------

pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

impl SpectralField {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "d={}", self.dim);
        for (p, c) in self.iter() {
            for comp in p.components() {
                let _ = write!(s, "{} ", comp);
            }
            let _ = writeln!(s, "{}", format_f64(c));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("field: empty input".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("d=")
            .ok_or_else(|| Error::Parse(format!("field: expected `d=<dim>`, got `{header}`")))?
            .parse()
            .map_err(|e| Error::Parse(format!("field: bad dimension: {e}")))?;
        let mut field = SpectralField::zero(dim);
        for line in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "field: expected {} tokens, got {} in `{line}`",
                    dim + 1,
                    tokens.len()
                )));
            }
            let comps: std::result::Result<Vec<u32>, _> =
                tokens[..dim].iter().map(|t| t.parse()).collect();
            let comps = comps.map_err(|e| Error::Parse(format!("field: bad mode index: {e}")))?;
            let coeff: f64 = tokens[dim]
                .parse()
                .map_err(|e| Error::Parse(format!("field: bad coefficient: {e}")))?;
            field.set(MultiIndex::new(comps)?, coeff)?;
        }
        Ok(field)
    }
}
