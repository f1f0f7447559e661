//! Nonparametric series estimators of the final datum H and the source G from
//! noisy grid observations, plus closed-form evaluators for their theoretical
//! mean integrated squared error bounds in L² and the H¹ variant.

use crate::error::{Error, Result};
use crate::random_data::GridObservations;
use crate::spectral::{gamma_half_integer, BasisTable, ModeSet, SpectralField};

/// Frequency cutoff and smoothness hypothesis for the series estimators.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Mode-set threshold β_n ≥ 0.
    pub beta: f64,
    /// Smoothness vector (μ₁,…,μ_d), each > 1/2.
    pub mu: Vec<f64>,
    /// μ₀ ≥ d·max μ_k.
    pub mu0: f64,
    /// Smoothness-class constant 𝒞(μ₁,…,μ_d) of the bound; no closed form is
    /// available, so it is user supplied and defaults to 1. Absolute bound
    /// levels depend on it, convergence rates do not.
    pub c_mu: f64,
}

impl EstimatorConfig {
    pub fn new(beta: f64, mu: Vec<f64>, mu0: f64) -> Result<Self> {
        let cfg = EstimatorConfig {
            beta,
            mu,
            mu0,
            c_mu: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("estimator: beta must be >= 0"));
        }
        if self.mu.is_empty() || self.mu.iter().any(|&m| !(m > 0.5)) {
            return Err(Error::invalid("estimator: every mu_k must be > 1/2"));
        }
        let d = self.mu.len() as f64;
        let max_mu = self.mu.iter().cloned().fold(f64::MIN, f64::max);
        if !(self.mu0 >= d * max_mu) {
            return Err(Error::invalid("estimator: mu0 must be >= d * max(mu_k)"));
        }
        if !(self.c_mu > 0.0) {
            return Err(Error::invalid("estimator: c_mu must be > 0"));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Ĥ_β = Σ_{p∈𝒲_β} [quadrature of D̃ against ψ_p] ψ_p, supported exactly on 𝒲_β.
pub fn reconstruct_final(obs: &GridObservations, cfg: &EstimatorConfig) -> Result<SpectralField> {
    cfg.validate()?;
    if obs.grid.dim() != cfg.dim() {
        return Err(Error::invalid("reconstruct: grid/config dimension mismatch"));
    }
    let modes = ModeSet::new(obs.grid.dim(), cfg.beta)?;
    let table = BasisTable::new(&obs.grid, modes.members())?;
    table.analyze(&obs.final_data, obs.grid.dim())
}

/// Ĝ_β(·, t_m) for every time node, each reconstructed independently
/// (pointwise in t, no temporal smoothing).
pub fn reconstruct_source(obs: &GridObservations, cfg: &EstimatorConfig) -> Result<Vec<SpectralField>> {
    cfg.validate()?;
    if obs.grid.dim() != cfg.dim() {
        return Err(Error::invalid("reconstruct: grid/config dimension mismatch"));
    }
    let modes = ModeSet::new(obs.grid.dim(), cfg.beta)?;
    let table = BasisTable::new(&obs.grid, modes.members())?;
    let n_nodes = obs.time_nodes.len();
    let mut fields = Vec::with_capacity(n_nodes);
    let mut samples = vec![0.0; obs.grid.len()];
    for m in 0..n_nodes {
        for (i, path) in obs.source_paths.iter().enumerate() {
            samples[i] = path[m];
        }
        fields.push(table.analyze(&samples, obs.grid.dim())?);
    }
    Ok(fields)
}

/// Single-replicate integrand of the MISE: ‖estimate − truth‖²_{L²} by
/// Parseval, including truth coefficients outside the estimate's support.
pub fn empirical_mise(estimate: &SpectralField, truth: &SpectralField) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::invalid("mise: dimension mismatch"));
    }
    let diff = estimate.add_scaled(truth, -1.0);
    let n = diff.l2_norm();
    Ok(n * n)
}

fn volume_factor(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / (d as f64 * gamma_half_integer(d))
}

fn product_n_pow(counts: &[usize], mu: &[f64], scale: f64) -> f64 {
    counts
        .iter()
        .zip(mu)
        .map(|(&n, &m)| (n as f64).powf(scale * m))
        .product()
}

/// Theoretical L² MISE bound for Ĥ_β:
/// C̄·β^{d/2}·Π n_k^{−4μ_k} + 4β^{−μ₀}·‖H‖², with
/// C̄ = 8π^d V_max²·(2π^{d/2}/(dΓ(d/2))) + (16𝒞²π^{d/2}/(dΓ(d/2)))·‖H‖².
pub fn mise_bound_final(cfg: &EstimatorConfig, counts: &[usize], h_norm_mu0: f64, v_max: f64) -> Result<f64> {
    cfg.validate()?;
    let d = cfg.dim();
    if counts.len() != d {
        return Err(Error::invalid("mise bound: counts/config dimension mismatch"));
    }
    let pi = std::f64::consts::PI;
    let vol = volume_factor(d);
    let c_bar = 8.0 * pi.powi(d as i32) * v_max * v_max * vol
        + 8.0 * cfg.c_mu * cfg.c_mu * vol * h_norm_mu0 * h_norm_mu0;
    let variance_term = c_bar * cfg.beta.powf(d as f64 / 2.0) * product_n_pow(counts, &cfg.mu, -4.0);
    let bias_term = 4.0 * cfg.beta.powf(-cfg.mu0) * h_norm_mu0 * h_norm_mu0;
    Ok(variance_term + bias_term)
}

/// Three-term H¹ data-error bound:
/// 8π^d V²·vol·β^{(d+2)/2}/Πn_k
/// + 16𝒞²·(vol/2)·‖H‖²_{μ₀}·β^{(d+2)/2}·Πn_k^{−4μ_k}
/// + 4β^{−μ₀}·‖H‖²_{μ₀+1}.
pub fn h1_data_bound(
    cfg: &EstimatorConfig,
    counts: &[usize],
    h_norm_mu0: f64,
    h_norm_mu0_plus1: f64,
    v_max: f64,
) -> Result<f64> {
    cfg.validate()?;
    let d = cfg.dim();
    if counts.len() != d {
        return Err(Error::invalid("h1 bound: counts/config dimension mismatch"));
    }
    let pi = std::f64::consts::PI;
    let vol = volume_factor(d);
    let beta_pow = cfg.beta.powf((d as f64 + 2.0) / 2.0);
    let prod_n: f64 = counts.iter().map(|&n| n as f64).product();
    let term1 = 8.0 * pi.powi(d as i32) * v_max * v_max * vol * beta_pow / prod_n;
    let term2 = 8.0 * cfg.c_mu * cfg.c_mu * vol * h_norm_mu0 * h_norm_mu0
        * beta_pow
        * product_n_pow(counts, &cfg.mu, -4.0);
    let term3 = 4.0 * cfg.beta.powf(-cfg.mu0) * h_norm_mu0_plus1 * h_norm_mu0_plus1;
    Ok(term1 + term2 + term3)
}
