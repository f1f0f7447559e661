//! Regularization schedules (the closed-form choices of the remark following
//! the main convergence theorem), their admissibility constraints, and the
//! theoretical L2 / H1 rate evaluators.

use crate::error::{Error, Result};
use serde::Serialize;

/// Which error norm the schedule targets; the H1 variant tightens the cutoff
/// Q through the exponent 48T/(A1 - A0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorMode {
    L2,
    H1,
}

/// Free knobs of a schedule; everything else is derived from (counts, eps).
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleKnobs {
    pub alpha0: f64,
    pub delta0: f64,
    pub m0: f64,
    pub m1: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub a0: f64,
    pub a1: f64,
    pub mu: Vec<f64>,
    pub mu0: f64,
}

impl ScheduleKnobs {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.alpha0 > 0.0) {
            bad.push("alpha0 must be > 0".to_string());
        }
        if !(0.0 < self.delta0 && self.delta0 < 1.0) {
            bad.push("delta0 must lie in (0,1)".to_string());
        }
        if !(0.0 < self.m0 && self.m0 < 1.0) {
            bad.push("m0 must lie in (0,1)".to_string());
        }
        if !(0.0 < self.m1 && self.m1 < 1.0) {
            bad.push("m1 must lie in (0,1)".to_string());
        }
        if self.m0 + self.m1 >= 1.0 {
            bad.push("m0 + m1 must be < 1".to_string());
        }
        if !(self.gamma >= 0.0) {
            bad.push("gamma must be >= 0".to_string());
        }
        if !(self.horizon > 0.0) {
            bad.push("horizon must be > 0".to_string());
        }
        if !(0.0 < self.a0 && self.a0 < self.a1) {
            bad.push("need 0 < A0 < A1".to_string());
        }
        if self.mu.len() != dim {
            bad.push(format!("mu must have one entry per dimension ({dim})"));
        }
        if self.mu.iter().any(|&m| !(m > 0.5)) {
            bad.push("each mu_k must be > 1/2".to_string());
        }
        if !(self.mu0 > 0.0) {
            bad.push("mu0 must be > 0".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(bad))
        }
    }
}

/// A fully resolved schedule for one (counts, eps) cell.
#[derive(Debug, Clone, Serialize)]
pub struct RegularizationSchedule {
    pub beta_n: f64,
    pub rho_n: f64,
    pub q_n: f64,
    /// Proof weight; always equal to rho_n.
    pub nu_n: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub m0: f64,
    pub m1: f64,
    pub eps: f64,
    /// E(eps) = eps^m0.
    pub e_big: f64,
    /// E0(eps) = eps^m1.
    pub e0_big: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub a0: f64,
    pub a1: f64,
    pub mode: ErrorMode,
}

fn product_n(counts: &[usize]) -> f64 {
    counts.iter().map(|&n| n as f64).product()
}

/// beta_n = (prod n_k)^{1/(2 alpha0 + d/2)}.
pub fn beta_schedule(counts: &[usize], alpha0: f64) -> Result<f64> {
    if counts.is_empty() || counts.iter().any(|&n| n == 0) {
        return Err(Error::invalid("beta schedule: counts must be positive"));
    }
    if !(alpha0 > 0.0) {
        return Err(Error::invalid("beta schedule: alpha0 must be > 0"));
    }
    let d = counts.len() as f64;
    Ok(product_n(counts).powf(1.0 / (2.0 * alpha0 + d / 2.0)))
}

/// rho_n = alpha0 / (T (2 alpha0 + d/2)) * log(prod n_k); satisfies
/// e^{rho_n T} = (prod n_k)^{alpha0/(2 alpha0 + d/2)} = beta_n^{alpha0}.
pub fn rho_schedule(counts: &[usize], alpha0: f64, horizon: f64) -> Result<f64> {
    if counts.is_empty() || counts.iter().any(|&n| n == 0) {
        return Err(Error::invalid("rho schedule: counts must be positive"));
    }
    if !(alpha0 > 0.0 && horizon > 0.0) {
        return Err(Error::invalid("rho schedule: alpha0 and T must be > 0"));
    }
    let d = counts.len() as f64;
    Ok(alpha0 / (horizon * (2.0 * alpha0 + d / 2.0)) * product_n(counts).ln())
}

/// The schedule driver max(e^{2T rho} beta^{d/2} prod n^{-4 mu},
/// e^{2T rho} beta^{-mu0}, rho^{-2 gamma}).
pub fn pi_bar(counts: &[usize], beta: f64, rho: f64, horizon: f64, mu: &[f64], mu0: f64, gamma: f64) -> Result<f64> {
    if counts.len() != mu.len() {
        return Err(Error::invalid("pi_bar: mu must have one entry per dimension"));
    }
    let d = counts.len() as f64;
    let amp = (2.0 * horizon * rho).exp();
    let variance_decay: f64 = counts
        .iter()
        .zip(mu)
        .map(|(&n, &m)| (n as f64).powf(-4.0 * m))
        .product();
    let t1 = amp * beta.powf(d / 2.0) * variance_decay;
    let t2 = amp * beta.powf(-mu0);
    let t3 = rho.powf(-2.0 * gamma);
    Ok(t1.max(t2).max(t3))
}

/// Q_n from e^{6 T Q^2} = pi_bar^{delta0 - 1}; requires pi_bar < 1 so the
/// radicand is positive.
pub fn q_schedule(delta0: f64, horizon: f64, pi_bar: f64) -> Result<f64> {
    q_generic(delta0, pi_bar, 6.0 * horizon)
}

/// H1 variant: e^{48 T Q^2 / (A1 - A0)} = pi_bar^{delta0 - 1}.
pub fn q_schedule_h1(delta0: f64, horizon: f64, a0: f64, a1: f64, pi_bar: f64) -> Result<f64> {
    if !(a1 > a0) {
        return Err(Error::invalid("q schedule: need A1 > A0"));
    }
    q_generic(delta0, pi_bar, 48.0 * horizon / (a1 - a0))
}

fn q_generic(delta0: f64, pi_bar: f64, exponent_scale: f64) -> Result<f64> {
    if !(0.0 < delta0 && delta0 < 1.0) {
        return Err(Error::invalid("q schedule: delta0 must lie in (0,1)"));
    }
    if !(exponent_scale > 0.0) {
        return Err(Error::invalid("q schedule: horizon must be > 0"));
    }
    if !(pi_bar > 0.0 && pi_bar < 1.0) {
        return Err(Error::invalid(format!(
            "q schedule: pi_bar = {pi_bar} must lie in (0,1) for a positive radicand"
        )));
    }
    Ok(((delta0 - 1.0) * pi_bar.ln() / exponent_scale).sqrt())
}

fn assemble(
    counts: &[usize],
    knobs: &ScheduleKnobs,
    eps: f64,
    mode: ErrorMode,
    clamp: bool,
) -> Result<RegularizationSchedule> {
    knobs.validate(counts.len())?;
    if !(eps >= 0.0) {
        return Err(Error::invalid("schedule: eps must be >= 0"));
    }
    let beta = beta_schedule(counts, knobs.alpha0)?;
    let mut rho = rho_schedule(counts, knobs.alpha0, knobs.horizon)?;
    // eps = 0 is the noise-free limit: both data ceilings are infinite
    let log_inv_eps = if eps > 0.0 { (1.0 / eps).ln() } else { f64::INFINITY };
    let rho_ceiling = knobs.m0 * log_inv_eps / knobs.horizon;
    if clamp {
        rho = rho.min(rho_ceiling);
    }
    let pibar = pi_bar(counts, beta, rho, knobs.horizon, &knobs.mu, knobs.mu0, knobs.gamma)?;
    if !(pibar < 1.0) {
        return Err(Error::ScheduleInadmissible(vec![format!(
            "pi_bar = {pibar} is not < 1 for counts {counts:?} (no admissible cutoff Q exists)"
        )]));
    }
    let mut q = match mode {
        ErrorMode::L2 => q_schedule(knobs.delta0, knobs.horizon, pibar)?,
        ErrorMode::H1 => q_schedule_h1(knobs.delta0, knobs.horizon, knobs.a0, knobs.a1, pibar)?,
    };
    let q_ceiling = match mode {
        ErrorMode::L2 => (knobs.m1 * log_inv_eps / (6.0 * knobs.horizon)).sqrt(),
        ErrorMode::H1 => ((knobs.a1 - knobs.a0) * knobs.m1 * log_inv_eps / (48.0 * knobs.horizon)).sqrt(),
    };
    if clamp {
        q = q.min(q_ceiling);
    }
    Ok(RegularizationSchedule {
        beta_n: beta,
        rho_n: rho,
        q_n: q,
        nu_n: rho,
        alpha0: knobs.alpha0,
        delta0: knobs.delta0,
        m0: knobs.m0,
        m1: knobs.m1,
        eps,
        e_big: if eps > 0.0 { eps.powf(knobs.m0) } else { 0.0 },
        e0_big: if eps > 0.0 { eps.powf(knobs.m1) } else { 0.0 },
        gamma: knobs.gamma,
        horizon: knobs.horizon,
        a0: knobs.a0,
        a1: knobs.a1,
        mode,
    })
}

/// The remark's closed-form schedule, taken literally (no clamping); may
/// violate the data-dependent ceilings when eps is too large for n.
pub fn remark_schedule(counts: &[usize], knobs: &ScheduleKnobs, eps: f64, mode: ErrorMode) -> Result<RegularizationSchedule> {
    assemble(counts, knobs, eps, mode, false)
}

/// The remark's schedule with rho_n and Q_n clamped to their theorem-level
/// ceilings, so the result passes `admissibility_check` whenever the
/// structural constraints (m0 + m1 < 1, pi_bar < 1) hold.
pub fn clamped_schedule(counts: &[usize], knobs: &ScheduleKnobs, eps: f64, mode: ErrorMode) -> Result<RegularizationSchedule> {
    assemble(counts, knobs, eps, mode, true)
}

/// Every theorem-level inequality, each reported by name on violation; an
/// empty list means the schedule is admissible.
pub fn admissibility_check(s: &RegularizationSchedule) -> Vec<String> {
    let mut violations = Vec::new();
    let tol = 1e-12;
    if !(0.0 < s.m0 && s.m0 < 1.0) {
        violations.push("m0 range: m0 must lie in (0,1)".to_string());
    }
    if !(0.0 < s.m1 && s.m1 < 1.0) {
        violations.push("m1 range: m1 must lie in (0,1)".to_string());
    }
    if s.m0 + s.m1 >= 1.0 {
        violations.push("exponent sum: m0 + m1 must be < 1".to_string());
    }
    if !(0.0 < s.delta0 && s.delta0 < 1.0) {
        violations.push("delta0 range: delta0 must lie in (0,1)".to_string());
    }
    if (s.nu_n - s.rho_n).abs() > tol * s.rho_n.abs().max(1.0) {
        violations.push("nu choice: nu_n must equal rho_n".to_string());
    }
    let log_inv_e = if s.eps > 0.0 {
        s.m0 * (1.0 / s.eps).ln()
    } else {
        f64::INFINITY
    };
    if s.rho_n > log_inv_e / s.horizon * (1.0 + tol) {
        violations.push(format!(
            "rho bound: rho_n = {} exceeds (1/T) log(1/E(eps)) = {}",
            s.rho_n,
            log_inv_e / s.horizon
        ));
    }
    let log_inv_e0 = if s.eps > 0.0 {
        s.m1 * (1.0 / s.eps).ln()
    } else {
        f64::INFINITY
    };
    let q_ceiling = match s.mode {
        ErrorMode::L2 => (log_inv_e0 / (6.0 * s.horizon)).sqrt(),
        ErrorMode::H1 => ((s.a1 - s.a0) * log_inv_e0 / (48.0 * s.horizon)).sqrt(),
    };
    if s.q_n > q_ceiling * (1.0 + tol) {
        violations.push(format!(
            "Q bound: Q_n = {} exceeds its ceiling {} ({:?} mode)",
            s.q_n, q_ceiling, s.mode
        ));
    }
    violations
}

/// `admissibility_check` as a hard gate.
pub fn require_admissible(s: &RegularizationSchedule) -> Result<()> {
    let violations = admissibility_check(s);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::ScheduleInadmissible(violations))
    }
}

/// Largest eps for which the unclamped remark schedule passes both
/// data-dependent ceilings (the structural constraints are eps-free).
pub fn admissible_eps_threshold(counts: &[usize], knobs: &ScheduleKnobs, mode: ErrorMode) -> Result<f64> {
    let s = remark_schedule(counts, knobs, 0.0, mode)?;
    let from_rho = (-s.horizon * s.rho_n / knobs.m0).exp();
    let from_q = match mode {
        ErrorMode::L2 => (-6.0 * s.horizon * s.q_n * s.q_n / knobs.m1).exp(),
        ErrorMode::H1 => (-48.0 * s.horizon * s.q_n * s.q_n / ((knobs.a1 - knobs.a0) * knobs.m1)).exp(),
    };
    Ok(from_rho.min(from_q))
}

fn rate_core(t: f64, s: &RegularizationSchedule, counts: &[usize], mu: &[f64], mu0: f64, gamma: f64, extra_beta: f64) -> f64 {
    let d = counts.len() as f64;
    let amp = (2.0 * s.rho_n * (s.horizon - t)).exp();
    let variance_decay: f64 = counts
        .iter()
        .zip(mu)
        .map(|(&n, &m)| (n as f64).powf(-4.0 * m))
        .product();
    // extra_beta = 0 gives the L2 exponent d/2, 1 the H1 exponent (d+2)/2
    let term1 = amp * s.beta_n.powf((d + 2.0 * extra_beta) / 2.0) * variance_decay;
    let term2 = (-2.0 * s.rho_n * t).exp() * s.rho_n.powf(-2.0 * gamma);
    let term3 = amp * s.beta_n.powf(-mu0);
    let data = if s.eps > 0.0 {
        s.eps.powf(1.0 - s.m0 - s.m1)
    } else {
        0.0
    };
    // the prefactor belongs to the display being evaluated, not to the mode
    // the schedule was tuned for
    let prefactor = if extra_beta == 0.0 {
        (6.0 * s.q_n * s.q_n * s.horizon).exp()
    } else {
        (48.0 * s.horizon * s.q_n * s.q_n / (s.a1 - s.a0)).exp()
    };
    prefactor * term1.max(term2).max(term3) + data
}

/// Order bound for the L2 error at time t:
/// e^{6 Q^2 T} max(e^{2 rho (T-t)} beta^{d/2} prod n^{-4 mu},
/// e^{-2 rho t} rho^{-2 gamma}, e^{2 rho (T-t)} beta^{-mu0}) + eps/(E E0).
pub fn theoretical_rate_l2(t: f64, s: &RegularizationSchedule, counts: &[usize], mu: &[f64], mu0: f64, gamma: f64) -> Result<f64> {
    if !(0.0 <= t && t <= s.horizon) {
        return Err(Error::invalid("rate: t must lie in [0, T]"));
    }
    Ok(rate_core(t, s, counts, mu, mu0, gamma, 0.0))
}

/// H1 counterpart: prefactor exp(48 T Q^2/(A1-A0)) and first-term exponent
/// (d+2)/2 instead of d/2.
pub fn theoretical_rate_h1(t: f64, s: &RegularizationSchedule, counts: &[usize], mu: &[f64], mu0: f64, gamma: f64) -> Result<f64> {
    if !(0.0 <= t && t <= s.horizon) {
        return Err(Error::invalid("rate: t must lie in [0, T]"));
    }
    Ok(rate_core(t, s, counts, mu, mu0, gamma, 1.0))
}
