//! The stabilizing operator pair (P, P_ρ), the truncated cubic nonlinearity
//! F̄_Q, and the pseudo-spectral evaluation of F̄_Q on a field.
//!
//! Sign convention: the operator P acts spectrally as A₁·(−Δ), i.e. it scales
//! mode p by +A₁·λ_p^β. The lemma defining P writes A₁Δ, but its own proof
//! computes ‖Pv − P_ρ v‖² = A₁²Σ_{tail}λ²⟨v,ψ⟩² with positive eigenvalues,
//! and only the positive convention is consistent with the operator-norm
//! bound ‖P_ρ v‖ ≤ ρ‖v‖ and the backward stabilization mechanism. The
//! positive convention is used throughout.

use crate::error::{Error, Result};
use crate::spectral::{analyze, DesignGrid, ModeSet, SpectralField};

/// Coefficient band (A₀, A₁), spectral truncation level ρ, and the fractional
/// exponent of the eigenvalue scaling (1 = classical Laplacian).
#[derive(Debug, Clone)]
pub struct OperatorBand {
    pub a0: f64,
    pub a1: f64,
    pub rho: f64,
    pub frac_beta: f64,
}

impl OperatorBand {
    pub fn new(a0: f64, a1: f64, rho: f64) -> Result<Self> {
        Self::with_fractional(a0, a1, rho, 1.0)
    }

    pub fn with_fractional(a0: f64, a1: f64, rho: f64, frac_beta: f64) -> Result<Self> {
        let band = OperatorBand {
            a0,
            a1,
            rho,
            frac_beta,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.a0 && self.a0 < self.a1) {
            return Err(Error::invalid("operator band: need 0 < A0 < A1"));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::invalid("operator band: rho must be >= 0"));
        }
        if !(self.frac_beta > 0.0) {
            return Err(Error::invalid("operator band: fractional exponent must be > 0"));
        }
        Ok(())
    }

    /// λ_p^β for this band's eigenvalue scaling.
    pub fn eigenvalue(&self, nsq: u64) -> f64 {
        if self.frac_beta == 1.0 {
            nsq as f64
        } else {
            (nsq as f64).powf(self.frac_beta)
        }
    }

    /// Kept-mode predicate of the truncation: λ_p^β ≤ ρ/A₁
    /// (classically |p| ≤ √(ρ/A₁)).
    pub fn keeps(&self, nsq: u64) -> bool {
        self.eigenvalue(nsq) <= self.rho / self.a1
    }
}

/// Cutoff Q of the clamped nonlinearity; F̄_Q is globally Lipschitz with
/// constant 2 + 6Q².
#[derive(Debug, Clone, Copy)]
pub struct TruncationLevel {
    q: f64,
}

impl TruncationLevel {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::invalid("truncation level: Q must be > 0"));
        }
        Ok(TruncationLevel { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn lipschitz_constant(&self) -> f64 {
        2.0 + 6.0 * self.q * self.q
    }
}

/// (P v)_p = A₁·λ_p^β·v_p on the whole support.
pub fn apply_p(field: &SpectralField, band: &OperatorBand) -> SpectralField {
    field.map_coeffs(|p, c| band.a1 * band.eigenvalue(p.norm_sq()) * c)
}

/// Same scaling as `apply_p` restricted to kept modes; dropped modes map to 0
/// (they leave the support entirely).
pub fn apply_p_trunc(field: &SpectralField, band: &OperatorBand) -> SpectralField {
    let mut out = SpectralField::zero(field.dim());
    for (p, c) in field.iter() {
        let nsq = p.norm_sq();
        if band.keeps(nsq) {
            out.set(p.clone(), band.a1 * band.eigenvalue(nsq) * c)
                .expect("same dimension");
        }
    }
    out
}

/// Exact tail norm ‖Pv − P_ρ v‖ together with its Gevrey-space bound
/// A₁·ρ^{−γ}·e^{−Tρ}·‖v‖_{𝒵_{γ,TA₁}}.
#[derive(Debug, Clone, Copy)]
pub struct TruncError {
    pub actual: f64,
    pub bound: f64,
}

pub fn trunc_error_bound(v: &SpectralField, band: &OperatorBand, gamma: f64, t: f64) -> Result<TruncError> {
    band.validate()?;
    if !(gamma >= 0.0 && t >= 0.0) {
        return Err(Error::invalid("trunc error: gamma and T must be >= 0"));
    }
    let mut tail_sq = 0.0;
    for (p, c) in v.iter() {
        let nsq = p.norm_sq();
        if !band.keeps(nsq) {
            let scaled = band.a1 * band.eigenvalue(nsq) * c;
            tail_sq += scaled * scaled;
        }
    }
    let z_norm = v.gevrey_norm(gamma, t * band.a1);
    // an infinite Gevrey norm is reported as an infinite bound; the
    // comparison actual <= bound then holds vacuously
    let bound = band.a1 * band.rho.powf(-gamma) * (-t * band.rho).exp() * z_norm;
    Ok(TruncError {
        actual: tail_sq.sqrt(),
        bound,
    })
}

/// F̄_Q(u): u − u³ clamped to the constants ±(Q − Q³) outside [−Q, Q].
/// Continuous and odd; at |u| = Q the interior branch applies (both agree).
pub fn truncated_nonlinearity(u: f64, q: TruncationLevel) -> f64 {
    let q = q.q();
    if u > q {
        q - q * q * q
    } else if u < -q {
        -q + q * q * q
    } else {
        u - u * u * u
    }
}

/// The untruncated F(u) = u − u³ (the Q = +∞ sentinel used when generating
/// forward data).
pub fn cubic_nonlinearity(u: f64) -> f64 {
    u - u * u * u
}

/// Pseudo-spectral evaluation of F̄_Q(u): synthesize on the collocation grid,
/// clamp pointwise, re-analyze onto the active mode set.
///
/// Requires every collocation count to be at least twice the largest mode
/// component of `u` and of the output set; at exactly 2× one aliased pair
/// (cubic content 3M onto target M) survives the midpoint rule, so callers
/// wanting exact retained coefficients should supply 2M+2 or finer (the
/// solver does).
pub fn nonlinearity_field(
    u: &SpectralField,
    q: Option<TruncationLevel>,
    modes: &ModeSet,
    grid: &DesignGrid,
) -> Result<SpectralField> {
    if u.dim() != grid.dim() || modes.dim() != grid.dim() {
        return Err(Error::invalid("nonlinearity: dimension mismatch"));
    }
    let max_comp = u.max_mode_component().max(modes.max_component()) as usize;
    if grid.counts().iter().any(|&n| n < 2 * max_comp) {
        return Err(Error::invalid(format!(
            "nonlinearity: collocation grid {:?} too coarse for max mode component {max_comp} (need >= 2x per axis)",
            grid.counts()
        )));
    }
    let samples: Result<Vec<f64>> = grid
        .points()
        .iter()
        .map(|x| {
            let v = u.synthesize(x)?;
            Ok(match q {
                Some(level) => truncated_nonlinearity(v, level),
                None => cubic_nonlinearity(v),
            })
        })
        .collect();
    analyze(&samples?, grid, modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{eigenfunction_eval, MultiIndex};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mi(components: &[u32]) -> MultiIndex {
        MultiIndex::new(components.to_vec()).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, max_modes: usize) -> SpectralField {
        let n_modes = rng.gen_range(1..=max_modes);
        let mut field = SpectralField::zero(1);
        for _ in 0..n_modes {
            let p = rng.gen_range(1..=20u32);
            let c = rng.gen_range(-2.0..2.0);
            field.set(mi(&[p]), c).unwrap();
        }
        field
    }

    #[test]
    fn apply_p_classical() {
        let band = OperatorBand::new(0.5, 2.0, 10.0).unwrap();
        let f = SpectralField::from_coeffs(1, [(mi(&[1]), 1.0), (mi(&[2]), 1.0)]).unwrap();
        let g = apply_p(&f, &band);
        assert_abs_diff_eq!(g.coeff(&mi(&[1])), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.coeff(&mi(&[2])), 8.0, epsilon = 1e-15);

        assert_eq!(apply_p(&SpectralField::zero(1), &band).support_len(), 0);
    }

    #[test]
    fn apply_p_fractional() {
        let band = OperatorBand::with_fractional(0.5, 1.0, 10.0, 0.5).unwrap();
        let f = SpectralField::from_coeffs(1, [(mi(&[4]), 1.0)]).unwrap();
        let g = apply_p(&f, &band);
        assert_abs_diff_eq!(g.coeff(&mi(&[4])), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_p_trunc_drops_tail() {
        let band = OperatorBand::new(0.5, 2.0, 8.0).unwrap();
        let f = SpectralField::from_coeffs(1, [(mi(&[1]), 1.0), (mi(&[2]), 1.0), (mi(&[3]), 1.0)]).unwrap();
        let g = apply_p_trunc(&f, &band);
        assert_abs_diff_eq!(g.coeff(&mi(&[1])), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.coeff(&mi(&[2])), 8.0, epsilon = 1e-15);
        assert_eq!(g.support_len(), 2); // p=3 dropped: 3 > sqrt(8/2)
    }

    #[test]
    fn apply_p_trunc_rho_zero_is_zero() {
        let band = OperatorBand::new(0.5, 2.0, 0.0).unwrap();
        let f = SpectralField::from_coeffs(1, [(mi(&[1]), 1.0)]).unwrap();
        assert_eq!(apply_p_trunc(&f, &band).support_len(), 0);
    }

    #[test]
    fn operator_norm_bound_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let rho = rng.gen_range(1.0..100.0);
            let band = OperatorBand::new(0.5, rng.gen_range(0.6..3.0), rho).unwrap();
            let v = random_field(&mut rng, 20);
            let lhs = apply_p_trunc(&v, &band).l2_norm();
            assert!(
                lhs <= rho * v.l2_norm() * (1.0 + 1e-12),
                "||P_rho v|| = {lhs} > rho ||v|| = {}",
                rho * v.l2_norm()
            );
        }
    }

    #[test]
    fn trunc_error_hand_example() {
        // single tail mode p=3, rho=8, A1=2, gamma=0, T=1, coeff 1:
        // actual = 2*9 = 18, bound = 2 e^{-8} sqrt(9 e^{36}) = 6 e^{10}
        let band = OperatorBand::new(0.5, 2.0, 8.0).unwrap();
        let v = SpectralField::from_coeffs(1, [(mi(&[3]), 1.0)]).unwrap();
        let e = trunc_error_bound(&v, &band, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(e.actual, 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.bound, 6.0 * 10.0_f64.exp(), epsilon = 1e-6);
        assert!(e.actual <= e.bound);
    }

    #[test]
    fn trunc_error_kept_support_is_zero() {
        let band = OperatorBand::new(0.5, 2.0, 8.0).unwrap();
        let v = SpectralField::from_coeffs(1, [(mi(&[1]), 3.0), (mi(&[2]), -1.0)]).unwrap();
        let e = trunc_error_bound(&v, &band, 1.0, 0.5).unwrap();
        assert_eq!(e.actual, 0.0);
        assert!(e.actual <= e.bound);
    }

    /// Smallest horizon for which the tail bound dominates every possible
    /// dropped mode with component ≤ 20. The bound needs
    /// λ^{1−γ}ρ^{2γ} ≤ e^{2T(A₁λ−ρ)} per dropped eigenvalue; when A₁λ barely
    /// exceeds ρ this forces a minimum T, below which the inequality can fail
    /// for modes just past the cutoff.
    fn min_valid_horizon(rho: f64, a1: f64, gamma: f64) -> f64 {
        let mut t_req: f64 = 0.0;
        for p in 1..=20u64 {
            let lam = (p * p) as f64;
            let gap = a1 * lam - rho;
            if gap <= 0.0 {
                continue;
            }
            let need = (1.0 - gamma) * lam.ln() + 2.0 * gamma * rho.ln();
            if need > 0.0 {
                t_req = t_req.max(need / (2.0 * gap));
            }
        }
        t_req
    }

    #[test]
    fn trunc_error_bound_on_random_fields() {
        // brute-force tail computation is the `actual` side; the inequality
        // must hold whenever the Gevrey norm is finite and T clears the
        // per-draw threshold of `min_valid_horizon`
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let rho = rng.gen_range(1.0..100.0);
            let gamma = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
            let a1 = rng.gen_range(0.6..3.0);
            let t = min_valid_horizon(rho, a1, gamma) + rng.gen_range(0.05..1.0);
            let band = OperatorBand::new(0.5, a1, rho).unwrap();
            let v = random_field(&mut rng, 20);
            let e = trunc_error_bound(&v, &band, gamma, t).unwrap();
            if e.bound.is_finite() {
                assert!(
                    e.actual <= e.bound * (1.0 + 1e-12),
                    "actual {} > bound {} (rho={rho}, a1={a1}, gamma={gamma}, t={t})",
                    e.actual,
                    e.bound
                );
            }
        }
    }

    #[test]
    fn infinite_gevrey_norm_reported() {
        let band = OperatorBand::new(0.5, 2.0, 4.0).unwrap();
        let v = SpectralField::from_coeffs(1, [(mi(&[500]), 1.0)]).unwrap();
        let e = trunc_error_bound(&v, &band, 0.0, 5.0).unwrap();
        assert!(e.bound.is_infinite());
    }

    #[test]
    fn truncated_nonlinearity_branches() {
        let q2 = TruncationLevel::new(2.0).unwrap();
        assert_abs_diff_eq!(truncated_nonlinearity(3.0, q2), -6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(truncated_nonlinearity(1.0, q2), 0.0, epsilon = 1e-15);
        let q1 = TruncationLevel::new(1.0).unwrap();
        assert_abs_diff_eq!(truncated_nonlinearity(100.0, q1), 0.0, epsilon = 1e-15);
        // odd and continuous at the joins
        assert_abs_diff_eq!(truncated_nonlinearity(-3.0, q2), 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(truncated_nonlinearity(2.0, q2), 2.0 - 8.0, epsilon = 1e-15);
    }

    #[test]
    fn lipschitz_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let q = TruncationLevel::new(rng.gen_range(0.0_f64..10.0).max(1e-6)).unwrap();
            let v1 = rng.gen_range(-20.0..20.0);
            let v2 = rng.gen_range(-20.0..20.0);
            let lhs = (truncated_nonlinearity(v1, q) - truncated_nonlinearity(v2, q)).abs();
            let rhs = q.lipschitz_constant() * (v1 - v2).abs();
            assert!(lhs <= rhs * (1.0 + 1e-12), "|F(v1)-F(v2)| = {lhs} > {rhs}");
        }
    }

    #[test]
    fn agreement_on_the_ball() {
        let q = TruncationLevel::new(1.5).unwrap();
        for u in [-1.5, -1.0, -0.3, 0.0, 0.7, 1.5] {
            assert_eq!(truncated_nonlinearity(u, q), cubic_nonlinearity(u));
        }
    }

    #[test]
    fn trunc_difference_supported_on_dropped_modes_only() {
        let band = OperatorBand::new(0.5, 2.0, 8.0).unwrap();
        let v = SpectralField::from_coeffs(1, [(mi(&[1]), 1.0), (mi(&[2]), 2.0), (mi(&[5]), 3.0)]).unwrap();
        let diff = apply_p(&v, &band).add_scaled(&apply_p_trunc(&v, &band), -1.0);
        for (p, c) in diff.iter() {
            if band.keeps(p.norm_sq()) {
                assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12);
            }
        }
        // the mode filter is idempotent
        let once = apply_p_trunc(&v, &band);
        let twice = apply_p_trunc(&once, &band);
        let again = apply_p(&once, &band);
        assert_eq!(twice, again);
    }

    #[test]
    fn nonlinearity_field_zero_and_linear_regime() {
        let modes = ModeSet::new(1, 9.0).unwrap();
        let grid = DesignGrid::new(&[16]).unwrap();
        let zero = SpectralField::zero(1);
        let out = nonlinearity_field(&zero, None, &modes, &grid).unwrap();
        assert_eq!(out.l2_norm(), 0.0);

        // u = eps psi_1: F(u) ~ u to first order, cubic term ~ eps^3
        let eps = 1e-6;
        let u = SpectralField::from_coeffs(1, [(mi(&[1]), eps)]).unwrap();
        let q = TruncationLevel::new(1e6).unwrap();
        let out = nonlinearity_field(&u, Some(q), &modes, &grid).unwrap();
        assert_abs_diff_eq!(out.coeff(&mi(&[1])), eps, epsilon = 1e-17);
    }

    #[test]
    fn nonlinearity_field_cubic_projection_oracle() {
        // u = c psi_1 with Q large: coefficient on p=3 must equal the exact
        // projection of -u^3, cross-checked by dense quadrature
        let c = 0.4;
        let u = SpectralField::from_coeffs(1, [(mi(&[1]), c)]).unwrap();
        let modes = ModeSet::new(1, 9.0).unwrap();
        let grid = DesignGrid::new(&[64]).unwrap();
        let q = TruncationLevel::new(10.0).unwrap();
        let out = nonlinearity_field(&u, Some(q), &modes, &grid).unwrap();

        // dense-quadrature oracle: 1e5-point midpoint rule on (0, pi)
        let n = 100_000;
        let mut proj = 0.0;
        for i in 1..=n {
            let x = std::f64::consts::PI * (2.0 * i as f64 - 1.0) / (2.0 * n as f64);
            let psi1 = eigenfunction_eval(&mi(&[1]), &[x]).unwrap();
            let psi3 = eigenfunction_eval(&mi(&[3]), &[x]).unwrap();
            let uval = c * psi1;
            proj += (uval - uval.powi(3)) * psi3;
        }
        proj *= std::f64::consts::PI / n as f64;
        assert_abs_diff_eq!(out.coeff(&mi(&[3])), proj, epsilon = 1e-8);
    }

    #[test]
    fn nonlinearity_field_rejects_coarse_grid() {
        let modes = ModeSet::new(1, 25.0).unwrap(); // max component 5
        let grid = DesignGrid::new(&[8]).unwrap();
        let u = SpectralField::from_coeffs(1, [(mi(&[1]), 1.0)]).unwrap();
        assert!(nonlinearity_field(&u, None, &modes, &grid).is_err());
    }
}
