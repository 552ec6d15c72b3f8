//! Similarity kernels, bandwidth resolution, the score-update rule, and the
//! pairwise loss bound.
//!
//! Both kernels map a distance to `[0, 1]` with `similarity(0) = 1` and are
//! monotone non-increasing in the distance. The bandwidth is never fixed
//! globally: it is resolved each cycle from a fraction `alpha` of the pool's
//! current maximum pairwise distance, so the kernel adapts to the scale of
//! the embedding space. The gaussian bandwidth `lambda_l^2 / pi` is chosen so
//! the gaussian and linear kernels enclose equal area over `[0, inf)`, which
//! puts the gaussian score at distance `lambda_l` at exactly `e^(-pi)`.

use crate::error::{Error, Result};
use crate::pool::{SimilarityConfig, SimilarityKind};

/// A similarity kernel with its bandwidth resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: SimilarityKind,
    pub lambda: f64,
}

impl Kernel {
    pub fn new(kind: SimilarityKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid_input(format!(
                "kernel bandwidth must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self { kind, lambda })
    }

    /// Resolves the bandwidth from `cfg.alpha` and the pool diameter, then
    /// builds the kernel.
    pub fn resolve(cfg: &SimilarityConfig, d_max: f64) -> Result<Self> {
        let lambda = resolve_lambda(cfg, d_max)?;
        Ok(Self {
            kind: cfg.kind,
            lambda,
        })
    }

    #[inline]
    pub fn similarity(&self, distance: f64) -> f64 {
        similarity(distance, self.kind, self.lambda)
    }
}

/// Per-cycle bandwidth: `alpha * d_max` for the linear kernel,
/// `(alpha * d_max)^2 / pi` for the gaussian kernel.
pub fn resolve_lambda(cfg: &SimilarityConfig, d_max: f64) -> Result<f64> {
    cfg.validate()?;
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::degenerate(format!(
            "cannot resolve kernel bandwidth from d_max = {d_max}"
        )));
    }
    let scaled = cfg.alpha * d_max;
    Ok(match cfg.kind {
        SimilarityKind::Linear => scaled,
        SimilarityKind::Gaussian => scaled * scaled / std::f64::consts::PI,
    })
}

/// The gaussian bandwidth that matches a linear bandwidth in integrated
/// kernel mass: `lambda_l^2 / pi`.
pub fn gaussian_lambda_from_linear(lambda_l: f64) -> f64 {
    lambda_l * lambda_l / std::f64::consts::PI
}

/// Kernel value at `distance`: gaussian `exp(-d^2 / lambda)` or linear
/// `max(0, 1 - d / lambda)`.
#[inline]
pub fn similarity(distance: f64, kind: SimilarityKind, lambda: f64) -> f64 {
    match kind {
        SimilarityKind::Gaussian => (-(distance * distance) / lambda).exp(),
        SimilarityKind::Linear => (1.0 - distance / lambda).max(0.0),
    }
}

/// Discounts `sigma_u` by the similarity-weighted score of a just-selected
/// neighbor: `sigma_u - sim_uv * sigma_v`. Unclamped by default so
/// near-duplicates keep their relative order below zero; `clamp` floors the
/// result at 0.
#[inline]
pub fn update_score(sigma_u: f64, sim_uv: f64, sigma_v: f64, clamp: bool) -> f64 {
    let updated = sigma_u - sim_uv * sigma_v;
    if clamp {
        updated.max(0.0)
    } else {
        updated
    }
}

/// Inputs for the pairwise loss bound: losses of both samples before the
/// training step, the Lipschitz constant of the loss, and their distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBoundCase {
    pub loss_u_before: f64,
    pub loss_v_before: f64,
    pub kappa: f64,
    pub dist: f64,
}

impl LossBoundCase {
    pub fn new(loss_u_before: f64, loss_v_before: f64, kappa: f64, dist: f64) -> Result<Self> {
        let fields = [loss_u_before, loss_v_before, kappa, dist];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("loss bound inputs must be finite"));
        }
        if loss_u_before < 0.0 || loss_v_before < 0.0 || dist < 0.0 {
            return Err(Error::invalid_input(
                "losses and distance must be non-negative",
            ));
        }
        if kappa <= 0.0 {
            return Err(Error::invalid_input("kappa must be positive"));
        }
        Ok(Self {
            loss_u_before,
            loss_v_before,
            kappa,
            dist,
        })
    }
}

/// Upper bound on the loss of `u` after training on `v`, assuming a
/// kappa-Lipschitz loss whose value at `v` is driven to zero:
/// `l(u) + 2 * kappa * d(u, v) - l(v)`.
pub fn loss_bound(case: &LossBoundCase) -> f64 {
    case.loss_u_before + 2.0 * case.kappa * case.dist - case.loss_v_before
}

const INTEGRAL_PANELS: usize = 10_000;

/// Signed integral of `gaussian(lambda_l^2 / pi) - linear(lambda_l)` over
/// `[0, 8 * lambda_l]`; near zero by construction of the gaussian bandwidth.
pub fn kernel_integral_gap(lambda_l: f64) -> f64 {
    kernel_integral_gap_between(gaussian_lambda_from_linear(lambda_l), lambda_l)
}

/// Same integral with an explicit gaussian bandwidth.
///
/// Composite Simpson over `[0, 8 * lambda_l]` with 10^4 panels; the panel
/// count is even and places the linear kernel's kink at `lambda_l` exactly on
/// a grid node. The gaussian tail beyond the horizon is below 1e-12 relative
/// mass for any `lambda_g <= 2 * lambda_l^2 / pi`.
pub fn kernel_integral_gap_between(lambda_g: f64, lambda_l: f64) -> f64 {
    let upper = 8.0 * lambda_l;
    let h = upper / INTEGRAL_PANELS as f64;
    let gap = |s: f64| {
        similarity(s, SimilarityKind::Gaussian, lambda_g)
            - similarity(s, SimilarityKind::Linear, lambda_l)
    };
    let mut acc = gap(0.0) + gap(upper);
    for i in 1..INTEGRAL_PANELS {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * gap(i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(kind: SimilarityKind, alpha: f64) -> SimilarityConfig {
        SimilarityConfig { kind, alpha }
    }

    #[test]
    fn resolve_lambda_linear() {
        assert_eq!(
            resolve_lambda(&cfg(SimilarityKind::Linear, 0.5), 4.0).unwrap(),
            2.0
        );
        let d = 7.25;
        assert_eq!(
            resolve_lambda(&cfg(SimilarityKind::Linear, 1.0), d).unwrap(),
            d
        );
    }

    #[test]
    fn resolve_lambda_gaussian() {
        let lambda = resolve_lambda(&cfg(SimilarityKind::Gaussian, 0.5), 4.0).unwrap();
        assert!((lambda - 4.0 / PI).abs() < 1e-15);
        assert!((lambda - 1.2732395).abs() < 1e-6);
    }

    #[test]
    fn resolve_lambda_rejects_degenerate_dmax() {
        assert!(matches!(
            resolve_lambda(&cfg(SimilarityKind::Linear, 0.5), 0.0),
            Err(Error::DegeneratePool(_))
        ));
        assert!(resolve_lambda(&cfg(SimilarityKind::Linear, 1.5), 4.0).is_err());
    }

    #[test]
    fn gaussian_lambda_identities() {
        assert!((gaussian_lambda_from_linear(PI.sqrt()) - 1.0).abs() < 1e-15);
        assert!((gaussian_lambda_from_linear(PI) - PI).abs() < 1e-12);
        assert!((gaussian_lambda_from_linear(2.0) - 4.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn similarity_at_zero_is_one() {
        for kind in [SimilarityKind::Gaussian, SimilarityKind::Linear] {
            assert_eq!(similarity(0.0, kind, 3.7), 1.0);
        }
    }

    #[test]
    fn gaussian_anchor_at_linear_bandwidth() {
        // With lambda_g = lambda_l^2 / pi the gaussian score at d = lambda_l
        // is e^(-pi).
        for lambda_l in [0.25, 1.0, PI.sqrt(), 12.5] {
            let lambda_g = gaussian_lambda_from_linear(lambda_l);
            let s = similarity(lambda_l, SimilarityKind::Gaussian, lambda_g);
            assert!((s - (-PI).exp()).abs() < 1e-12, "lambda_l = {lambda_l}");
        }
        assert!(((-PI).exp() - 0.0432139).abs() < 1e-7);
    }

    #[test]
    fn linear_boundary_and_midpoint() {
        let lambda = 2.0;
        assert_eq!(similarity(lambda, SimilarityKind::Linear, lambda), 0.0);
        assert_eq!(
            similarity(2.0 * lambda, SimilarityKind::Linear, lambda),
            0.0
        );
        assert_eq!(
            similarity(lambda / 2.0, SimilarityKind::Linear, lambda),
            0.5
        );
    }

    #[test]
    fn update_score_cases() {
        assert!((update_score(0.5, 0.25, 0.8, false) - 0.3).abs() < 1e-15);
        assert_eq!(update_score(0.7, 0.0, 123.0, false), 0.7);
        let negative = update_score(0.8, 1.0, 0.9, false);
        assert!((negative + 0.1).abs() < 1e-15);
        assert_eq!(update_score(0.8, 1.0, 0.9, true), 0.0);
    }

    #[test]
    fn update_score_exact_zero_on_duplicates() {
        for sigma in [0.3, 0.77, 1.0, 42.5] {
            assert_eq!(update_score(sigma, 1.0, sigma, false), 0.0);
        }
    }

    #[test]
    fn loss_bound_cases() {
        let case = LossBoundCase::new(0.5, 0.8, 1.0, 0.2).unwrap();
        assert!((loss_bound(&case) - 0.1).abs() < 1e-15);

        let coincident = LossBoundCase::new(0.4, 0.4, 2.0, 0.0).unwrap();
        assert_eq!(loss_bound(&coincident), 0.0);

        let pure_distance = LossBoundCase::new(0.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(loss_bound(&pure_distance), 4.0);
    }

    #[test]
    fn loss_bound_case_validation() {
        assert!(LossBoundCase::new(-0.1, 0.0, 1.0, 0.0).is_err());
        assert!(LossBoundCase::new(0.1, 0.0, 0.0, 0.0).is_err());
        assert!(LossBoundCase::new(0.1, 0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn integral_gap_vanishes_for_matched_bandwidths() {
        assert!(kernel_integral_gap(1.0).abs() <= 1e-3);
        assert!(kernel_integral_gap(10.0).abs() <= 1e-2);
        assert!(kernel_integral_gap(0.1).abs() <= 1e-4);
    }

    #[test]
    fn integral_gap_positive_for_wider_gaussian() {
        let lambda_l = 1.0;
        let wider = 2.0 * lambda_l * lambda_l / PI;
        assert!(kernel_integral_gap_between(wider, lambda_l) > 0.0);
    }

    #[test]
    fn similarity_monotone_on_grid() {
        for kind in [SimilarityKind::Gaussian, SimilarityKind::Linear] {
            for lambda in [0.3, 1.0, 9.0] {
                let mut prev = f64::INFINITY;
                for step in 0..200 {
                    let d = step as f64 * 0.05;
                    let s = similarity(d, kind, lambda);
                    assert!((0.0..=1.0).contains(&s));
                    assert!(s <= prev);
                    prev = s;
                }
            }
        }
    }
}
