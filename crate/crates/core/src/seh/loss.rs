use crate::error::{Result, SaeError};
use crate::scalar::Scalar;

use super::config::{LossVariant, RegressionForm, SehConfig};

/// Evidence-head loss and its derivative with respect to each `λ_i`.
///
/// `difficulty = mean((f(λ_i) − l_cls_i)²)` with `f(λ) = 1/(λ+ε)` or `−log λ`;
/// `entropy = mean((λ_i − 1/(H_i+ε))²)` where `H_i` is a detached target.
/// `Dual` returns `difficulty + β · entropy`.
pub fn seh_loss<T: Scalar>(
    lambda: &[T],
    l_cls: &[T],
    entropy_h: &[T],
    cfg: &SehConfig,
) -> Result<(T, Vec<T>)> {
    let n = lambda.len();
    if n == 0 || l_cls.len() != n || entropy_h.len() != n {
        return Err(SaeError::invalid(format!(
            "loss inputs must share a positive length: {} / {} / {}",
            n,
            l_cls.len(),
            entropy_h.len()
        )));
    }
    if lambda.iter().any(|&l| !(l > T::zero())) {
        return Err(SaeError::invalid("evidence strengths must be positive"));
    }

    let eps = T::of(cfg.epsilon);
    let nt = T::from_count(n);
    let two = T::of(2.0);
    let (w_diff, w_ent) = match cfg.loss_variant {
        LossVariant::Dual => (T::one(), T::of(cfg.beta)),
        LossVariant::DifficultyOnly => (T::one(), T::zero()),
        LossVariant::EntropyOnly => (T::zero(), T::one()),
    };

    let mut loss = T::zero();
    let mut grad = vec![T::zero(); n];
    for i in 0..n {
        let lam = lambda[i];
        if w_diff != T::zero() {
            let (f, df) = match cfg.regression_form {
                RegressionForm::Inverse => {
                    let inv = T::one() / (lam + eps);
                    (inv, -inv * inv)
                }
                RegressionForm::Log => (-lam.ln(), -T::one() / lam),
            };
            let r = f - l_cls[i];
            loss = loss + w_diff * r * r / nt;
            grad[i] = grad[i] + w_diff * two * r * df / nt;
        }
        if w_ent != T::zero() {
            let r = lam - T::one() / (entropy_h[i] + eps);
            loss = loss + w_ent * r * r / nt;
            grad[i] = grad[i] + w_ent * two * r / nt;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(variant: LossVariant, form: RegressionForm) -> SehConfig {
        let mut c = SehConfig::new(4, 2);
        c.loss_variant = variant;
        c.regression_form = form;
        c
    }

    #[test]
    fn hand_evaluated_examples() {
        let c = cfg(LossVariant::Dual, RegressionForm::Inverse);
        let (l, _) = seh_loss(&[1.0], &[0.5], &[1.0], &c).unwrap();
        let term1 = (1.0f64 / 1.001 - 0.5).powi(2);
        let term2 = 0.5 * (1.0f64 - 1.0 / 1.001).powi(2);
        assert_abs_diff_eq!(l, term1 + term2, epsilon = 1e-15);
        assert_abs_diff_eq!(l, 0.249_002_5, epsilon = 1e-6);

        let c = cfg(LossVariant::DifficultyOnly, RegressionForm::Inverse);
        let (l, _) = seh_loss(&[1.0], &[0.5], &[1.0], &c).unwrap();
        assert_abs_diff_eq!(l, 0.249_002, epsilon = 1e-6);
    }

    #[test]
    fn vanishing_residuals_give_zero_loss() {
        let c = cfg(LossVariant::Dual, RegressionForm::Inverse);
        let eps = c.epsilon;
        let l_cls = [0.5, 2.0, 0.1];
        let lambda: Vec<f64> = l_cls.iter().map(|l| 1.0 / l - eps).collect();
        let h: Vec<f64> = lambda.iter().map(|l| 1.0 / l - eps).collect();
        let (loss, grad) = seh_loss(&lambda, &l_cls, &h, &c).unwrap();
        assert!(loss < 1e-24);
        assert!(grad.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let c = cfg(LossVariant::Dual, RegressionForm::Inverse);
        assert!(seh_loss(&[1.0, 2.0], &[0.5], &[1.0, 1.0], &c).is_err());
        assert!(seh_loss::<f64>(&[], &[], &[], &c).is_err());
        assert!(seh_loss(&[0.0], &[0.5], &[1.0], &c).is_err());
    }

    proptest! {
        #[test]
        fn dual_is_difficulty_plus_beta_entropy(
            rows in prop::collection::vec((0.01f64..50.0, 0.0f64..3.0, 0.0f64..2.0), 1..16),
            beta in 0.0f64..2.0,
            log_form in any::<bool>(),
        ) {
            let lam: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let l: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let h: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let form = if log_form { RegressionForm::Log } else { RegressionForm::Inverse };
            let mut c = cfg(LossVariant::Dual, form);
            c.beta = beta;
            let (dual, gd) = seh_loss(&lam, &l, &h, &c).unwrap();
            c.loss_variant = LossVariant::DifficultyOnly;
            let (diff, g1) = seh_loss(&lam, &l, &h, &c).unwrap();
            c.loss_variant = LossVariant::EntropyOnly;
            let (ent, g2) = seh_loss(&lam, &l, &h, &c).unwrap();
            prop_assert!((dual - (diff + beta * ent)).abs() <= 1e-12 * dual.abs().max(1.0));
            for i in 0..lam.len() {
                prop_assert!((gd[i] - (g1[i] + beta * g2[i])).abs() <= 1e-12 * gd[i].abs().max(1.0));
            }
        }

        #[test]
        fn gradient_matches_central_difference(
            rows in prop::collection::vec((0.05f64..20.0, 0.0f64..3.0, 0.0f64..2.0), 1..8),
            log_form in any::<bool>(),
        ) {
            let lam: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let l: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let h: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let form = if log_form { RegressionForm::Log } else { RegressionForm::Inverse };
            let c = cfg(LossVariant::Dual, form);
            let (_, g) = seh_loss(&lam, &l, &h, &c).unwrap();
            let n = lam.len() as f64;
            for i in 0..lam.len() {
                // Only term i depends on λ_i; difference it alone so large
                // neighbouring terms do not swamp the quotient.
                let term = |v: f64| seh_loss(&[v], &l[i..=i], &h[i..=i], &c).unwrap().0 / n;
                let step = 1e-6 * lam[i];
                let fd = (term(lam[i] + step) - term(lam[i] - step)) / (2.0 * step);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3), "i={} fd={} g={}", i, fd, g[i]);
            }
        }
    }
}
