use std::f64::consts::PI;

use crate::error::{ensure, Result};

/// Shortest signed angle from `theta_hat` to `theta`, in [−π, π].
pub fn angular_difference(theta: f64, theta_hat: f64) -> f64 {
    let d = theta - theta_hat;
    d.sin().atan2(d.cos())
}

/// Mean squared wrapped angular error and its gradient with respect to the
/// predictions, −2·Δθᵢ/N.
pub fn circular_mse_loss(theta: &[f64], theta_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure!(!theta.is_empty(), Precondition, "loss needs at least one sample");
    ensure!(
        theta.len() == theta_hat.len(),
        Precondition,
        "label and prediction counts differ ({} vs {})",
        theta.len(),
        theta_hat.len()
    );
    let n = theta.len() as f64;
    let diffs: Vec<f64> = theta.iter().zip(theta_hat).map(|(&t, &p)| angular_difference(t, p)).collect();
    let loss = diffs.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diffs.iter().map(|d| -2.0 * d / n).collect();
    Ok((loss, grad))
}

/// Upper bound of the loss: every error is at most π.
pub const MAX_LOSS: f64 = PI * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_examples() {
        assert_eq!(angular_difference(0.3, 0.3), 0.0);
        // 179° − (−179°) = 358°, which wraps to the 2° short way round.
        let d = angular_difference(179f64.to_radians(), (-179f64).to_radians());
        assert!((d + 2f64.to_radians()).abs() < 1e-12);
        let d = angular_difference((-179f64).to_radians(), 179f64.to_radians());
        assert!((d - 2f64.to_radians()).abs() < 1e-12);
        let (loss, grad) = circular_mse_loss(&[0.0], &[0.5]).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
        assert!((grad[0] - 1.0).abs() < 1e-15);
        let (loss, grad) = circular_mse_loss(&[0.1, -2.0], &[0.1, -2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        assert!(circular_mse_loss(&[], &[]).is_err());
        assert!(circular_mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::Rng as _;
        let mut rng = crate::rng::stream(7, &[]);
        let mut checked = 0;
        while checked < 20 {
            let n = rng.random_range(1..6);
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            // Stay clear of the wrap discontinuity at ±π.
            if t.iter().zip(&p).any(|(&a, &b)| angular_difference(a, b).abs() > PI - 1e-2) {
                continue;
            }
            let (_, g) = circular_mse_loss(&t, &p).unwrap();
            let h = 1e-6;
            for i in 0..n {
                let (mut up, mut dn) = (p.clone(), p.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (circular_mse_loss(&t, &up).unwrap().0 - circular_mse_loss(&t, &dn).unwrap().0) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-3);
                assert!(rel < 1e-6, "fd {fd} vs analytic {}", g[i]);
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn periodic_bounded_and_non_negative(t in -10.0f64..10.0, p in -10.0f64..10.0) {
            let d = angular_difference(t, p);
            prop_assert!(d.abs() <= PI + 1e-12);
            prop_assert!((angular_difference(t + 2.0 * PI, p) - d).abs() < 1e-9
                || (angular_difference(t + 2.0 * PI, p).abs() - PI).abs() < 1e-9);
            let (loss, g) = circular_mse_loss(&[t], &[p]).unwrap();
            let (loss2, g2) = circular_mse_loss(&[t + 2.0 * PI], &[p]).unwrap();
            prop_assert!(loss >= 0.0 && loss <= MAX_LOSS + 1e-9);
            prop_assert!((loss - loss2).abs() < 1e-8);
            if (d.abs() - PI).abs() > 1e-6 {
                prop_assert!((g[0] - g2[0]).abs() < 1e-8);
            }
        }
    }
}
