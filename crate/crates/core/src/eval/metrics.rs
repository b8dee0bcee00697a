use rand::Rng as _;

use crate::error::{ensure, Result};
use crate::rng::stream;
use crate::training::angular_difference;

/// Mean absolute wrapped angular error in degrees.
pub fn mae_degrees(theta: &[f64], theta_hat: &[f64]) -> Result<f64> {
    let errs = abs_errors_deg(theta, theta_hat)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Per-sample |Δθ| in degrees.
pub fn abs_errors_deg(theta: &[f64], theta_hat: &[f64]) -> Result<Vec<f64>> {
    ensure!(!theta.is_empty(), Precondition, "MAE needs at least one sample");
    ensure!(
        theta.len() == theta_hat.len(),
        Precondition,
        "label and prediction counts differ ({} vs {})",
        theta.len(),
        theta_hat.len()
    );
    Ok(theta.iter().zip(theta_hat).map(|(&t, &p)| angular_difference(t, p).abs().to_degrees()).collect())
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Percentile bootstrap 95% interval of the mean of `values`.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    ensure!(!values.is_empty(), Precondition, "bootstrap needs at least one value");
    ensure!(resamples >= 1, Precondition, "bootstrap needs at least one resample");
    let n = values.len();
    let mut rng = stream(seed, &[]);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((quantile(&means, 0.025), quantile(&means, 0.975)))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deg(v: &[f64]) -> Vec<f64> {
        v.iter().map(|d| d.to_radians()).collect()
    }

    #[test]
    fn unit_examples() {
        assert_eq!(mae_degrees(&deg(&[12.0, -40.0]), &deg(&[12.0, -40.0])).unwrap(), 0.0);
        assert!((mae_degrees(&deg(&[10.0, -10.0]), &deg(&[0.0, 0.0])).unwrap() - 10.0).abs() < 1e-12);
        assert!((mae_degrees(&deg(&[170.0]), &deg(&[-170.0])).unwrap() - 20.0).abs() < 1e-9);
        assert!(mae_degrees(&[], &[]).is_err());
        assert!(mae_degrees(&[0.0], &[]).is_err());
    }

    #[test]
    fn independent_uniforms_average_sixty_degrees() {
        let mut rng = stream(3, &[]);
        let n = 20_000;
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-90.0f64..90.0).to_radians()).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-90.0f64..90.0).to_radians()).collect();
        let mae = mae_degrees(&t, &p).unwrap();
        assert!((mae - 60.0).abs() < 5.0, "{mae}");
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let vals: Vec<f64> = (0..200).map(|i| (i % 17) as f64).collect();
        let mean = vals.iter().sum::<f64>() / 200.0;
        let (lo, hi) = bootstrap_mean_ci(&vals, BOOTSTRAP_RESAMPLES, 1).unwrap();
        assert!(lo < mean && mean < hi);
        assert_eq!((lo, hi), bootstrap_mean_ci(&vals, BOOTSTRAP_RESAMPLES, 1).unwrap());
        assert_eq!(bootstrap_mean_ci(&[4.0], 10, 0).unwrap(), (4.0, 4.0));
    }

    proptest! {
        #[test]
        fn symmetric_periodic_and_bounded(
            pairs in prop::collection::vec((-7.0f64..7.0, -7.0f64..7.0), 1..20),
            k in -3i32..3,
        ) {
            let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mae_degrees(&t, &p).unwrap();
            prop_assert!((0.0..=180.0 + 1e-9).contains(&m));
            prop_assert!((m - mae_degrees(&p, &t).unwrap()).abs() < 1e-9);
            let shifted: Vec<f64> = t.iter().map(|x| x + k as f64 * std::f64::consts::TAU).collect();
            prop_assert!((m - mae_degrees(&shifted, &p).unwrap()).abs() < 1e-7);
        }
    }
}
