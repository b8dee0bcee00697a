use crate::error::{ensure, Result};

/// Folds a full-circle azimuth onto the frontal half-plane.
///
/// Azimuth increases clockwise from the front (0° front, 90° right). Rear
/// directions are mirrored across the coronal plane, so 150° maps to 30° and
/// 300° to −60°.
pub fn wrap_azimuth_to_frontal(azimuth_deg: f64) -> Result<f64> {
    ensure!(
        (0.0..360.0).contains(&azimuth_deg),
        Precondition,
        "azimuth {azimuth_deg} outside [0, 360)"
    );
    Ok(if azimuth_deg <= 90.0 {
        azimuth_deg
    } else if azimuth_deg < 270.0 {
        180.0 - azimuth_deg
    } else {
        azimuth_deg - 360.0
    })
}

/// Re-expresses a frontal azimuth in `[0, 360)`.
pub fn frontal_to_full_circle(azimuth_deg: f64) -> f64 {
    let w = azimuth_deg.rem_euclid(360.0);
    // rem_euclid of a tiny negative value rounds up to exactly 360
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fold_examples() {
        assert_eq!(wrap_azimuth_to_frontal(0.0).unwrap(), 0.0);
        assert_eq!(wrap_azimuth_to_frontal(150.0).unwrap(), 30.0);
        assert_eq!(wrap_azimuth_to_frontal(300.0).unwrap(), -60.0);
        assert_eq!(wrap_azimuth_to_frontal(90.0).unwrap(), 90.0);
        assert_eq!(wrap_azimuth_to_frontal(270.0).unwrap(), -90.0);
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(wrap_azimuth_to_frontal(360.0).is_err());
        assert!(wrap_azimuth_to_frontal(-1.0).is_err());
        assert!(wrap_azimuth_to_frontal(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn output_is_frontal(az in 0.0f64..360.0) {
            let w = wrap_azimuth_to_frontal(az).unwrap();
            prop_assert!((-90.0..=90.0).contains(&w));
        }

        #[test]
        fn idempotent_on_frontal_inputs(az in -90.0f64..=90.0) {
            let w = wrap_azimuth_to_frontal(frontal_to_full_circle(az)).unwrap();
            prop_assert!((w - az).abs() < 1e-9);
        }
    }
}
