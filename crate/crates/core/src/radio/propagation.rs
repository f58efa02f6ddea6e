use num_complex::Complex64;

use super::RadioConstants;
use crate::error::{Error, Result};

/// Two-ray ground-reflection path loss in dB at horizontal distance `d`.
///
/// The direct and ground-reflected rays interfere with phase difference
/// `2π(d_los − d_ref)/λ`; the reflection coefficient uses the grazing angle
/// of the reflected ray and the ground permittivity. The interference term is
/// the magnitude of the complex phasor sum `1 + Γ·e^{jφ}`.
pub fn two_ray_loss_db(d: f64, c: &RadioConstants) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    let d_los = (d * d + (c.h_t - c.h_r).powi(2)).sqrt();
    let d_ref = (d * d + (c.h_t + c.h_r).powi(2)).sqrt();
    let phi = 2.0 * std::f64::consts::PI * (d_los - d_ref) / c.lambda_m;
    let sin_theta = (c.h_t + c.h_r) / d_ref;
    let cos_theta = d / d_ref;
    let root = (c.epsilon_ground - cos_theta).sqrt();
    let gamma = (sin_theta - root) / (sin_theta + root);
    let interference = (Complex64::new(1.0, 0.0) + gamma * Complex64::from_polar(1.0, phi)).norm();
    Ok(20.0 * (4.0 * std::f64::consts::PI * (d / c.lambda_m) / interference).log10())
}

/// Free-space loss `20·log10(4πd/λ)`.
pub fn free_space_loss_db(d: f64, c: &RadioConstants) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d / c.lambda_m).log10()
}
