//! Closed-form covariances and squeezing results in the spring-dominated
//! band (Ω_m ≪ Ω ≪ Ω_OS ≪ γ). These are independent of the numerical engine
//! and serve as its oracles.
//!
//! Angles follow the engine's quadrature convention: ξ is measured from the
//! amplitude quadrature, and the squeezed quadrature is ξ₀ = ½·arctan δ.

use nalgebra::Vector2;
use serde::Serialize;

use crate::cavity::MeasurementPort;
use crate::consts::{C, HBAR, K_B, TAU};
use crate::error::{ensure, Error, Result};
use crate::quantum::Cov2;

/// S_ideal = δ²/(2 + δ² + 2√(1+δ²)) and ξ_min = ½·arctan δ.
pub fn ideal_squeeze(delta: f64) -> (f64, f64) {
    let r = (1.0 + delta * delta).sqrt();
    (delta * delta / (2.0 + delta * delta + 2.0 * r), 0.5 * delta.atan())
}

/// Squeezing angle with tan 2ξ₀ = δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezeAngle {
    pub xi0: f64,
    pub delta: f64,
}

impl SqueezeAngle {
    pub fn from_delta(delta: f64) -> Self {
        SqueezeAngle { xi0: 0.5 * delta.atan(), delta }
    }

    pub fn from_xi0(xi0: f64) -> Result<Self> {
        ensure(xi0.abs() < std::f64::consts::FRAC_PI_4, "xi0", || "must satisfy |ξ₀| < π/4".into())?;
        Ok(SqueezeAngle { xi0, delta: (2.0 * xi0).tan() })
    }
}

fn check_fraction(x: f64, field: &str) -> Result<()> {
    ensure((0.0..=1.0).contains(&x), field, || format!("must be in [0, 1], got {x}"))
}

/// σ_Q = [[1, −2E/δ], [−2E/δ, 1 + 4E/δ²]] and its smaller eigenvalue
/// S_Q = 1 − E(1 − S_ideal).
pub fn sigma_quantum_port(e: f64, delta: f64) -> Result<(Cov2, f64)> {
    check_fraction(e, "e")?;
    ensure(delta != 0.0 && delta.is_finite(), "delta", || "must be finite and nonzero".into())?;
    let off = -2.0 * e / delta;
    let m = Cov2::new(1.0, off, off, 1.0 + 4.0 * e / (delta * delta));
    Ok((m, 1.0 - e * (1.0 - ideal_squeeze(delta).0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalNoise {
    Thermal,
    /// Combined laser noise λ_RIN + λ_PN; transmission only.
    Cln,
    /// Reflection only.
    Rin,
    /// Reflection only.
    Pn,
}

/// Perturbation matrix added to σ_Q by one classical source of strength `lambda`.
pub fn perturbation_matrix(
    port: MeasurementPort,
    noise: ClassicalNoise,
    e_meas: f64,
    e_refl: f64,
    delta: f64,
    lambda: f64,
) -> Result<Cov2> {
    use ClassicalNoise::*;
    use MeasurementPort::*;
    check_fraction(e_meas, "e_meas")?;
    check_fraction(e_refl, "e_refl")?;
    ensure(lambda >= 0.0, "lambda", || format!("must be >= 0, got {lambda}"))?;
    ensure(delta != 0.0 && delta.is_finite(), "delta", || "must be finite and nonzero".into())?;
    let outer = |a: f64| Cov2::new(1.0, a, a, a * a);
    Ok(match (port, noise) {
        (_, Thermal) => outer(-1.0 / delta) * (e_meas * lambda),
        (Transmission, Cln) => Cov2::new(0.0, 0.0, 0.0, 1.0 / (delta * delta)) * (4.0 * e_meas * e_refl * lambda),
        (Reflection, Rin) => outer(-(2.0 * e_refl + delta * delta) / delta) * lambda,
        (Reflection, Pn) => outer((1.0 - 2.0 * e_refl) / delta) * lambda,
        (p, n) => {
            return Err(Error::invalid("noise", format!("{n:?} has no closed form at the {p:?} port")));
        }
    })
}

/// σ_Q plus one classical perturbation.
pub fn sigma_with_classical(
    port: MeasurementPort,
    noise: ClassicalNoise,
    e_meas: f64,
    e_refl: f64,
    delta: f64,
    lambda: f64,
) -> Result<Cov2> {
    let (q, _) = sigma_quantum_port(e_meas, delta)?;
    Ok(q + perturbation_matrix(port, noise, e_meas, e_refl, delta, lambda)?)
}

fn cap(delta: f64) -> f64 {
    let r = (1.0 + delta * delta).sqrt();
    2.0 * (1.0 + delta * delta + r)
}

/// First-order squeezed-quadrature PSD in transmission.
pub fn perturbed_trans_squeezing(
    e_t: f64,
    e_r: f64,
    delta: f64,
    lambda_th: f64,
    lambda_rin: f64,
    lambda_pn: f64,
) -> Result<f64> {
    let (_, s_q) = sigma_quantum_port(e_t, delta)?;
    check_fraction(e_r, "e_r")?;
    let k = cap(delta);
    let th = e_t * lambda_th * (1.0 + delta * delta) / k;
    let laser = 4.0 * e_t * e_r * (lambda_rin + lambda_pn) / k;
    Ok(s_q + th + laser)
}

/// Changes of the minor and major ellipse axes and rotation of the squeezed
/// quadrature (rad, positive counter-clockwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationResult {
    pub d_squeeze: f64,
    pub d_antisqueeze: f64,
    pub rotation: f64,
}

/// First-order eigen-perturbation of σ_Q by one classical source, with full
/// escape-efficiency dependence.
pub fn perturbation_effects(
    port: MeasurementPort,
    noise: ClassicalNoise,
    e_meas: f64,
    e_refl: f64,
    xi0: f64,
    lambda: f64,
) -> Result<PerturbationResult> {
    ensure(xi0 != 0.0, "xi0", || "degenerate ellipse at ξ₀ = 0".into())?;
    let ang = SqueezeAngle::from_xi0(xi0)?;
    let dm = perturbation_matrix(port, noise, e_meas, e_refl, ang.delta, lambda)?;
    let (c, s) = (xi0.cos(), xi0.sin());
    let v0 = Vector2::new(c, s);
    let v1 = Vector2::new(-s, c);
    let t = xi0.tan();
    let (s_min, s_max) = (1.0 - e_meas + e_meas * t * t, 1.0 - e_meas + e_meas / (t * t));
    ensure(s_max != s_min, "e_meas", || "degenerate ellipse at E = 0".into())?;
    Ok(PerturbationResult {
        d_squeeze: v0.dot(&(dm * v0)),
        d_antisqueeze: v1.dot(&(dm * v1)),
        rotation: v1.dot(&(dm * v0)) / (s_min - s_max),
    })
}

/// Unit-strength coefficients in their simplified trigonometric form. The
/// reflection laser-noise rows assume E^R = 1 and ignore `e_meas` there.
pub fn simplified_coefficients(
    port: MeasurementPort,
    noise: ClassicalNoise,
    e_meas: f64,
    xi0: f64,
) -> Result<PerturbationResult> {
    use ClassicalNoise::*;
    use MeasurementPort::*;
    ensure(xi0 != 0.0 && xi0.abs() < std::f64::consts::FRAC_PI_4, "xi0", || {
        "must satisfy 0 < |ξ₀| < π/4".into()
    })?;
    let (sec2, csc2) = (1.0 / xi0.cos().powi(2), 1.0 / xi0.sin().powi(2));
    let r = |d_squeeze, d_antisqueeze, rotation| PerturbationResult { d_squeeze, d_antisqueeze, rotation };
    Ok(match (port, noise) {
        (_, Thermal) => r(0.25 * e_meas * sec2, 0.25 * e_meas * csc2, (2.0 * xi0).tan() / 8.0),
        (Transmission, Cln) => {
            let c2 = (2.0 * xi0).cos().powi(2);
            r(e_meas * c2 * sec2, e_meas * c2 * csc2, -0.25 * (4.0 * xi0).sin())
        }
        (Reflection, Rin) => r(
            16.0 * xi0.sin().powi(6) / (4.0 * xi0).sin().powi(2),
            xi0.cos().powi(2) / xi0.tan().powi(2) / (2.0 * xi0).cos().powi(2),
            -(2.0 * xi0).tan().powi(3) / 8.0,
        ),
        (Reflection, Pn) => r(0.25 * sec2, 0.25 * csc2, (2.0 * xi0).tan() / 8.0),
        (p, n) => return Err(Error::invalid("noise", format!("{n:?} has no closed form at the {p:?} port"))),
    })
}

/// Eigenvalues (minor, major) and minor-axis angle in (−π/2, π/2] of a
/// symmetric 2×2 covariance.
pub fn ellipse(m: &Cov2) -> (f64, f64, f64) {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let major = 0.5 * (2.0 * b).atan2(a - d);
    let mut minor = major + std::f64::consts::FRAC_PI_2;
    if minor > std::f64::consts::FRAC_PI_2 {
        minor -= std::f64::consts::PI;
    }
    (mean - rad, mean + rad, minor)
}

/// Same three quantities from direct eigendecomposition of σ_Q + δσ.
pub fn exact_effects(
    port: MeasurementPort,
    noise: ClassicalNoise,
    e_meas: f64,
    e_refl: f64,
    xi0: f64,
    lambda: f64,
) -> Result<PerturbationResult> {
    let ang = SqueezeAngle::from_xi0(xi0)?;
    let (q, _) = sigma_quantum_port(e_meas, ang.delta)?;
    let full = q + perturbation_matrix(port, noise, e_meas, e_refl, ang.delta, lambda)?;
    let (q_min, q_max, q_ang) = ellipse(&q);
    let (f_min, f_max, f_ang) = ellipse(&full);
    Ok(PerturbationResult { d_squeeze: f_min - q_min, d_antisqueeze: f_max - q_max, rotation: f_ang - q_ang })
}

/// Determinant of the single-port state, (4E(1−E) + δ²)/δ². With `multiport`
/// the joint reflection+transmission state is used and `e` is the loss fraction.
pub fn total_uncertainty(e: f64, delta: f64) -> Result<f64> {
    check_fraction(e, "e")?;
    ensure(delta != 0.0 && delta.is_finite(), "delta", || "must be finite and nonzero".into())?;
    Ok((4.0 * e * (1.0 - e) + delta * delta) / (delta * delta))
}

/// Joint determinant of both output ports as a function of the fraction
/// `e_loss` of the signal lost to the third port.
pub fn multiport_total_uncertainty(e_loss: f64, delta: f64) -> Result<f64> {
    total_uncertainty(e_loss, delta)
}

/// Inputs to the back-of-envelope displacement estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QrpnInputs {
    pub mass: f64,
    pub p_circ: f64,
    /// Transmission of the input mirror.
    pub t_i: f64,
    pub delta: f64,
    pub wavelength: f64,
    pub f_m: f64,
    pub q: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QrpnEstimate {
    /// Radiation-pressure displacement ASD, m/√Hz.
    pub x_qrpn: f64,
    /// Structural thermal displacement ASD above resonance, m/√Hz.
    pub x_th: f64,
    pub ratio: f64,
}

/// Free-mass QRPN and thermal displacement above the mechanical resonance.
pub fn qrpn_closed_forms(p: &QrpnInputs, f: f64) -> Result<QrpnEstimate> {
    ensure(f > 0.0, "f", || format!("must be > 0 Hz, got {f}"))?;
    ensure(p.mass > 0.0 && p.p_circ >= 0.0 && p.t_i > 0.0, "qrpn", || "mass, power and T_i must be positive".into())?;
    ensure(p.q > 0.0 && p.f_m > 0.0 && p.temperature >= 0.0, "qrpn", || "mode parameters must be positive".into())?;
    let w = TAU * f;
    let w0 = TAU * C / p.wavelength;
    let wm = TAU * p.f_m;
    let x_qrpn = (32.0 * HBAR * w0 * p.p_circ / (p.t_i * (1.0 + p.delta * p.delta))).sqrt() / (p.mass * C * w * w);
    let x_th = (4.0 * K_B * p.temperature * wm * wm / (w.powi(5) * p.mass * p.q)).sqrt();
    Ok(QrpnEstimate { x_qrpn, x_th, ratio: x_qrpn / x_th })
}

/// Ratio of QRPN to thermal ASD written out directly:
/// √(8ħω₀ωP·Q/(k_B·T·m·T_i(1+δ²)))/(ω_m·c).
pub fn qrpn_thermal_ratio(p: &QrpnInputs, f: f64) -> f64 {
    let w = TAU * f;
    let w0 = TAU * C / p.wavelength;
    (8.0 * HBAR * w0 * w * p.p_circ * p.q / (K_B * p.temperature * p.mass * p.t_i * (1.0 + p.delta * p.delta))).sqrt()
        / (TAU * p.f_m * C)
}

/// Effective shot-noise power fluctuation √((T_total/T_i)·2ħω₀P_in), W/√Hz.
pub fn effective_power_noise(p_in: f64, t_total: f64, t_i: f64, wavelength: f64) -> f64 {
    (t_total / t_i * 2.0 * HBAR * TAU * C / wavelength * p_in).sqrt()
}

/// Displacement ASD projected from a measured amplitude-modulation response
/// and a displacement calibration: |P̃_eff·TF_AM/TF_cal|.
pub fn qrpn_projection(
    tf_am: &[num_complex::Complex64],
    tf_cal: &[num_complex::Complex64],
    p_in: f64,
    t_total: f64,
    t_i: f64,
    wavelength: f64,
) -> Result<Vec<f64>> {
    ensure(tf_am.len() == tf_cal.len(), "tf_cal", || "length must match tf_am".into())?;
    ensure(tf_cal.iter().all(|z| z.norm() > 0.0), "tf_cal", || "must be nonzero on the grid".into())?;
    let p_eff = effective_power_noise(p_in, t_total, t_i, wavelength);
    Ok(tf_am.iter().zip(tf_cal).map(|(a, c)| (p_eff * a / c).norm()).collect())
}
