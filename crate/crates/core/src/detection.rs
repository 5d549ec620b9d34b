//! Single-photodiode homodyne readout and correlation-based verification of
//! sub-shot-noise light.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quantum::{quadrature_noise, Cov2};

/// Signal and local oscillator combined on one splitter. `t2` is the power
/// transmission seen by the signal and `r2 = 1 − t2` the reflection seen by
/// the LO. Amplitudes are carrier √W before the splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneSetup {
    pub t2: f64,
    pub r2: f64,
    pub e_signal: f64,
    pub e_lo: f64,
    /// LO phase relative to the signal carrier, rad.
    pub theta: f64,
}

impl HomodyneSetup {
    pub fn validate(&self) -> Result<()> {
        ensure(
            (0.0..=1.0).contains(&self.t2) && (self.t2 + self.r2 - 1.0).abs() <= 1e-12,
            "detection.t2",
            || format!("t2 + r2 must equal 1, got {}", self.t2 + self.r2),
        )?;
        ensure(self.e_signal >= 0.0 && self.e_lo >= 0.0, "detection", || "amplitudes must be >= 0".into())
    }

    fn resultant(&self) -> Complex64 {
        self.t2.sqrt() * self.e_signal + Complex64::from_polar(self.r2.sqrt() * self.e_lo, self.theta)
    }

    /// Detected carrier power, W.
    pub fn detected_power(&self) -> f64 {
        self.resultant().norm_sqr()
    }
}

/// Readout quadrature relative to the signal (φ_S) and to the LO (φ_LO).
pub fn homodyne_angles(setup: &HomodyneSetup) -> Result<(f64, f64)> {
    setup.validate()?;
    let (ts, rl) = (setup.t2.sqrt() * setup.e_signal, setup.r2.sqrt() * setup.e_lo);
    let (s, c) = setup.theta.sin_cos();
    let res = setup.resultant();
    if res.norm() <= 1e-15 * (ts + rl).max(f64::MIN_POSITIVE) {
        return Err(Error::invalid("detection", "signal and LO cancel; no carrier at the detector"));
    }
    let phi_s = (rl * s).atan2(rl * c + ts);
    let phi_lo = (-ts * s).atan2(rl + ts * c);
    Ok((phi_s, phi_lo))
}

/// Measured PSD relative to shot noise with a shot-noise-limited LO:
/// t²·S_S + r².
pub fn homodyne_spectrum(s_signal: f64, t2: f64, r2: f64) -> Result<f64> {
    ensure(s_signal >= 0.0, "s_signal", || format!("must be >= 0, got {s_signal}"))?;
    Ok(t2 * s_signal + r2)
}

/// Homodyne reading of a signal covariance, evaluated at φ_S.
pub fn homodyne_measured(cov: &Cov2, setup: &HomodyneSetup) -> Result<f64> {
    let (phi_s, _) = homodyne_angles(setup)?;
    homodyne_spectrum(quadrature_noise(cov, phi_s), setup.t2, setup.r2)
}

/// LO amplitude and phase that read quadrature `phi_s` while the detected
/// power stays at `p_det`.
pub fn lo_for_quadrature(t2: f64, e_signal: f64, phi_s: f64, p_det: f64) -> Result<(f64, f64)> {
    ensure((0.0..1.0).contains(&t2), "detection.t2", || "must be in [0, 1)".into())?;
    ensure(p_det > 0.0, "p_det", || "must be > 0 W".into())?;
    let lo = Complex64::from_polar(p_det.sqrt(), phi_s) - t2.sqrt() * e_signal;
    Ok((lo.norm() / (1.0 - t2).sqrt(), lo.arg()))
}

/// Normalized cross-correlation C = η(R−1)/(R+1) of two detectors sharing a
/// beam with relative noise R, with dark-noise efficiency
/// η = [(1 + S_da/(1+R))(1 + S_db/(1+R))]^(−1/2).
pub fn correlation(r_rel: f64, s_da: f64, s_db: f64) -> Result<f64> {
    ensure(r_rel > 0.0 && r_rel.is_finite(), "r_rel", || format!("must be > 0, got {r_rel}"))?;
    ensure(s_da >= 0.0 && s_db >= 0.0, "dark noise", || "PSDs must be >= 0".into())?;
    let eta = ((1.0 + s_da / (1.0 + r_rel)) * (1.0 + s_db / (1.0 + r_rel))).powf(-0.5);
    Ok(eta * (r_rel - 1.0) / (r_rel + 1.0))
}

/// Inverse of [`correlation`] without dark noise: R = (1 + C)/(1 − C).
pub fn noise_from_correlation(c: f64) -> Result<f64> {
    ensure(c.abs() < 1.0, "c", || format!("must satisfy |C| < 1, got {c}"))?;
    Ok((1.0 + c) / (1.0 - c))
}
