//! Optical configuration, derived cavity quantities and classical laser noise
//! normalized to shot noise.

use serde::{Deserialize, Serialize};

use crate::consts::{photon_energy, C, HBAR, PI, TAU};
use crate::error::{ensure, finite, Error, Result};

/// Which output port is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementPort {
    Transmission,
    Reflection,
}

/// How the optical power is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "watts", rename_all = "snake_case")]
pub enum PowerSpec {
    /// Laser power delivered to the input fiber/mirror, W.
    Input(f64),
    /// Intracavity power the cavity would hold on resonance, W. The input
    /// power is then independent of detuning and P_cav(δ) = P0/(1+δ²).
    IntracavityAtResonance(f64),
}

impl PowerSpec {
    pub fn watts(&self) -> f64 {
        match *self {
            PowerSpec::Input(p) | PowerSpec::IntracavityAtResonance(p) => p,
        }
    }

    pub fn with_watts(&self, w: f64) -> Self {
        match self {
            PowerSpec::Input(_) => PowerSpec::Input(w),
            PowerSpec::IntracavityAtResonance(_) => PowerSpec::IntracavityAtResonance(w),
        }
    }
}

/// Optical parameters. Transmissions and losses are power fractions; the
/// detuning is in units of the HWHM linewidth, positive for blue detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    pub length: f64,
    pub wavelength: f64,
    pub t1: f64,
    pub t2: f64,
    pub l1: f64,
    pub l2: f64,
    pub detuning: f64,
    pub power: PowerSpec,
    pub mode_matching: f64,
    pub port: MeasurementPort,
}

impl CavityConfig {
    pub fn validate(&self) -> Result<()> {
        let pos_finite = |x: f64| x.is_finite() && x > 0.0;
        ensure(pos_finite(self.length), "cavity.length", || {
            format!("must be > 0 m, got {}", self.length)
        })?;
        ensure(pos_finite(self.wavelength), "cavity.wavelength", || {
            format!("must be > 0 m, got {}", self.wavelength)
        })?;
        for (name, v) in [("cavity.t1", self.t1), ("cavity.t2", self.t2)] {
            ensure(v > 0.0 && v < 1.0, name, || format!("must lie in (0, 1), got {v}"))?;
        }
        for (name, v) in [("cavity.l1", self.l1), ("cavity.l2", self.l2)] {
            ensure((0.0..1.0).contains(&v), name, || {
                format!("must lie in [0, 1), got {v}")
            })?;
        }
        let sum = self.t1 + self.t2 + self.l1 + self.l2;
        ensure(sum < 1.0, "cavity.t1+t2+l1+l2", || {
            format!("sum must be < 1, got {sum}")
        })?;
        ensure(self.detuning.is_finite(), "cavity.detuning", || {
            "must be finite".into()
        })?;
        let mm = self.mode_matching;
        ensure(mm > 0.0 && mm <= 1.0, "cavity.mode_matching", || {
            format!("must lie in (0, 1], got {mm}")
        })?;
        let w = self.power.watts();
        ensure(w.is_finite() && w >= 0.0, "laser.power", || {
            format!("must be >= 0 W, got {w}")
        })?;
        Ok(())
    }

    /// 𝓣 = T₁ + T₂ + L₂.
    pub fn total_loss(&self) -> f64 {
        self.t1 + self.t2 + self.l2
    }

    /// HWHM linewidth in rad/s, γ = c𝓣/4L.
    pub fn gamma_rad(&self) -> f64 {
        C * self.total_loss() / (4.0 * self.length)
    }
}

/// Quantities derived from a [`CavityConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCavity {
    /// HWHM linewidth, Hz.
    pub gamma_hwhm: f64,
    pub finesse: f64,
    pub total_loss: f64,
    pub escape_refl: f64,
    pub escape_trans: f64,
    /// Intracavity power at the configured detuning, W.
    pub p_cav: f64,
    /// Laser power required upstream of the mode-matching loss, W.
    pub p_in: f64,
    /// Input power coupled into the cavity mode, W. Equals `p_in·mode_matching`.
    pub p_coupled: f64,
    pub p_trans: f64,
    /// θ_δ = arctan(−δ), rad.
    pub carrier_rotation: f64,
    /// ξ₀ = ½·arctan δ, rad.
    pub xi0: f64,
}

impl DerivedCavity {
    pub fn gamma_rad(&self) -> f64 {
        TAU * self.gamma_hwhm
    }
}

/// Derived cavity quantities (approximate, high-finesse column).
pub fn derive(cfg: &CavityConfig) -> Result<DerivedCavity> {
    cfg.validate()?;
    let tt = cfg.total_loss();
    let er = cfg.t1 / tt;
    let et = cfg.t2 / tt;
    let d2 = 1.0 + cfg.detuning * cfg.detuning;
    let buildup = 4.0 * er / tt;

    let (p_coupled, p_cav) = match cfg.power {
        PowerSpec::Input(p) => {
            let pc = p * cfg.mode_matching;
            (pc, buildup * pc / d2)
        }
        PowerSpec::IntracavityAtResonance(p0) => (p0 / buildup, p0 / d2),
    };
    let p_in = match cfg.power {
        PowerSpec::Input(p) => p,
        PowerSpec::IntracavityAtResonance(_) => p_coupled / cfg.mode_matching,
    };

    let out = DerivedCavity {
        gamma_hwhm: finite(C * tt / (8.0 * PI * cfg.length), "linewidth")?,
        finesse: finite(TAU / tt, "finesse")?,
        total_loss: tt,
        escape_refl: er,
        escape_trans: et,
        p_cav: finite(p_cav, "intracavity power")?,
        p_in: finite(p_in, "input power")?,
        p_coupled: finite(p_coupled, "coupled power")?,
        p_trans: finite(4.0 * et * er * p_coupled / d2, "transmitted power")?,
        carrier_rotation: (-cfg.detuning).atan(),
        xi0: 0.5 * cfg.detuning.atan(),
    };
    Ok(out)
}

/// Exact HWHM linewidth in Hz, valid while the detuning is small compared to
/// the free spectral range. Includes the input-mirror loss L₁.
pub fn exact_linewidth(cfg: &CavityConfig) -> Result<f64> {
    cfg.validate()?;
    let (a, b) = (cfg.t1 + cfg.l1, cfg.t2 + cfg.l2);
    let rho = ((1.0 - a) * (1.0 - b)).sqrt();
    // 1 − ρ without cancellation for low-loss mirrors.
    let one_minus_rho = (a + b - a * b) / (1.0 + rho);
    finite(
        C * one_minus_rho / (2.0 * cfg.length * TAU * rho.sqrt()),
        "exact linewidth",
    )
}

/// Laser technical noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserNoise {
    /// Relative intensity noise amplitude spectral density, 1/√Hz.
    pub rin_asd: f64,
    /// A in S_ff = A/f^n, with S_ff in Hz²/Hz.
    pub freq_noise_coeff: f64,
    /// n in S_ff = A/f^n.
    pub freq_noise_exponent: f64,
}

impl Default for LaserNoise {
    fn default() -> Self {
        LaserNoise {
            rin_asd: 1e-8,
            freq_noise_coeff: 1e8,
            freq_noise_exponent: 2.0,
        }
    }
}

impl LaserNoise {
    pub fn quiet() -> Self {
        LaserNoise {
            rin_asd: 0.0,
            freq_noise_coeff: 0.0,
            freq_noise_exponent: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.rin_asd.is_finite() && self.rin_asd >= 0.0,
            "laser.rin",
            || format!("must be >= 0, got {}", self.rin_asd),
        )?;
        ensure(
            self.freq_noise_coeff.is_finite() && self.freq_noise_coeff >= 0.0,
            "laser.freq_noise_coeff",
            || format!("must be >= 0, got {}", self.freq_noise_coeff),
        )?;
        ensure(
            self.freq_noise_exponent.is_finite(),
            "laser.freq_noise_exponent",
            || "must be finite".into(),
        )
    }

    /// Frequency-noise PSD S_ff(f), Hz²/Hz.
    pub fn s_ff(&self, f: f64) -> f64 {
        self.freq_noise_coeff / f.powf(self.freq_noise_exponent)
    }
}

/// Amplitude and phase noise of the laser at the cavity input, relative to
/// shot noise: S_RIN = RIN²·P/2ħω and S_PN = (S_ff/f²)·P/2ħω.
pub fn classical_noise_psd(
    laser: &LaserNoise,
    p_in: f64,
    wavelength: f64,
    f: f64,
) -> Result<(f64, f64)> {
    ensure(f > 0.0 && f.is_finite(), "f", || format!("must be > 0 Hz, got {f}"))?;
    ensure(p_in >= 0.0, "p_in", || format!("must be >= 0 W, got {p_in}"))?;
    let photons = p_in / (2.0 * photon_energy(wavelength));
    let s_rin = laser.rin_asd * laser.rin_asd * photons;
    let s_pn = laser.s_ff(f) / (f * f) * photons;
    Ok((s_rin, s_pn))
}

/// Dimensionless classical-noise strengths entering the analytic covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub lambda_th: f64,
    pub lambda_rin: f64,
    pub lambda_pn: f64,
    pub lambda_cln: f64,
}

/// Optomechanical coupling squared, g² = 4πP_cav/(ħLλ), in 1/(s²·m²).
pub fn g_squared(cfg: &CavityConfig, p_cav: f64) -> f64 {
    4.0 * PI * p_cav / (HBAR * cfg.length * cfg.wavelength)
}

/// λ parameters at frequency `f` for a given thermal force PSD `s_f_th` (N²/Hz).
pub fn lambda_params(
    derived: &DerivedCavity,
    cfg: &CavityConfig,
    laser: &LaserNoise,
    s_f_th: f64,
    f: f64,
) -> Result<LambdaParams> {
    ensure(derived.p_cav > 0.0, "p_cav", || "must be > 0 W".into())?;
    ensure(f > 0.0, "f", || format!("must be > 0 Hz, got {f}"))?;
    let tt = derived.total_loss;
    let p = derived.p_cav;
    let lambda_th = s_f_th * C * tt * cfg.wavelength / (16.0 * PI * HBAR * p);
    let photons = p / (2.0 * photon_energy(cfg.wavelength));
    let scale = photons * tt * tt / (4.0 * cfg.t1);
    let lambda_rin = laser.rin_asd * laser.rin_asd * scale;
    let d = cfg.detuning;
    let lambda_pn = laser.s_ff(f) / (f * f) * scale * d * d;
    let out = LambdaParams {
        lambda_th,
        lambda_rin,
        lambda_pn,
        lambda_cln: lambda_rin + lambda_pn,
    };
    if [out.lambda_th, out.lambda_rin, out.lambda_pn].iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Numerical("lambda parameters not finite".into()))
    }
}
