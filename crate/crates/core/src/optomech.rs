//! Optical spring, cavity modulation gains, the effective optomechanical
//! oscillator and stability margins of an external control loop.
//!
//! Laplace variable s = i·2πf. Damping rates follow the s² + sΓ + Ω² form,
//! so Γ_OS = 2Ω_OS²/γ₀. Written as s² + 2sΓ' + Ω² the rate would be
//! Γ' = Ω_OS²/γ₀; the two are the same pole pair.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{exact_linewidth, CavityConfig, DerivedCavity};
use crate::consts::{C, TAU};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainModel {
    /// Full round-trip expressions with mirror amplitude reflectivities.
    Exact,
    /// Lowest-order high-finesse expansion.
    #[default]
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpringResponse {
    /// K_OS at s = i·2πf, N/m.
    pub k_os: Complex64,
    /// Signed Ω_OS² = K_OS(0)/m, rad²/s². Positive for a restoring spring.
    pub omega_os_sq: f64,
    /// |Ω_OS|, rad/s.
    pub omega_os: f64,
    /// Ω_OS²·2/γ₀, rad/s; positive means anti-damping.
    pub gamma_os: f64,
    pub gamma_plus: Complex64,
    pub gamma_minus: Complex64,
    pub gamma_0: f64,
}

impl SpringResponse {
    pub fn f_os(&self) -> f64 {
        self.omega_os / TAU
    }
}

fn wavenumber(cfg: &CavityConfig) -> f64 {
    TAU / cfg.wavelength
}

/// Approximate K_OS(s).
fn k_os_approx(cfg: &CavityConfig, der: &DerivedCavity, s: Complex64) -> Complex64 {
    let d = cfg.detuning;
    let g = der.gamma_rad();
    let gp = Complex64::new(g, g * d);
    let gm = Complex64::new(g, -g * d);
    let k0 = 16.0 * wavenumber(cfg) * der.p_cav / (C * der.total_loss) * d / (1.0 + d * d);
    k0 / ((1.0 + s / gp) * (1.0 + s / gm))
}

struct RoundTrip {
    rho: f64,
    theta: f64,
    phi: f64,
}

fn round_trip(cfg: &CavityConfig, f: f64) -> Result<RoundTrip> {
    let rho = ((1.0 - cfg.t1 - cfg.l1) * (1.0 - cfg.t2 - cfg.l2)).sqrt();
    let gamma = TAU * exact_linewidth(cfg)?;
    Ok(RoundTrip {
        rho,
        theta: cfg.length * cfg.detuning * gamma / C,
        phi: -cfg.length * TAU * f / C,
    })
}

fn k_os_exact(cfg: &CavityConfig, der: &DerivedCavity, f: f64) -> Result<Complex64> {
    let RoundTrip { rho, theta, phi } = round_trip(cfg, f)?;
    let e2 = Complex64::from_polar(1.0, 2.0 * phi);
    let e4 = e2 * e2;
    let rho2_sq = 1.0 - cfg.t2 - cfg.l2;
    let pre = 4.0 * wavenumber(cfg) * (1.0 + rho2_sq - cfg.t2) * der.p_cav;
    let num = pre * rho * e2 * (2.0 * theta).sin();
    let den = C * (1.0 + rho * rho * e4 - 2.0 * rho * e2 * (2.0 * theta).cos());
    Ok(num / den)
}

/// Optical-spring response at frequency `f` for a mirror of mass `mass`.
pub fn optical_spring(
    cfg: &CavityConfig,
    der: &DerivedCavity,
    mass: f64,
    f: f64,
    model: GainModel,
) -> Result<SpringResponse> {
    ensure(mass > 0.0, "mass", || format!("must be > 0 kg, got {mass}"))?;
    ensure(f >= 0.0, "f", || format!("must be >= 0 Hz, got {f}"))?;
    let s = Complex64::new(0.0, TAU * f);
    let (k_os, k0) = match model {
        GainModel::Approximate => (k_os_approx(cfg, der, s), k_os_approx(cfg, der, 0.0.into()).re),
        GainModel::Exact => (k_os_exact(cfg, der, f)?, k_os_exact(cfg, der, 0.0)?.re),
    };
    let d = cfg.detuning;
    let g = der.gamma_rad();
    let gamma_0 = g * (1.0 + d * d);
    let omega_os_sq = k0 / mass;
    Ok(SpringResponse {
        k_os,
        omega_os_sq,
        omega_os: omega_os_sq.abs().sqrt(),
        gamma_os: 2.0 * omega_os_sq / gamma_0,
        gamma_plus: Complex64::new(g, g * d),
        gamma_minus: Complex64::new(g, -g * d),
        gamma_0,
    })
}

/// Gains from unit amplitude and phase modulation of the input light to the
/// intracavity power fluctuation.
pub fn modulation_gains(
    cfg: &CavityConfig,
    der: &DerivedCavity,
    f: f64,
    model: GainModel,
) -> Result<(Complex64, Complex64)> {
    ensure(f >= 0.0, "f", || format!("must be >= 0 Hz, got {f}"))?;
    let d = cfg.detuning;
    match model {
        GainModel::Approximate => {
            let s = Complex64::new(0.0, TAU * f);
            let g = der.gamma_rad();
            let g0 = g * (1.0 + d * d);
            let poles = (1.0 + s / Complex64::new(g, -g * d)) * (1.0 + s / Complex64::new(g, g * d));
            let pre = 4.0 * cfg.t1 / (der.total_loss * der.total_loss) / (1.0 + d * d);
            let am = pre * (1.0 + s / g0) / poles;
            let pm = -pre * d * (s / g0) / poles;
            Ok((am, pm))
        }
        GainModel::Exact => {
            let RoundTrip { rho, theta, phi } = round_trip(cfg, f)?;
            let e1 = Complex64::from_polar(1.0, phi);
            let e2 = Complex64::from_polar(1.0, 2.0 * phi);
            let e4 = e2 * e2;
            let c2 = (2.0 * theta).cos();
            let r2 = rho * rho;
            let den = (1.0 + r2 - 2.0 * rho * c2) * (1.0 + r2 * e4 - 2.0 * rho * e2 * c2);
            let am = cfg.t1 * ((1.0 + r2 * e2) * e1 - 2.0 * rho * e2 * c2 * phi.cos()) / den;
            let pm = cfg.t1 * Complex64::new(0.0, 2.0) * e2 * rho * (2.0 * theta).sin() * phi.sin() / den;
            Ok((am, pm))
        }
    }
}

/// G_OL = χ·K_OS.
pub fn open_loop_gain(k_os: Complex64, chi: Complex64) -> Complex64 {
    chi * k_os
}

/// Mechanical mode dressed by the optical spring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveOscillator {
    /// Ω_OM² = Ω_m² + Ω_OS², rad²/s². Negative means anti-restoring.
    pub omega_om_sq: f64,
    /// Γ_OM = Γ_m − Γ_OS, rad/s. Negative means anti-damped.
    pub gamma_om: f64,
}

impl EffectiveOscillator {
    pub fn omega_om(&self) -> Option<f64> {
        (self.omega_om_sq >= 0.0).then(|| self.omega_om_sq.sqrt())
    }

    /// Both a restoring spring and positive damping.
    pub fn is_stable(&self) -> bool {
        self.omega_om_sq > 0.0 && self.gamma_om > 0.0
    }

    /// Roots of s² + sΓ_OM + Ω_OM².
    pub fn poles(&self) -> [Complex64; 2] {
        let b = self.gamma_om;
        let disc = Complex64::new(b * b / 4.0 - self.omega_om_sq, 0.0).sqrt();
        [-b / 2.0 + disc, -b / 2.0 - disc]
    }
}

pub fn effective_oscillator(omega_m: f64, gamma_m: f64, spring: &SpringResponse) -> EffectiveOscillator {
    EffectiveOscillator {
        omega_om_sq: omega_m * omega_m + spring.omega_os_sq,
        gamma_om: gamma_m - spring.gamma_os,
    }
}

/// In-loop suppression |Ω_OS²/(Ω_m² − Ω² + iΩΓ_m)| of ambient motion.
pub fn suppression_factor(omega_os: f64, omega_m: f64, gamma_m: f64, f: f64) -> Result<f64> {
    ensure(f >= 0.0, "f", || format!("must be >= 0 Hz, got {f}"))?;
    let w = TAU * f;
    let den = Complex64::new(omega_m * omega_m - w * w, w * gamma_m);
    Ok(omega_os * omega_os / den.norm())
}

/// Closed-loop poles (rad/s) of one viscously damped mode of mass `mass`
/// coupled to the approximate optical spring:
/// m(s² + sΓ_m + Ω_m²)(1 + s/γ₊)(1 + s/γ₋) + K₀ = 0.
pub fn closed_loop_poles(
    mass: f64,
    omega_m: f64,
    gamma_m: f64,
    spring: &SpringResponse,
) -> Vec<Complex64> {
    // Work in units of γ₀ to keep coefficients O(1).
    let sc = spring.gamma_0;
    let gpgm = (spring.gamma_plus * spring.gamma_minus).re / (sc * sc);
    let sum = (spring.gamma_plus + spring.gamma_minus).re / sc;
    let k0 = spring.omega_os_sq * mass;
    // (1 + s/γ₊)(1 + s/γ₋) = 1 + s·sum/gpgm + s²/gpgm
    let cav = [1.0, sum / gpgm, 1.0 / gpgm];
    let mech = [(omega_m / sc).powi(2), gamma_m / sc, 1.0];
    let mut p = [0.0; 5];
    for (i, a) in mech.iter().enumerate() {
        for (j, b) in cav.iter().enumerate() {
            p[i + j] += a * b;
        }
    }
    p[0] += k0 / (mass * sc * sc);
    polynomial_roots(&p).into_iter().map(|r| r * sc).collect()
}

/// Roots of Σ cᵢ sⁱ (ascending coefficients) by Weierstrass iteration with
/// Newton polishing.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return vec![];
    }
    let lead = c[n];
    let a: Vec<Complex64> = c.iter().map(|&x| Complex64::new(x / lead, 0.0)).collect();
    let eval = |z: Complex64| a.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k);
    let deriv = |z: Complex64| {
        a.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, &k)| acc * z + k * i as f64)
    };
    // Cauchy bound for the initial circle.
    let radius = 1.0 + a[..n].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let seed = Complex64::from_polar(1.0, 0.4);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            delta = delta.max(step.norm() / z[i].norm().max(1e-300));
        }
        if delta < 1e-15 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = deriv(*zi);
            if d.norm() > 0.0 {
                *zi -= eval(*zi) / d;
            }
        }
    }
    z
}

// ---------------------------------------------------------------------------
// Loop analysis

/// Real-rational filter k·Π(s − zᵢ)/Π(s − pᵢ) with s-plane roots in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zpk {
    pub gain: f64,
    pub zeros: Vec<Complex64>,
    pub poles: Vec<Complex64>,
}

impl Zpk {
    pub fn unity() -> Self {
        Zpk { gain: 1.0, zeros: vec![], poles: vec![] }
    }

    /// g·Π(1 + s/2πz)/Π(1 + s/2πp) for real corner frequencies in Hz.
    pub fn from_corners(dc_gain: f64, zeros_hz: &[f64], poles_hz: &[f64]) -> Self {
        let root = |f: &f64| Complex64::new(-TAU * f, 0.0);
        let scale: f64 = poles_hz.iter().map(|p| TAU * p).product::<f64>()
            / zeros_hz.iter().map(|z| TAU * z).product::<f64>();
        Zpk {
            gain: dc_gain * scale,
            zeros: zeros_hz.iter().map(root).collect(),
            poles: poles_hz.iter().map(root).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.gain.is_finite(), "filter.gain", || "must be finite".into())?;
        let all_finite = self.zeros.iter().chain(&self.poles).all(|z| z.re.is_finite() && z.im.is_finite());
        ensure(all_finite, "filter", || "poles and zeros must be finite".into())?;
        // Complex roots must come in conjugate pairs for a real response.
        for set in [&self.zeros, &self.poles] {
            for z in set.iter().filter(|z| z.im != 0.0) {
                let paired = set.iter().any(|w| (w - z.conj()).norm() <= 1e-9 * z.norm());
                ensure(paired, "filter", || format!("root {z} lacks its conjugate"))?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, f: f64) -> Complex64 {
        let s = Complex64::new(0.0, TAU * f);
        let num: Complex64 = self.zeros.iter().map(|z| s - z).product();
        let den: Complex64 = self.poles.iter().map(|p| s - p).product();
        self.gain * num / den
    }
}

pub type ResponseFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Frequency response of the controlled system.
#[derive(Clone)]
pub enum Plant {
    Rational(Zpk),
    /// Measured response, linearly interpolated in log f (clamped at the ends).
    Tabulated { freqs: Vec<f64>, values: Vec<Complex64> },
    Function(ResponseFn),
}

impl std::fmt::Debug for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Plant::Rational(z) => f.debug_tuple("Rational").field(z).finish(),
            Plant::Tabulated { freqs, .. } => write!(f, "Tabulated({} points)", freqs.len()),
            Plant::Function(_) => write!(f, "Function"),
        }
    }
}

impl Plant {
    pub fn eval(&self, f: f64) -> Complex64 {
        match self {
            Plant::Rational(z) => z.eval(f),
            Plant::Function(h) => h(f),
            Plant::Tabulated { freqs, values } => {
                let n = freqs.len();
                if f <= freqs[0] {
                    return values[0];
                }
                if f >= freqs[n - 1] {
                    return values[n - 1];
                }
                let i = freqs.partition_point(|&x| x <= f) - 1;
                let t = (f / freqs[i]).ln() / (freqs[i + 1] / freqs[i]).ln();
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoopModel {
    pub plant: Plant,
    pub filter: Zpk,
    pub label: String,
}

impl LoopModel {
    pub fn open_loop(&self, f: f64) -> Complex64 {
        self.plant.eval(f) * self.filter.eval(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub unity_gain_crossings: Vec<f64>,
    pub phase_margins: Vec<f64>,
    pub gain_margin_db: Option<f64>,
    /// Frequency of the phase crossover used for the gain margin.
    pub phase_crossover_hz: Option<f64>,
    pub stable: bool,
}

pub const MIN_POINTS_PER_DECADE: f64 = 50.0;

fn wrap180(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Unity-gain crossings, phase margins and the gain margin over `f_grid`.
pub fn loop_margins(lp: &LoopModel, f_grid: &[f64]) -> Result<MarginReport> {
    lp.filter.validate()?;
    ensure(f_grid.len() >= 2, "f_grid", || "needs at least two points".into())?;
    ensure(f_grid[0] > 0.0, "f_grid", || "frequencies must be > 0".into())?;
    ensure(f_grid.windows(2).all(|w| w[1] > w[0]), "f_grid", || {
        "must be strictly increasing".into()
    })?;
    let decades = (f_grid[f_grid.len() - 1] / f_grid[0]).log10();
    let density = (f_grid.len() - 1) as f64 / decades;
    ensure(density >= MIN_POINTS_PER_DECADE, "f_grid", || {
        format!("{density:.1} points per decade, need >= {MIN_POINTS_PER_DECADE}")
    })?;

    let g: Vec<Complex64> = f_grid.iter().map(|&f| lp.open_loop(f)).collect();
    if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("open-loop response not finite".into()));
    }
    let log_mag: Vec<f64> = g.iter().map(|z| z.norm().ln()).collect();
    // Unwrapped phase in degrees.
    let mut phase = Vec::with_capacity(g.len());
    phase.push(wrap180(g[0].arg().to_degrees()));
    for k in 1..g.len() {
        let raw = g[k].arg().to_degrees();
        let prev: f64 = phase[k - 1];
        phase.push(prev + wrap180(raw - prev));
    }
    let lf: Vec<f64> = f_grid.iter().map(|f| f.ln()).collect();

    let mut crossings = Vec::new();
    let mut margins = Vec::new();
    for k in 0..g.len() - 1 {
        let (a, b) = (log_mag[k], log_mag[k + 1]);
        let hit = (a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0) || (a == 0.0 && k == 0);
        if !hit || a == b {
            continue;
        }
        let t = a / (a - b);
        let fc = (lf[k] + t * (lf[k + 1] - lf[k])).exp();
        let ph = phase[k] + t * (phase[k + 1] - phase[k]);
        crossings.push(fc);
        margins.push(wrap180(180.0 + ph));
    }

    // First −180° phase crossover: a grid point on ±180°, or a sign change of
    // the distance to the nearest odd multiple of 180°.
    let off = |p: f64| wrap180(p - 180.0);
    let mut gm = None;
    for k in 0..g.len() {
        let dk = off(phase[k]);
        if dk.abs() < 1e-9 {
            gm = Some((f_grid[k], log_mag[k]));
            break;
        }
        if k + 1 < g.len() {
            let dn = off(phase[k + 1]);
            let spans = (phase[k + 1] - phase[k]).abs() < 180.0;
            if spans && dk.signum() != dn.signum() && dn.abs() >= 1e-9 && (dk - dn).abs() < 180.0 {
                let t = dk / (dk - dn);
                let f = (lf[k] + t * (lf[k + 1] - lf[k])).exp();
                gm = Some((f, log_mag[k] + t * (log_mag[k + 1] - log_mag[k])));
                break;
            }
        }
    }
    let gain_margin_db = gm.map(|(_, lm)| -20.0 * lm / std::f64::consts::LN_10);
    let stable = margins.iter().all(|&m| m > 0.0) && gain_margin_db.map_or(true, |g| g > 0.0);
    Ok(MarginReport {
        unity_gain_crossings: crossings,
        phase_margins: margins,
        gain_margin_db,
        phase_crossover_hz: gm.map(|(f, _)| f),
        stable,
    })
}

/// Log-spaced grid with `per_decade` points per decade, inclusive of both ends.
pub fn log_grid(f_min: f64, f_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (f_max / f_min).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=n)
        .map(|i| f_min * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{derive, fixtures, PowerSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one_cm_device() -> CavityConfig {
        CavityConfig {
            t1: 250e-6,
            t2: 5e-6,
            l2: 250e-6,
            detuning: 0.35,
            ..fixtures::one_cm(505e-6)
        }
    }

    fn with_pcav(cfg: &CavityConfig, p: f64) -> DerivedCavity {
        let mut d = derive(cfg).unwrap();
        d.p_cav = p;
        d
    }

    /// Independent route to the DC spring: dP/dx of the Lorentzian build-up times 2/c.
    fn oracle_dc_spring(cfg: &CavityConfig, p_cav: f64) -> f64 {
        let gamma = cfg.gamma_rad();
        let w = TAU * C / cfg.wavelength;
        let p_of_x = |x: f64| {
            // Lengthening by x lowers the resonance by ωx/L and raises the detuning.
            let det = cfg.detuning + w * x / cfg.length / gamma;
            p_cav * (1.0 + cfg.detuning.powi(2)) / (1.0 + det * det)
        };
        let h = 1e-18;
        let dp_dx = (p_of_x(h) - p_of_x(-h)) / (2.0 * h);
        // Restoring sign: force 2P/c pushes outward; for blue detuning P falls as x grows.
        -2.0 * dp_dx / C
    }

    #[test]
    fn spring_frequency_one_cm_device() {
        let cfg = one_cm_device();
        let der = with_pcav(&cfg, 0.22);
        let sp = optical_spring(&cfg, &der, 50e-12, 0.0, GainModel::Approximate).unwrap();
        assert_relative_eq!(sp.omega_os_sq * 50e-12, oracle_dc_spring(&cfg, 0.22), max_relative = 1e-6);
        let f = sp.f_os();
        assert!((146e3..148e3).contains(&f), "f_os = {f}");
        let ex = optical_spring(&cfg, &der, 50e-12, 0.0, GainModel::Exact).unwrap();
        assert_relative_eq!(ex.f_os(), f, max_relative = 1e-3);
    }

    #[test]
    fn spring_symmetries() {
        let mut cfg = one_cm_device();
        cfg.detuning = 0.0;
        let der = with_pcav(&cfg, 0.22);
        for f in [0.0, 1e3, 1e6] {
            for m in [GainModel::Approximate, GainModel::Exact] {
                let k = optical_spring(&cfg, &der, 1e-10, f, m).unwrap().k_os;
                assert!(k.norm() < 1e-9, "{k}");
            }
        }
        let cfg = one_cm_device();
        let flip = CavityConfig { detuning: -cfg.detuning, ..cfg };
        let a = optical_spring(&cfg, &with_pcav(&cfg, 0.22), 1e-10, 0.0, GainModel::Approximate).unwrap();
        let b = optical_spring(&flip, &with_pcav(&flip, 0.22), 1e-10, 0.0, GainModel::Approximate).unwrap();
        assert_eq!(a.k_os.re, -b.k_os.re);
        assert!(a.omega_os_sq > 0.0 && b.omega_os_sq < 0.0);
    }

    #[test]
    fn modulation_gain_examples() {
        let cfg = fixtures::baseline();
        let der = derive(&cfg).unwrap();
        let (am, pm) = modulation_gains(&cfg, &der, 1e-3, GainModel::Approximate).unwrap();
        let dc = 4.0 * cfg.t1 / (der.total_loss.powi(2) * 1.25);
        assert_relative_eq!(am.re, dc, max_relative = 1e-9);
        assert!(pm.norm() < 1e-9 * am.norm());
        let (_, pm_exact) = modulation_gains(&cfg, &der, 0.0, GainModel::Exact).unwrap();
        assert_eq!(pm_exact.norm(), 0.0);

        let cfg0 = CavityConfig { detuning: 0.0, ..cfg };
        let der0 = derive(&cfg0).unwrap();
        let (a0, _) = modulation_gains(&cfg0, &der0, 0.0, GainModel::Approximate).unwrap();
        let (a1, _) = modulation_gains(&cfg0, &der0, der0.gamma_hwhm, GainModel::Approximate).unwrap();
        assert_relative_eq!(a1.norm() / a0.norm(), std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
    }

    #[test]
    fn open_loop_examples() {
        assert_eq!(open_loop_gain(Complex64::new(5.0, 0.0), Complex64::new(0.0, 0.0)), 0.0.into());
        let (m, wm, wos) = (50e-12, TAU * 288.0, TAU * 75e3);
        let g = open_loop_gain(Complex64::new(m * wos * wos, 0.0), Complex64::new(1.0 / (m * wm * wm), 0.0));
        assert_relative_eq!(g.re, (wos / wm).powi(2), max_relative = 1e-12);
        assert_relative_eq!(g.re, 6.78e4, max_relative = 1e-3);
    }

    #[test]
    fn effective_oscillator_examples() {
        let zero = SpringResponse {
            k_os: 0.0.into(),
            omega_os_sq: 0.0,
            omega_os: 0.0,
            gamma_os: 0.0,
            gamma_plus: 1.0.into(),
            gamma_minus: 1.0.into(),
            gamma_0: 1.0,
        };
        let e = effective_oscillator(3.0, 0.1, &zero);
        assert_eq!((e.omega_om(), e.gamma_om), (Some(3.0), 0.1));
        let sp = SpringResponse { omega_os_sq: (TAU * 145e3).powi(2), ..zero };
        let e = effective_oscillator(TAU * 876.0, 0.0, &sp);
        assert_relative_eq!(e.omega_om().unwrap() / TAU, 145_002.646, max_relative = 1e-8);
        let red = SpringResponse { omega_os_sq: -(TAU * 1e3).powi(2), ..zero };
        let e = effective_oscillator(TAU * 100.0, 1.0, &red);
        assert!(e.omega_om_sq < 0.0 && e.omega_om().is_none() && !e.is_stable());
    }

    #[test]
    fn suppression_examples() {
        let (wos, wm) = (TAU * 75e3, TAU * 288.0);
        let gm = TAU * 0.036;
        let s0 = suppression_factor(wos, wm, gm, 0.0).unwrap();
        assert!(s0 >= 5e4);
        assert_relative_eq!(s0, 6.78e4, max_relative = 1e-3);
        assert_eq!(suppression_factor(0.0, wm, gm, 10.0).unwrap(), 0.0);
        let peak = suppression_factor(wos, wm, gm, 288.0).unwrap();
        assert_relative_eq!(peak, wos * wos / (wm * gm), max_relative = 1e-12);
    }

    #[test]
    fn single_pole_margins() {
        let w0 = TAU * 1e3;
        let lp = LoopModel {
            plant: Plant::Rational(Zpk { gain: 10.0 * w0, zeros: vec![], poles: vec![(-w0).into()] }),
            filter: Zpk::unity(),
            label: "pole".into(),
        };
        let grid = log_grid(10.0, 1e6, 200);
        let r = loop_margins(&lp, &grid).unwrap();
        // analytic: |G| = 1 at f = 1 kHz·√99
        assert_eq!(r.unity_gain_crossings.len(), 1);
        assert_relative_eq!(r.unity_gain_crossings[0], 1e3 * 99f64.sqrt(), max_relative = 1e-3);
        assert_relative_eq!(r.phase_margins[0], 180.0 - 99f64.sqrt().atan().to_degrees(), epsilon = 0.05);
        assert!(r.gain_margin_db.is_none() && r.stable);
    }

    #[test]
    fn trivial_margins() {
        let grid = log_grid(1.0, 1e4, 60);
        let quiet = LoopModel {
            plant: Plant::Rational(Zpk { gain: 0.5, zeros: vec![], poles: vec![] }),
            filter: Zpk::unity(),
            label: String::new(),
        };
        let r = loop_margins(&quiet, &grid).unwrap();
        assert!(r.unity_gain_crossings.is_empty() && r.stable);

        let neg = LoopModel {
            plant: Plant::Rational(Zpk { gain: -2.0, zeros: vec![], poles: vec![] }),
            filter: Zpk::unity(),
            label: String::new(),
        };
        let r = loop_margins(&neg, &grid).unwrap();
        assert_relative_eq!(r.gain_margin_db.unwrap(), -20.0 * 2f64.log10(), max_relative = 1e-12);
        assert!(!r.stable);

        let sparse = log_grid(1.0, 1e4, 10);
        assert!(loop_margins(&quiet, &sparse).is_err());
    }

    #[test]
    fn third_order_gain_margin() {
        // G = k/(1+s/ω)³ crosses −180° at ω√3 where |G| = k/8.
        let w = TAU * 100.0;
        let k = 4.0;
        let lp = LoopModel {
            plant: Plant::Function(Arc::new(move |f| {
                let s = Complex64::new(0.0, TAU * f);
                k / (1.0 + s / w).powu(3)
            })),
            filter: Zpk::unity(),
            label: String::new(),
        };
        let r = loop_margins(&lp, &log_grid(1.0, 1e5, 400)).unwrap();
        assert_relative_eq!(r.phase_crossover_hz.unwrap(), 100.0 * 3f64.sqrt(), max_relative = 1e-3);
        assert_relative_eq!(r.gain_margin_db.unwrap(), 20.0 * 2f64.log10(), epsilon = 1e-2);
        assert!(r.stable);
    }

    #[test]
    fn tabulated_plant_interpolates() {
        let p = Plant::Tabulated {
            freqs: vec![10.0, 1000.0],
            values: vec![Complex64::new(1.0, 0.0), Complex64::new(3.0, 2.0)],
        };
        assert_eq!(p.eval(100.0), Complex64::new(2.0, 1.0));
        assert_eq!(p.eval(1.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn effective_poles_match_root_solve() {
        let e = EffectiveOscillator { omega_om_sq: (TAU * 1e5).powi(2), gamma_om: -30.0 };
        let theirs = polynomial_roots(&[e.omega_om_sq, e.gamma_om, 1.0]);
        for a in e.poles() {
            let d = theirs.iter().map(|b| (a - b).norm()).fold(f64::INFINITY, f64::min);
            assert!(d <= 1e-9 * a.norm(), "{a} vs {theirs:?}");
        }
    }

    #[test]
    fn anti_damped_spring_has_rhp_pole() {
        let cfg = CavityConfig {
            power: PowerSpec::IntracavityAtResonance(0.4),
            ..fixtures::baseline()
        };
        let der = derive(&cfg).unwrap();
        let m = 40e-12;
        let sp = optical_spring(&cfg, &der, m, 0.0, GainModel::Approximate).unwrap();
        let (wm, gm) = (TAU * 221.0, TAU * 221.0 / 2e4);
        let eff = effective_oscillator(wm, gm, &sp);
        assert!(sp.gamma_os > gm && !eff.is_stable());
        let poles = closed_loop_poles(m, wm, gm, &sp);
        assert!(poles.iter().any(|p| p.re > 0.0), "{poles:?}");
        // The mechanical pair tracks the Padé (second-order) estimate.
        let mech = poles.iter().copied().min_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        assert_relative_eq!(mech.norm(), eff.omega_om().unwrap(), max_relative = 1e-2);
        assert_relative_eq!(-2.0 * mech.re, eff.gamma_om, max_relative = 0.05);
    }

    fn arb_cavity() -> impl Strategy<Value = CavityConfig> {
        (1e-5f64..4e-4, 1e-5f64..4e-4, 0.0f64..2e-4, -2.0f64..2.0, 1e-4f64..2e-2).prop_map(
            |(t1, t2, l2, d, len)| CavityConfig {
                t1,
                t2,
                l2,
                detuning: d,
                length: len,
                ..fixtures::baseline()
            },
        )
    }

    proptest! {
        #[test]
        fn exact_converges_to_approximate(cfg in arb_cavity(), frac in 0.0f64..0.1) {
            let der = derive(&cfg).unwrap();
            let f = frac * der.gamma_hwhm;
            let a = optical_spring(&cfg, &der, 1e-10, f, GainModel::Approximate).unwrap().k_os;
            let e = optical_spring(&cfg, &der, 1e-10, f, GainModel::Exact).unwrap().k_os;
            prop_assume!(a.norm() > 0.0);
            let tt = cfg.t1 + cfg.t2 + cfg.l1 + cfg.l2;
            prop_assert!((a - e).norm() / a.norm() < 10.0 * tt, "{} vs {}", a, e);
            let (aa, ap) = modulation_gains(&cfg, &der, f, GainModel::Approximate).unwrap();
            let (ea, ep) = modulation_gains(&cfg, &der, f, GainModel::Exact).unwrap();
            prop_assert!((aa - ea).norm() / aa.norm() < 10.0 * tt);
            if ap.norm() > 1e-6 * aa.norm() {
                prop_assert!((ap - ep).norm() / ap.norm() < 10.0 * tt);
            }
        }

        #[test]
        fn gamma_os_ratio(cfg in arb_cavity(), m in 1e-12f64..1e-8) {
            let der = derive(&cfg).unwrap();
            let sp = optical_spring(&cfg, &der, m, 0.0, GainModel::Approximate).unwrap();
            prop_assume!(sp.omega_os_sq != 0.0);
            prop_assert!((sp.gamma_os / sp.omega_os_sq * sp.gamma_0 / 2.0 - 1.0).abs() < 1e-9);
            let g0 = der.gamma_rad() * (1.0 + cfg.detuning.powi(2));
            prop_assert!((sp.gamma_0 / g0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn second_order_poles(wm in 10.0f64..1e4, gm in -50.0f64..50.0, wos2 in -1e7f64..1e9) {
            let e = EffectiveOscillator { omega_om_sq: wm * wm + wos2, gamma_om: gm };
            let b = polynomial_roots(&[e.omega_om_sq, e.gamma_om, 1.0]);
            prop_assert_eq!(b.len(), 2);
            for x in e.poles() {
                let d = b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(d <= 1e-9 * x.norm(), "{} vs {:?}", x, b);
            }
        }
    }
}
