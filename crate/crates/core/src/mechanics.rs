//! Multi-mode mechanical oscillator.
//!
//! Susceptibility sign convention: χ(Ω) = 1/(m(Ω_n²(1+iφ) − Ω²)), so
//! Im χ < 0 for a lossy mode at Ω > 0. The quantum engine works with the
//! opposite Fourier sign and takes the complex conjugate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::consts::{K_B, PI, TAU};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingKind {
    /// Frequency-independent loss angle φ.
    #[default]
    Structural,
    /// Velocity damping with rate Γ = Ω_n·φ.
    Viscous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechMode {
    /// Hz.
    pub freq: f64,
    /// kg.
    pub modal_mass: f64,
    /// φ = 1/Q.
    pub loss_factor: f64,
    #[serde(default)]
    pub damping: DampingKind,
}

impl MechMode {
    pub fn new(freq: f64, modal_mass: f64, q: f64) -> Self {
        MechMode {
            freq,
            modal_mass,
            loss_factor: 1.0 / q,
            damping: DampingKind::Structural,
        }
    }

    pub fn viscous(freq: f64, modal_mass: f64, q: f64) -> Self {
        MechMode {
            damping: DampingKind::Viscous,
            ..MechMode::new(freq, modal_mass, q)
        }
    }

    pub fn omega(&self) -> f64 {
        TAU * self.freq
    }

    /// Viscous damping rate Γ = Ω_n/Q in rad/s.
    pub fn gamma(&self) -> f64 {
        self.omega() * self.loss_factor
    }

    pub fn validate(&self, idx: usize) -> Result<()> {
        let f = format!("oscillator.modes[{idx}]");
        ensure(self.freq.is_finite() && self.freq > 0.0, &f, || {
            format!("freq must be > 0 Hz, got {}", self.freq)
        })?;
        ensure(self.modal_mass.is_finite() && self.modal_mass > 0.0, &f, || {
            format!("modal_mass must be > 0 kg, got {}", self.modal_mass)
        })?;
        ensure(self.loss_factor > 0.0 && self.loss_factor < 1.0, &f, || {
            format!("loss factor 1/Q must lie in (0, 1), got {}", self.loss_factor)
        })
    }

    /// Single-mode susceptibility in m/N.
    pub fn susceptibility(&self, f: f64) -> Complex64 {
        let w = TAU * f;
        let w0 = self.omega();
        let den = match self.damping {
            DampingKind::Structural => Complex64::new(w0 * w0 - w * w, w0 * w0 * self.loss_factor),
            DampingKind::Viscous => Complex64::new(w0 * w0 - w * w, w * self.gamma()),
        };
        1.0 / (self.modal_mass * den)
    }

    /// Thermal displacement PSD of this mode alone, m²/Hz.
    pub fn thermal_displacement_psd(&self, temperature: f64, f: f64) -> f64 {
        let w = TAU * f;
        let w0 = self.omega();
        let m = self.modal_mass;
        let det = w0 * w0 - w * w;
        match self.damping {
            DampingKind::Structural => {
                let phi = self.loss_factor;
                4.0 * K_B * temperature * w0 * w0 * phi
                    / (w * m * (det * det + w0.powi(4) * phi * phi))
            }
            DampingKind::Viscous => {
                let g = self.gamma();
                4.0 * K_B * temperature * g / (m * (det * det + w * w * g * g))
            }
        }
    }
}

/// Thermal force PSD driving one mode, N²/Hz.
pub fn thermal_force_psd(mode: &MechMode, temperature: f64, f: f64) -> Result<f64> {
    ensure(f > 0.0, "f", || format!("must be > 0 Hz, got {f}"))?;
    let four_kt = 4.0 * K_B * temperature;
    Ok(match mode.damping {
        DampingKind::Structural => {
            let w0 = mode.omega();
            four_kt * mode.modal_mass * w0 * w0 * mode.loss_factor / (TAU * f)
        }
        DampingKind::Viscous => four_kt * mode.modal_mass * mode.gamma(),
    })
}

/// Mechanical resonator as a sum of uncorrelated normal modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    modes: Vec<MechMode>,
    pub temperature: f64,
}

impl Oscillator {
    /// Modes must be given in strictly increasing frequency order.
    pub fn new(modes: Vec<MechMode>, temperature: f64) -> Result<Self> {
        ensure(!modes.is_empty(), "oscillator.modes", || "must not be empty".into())?;
        ensure(temperature.is_finite() && temperature > 0.0, "oscillator.temperature", || {
            format!("must be > 0 K, got {temperature}")
        })?;
        for (i, m) in modes.iter().enumerate() {
            m.validate(i)?;
        }
        for (i, w) in modes.windows(2).enumerate() {
            ensure(w[1].freq > w[0].freq, "oscillator.modes", || {
                if w[1].freq == w[0].freq {
                    format!("duplicate frequency {} Hz at modes {} and {}", w[0].freq, i, i + 1)
                } else {
                    format!("frequencies not increasing at modes {} and {}", i, i + 1)
                }
            })?;
        }
        Ok(Oscillator { modes, temperature })
    }

    pub fn single(mode: MechMode, temperature: f64) -> Result<Self> {
        Oscillator::new(vec![mode], temperature)
    }

    pub fn modes(&self) -> &[MechMode] {
        &self.modes
    }

    pub fn fundamental(&self) -> &MechMode {
        &self.modes[0]
    }

    /// Replace the quality factor of mode `idx`.
    pub fn set_quality(&mut self, idx: usize, q: f64) -> Result<()> {
        ensure(idx < self.modes.len(), "oscillator.q_override", || {
            format!("mode index {idx} out of range")
        })?;
        let mut m = self.modes[idx];
        m.loss_factor = 1.0 / q;
        m.validate(idx)?;
        self.modes[idx] = m;
        Ok(())
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        Oscillator {
            modes: self.modes.clone(),
            temperature,
        }
    }
}

/// Summed susceptibility χ(f), m/N.
pub fn susceptibility(osc: &Oscillator, f: f64) -> Complex64 {
    osc.modes.iter().map(|m| m.susceptibility(f)).sum()
}

/// Summed thermal displacement PSD, m²/Hz. Modes add without cross terms.
pub fn thermal_displacement_psd(osc: &Oscillator, f: f64) -> Result<f64> {
    ensure(f > 0.0 && f.is_finite(), "f", || format!("must be > 0 Hz, got {f}"))?;
    Ok(osc
        .modes
        .iter()
        .map(|m| m.thermal_displacement_psd(osc.temperature, f))
        .sum())
}

/// Force PSD that reproduces the full thermal displacement when applied
/// through the summed susceptibility: S_x,th/|χ|², N²/Hz.
pub fn effective_thermal_force_psd(osc: &Oscillator, f: f64) -> Result<f64> {
    let sx = thermal_displacement_psd(osc, f)?;
    let chi = susceptibility(osc, f).norm_sqr();
    if chi > 0.0 && chi.is_finite() {
        Ok(sx / chi)
    } else {
        Err(Error::Numerical(format!("susceptibility vanishes at {f} Hz")))
    }
}

// ---------------------------------------------------------------------------
// Modal mass

/// Surface displacement samples of one mode shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledModeShape {
    /// (x m, y m, ψ_z) triples.
    pub surface_samples: Vec<(f64, f64, f64)>,
    /// ∫ρ|ψ|² dV, kg.
    pub volume_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProfile {
    /// 1/e intensity radius, m.
    pub waist_radius: f64,
    pub center_x: f64,
    pub center_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "kg", rename_all = "lowercase")]
pub enum ModalMass {
    Finite(f64),
    /// The beam sits on a node; the mode does not couple.
    Unbounded,
}

impl ModalMass {
    pub fn kg(&self) -> Option<f64> {
        match *self {
            ModalMass::Finite(m) => Some(m),
            ModalMass::Unbounded => None,
        }
    }
}

#[derive(Clone, Copy)]
struct Sample {
    p: Point2<f64>,
    psi: f64,
}

impl HasPosition for Sample {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.p
    }
}

// Degree-5 symmetric triangle rule (7 points); barycentric coordinates and weights.
const TRI_RULE: [(f64, f64, f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_1;
    [
        (1.0 / 3.0, 1.0 / 3.0, W0),
        (A1, B1, W1),
        (B1, A1, W1),
        (B1, B1, W1),
        (A2, B2, W2),
        (B2, A2, W2),
        (B2, B2, W2),
    ]
};

/// Laser-weighted displacement (1/πr²)∫ψ_z·exp(−ρ²/r²) dA together with the
/// same integral of |ψ_z|, used as a scale for the nodal test.
fn lwd(shape: &SampledModeShape, beam: &BeamProfile) -> Result<(f64, f64)> {
    let mut tri: DelaunayTriangulation<Sample> = DelaunayTriangulation::new();
    for (i, &(x, y, psi)) in shape.surface_samples.iter().enumerate() {
        ensure(x.is_finite() && y.is_finite() && psi.is_finite(), "mode_shape", || {
            format!("sample {i} is not finite")
        })?;
        tri.insert(Sample { p: Point2::new(x, y), psi })
            .map_err(|e| Error::invalid("mode_shape", format!("sample {i}: {e:?}")))?;
    }
    ensure(tri.num_inner_faces() > 0, "mode_shape", || {
        "needs at least 3 non-collinear samples".into()
    })?;

    let r = beam.waist_radius;
    let (cx, cy) = (beam.center_x, beam.center_y);
    let weight = |x: f64, y: f64| (-((x - cx).powi(2) + (y - cy).powi(2)) / (r * r)).exp();

    let mut inside = false;
    let mut acc = 0.0;
    let mut acc_abs = 0.0;
    for face in tri.inner_faces() {
        let v = face.vertices();
        let p: [(f64, f64, f64); 3] = [0, 1, 2].map(|k| {
            let s = v[k].data();
            (s.p.x, s.p.y, s.psi)
        });
        if !inside {
            inside = point_in_triangle((cx, cy), &p);
        }
        let longest = (0..3)
            .map(|k| {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        // Subdivide so each piece is small compared to the beam.
        let n = ((longest / (0.25 * r)).ceil() as usize).clamp(1, 4096);
        let (s, s_abs) = integrate_linear_triangle(&p, n, &weight);
        acc += s;
        acc_abs += s_abs;
    }
    ensure(inside, "beam.center", || {
        "beam center lies outside the sampled surface".into()
    })?;
    let norm = 1.0 / (PI * r * r);
    Ok((acc * norm, acc_abs * norm))
}

fn point_in_triangle(q: (f64, f64), p: &[(f64, f64, f64); 3]) -> bool {
    let cross = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0)
    };
    let d = [cross(p[0], p[1]), cross(p[1], p[2]), cross(p[2], p[0])];
    let neg = d.iter().any(|&x| x < 0.0);
    let pos = d.iter().any(|&x| x > 0.0);
    !(neg && pos)
}

/// ∫ψ·w and ∫|ψ|·w over a triangle with linear ψ, split into n² pieces.
fn integrate_linear_triangle(
    p: &[(f64, f64, f64); 3],
    n: usize,
    weight: &impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let area = 0.5
        * ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs();
    let h = 1.0 / n as f64;
    let at = |u: f64, v: f64| {
        let w = 1.0 - u - v;
        (
            w * p[0].0 + u * p[1].0 + v * p[2].0,
            w * p[0].1 + u * p[1].1 + v * p[2].1,
            w * p[0].2 + u * p[1].2 + v * p[2].2,
        )
    };
    let sub_area = area * h * h;
    let mut s = 0.0;
    let mut s_abs = 0.0;
    let mut piece = |c: [(f64, f64); 3]| {
        for &(l1, l2, wq) in TRI_RULE.iter() {
            let l0 = 1.0 - l1 - l2;
            let u = l0 * c[0].0 + l1 * c[1].0 + l2 * c[2].0;
            let v = l0 * c[0].1 + l1 * c[1].1 + l2 * c[2].1;
            let (x, y, psi) = at(u, v);
            let g = weight(x, y) * wq * sub_area;
            s += psi * g;
            s_abs += psi.abs() * g;
        }
    };
    for i in 0..n {
        for j in 0..n - i {
            let (u, v) = (i as f64 * h, j as f64 * h);
            piece([(u, v), (u + h, v), (u, v + h)]);
            if i + j + 1 < n {
                piece([(u + h, v), (u + h, v + h), (u, v + h)]);
            }
        }
    }
    (s, s_abs)
}

/// Modal mass m_n = M_n/LWD².
pub fn modal_mass(shape: &SampledModeShape, beam: &BeamProfile) -> Result<ModalMass> {
    ensure(shape.volume_norm.is_finite() && shape.volume_norm > 0.0, "mode_shape.volume_norm", || {
        format!("must be > 0 kg, got {}", shape.volume_norm)
    })?;
    ensure(beam.waist_radius.is_finite() && beam.waist_radius > 0.0, "beam.waist_radius", || {
        format!("must be > 0 m, got {}", beam.waist_radius)
    })?;
    let (l, scale) = lwd(shape, beam)?;
    if scale == 0.0 || l.abs() <= 1e-9 * scale {
        return Ok(ModalMass::Unbounded);
    }
    Ok(ModalMass::Finite(shape.volume_norm / (l * l)))
}

// ---------------------------------------------------------------------------
// Closed-form mode frequencies of the cantilever + mirror pad

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantileverGeometry {
    pub length_l: f64,
    pub radius_r: f64,
    pub width_w: f64,
    pub thickness_cantilever: f64,
    pub thickness_mirror: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
    pub density_mirror: f64,
    pub density_cantilever: f64,
}

impl CantileverGeometry {
    /// GaAs/AlGaAs material constants with a 225 nm cantilever and 4 µm mirror.
    pub fn gaas(length_l: f64, radius_r: f64, width_w: f64) -> Self {
        CantileverGeometry {
            length_l,
            radius_r,
            width_w,
            thickness_cantilever: 225e-9,
            thickness_mirror: 4e-6,
            youngs_modulus: 85e9,
            shear_modulus: 60e9,
            density_mirror: 4562.0,
            density_cantilever: 5316.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("length_l", self.length_l),
            ("radius_r", self.radius_r),
            ("width_w", self.width_w),
            ("thickness_cantilever", self.thickness_cantilever),
            ("thickness_mirror", self.thickness_mirror),
            ("youngs_modulus", self.youngs_modulus),
            ("shear_modulus", self.shear_modulus),
            ("density_mirror", self.density_mirror),
            ("density_cantilever", self.density_cantilever),
        ];
        for (k, v) in all {
            ensure(v.is_finite() && v > 0.0, &format!("geometry.{k}"), || {
                format!("must be > 0, got {v}")
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "snake_case")]
pub enum ModeKind {
    FundZ,
    FundY,
    Torsion,
    BendZ(u8),
    BendY(u8),
}

/// Bending-mode eigenvalues λ_n for n = 3, 4, 5.
pub const BEND_LAMBDAS: [(u8, f64); 3] = [(3, 4.7), (4, 7.9), (5, 11.0)];

/// Approximate mode frequencies, sorted ascending.
pub fn analytic_modes(g: &CantileverGeometry) -> Result<Vec<(ModeKind, f64)>> {
    g.validate()?;
    let (l, r, w) = (g.length_l, g.radius_r, g.width_w);
    let (tc, tm) = (g.thickness_cantilever, g.thickness_mirror);
    let lever = r * r * (l + r).powi(3) * g.density_mirror * PI.powi(3) * tm;
    let mut out = vec![
        (ModeKind::FundZ, 0.25 * (g.youngs_modulus * w * tc.powi(3) / lever).sqrt()),
        (ModeKind::FundY, 0.25 * (g.youngs_modulus * w.powi(3) * tc / lever).sqrt()),
        (
            ModeKind::Torsion,
            0.1 * (g.shear_modulus * w * tc.powi(3) / (l * r.powi(4) * g.density_mirror * tm)).sqrt(),
        ),
    ];
    let beam = g.youngs_modulus / (3.0 * l.powi(4) * g.density_cantilever);
    for (n, lam) in BEND_LAMBDAS {
        let pre = lam * lam / (4.0 * PI);
        out.push((ModeKind::BendZ(n), pre * (tc * tc * beam).sqrt()));
        out.push((ModeKind::BendY(n), pre * (w * w * beam).sqrt()));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn susceptibility_limits() {
        let osc = fifty_ng_resonator();
        let m = 50e-12;
        let static_chi = 1.0 / (4.0 * PI * PI * m * 876.0f64.powi(2));
        assert_relative_eq!(susceptibility(&osc, 1.0).norm(), static_chi, max_relative = 1e-5);
        assert_relative_eq!(static_chi, 660.0, max_relative = 2e-3);
        let free = 1.0 / (4.0 * PI * PI * m * 1e8);
        assert_relative_eq!(free, 5.07, max_relative = 2e-3);
        assert_relative_eq!(susceptibility(&osc, 1e4).norm(), free, max_relative = 1e-2);
        assert!(susceptibility(&osc, 500.0).im < 0.0);

        let mode = osc.fundamental();
        let f = 3_000.0;
        let sum: Complex64 = [mode, mode].iter().map(|m| m.susceptibility(f)).sum();
        assert_eq!(sum, 2.0 * mode.susceptibility(f));
    }

    #[test]
    fn thermal_displacement_examples() {
        let osc = fifty_ng_resonator();
        let asd = thermal_displacement_psd(&osc, 1e4).unwrap().sqrt();
        assert_relative_eq!(asd, 7.95e-16, max_relative = 1e-2);
        // on resonance: 4kTQ/(mω³)
        let w = TAU * 876.0;
        let oracle = 4.0 * K_B * 295.0 * 16_000.0 / (50e-12 * w.powi(3));
        assert_relative_eq!(thermal_displacement_psd(&osc, 876.0).unwrap(), oracle, max_relative = 1e-8);
        assert_relative_eq!(oracle.sqrt(), 5.6e-9, max_relative = 1e-2);
        let cold = osc.with_temperature(1e-300);
        assert!(thermal_displacement_psd(&cold, 1e4).unwrap() < 1e-300);
        assert!(thermal_displacement_psd(&osc, 0.0).is_err());
    }

    #[test]
    fn thermal_force_examples() {
        let mode = *fifty_ng_resonator().fundamental();
        let s = thermal_force_psd(&mode, 295.0, 2e4).unwrap();
        assert_relative_eq!(s, 1.227e-32, max_relative = 2e-3);
        let s2 = thermal_force_psd(&mode, 295.0, 4e4).unwrap();
        assert_relative_eq!(s2, s / 2.0, max_relative = 1e-14);
        assert!(thermal_force_psd(&mode, 295.0, 0.0).is_err());
        let v = MechMode::viscous(288.0, 500e-12, 8000.0);
        let sv1 = thermal_force_psd(&v, 295.0, 10.0).unwrap();
        let sv2 = thermal_force_psd(&v, 295.0, 1e4).unwrap();
        assert_eq!(sv1, sv2);
    }

    #[test]
    fn high_frequency_slope() {
        let osc = multimode();
        let fmax = osc.modes().last().unwrap().freq;
        let (f1, f2) = (30.0 * fmax, 100.0 * fmax);
        let a1 = thermal_displacement_psd(&osc, f1).unwrap().sqrt();
        let a2 = thermal_displacement_psd(&osc, f2).unwrap().sqrt();
        let slope = (a2 / a1).ln() / (f2 / f1).ln();
        assert!((slope + 2.5).abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn ordering_enforced() {
        let a = MechMode::new(100.0, 1e-9, 1e4);
        let b = MechMode::new(100.0, 2e-9, 1e4);
        let err = Oscillator::new(vec![a, b], 295.0).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let c = MechMode::new(50.0, 2e-9, 1e4);
        assert!(Oscillator::new(vec![a, c], 295.0).is_err());
        assert!(Oscillator::new(vec![], 295.0).is_err());
    }

    fn grid_shape(half: f64, n: usize, psi: impl Fn(f64, f64) -> f64, mass: f64) -> SampledModeShape {
        let mut s = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                let x = -half + 2.0 * half * i as f64 / n as f64;
                let y = -half + 2.0 * half * j as f64 / n as f64;
                s.push((x, y, psi(x, y)));
            }
        }
        SampledModeShape { surface_samples: s, volume_norm: mass }
    }

    // Brute-force midpoint-rule oracle on a fine Cartesian grid.
    fn oracle_lwd(half: f64, psi: impl Fn(f64, f64) -> f64, beam: &BeamProfile, n: usize) -> f64 {
        let h = 2.0 * half / n as f64;
        let r = beam.waist_radius;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -half + (i as f64 + 0.5) * h;
                let y = -half + (j as f64 + 0.5) * h;
                let w = (-((x - beam.center_x).powi(2) + (y - beam.center_y).powi(2)) / (r * r)).exp();
                acc += psi(x, y) * w * h * h;
            }
        }
        acc / (PI * r * r)
    }

    #[test]
    fn piston_mode_mass() {
        let shape = grid_shape(100e-6, 20, |_, _| 1.0, 50e-12);
        let beam = BeamProfile { waist_radius: 10e-6, center_x: 0.0, center_y: 0.0 };
        let m = modal_mass(&shape, &beam).unwrap().kg().unwrap();
        assert_relative_eq!(m, 50e-12, max_relative = 1e-6);
    }

    #[test]
    fn tilt_on_node_is_unbounded() {
        let shape = grid_shape(100e-6, 20, |x, _| x / 100e-6, 50e-12);
        let beam = BeamProfile { waist_radius: 10e-6, center_x: 0.0, center_y: 0.0 };
        assert_eq!(modal_mass(&shape, &beam).unwrap(), ModalMass::Unbounded);
    }

    #[test]
    fn offset_tilt_matches_bruteforce() {
        let half = 100e-6;
        let x0 = 60e-6;
        let psi = move |x: f64, _y: f64| x / x0;
        let shape = grid_shape(half, 40, psi, 1e-10);
        let beam = BeamProfile { waist_radius: 3e-6, center_x: x0, center_y: 0.0 };
        let ours = modal_mass(&shape, &beam).unwrap().kg().unwrap();
        let l = oracle_lwd(half, psi, &beam, 2000);
        let oracle = 1e-10 / (l * l);
        assert_relative_eq!(ours, oracle, max_relative = 1e-4);
        assert_relative_eq!(ours, 1e-10, max_relative = 1e-3);
    }

    #[test]
    fn curved_mode_matches_bruteforce() {
        let half = 50e-6;
        let psi = |x: f64, y: f64| 1.0 - ((x * x + y * y) / (half * half));
        let shape = grid_shape(half, 80, psi, 2e-11);
        let beam = BeamProfile { waist_radius: 15e-6, center_x: 10e-6, center_y: -5e-6 };
        let ours = modal_mass(&shape, &beam).unwrap().kg().unwrap();
        let l = oracle_lwd(half, psi, &beam, 2000);
        assert_relative_eq!(ours, 2e-11 / (l * l), max_relative = 1e-3);
    }

    #[test]
    fn modal_mass_rejects_bad_input() {
        let shape = SampledModeShape {
            surface_samples: vec![(0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (2.0, 0.0, 1.0)],
            volume_norm: 1.0,
        };
        let beam = BeamProfile { waist_radius: 0.1, center_x: 1.0, center_y: 0.0 };
        assert!(modal_mass(&shape, &beam).is_err());
        let shape = grid_shape(1.0, 4, |_, _| 1.0, 1.0);
        let outside = BeamProfile { waist_radius: 0.1, center_x: 5.0, center_y: 0.0 };
        assert!(modal_mass(&shape, &outside).is_err());
    }

    #[test]
    fn analytic_mode_examples() {
        let g = CantileverGeometry::gaas(250e-6, 60e-6, 15e-6);
        let modes = analytic_modes(&g).unwrap();
        let get = |k: ModeKind| modes.iter().find(|m| m.0 == k).unwrap().1;
        // direct evaluation, independent of the implementation's grouping
        let oracle = 0.25
            * (85e9 * 15e-6 * (225e-9f64).powi(3)
                / (4562.0 * PI.powi(3) * (60e-6f64).powi(2) * (310e-6f64).powi(3) * 4e-6))
                .sqrt();
        assert_relative_eq!(get(ModeKind::FundZ), oracle, max_relative = 1e-12);
        assert_relative_eq!(oracle, 122.3, max_relative = 1e-3);
        assert!((get(ModeKind::FundZ) / 114.0 - 1.0).abs() < 0.15);
        assert_relative_eq!(get(ModeKind::Torsion), 1316.8, max_relative = 1e-3);
        let wide = CantileverGeometry { width_w: 60e-6, ..g };
        let fz4 = analytic_modes(&wide).unwrap().iter().find(|m| m.0 == ModeKind::FundZ).unwrap().1;
        assert_relative_eq!(fz4, 2.0 * get(ModeKind::FundZ), max_relative = 1e-12);
        assert!(modes.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(modes.len(), 9);
    }

    fn arb_mode() -> impl Strategy<Value = MechMode> {
        (10.0f64..1e5, -12.0f64..-8.0, 100.0f64..1e5, any::<bool>()).prop_map(|(f, lm, q, v)| {
            let m = MechMode::new(f, 10f64.powf(lm), q);
            if v { MechMode { damping: DampingKind::Viscous, ..m } } else { m }
        })
    }

    proptest! {
        #[test]
        fn fluctuation_dissipation(mode in arb_mode(), f in 1.0f64..1e6, t in 1.0f64..400.0) {
            // A per-rad/s density G(Ω) = (2kT/πΩ)(−Im χ) becomes per-Hz by × 2π.
            let w = TAU * f;
            let g = 2.0 * K_B * t / (PI * w) * (-mode.susceptibility(f).im);
            let s = mode.thermal_displacement_psd(t, f);
            prop_assert!((s / (TAU * g) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn multimode_is_sum(a in arb_mode(), b in arb_mode(), f in 1.0f64..1e6) {
            prop_assume!((a.freq - b.freq).abs() > 1e-6 * a.freq);
            let (lo, hi) = if a.freq < b.freq { (a, b) } else { (b, a) };
            let osc = Oscillator::new(vec![lo, hi], 295.0).unwrap();
            let total = thermal_displacement_psd(&osc, f).unwrap();
            let parts = lo.thermal_displacement_psd(295.0, f) + hi.thermal_displacement_psd(295.0, f);
            prop_assert!((total / parts - 1.0).abs() < 1e-12);
        }

        #[test]
        fn modal_mass_rescaling(c in 0.1f64..10.0) {
            let psi = |x: f64, y: f64| 1.0 + 0.3 * x / 1e-4 - 0.2 * y / 1e-4;
            let beam = BeamProfile { waist_radius: 2e-5, center_x: 1e-5, center_y: 2e-5 };
            let a = modal_mass(&grid_shape(1e-4, 10, psi, 1e-11), &beam).unwrap().kg().unwrap();
            let b = modal_mass(&grid_shape(1e-4, 10, |x, y| c * psi(x, y), c * c * 1e-11), &beam)
                .unwrap().kg().unwrap();
            prop_assert!((a / b - 1.0).abs() < 1e-9);
        }
    }
}
