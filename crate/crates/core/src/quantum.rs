//! Frequency-domain field equations of the cavity and mirror, solved as a
//! dense 16×16 linear system, and the output covariances built from them.
//!
//! Sideband variables use the e^{−iΩt} convention. A field and its adjoint
//! are carried as independent unknowns with conjugated coefficients. The
//! mechanical response in the matrix is therefore the conjugate of
//! [`crate::mechanics::susceptibility`].
//!
//! Quadratures: index 0 is the amplitude (cosine) quadrature, index 1 the
//! phase (sine) quadrature. Covariances are normalized to shot noise = 1.

use nalgebra::{Matrix2, Matrix4, SMatrix};
use num_complex::Complex64;
use serde::Serialize;

use crate::cavity::{CavityConfig, DerivedCavity, MeasurementPort};
use crate::consts::{C, HBAR, TAU};
use crate::error::{ensure, Error, Result};
use crate::mechanics::{self, Oscillator};

pub type Cov2 = Matrix2<f64>;
pub type Mat16 = SMatrix<Complex64, 16, 16>;
type CMat2 = Matrix2<Complex64>;

/// Unknowns of the field equations, in matrix order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(usize)]
pub enum Field {
    A,
    Ad,
    Ain3,
    Ain3d,
    Ain2,
    Ain2d,
    Aout2,
    Aout2d,
    Ain1,
    Ain1d,
    Aout1,
    Aout1d,
    X,
    P,
    Frad,
    Fth,
}

pub const BASIS: [Field; 16] = [
    Field::A,
    Field::Ad,
    Field::Ain3,
    Field::Ain3d,
    Field::Ain2,
    Field::Ain2d,
    Field::Aout2,
    Field::Aout2d,
    Field::Ain1,
    Field::Ain1d,
    Field::Aout1,
    Field::Aout1d,
    Field::X,
    Field::P,
    Field::Frad,
    Field::Fth,
];

impl Field {
    pub const fn idx(self) -> usize {
        self as usize
    }
}

/// Coupling rates of the three optical ports (1 = input mirror, 2 = output
/// mirror, 3 = output-mirror loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortRates {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma: f64,
    /// Δ = δ·γ, rad/s.
    pub delta_abs: f64,
    /// g = √(4πP_cav/(ħLλ)).
    pub g: f64,
}

impl PortRates {
    pub fn new(cfg: &CavityConfig, der: &DerivedCavity) -> Self {
        let rate = |t: f64| C * t / (4.0 * cfg.length);
        let (gamma1, gamma2, gamma3) = (rate(cfg.t1), rate(cfg.t2), rate(cfg.l2));
        let gamma = gamma1 + gamma2 + gamma3;
        PortRates {
            gamma1,
            gamma2,
            gamma3,
            gamma,
            delta_abs: cfg.detuning * gamma,
            g: crate::cavity::g_squared(cfg, der.p_cav).sqrt(),
        }
    }

    pub fn detuning(&self) -> f64 {
        self.delta_abs / self.gamma
    }
}

/// Dynamical matrix stored in scaled variables x' = g·x and F' = F/(ħg),
/// which keeps every entry near unity. [`DynamicalMatrix::entry`] returns the
/// unscaled coefficient.
#[derive(Debug, Clone)]
pub struct DynamicalMatrix {
    scaled: Mat16,
    scale: [f64; 16],
    pub freq: f64,
}

impl DynamicalMatrix {
    pub fn entry(&self, row: Field, col: Field) -> Complex64 {
        let (i, j) = (row.idx(), col.idx());
        self.scaled[(i, j)] * self.scale[i] / self.scale[j]
    }

    pub fn scaled(&self) -> &Mat16 {
        &self.scaled
    }
}

/// Build the field equations at `f` using the engine susceptibility `chi`
/// (e^{−iΩt} convention).
pub fn build_dynamical_matrix_with(rates: &PortRates, chi: Complex64, f: f64) -> Result<DynamicalMatrix> {
    ensure(f > 0.0 && f.is_finite(), "f", || format!("must be > 0 Hz, got {f}"))?;
    use Field::*;
    let w = TAU * f;
    // (−iΩ)⁻¹
    let xinv = Complex64::new(0.0, 1.0 / w);
    let i = Complex64::i();
    let (gm, dl, g) = (rates.gamma, rates.delta_abs, rates.g);

    let mut scale = [1.0; 16];
    if g > 0.0 {
        scale[X.idx()] = 1.0 / g;
        scale[Frad.idx()] = HBAR * g;
        scale[Fth.idx()] = HBAR * g;
    }
    let mut m = Mat16::zeros();
    let mut set = |r: Field, c: Field, v: Complex64| {
        m[(r.idx(), c.idx())] = v * scale[c.idx()] / scale[r.idx()];
    };
    set(A, A, -(gm - i * dl) * xinv);
    set(Ad, Ad, -(gm + i * dl) * xinv);
    set(A, X, i * g * xinv);
    set(Ad, X, -i * g * xinv);
    for (rate, ain, aind) in [
        (rates.gamma3, Ain3, Ain3d),
        (rates.gamma2, Ain2, Ain2d),
        (rates.gamma1, Ain1, Ain1d),
    ] {
        let k = (2.0 * rate).sqrt();
        set(A, ain, k * xinv);
        set(Ad, aind, k * xinv);
    }
    for (rate, ain, aind, aout, aoutd) in [
        (rates.gamma2, Ain2, Ain2d, Aout2, Aout2d),
        (rates.gamma1, Ain1, Ain1d, Aout1, Aout1d),
    ] {
        let k = Complex64::from((2.0 * rate).sqrt());
        set(aout, ain, (-1.0).into());
        set(aoutd, aind, (-1.0).into());
        set(aout, A, k);
        set(aoutd, Ad, k);
    }
    set(X, Frad, chi);
    set(X, Fth, chi);
    set(Frad, A, (-HBAR * g).into());
    set(Frad, Ad, (-HBAR * g).into());
    Ok(DynamicalMatrix { scaled: m, scale, freq: f })
}

/// Field equations with the full multi-mode susceptibility of `osc`.
pub fn build_dynamical_matrix(rates: &PortRates, osc: &Oscillator, f: f64) -> Result<DynamicalMatrix> {
    ensure(f > 0.0 && f.is_finite(), "f", || format!("must be > 0 Hz, got {f}"))?;
    build_dynamical_matrix_with(rates, mechanics::susceptibility(osc, f).conj(), f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPort {
    Laser,
    Trans,
    Loss,
    ThermalForce,
}

pub const INPUTS: [InputPort; 4] = [InputPort::Laser, InputPort::Trans, InputPort::Loss, InputPort::ThermalForce];

/// Quadrature transfer matrix from one input to one output.
///
/// For the thermal force the first column is the response of (amplitude,
/// phase) to a unit force in N and the second column is zero, so that
/// `T·diag(S_F, 0)·T†` is the thermal covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortTF {
    pub input: InputPort,
    pub output: MeasurementPort,
    pub matrix: CMat2,
}

/// All eight transfer matrices at one frequency.
#[derive(Debug, Clone)]
pub struct TransferSet {
    pub freq: f64,
    pub tfs: Vec<PortTF>,
}

impl TransferSet {
    pub fn get(&self, input: InputPort, output: MeasurementPort) -> &CMat2 {
        &self
            .tfs
            .iter()
            .find(|t| t.input == input && t.output == output)
            .expect("transfer set is complete")
            .matrix
    }
}

fn ms2q() -> CMat2 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    CMat2::new(r.into(), r.into(), Complex64::new(0.0, -r), Complex64::new(0.0, r))
}

fn q2ms() -> CMat2 {
    // inverse of ms2q: (1/√2)[[1, i],[1, −i]]
    let r = std::f64::consts::FRAC_1_SQRT_2;
    CMat2::new(r.into(), Complex64::new(0.0, r), r.into(), Complex64::new(0.0, -r))
}

/// Solve TFM = (I − DM)⁻¹ and convert the port blocks to quadratures.
pub fn port_transfer_matrices(dm: &DynamicalMatrix) -> Result<TransferSet> {
    use Field::*;
    let f = dm.freq;
    let lhs = Mat16::identity() - dm.scaled;
    let tfm = lhs.lu().try_inverse().ok_or(Error::Singular { freq_hz: f })?;
    if tfm.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular { freq_hz: f });
    }
    let at = |r: Field, c: Field| tfm[(r.idx(), c.idx())] * dm.scale[r.idx()] / dm.scale[c.idx()];
    let (m, mi) = (ms2q(), q2ms());
    let mut tfs = Vec::with_capacity(8);
    for (output, out, outd) in [
        (MeasurementPort::Reflection, Aout1, Aout1d),
        (MeasurementPort::Transmission, Aout2, Aout2d),
    ] {
        for (input, inp, inpd) in [
            (InputPort::Laser, Ain1, Ain1d),
            (InputPort::Trans, Ain2, Ain2d),
            (InputPort::Loss, Ain3, Ain3d),
        ] {
            let s = CMat2::new(at(out, inp), at(out, inpd), at(outd, inp), at(outd, inpd));
            tfs.push(PortTF { input, output, matrix: m * s * mi });
        }
        let col = m * nalgebra::Vector2::new(at(out, Fth), at(outd, Fth));
        tfs.push(PortTF {
            input: InputPort::ThermalForce,
            output,
            matrix: CMat2::new(col[0], 0.0.into(), col[1], 0.0.into()),
        });
    }
    Ok(TransferSet { freq: f, tfs })
}

/// Laser covariance at the cavity, rotated by θ_δ = arctan(−δ) from the laser
/// basis: R·diag(1 + S_RIN, 1 + S_PN)·Rᵀ.
pub fn input_laser_covariance(s_rin: f64, s_pn: f64, delta: f64) -> Cov2 {
    let d2 = 1.0 + delta * delta;
    let off = (s_pn - s_rin) * delta / d2;
    Cov2::new(
        (1.0 + s_rin + (1.0 + s_pn) * delta * delta) / d2,
        off,
        off,
        (1.0 + s_pn + (1.0 + s_rin) * delta * delta) / d2,
    )
}

/// Classical inputs at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NoiseInputs {
    pub s_rin: f64,
    pub s_pn: f64,
    /// Thermal force PSD, N²/Hz.
    pub s_f_th: f64,
    pub delta: f64,
}

/// Output covariance split by origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovLayers {
    /// Vacuum entering every port (and the mode-mismatch vacuum).
    pub quantum: Cov2,
    pub thermal: Cov2,
    pub rin: Cov2,
    pub pn: Cov2,
}

impl CovLayers {
    pub fn total(&self) -> Cov2 {
        self.quantum + self.thermal + self.rin + self.pn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortCovariance {
    pub port: MeasurementPort,
    pub freq: f64,
    pub matrix: Cov2,
    pub layers: CovLayers,
}

fn propagate(t: &CMat2, sigma: &Cov2) -> Result<Cov2> {
    let s = sigma.map(Complex64::from);
    let out = t * s * t.adjoint();
    let scale = out.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let herm = (out - out.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm > 1e-9 * scale {
        return Err(Error::Consistency(format!("covariance not Hermitian (residual {herm:e})")));
    }
    // Quadratures are real, so only the symmetric real part is observable.
    let re = out.map(|z| z.re);
    Ok((re + re.transpose()) * 0.5)
}

/// Output covariance at `port`. On reflection, `mode_matching` < 1 mixes the
/// field with vacuum: σ → ησ + (1 − η)I.
pub fn port_covariance(
    tfs: &TransferSet,
    noise: &NoiseInputs,
    port: MeasurementPort,
    mode_matching: f64,
) -> Result<PortCovariance> {
    ensure(noise.s_rin >= 0.0 && noise.s_pn >= 0.0, "laser noise", || "PSDs must be >= 0".into())?;
    ensure(noise.s_f_th >= 0.0, "s_f_th", || "must be >= 0".into())?;
    ensure((0.0..=1.0).contains(&mode_matching), "mode_matching", || "must be in [0, 1]".into())?;
    let laser_vac = input_laser_covariance(0.0, 0.0, noise.delta);
    let rin = input_laser_covariance(noise.s_rin, 0.0, noise.delta) - laser_vac;
    let pn = input_laser_covariance(0.0, noise.s_pn, noise.delta) - laser_vac;
    let tl = tfs.get(InputPort::Laser, port);
    let mut layers = CovLayers {
        quantum: propagate(tl, &laser_vac)?
            + propagate(tfs.get(InputPort::Trans, port), &Cov2::identity())?
            + propagate(tfs.get(InputPort::Loss, port), &Cov2::identity())?,
        thermal: propagate(tfs.get(InputPort::ThermalForce, port), &Cov2::new(noise.s_f_th, 0.0, 0.0, 0.0))?,
        rin: propagate(tl, &rin)?,
        pn: propagate(tl, &pn)?,
    };
    if port == MeasurementPort::Reflection && mode_matching < 1.0 {
        let eta = mode_matching;
        layers = CovLayers {
            quantum: layers.quantum * eta + Cov2::identity() * (1.0 - eta),
            thermal: layers.thermal * eta,
            rin: layers.rin * eta,
            pn: layers.pn * eta,
        };
    }
    let matrix = layers.total();
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("covariance not finite at {} Hz", tfs.freq)));
    }
    Ok(PortCovariance { port, freq: tfs.freq, matrix, layers })
}

/// N(ξ) = cos²ξ·σ₁₁ + sin²ξ·σ₂₂ + sinξ·cosξ·(σ₁₂ + σ₂₁).
pub fn quadrature_noise(cov: &Cov2, xi: f64) -> f64 {
    let (s, c) = xi.sin_cos();
    c * c * cov[(0, 0)] + s * s * cov[(1, 1)] + s * c * (cov[(0, 1)] + cov[(1, 0)])
}

/// Joint reflection ⊕ transmission covariance (no mode-matching loss) and
/// its determinant.
pub fn multiport_uncertainty(tfs: &TransferSet, noise: &NoiseInputs) -> Result<(Matrix4<f64>, f64)> {
    use MeasurementPort::*;
    let stack = |input: InputPort| {
        let (r, t) = (tfs.get(input, Reflection), tfs.get(input, Transmission));
        let mut m = nalgebra::Matrix4x2::<Complex64>::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(r);
        m.fixed_view_mut::<2, 2>(2, 0).copy_from(t);
        m
    };
    let sources = [
        (InputPort::Laser, input_laser_covariance(noise.s_rin, noise.s_pn, noise.delta)),
        (InputPort::Trans, Cov2::identity()),
        (InputPort::Loss, Cov2::identity()),
        (InputPort::ThermalForce, Cov2::new(noise.s_f_th, 0.0, 0.0, 0.0)),
    ];
    let mut joint = Matrix4::<Complex64>::zeros();
    for (input, sigma) in sources {
        let t = stack(input);
        joint += t * sigma.map(Complex64::from) * t.adjoint();
    }
    let re = joint.map(|z| z.re);
    let sym = (re + re.transpose()) * 0.5;
    let det = sym.determinant();
    if !det.is_finite() {
        return Err(Error::Numerical("joint covariance not finite".into()));
    }
    Ok((sym, det))
}

/// Everything the engine needs to evaluate one configuration.
#[derive(Debug, Clone)]
pub struct Engine {
    pub cfg: CavityConfig,
    pub derived: DerivedCavity,
    pub rates: PortRates,
    pub osc: Oscillator,
    pub laser: crate::cavity::LaserNoise,
    pub thermal: bool,
    pub rin: bool,
    pub pn: bool,
}

/// One solved frequency.
#[derive(Debug, Clone)]
pub struct FreqSolution {
    pub freq: f64,
    pub tfs: TransferSet,
    pub noise: NoiseInputs,
}

impl Engine {
    pub fn new(cfg: &CavityConfig, osc: &Oscillator, laser: &crate::cavity::LaserNoise) -> Result<Self> {
        let derived = crate::cavity::derive(cfg)?;
        laser.validate()?;
        Ok(Engine {
            cfg: *cfg,
            derived,
            rates: PortRates::new(cfg, &derived),
            osc: osc.clone(),
            laser: *laser,
            thermal: true,
            rin: true,
            pn: true,
        })
    }

    pub fn noise_inputs(&self, f: f64) -> Result<NoiseInputs> {
        let (s_rin, s_pn) =
            crate::cavity::classical_noise_psd(&self.laser, self.derived.p_coupled, self.cfg.wavelength, f)?;
        let s_f_th = if self.thermal { mechanics::effective_thermal_force_psd(&self.osc, f)? } else { 0.0 };
        Ok(NoiseInputs {
            s_rin: if self.rin { s_rin } else { 0.0 },
            s_pn: if self.pn { s_pn } else { 0.0 },
            s_f_th,
            delta: self.cfg.detuning,
        })
    }

    pub fn solve(&self, f: f64) -> Result<FreqSolution> {
        let dm = build_dynamical_matrix(&self.rates, &self.osc, f)?;
        Ok(FreqSolution { freq: f, tfs: port_transfer_matrices(&dm)?, noise: self.noise_inputs(f)? })
    }

    pub fn covariance(&self, f: f64, port: MeasurementPort) -> Result<PortCovariance> {
        let s = self.solve(f)?;
        port_covariance(&s.tfs, &s.noise, port, self.cfg.mode_matching)
    }
}
