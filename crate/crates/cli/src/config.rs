//! TOML run configuration. Every key is SI; defaults are filled at parse
//! time and the result is validated before any computation starts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ponder::detection::HomodyneSetup;
use ponder::mechanics::{CantileverGeometry, DampingKind};
use ponder::optomech::{GainModel, Zpk};
use ponder::sweep::{Axis, FCapRule, Objective};
use ponder::{CavityConfig, LaserNoise, MeasurementPort, MechMode, NoiseModel, Oscillator, PowerSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TEMPERATURE: f64 = 295.0;
pub const DEFAULT_Q: f64 = 20_000.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    cavity: RawCavity,
    #[serde(default)]
    laser: RawLaser,
    oscillator: RawOscillator,
    #[serde(default)]
    noise: RawNoise,
    detection: Option<RawDetection>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    output: RawOutput,
    sweep: Option<RawSweep>,
    lock: Option<RawLock>,
    geometry: Option<RawGeometry>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
enum PowerKind {
    Input,
    #[default]
    IntracavityAtResonance,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCavity {
    length: f64,
    #[serde(default = "default_wavelength")]
    wavelength: f64,
    t1: f64,
    t2: f64,
    #[serde(default)]
    l1: f64,
    #[serde(default)]
    l2: f64,
    detuning: f64,
    power: f64,
    #[serde(default)]
    power_kind: PowerKind,
    #[serde(default = "one")]
    mode_matching: f64,
    #[serde(default = "default_port")]
    port: MeasurementPort,
}

fn default_wavelength() -> f64 {
    1064e-9
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_port() -> MeasurementPort {
    MeasurementPort::Transmission
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLaser {
    #[serde(default = "default_rin")]
    rin: f64,
    #[serde(default = "default_sff")]
    freq_noise_coeff: f64,
    #[serde(default = "default_sff_exp")]
    freq_noise_exponent: f64,
}

fn default_rin() -> f64 {
    LaserNoise::default().rin_asd
}
fn default_sff() -> f64 {
    LaserNoise::default().freq_noise_coeff
}
fn default_sff_exp() -> f64 {
    LaserNoise::default().freq_noise_exponent
}

impl Default for RawLaser {
    fn default() -> Self {
        RawLaser { rin: default_rin(), freq_noise_coeff: default_sff(), freq_noise_exponent: default_sff_exp() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOscillator {
    #[serde(default = "default_temperature")]
    temperature: f64,
    /// Q used for modes that do not give their own.
    #[serde(default = "default_q")]
    quality: f64,
    modes: Option<Vec<RawMode>>,
    modes_csv: Option<PathBuf>,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_q() -> f64 {
    DEFAULT_Q
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    freq: f64,
    mass: f64,
    q: Option<f64>,
    #[serde(default)]
    damping: DampingKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    #[serde(default = "yes")]
    thermal: bool,
    #[serde(default = "yes")]
    rin: bool,
    #[serde(default = "yes")]
    pn: bool,
}

impl Default for RawNoise {
    fn default() -> Self {
        RawNoise { thermal: true, rin: true, pn: true }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    bs_transmission: f64,
    signal_power: f64,
    lo_power: f64,
    #[serde(default)]
    lo_phase_deg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default = "default_fmin")]
    f_min: f64,
    #[serde(default = "default_fmax")]
    f_max: f64,
    #[serde(default = "default_points")]
    points: usize,
    #[serde(default = "default_angles")]
    angles: usize,
    /// Search cap, Hz. Defaults to a third of the optical-spring frequency.
    f_cap: Option<f64>,
}

fn default_fmin() -> f64 {
    10.0
}
fn default_fmax() -> f64 {
    1e6
}
fn default_points() -> usize {
    ponder::metrics::DEFAULT_FREQ_POINTS
}
fn default_angles() -> usize {
    ponder::metrics::DEFAULT_ANGLE_POINTS
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid { f_min: default_fmin(), f_max: default_fmax(), points: default_points(), angles: default_angles(), f_cap: None }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    spectrum: Option<PathBuf>,
    budget: Option<PathBuf>,
    summary: Option<PathBuf>,
    sweep: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    t1: Option<Vec<f64>>,
    t2: Option<Vec<f64>>,
    l2: Option<Vec<f64>>,
    detuning: Option<Vec<f64>>,
    mode_matching: Option<Vec<f64>>,
    power: Option<Vec<f64>>,
    #[serde(default = "default_objective")]
    objective: Objective,
    max_configs: Option<usize>,
    /// Search cap as a fraction of each configuration's f_OS.
    f_cap_fraction: Option<f64>,
}

fn default_objective() -> Objective {
    Objective::MinNMin
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLock {
    #[serde(default = "one")]
    dc_gain: f64,
    #[serde(default)]
    zeros_hz: Vec<f64>,
    #[serde(default)]
    poles_hz: Vec<f64>,
    #[serde(default = "default_lock_fmin")]
    f_min: f64,
    #[serde(default = "default_fmax")]
    f_max: f64,
    #[serde(default = "default_per_decade")]
    points_per_decade: usize,
    #[serde(default)]
    exact_spring: bool,
}

fn default_lock_fmin() -> f64 {
    1.0
}
fn default_per_decade() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    length: f64,
    radius: f64,
    width: f64,
    thickness_cantilever: Option<f64>,
    thickness_mirror: Option<f64>,
    youngs_modulus: Option<f64>,
    shear_modulus: Option<f64>,
    density_mirror: Option<f64>,
    density_cantilever: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub freqs: Vec<f64>,
    pub angles: Vec<f64>,
    pub f_cap: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub spectrum: Option<PathBuf>,
    pub budget: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub axes: Vec<(Axis, Vec<f64>)>,
    pub objective: Objective,
    pub max_configs: usize,
    pub f_cap: FCapRule,
}

#[derive(Debug, Clone)]
pub struct LockSettings {
    pub filter: Zpk,
    pub freqs: Vec<f64>,
    pub model: GainModel,
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cavity: CavityConfig,
    pub oscillator: Oscillator,
    pub noise: NoiseModel,
    pub detection: Option<HomodyneSetup>,
    pub grid: Grid,
    pub outputs: Outputs,
    pub sweep: Option<SweepSettings>,
    pub lock: Option<LockSettings>,
    pub geometry: Option<CantileverGeometry>,
}

pub fn parse_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_str(&text, base).with_context(|| format!("in {}", path.display()))
}

fn resolve(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

/// Parse TOML text; relative paths are resolved against `base`.
pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text)?;
    if let Some(v) = raw.schema_version {
        if v != SCHEMA_VERSION {
            bail!(ponder::Error::invalid("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")));
        }
    }
    let c = raw.cavity;
    let power = match c.power_kind {
        PowerKind::Input => PowerSpec::Input(c.power),
        PowerKind::IntracavityAtResonance => PowerSpec::IntracavityAtResonance(c.power),
    };
    let cavity = CavityConfig {
        length: c.length,
        wavelength: c.wavelength,
        t1: c.t1,
        t2: c.t2,
        l1: c.l1,
        l2: c.l2,
        detuning: c.detuning,
        power,
        mode_matching: c.mode_matching,
        port: c.port,
    };
    cavity.validate()?;

    let laser = LaserNoise {
        rin_asd: raw.laser.rin,
        freq_noise_coeff: raw.laser.freq_noise_coeff,
        freq_noise_exponent: raw.laser.freq_noise_exponent,
    };
    laser.validate()?;
    let noise = NoiseModel { thermal: raw.noise.thermal, rin: raw.noise.rin, pn: raw.noise.pn, laser };

    let oscillator = parse_oscillator(raw.oscillator, base)?;

    let detection = match raw.detection {
        Some(d) => {
            let t2 = d.bs_transmission;
            if !(t2 > 0.0 && t2 < 1.0) {
                bail!(ponder::Error::invalid("detection.bs_transmission", format!("must lie in (0, 1), got {t2}")));
            }
            if d.signal_power < 0.0 || d.lo_power < 0.0 {
                bail!(ponder::Error::invalid("detection", "powers must be >= 0 W"));
            }
            let s = HomodyneSetup {
                t2,
                r2: 1.0 - t2,
                e_signal: (d.signal_power / t2).sqrt(),
                e_lo: (d.lo_power / (1.0 - t2)).sqrt(),
                theta: d.lo_phase_deg.to_radians(),
            };
            s.validate()?;
            Some(s)
        }
        None => None,
    };

    let g = raw.grid;
    if g.f_min <= 0.0 {
        bail!(ponder::Error::invalid("grid.f_min", format!("must be > 0 Hz, got {}", g.f_min)));
    }
    let freqs = ponder::metrics::log_space(g.f_min, g.f_max, g.points)?;
    let angles = ponder::metrics::angle_space(g.angles)?;
    if let Some(cap) = g.f_cap {
        if !(cap >= g.f_min && cap <= g.f_max) {
            bail!(ponder::Error::invalid("grid.f_cap", format!("must lie within [f_min, f_max], got {cap}")));
        }
    }
    let grid = Grid { freqs, angles, f_cap: g.f_cap };

    let o = raw.output;
    let outputs = Outputs {
        spectrum: resolve(base, o.spectrum),
        budget: resolve(base, o.budget),
        summary: resolve(base, o.summary),
        sweep: resolve(base, o.sweep),
    };

    let sweep = raw.sweep.map(parse_sweep).transpose()?;
    let lock = raw.lock.map(parse_lock).transpose()?;
    let geometry = match raw.geometry {
        Some(r) => {
            let d = CantileverGeometry::gaas(r.length, r.radius, r.width);
            let g = CantileverGeometry {
                thickness_cantilever: r.thickness_cantilever.unwrap_or(d.thickness_cantilever),
                thickness_mirror: r.thickness_mirror.unwrap_or(d.thickness_mirror),
                youngs_modulus: r.youngs_modulus.unwrap_or(d.youngs_modulus),
                shear_modulus: r.shear_modulus.unwrap_or(d.shear_modulus),
                density_mirror: r.density_mirror.unwrap_or(d.density_mirror),
                density_cantilever: r.density_cantilever.unwrap_or(d.density_cantilever),
                ..d
            };
            g.validate()?;
            Some(g)
        }
        None => None,
    };

    Ok(RunConfig { cavity, oscillator, noise, detection, grid, outputs, sweep, lock, geometry })
}

fn parse_oscillator(o: RawOscillator, base: &Path) -> Result<Oscillator> {
    if !(o.quality.is_finite() && o.quality > 0.0) {
        bail!(ponder::Error::invalid("oscillator.quality", format!("must be > 0, got {}", o.quality)));
    }
    let to_mode = |m: &RawMode| MechMode { damping: m.damping, ..MechMode::new(m.freq, m.mass, m.q.unwrap_or(o.quality)) };
    let modes = match (o.modes, o.modes_csv) {
        (Some(_), Some(_)) => bail!(ponder::Error::invalid("oscillator", "give either modes or modes_csv, not both")),
        (None, None) => bail!(ponder::Error::invalid("oscillator", "one of modes or modes_csv is required")),
        (Some(list), None) => list.iter().map(to_mode).collect(),
        (None, Some(p)) => {
            let p = resolve(base, Some(p)).expect("path is present");
            read_modes_csv(&p, o.quality)?
        }
    };
    Ok(Oscillator::new(modes, o.temperature)?)
}

/// Columns `freq_hz, mass_kg` and optionally `q`, `damping`. Rows must be in
/// strictly increasing frequency; line numbers in errors count the header.
pub fn read_modes_csv(path: &Path, default_q: f64) -> Result<Vec<MechMode>> {
    #[derive(Deserialize)]
    struct Row {
        freq_hz: f64,
        mass_kg: f64,
        q: Option<f64>,
        damping: Option<DampingKind>,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("oscillator.modes_csv: cannot open {}", path.display()))?;
    let mut out: Vec<MechMode> = Vec::new();
    let mut prev_line = 0;
    for rec in rdr.deserialize::<Row>() {
        let row = rec.map_err(|e| ponder::Error::invalid("oscillator.modes_csv", e.to_string()))?;
        let line = prev_line + 1;
        let mode = MechMode { damping: row.damping.unwrap_or_default(), ..MechMode::new(row.freq_hz, row.mass_kg, row.q.unwrap_or(default_q)) };
        if let Some(last) = out.last() {
            if !(mode.freq > last.freq) {
                bail!(ponder::Error::invalid(
                    "oscillator.modes_csv",
                    format!("frequencies must increase: row {} ({} Hz) follows row {} ({} Hz)", line + 1, mode.freq, line, last.freq),
                ));
            }
        }
        prev_line = line;
        out.push(mode);
    }
    Ok(out)
}

fn parse_sweep(s: RawSweep) -> Result<SweepSettings> {
    let axes: Vec<(Axis, Vec<f64>)> = [
        (Axis::T1, s.t1),
        (Axis::T2, s.t2),
        (Axis::L2, s.l2),
        (Axis::Detuning, s.detuning),
        (Axis::ModeMatching, s.mode_matching),
        (Axis::Power, s.power),
    ]
    .into_iter()
    .filter_map(|(a, v)| v.map(|v| (a, v)))
    .collect();
    let f_cap = match s.f_cap_fraction {
        Some(x) => FCapRule::SpringFraction(x),
        None => FCapRule::default(),
    };
    Ok(SweepSettings {
        axes,
        objective: s.objective,
        max_configs: s.max_configs.unwrap_or(ponder::sweep::DEFAULT_MAX_CONFIGS),
        f_cap,
    })
}

fn parse_lock(l: RawLock) -> Result<LockSettings> {
    for (k, v) in l.zeros_hz.iter().map(|z| ("lock.zeros_hz", z)).chain(l.poles_hz.iter().map(|p| ("lock.poles_hz", p))) {
        if !(v.is_finite() && *v > 0.0) {
            bail!(ponder::Error::invalid(k, format!("corner frequencies must be > 0 Hz, got {v}")));
        }
    }
    let filter = Zpk::from_corners(l.dc_gain, &l.zeros_hz, &l.poles_hz);
    filter.validate()?;
    if !(l.f_min > 0.0 && l.f_max > l.f_min) {
        bail!(ponder::Error::invalid("lock.f_min", "need 0 < f_min < f_max"));
    }
    let freqs = ponder::optomech::log_grid(l.f_min, l.f_max, l.points_per_decade);
    let model = if l.exact_spring { GainModel::Exact } else { GainModel::Approximate };
    Ok(LockSettings { filter, freqs, model })
}
