//! Frequency × quadrature noise grids, per-source budgets and the squeezing
//! summary used to rank configurations.

use serde::{Deserialize, Serialize};

use crate::cavity::{CavityConfig, LaserNoise};
use crate::error::{ensure, Error, Result};
use crate::mechanics::Oscillator;
use crate::optomech::{optical_spring, GainModel};
use crate::parallel::par_map;
use crate::quantum::{quadrature_noise, Engine};

pub const DEFAULT_FREQ_POINTS: usize = 400;
pub const DEFAULT_ANGLE_POINTS: usize = 181;
/// Default search cap as a fraction of the optical-spring frequency.
pub const DEFAULT_CAP_FRACTION: f64 = 1.0 / 3.0;

/// Which classical sources are switched on, and the laser they come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub thermal: bool,
    pub rin: bool,
    pub pn: bool,
    pub laser: LaserNoise,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { thermal: true, rin: true, pn: true, laser: LaserNoise::default() }
    }
}

impl NoiseModel {
    /// Vacuum only.
    pub fn quantum_only() -> Self {
        NoiseModel { thermal: false, rin: false, pn: false, laser: LaserNoise::quiet() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Quantum = 0,
    Thermal = 1,
    Rin = 2,
    Pn = 3,
}

pub const SOURCES: [Source; 4] = [Source::Quantum, Source::Thermal, Source::Rin, Source::Pn];

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Quantum => "quantum",
            Source::Thermal => "thermal",
            Source::Rin => "rin",
            Source::Pn => "pn",
        }
    }
}

/// Noise PSD relative to shot noise. Every matrix is indexed `[angle][freq]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeGrid {
    pub freqs: Vec<f64>,
    /// Quadrature angles, rad, in [0, π).
    pub angles: Vec<f64>,
    /// Indexed by `Source as usize`.
    pub layers: [Vec<Vec<f64>>; 4],
    pub total: Vec<Vec<f64>>,
}

impl SqueezeGrid {
    pub fn layer(&self, s: Source) -> &[Vec<f64>] {
        &self.layers[s as usize]
    }

    /// Assemble a grid from precomputed totals with all noise attributed to
    /// the quantum layer. Used for synthetic inputs.
    pub fn from_totals(freqs: Vec<f64>, angles: Vec<f64>, total: Vec<Vec<f64>>) -> Result<Self> {
        check_axes(&freqs, &angles)?;
        ensure(
            total.len() == angles.len() && total.iter().all(|r| r.len() == freqs.len()),
            "total",
            || "shape must be [angles][freqs]".into(),
        )?;
        let zeros = vec![vec![0.0; freqs.len()]; angles.len()];
        Ok(SqueezeGrid {
            freqs,
            angles,
            layers: [total.clone(), zeros.clone(), zeros.clone(), zeros],
            total,
        })
    }

    fn angle_index(&self, angle: f64) -> Result<usize> {
        self.angles
            .iter()
            .position(|a| (a - angle).abs() <= 1e-12 * (1.0 + angle.abs()))
            .ok_or_else(|| Error::invalid("angle", format!("{angle} rad is not on the grid")))
    }
}

/// `n` log-spaced frequencies from `fmin` to `fmax` inclusive.
pub fn log_space(fmin: f64, fmax: f64, n: usize) -> Result<Vec<f64>> {
    ensure(fmin > 0.0 && fmax > fmin && fmax.is_finite(), "freqs", || {
        format!("need 0 < fmin < fmax, got [{fmin}, {fmax}]")
    })?;
    ensure(n >= 2, "freqs.points", || format!("need at least 2 points, got {n}"))?;
    let (a, b) = (fmin.log10(), fmax.log10());
    let step = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| match i {
            0 => fmin,
            _ if i == n - 1 => fmax,
            _ => 10f64.powf(a + step * i as f64),
        })
        .collect())
}

/// `n` equally spaced quadratures k·π/n, k = 0..n.
pub fn angle_space(n: usize) -> Result<Vec<f64>> {
    ensure(n >= 1, "angles.points", || "need at least 1 angle".into())?;
    Ok((0..n).map(|k| std::f64::consts::PI * k as f64 / n as f64).collect())
}

pub fn default_angles() -> Vec<f64> {
    angle_space(DEFAULT_ANGLE_POINTS).expect("constant is positive")
}

fn check_axes(freqs: &[f64], angles: &[f64]) -> Result<()> {
    ensure(!freqs.is_empty(), "freqs", || "must not be empty".into())?;
    ensure(!angles.is_empty(), "angles", || "must not be empty".into())?;
    for (i, &f) in freqs.iter().enumerate() {
        ensure(f > 0.0 && f.is_finite(), "freqs", || format!("entry {i} must be > 0 Hz, got {f}"))?;
        if i > 0 {
            ensure(f > freqs[i - 1], "freqs", || format!("must be strictly ascending at entry {i}"))?;
        }
    }
    for (i, &a) in angles.iter().enumerate() {
        ensure((0.0..std::f64::consts::PI).contains(&a), "angles", || {
            format!("entry {i} must lie in [0, π), got {a}")
        })?;
    }
    Ok(())
}

/// Optical-spring frequency in Hz for the oscillator's fundamental mode.
pub fn spring_frequency(cfg: &CavityConfig, osc: &Oscillator) -> Result<f64> {
    let der = crate::cavity::derive(cfg)?;
    Ok(optical_spring(cfg, &der, osc.fundamental().modal_mass, 0.0, GainModel::Approximate)?.f_os())
}

/// Default search cap, f_OS/3.
pub fn default_f_cap(cfg: &CavityConfig, osc: &Oscillator) -> Result<f64> {
    Ok(spring_frequency(cfg, osc)? * DEFAULT_CAP_FRACTION)
}

fn locate(e: Error, i: usize, f: f64) -> Error {
    match e {
        Error::Invalid { field, reason } => Error::Invalid { field: format!("freqs[{i}]"), reason: format!("{field}: {reason}") },
        Error::Numerical(m) => Error::Numerical(format!("at f = {f} Hz: {m}")),
        Error::Consistency(m) => Error::Consistency(format!("at f = {f} Hz: {m}")),
        s @ Error::Singular { .. } => s,
    }
}

/// Noise at the configured port for every (angle, frequency) cell. The
/// per-source layers come from the individual input transfer functions, so
/// they are exact for the linear model rather than differences of totals.
pub fn build_grid(
    cfg: &CavityConfig,
    osc: &Oscillator,
    noise: &NoiseModel,
    freqs: &[f64],
    angles: &[f64],
) -> Result<SqueezeGrid> {
    check_axes(freqs, angles)?;
    let mut engine = Engine::new(cfg, osc, &noise.laser)?;
    engine.thermal = noise.thermal;
    engine.rin = noise.rin;
    engine.pn = noise.pn;
    let indexed: Vec<(usize, f64)> = freqs.iter().copied().enumerate().collect();
    let columns = par_map(&indexed, |&(i, f)| -> Result<[Vec<f64>; 4]> {
        let cov = engine.covariance(f, cfg.port).map_err(|e| locate(e, i, f))?;
        let l = &cov.layers;
        let per = |m| angles.iter().map(|&xi| quadrature_noise(m, xi)).collect::<Vec<_>>();
        Ok([per(&l.quantum), per(&l.thermal), per(&l.rin), per(&l.pn)])
    });

    let (na, nf) = (angles.len(), freqs.len());
    let mut layers: [Vec<Vec<f64>>; 4] = std::array::from_fn(|_| vec![vec![0.0; nf]; na]);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for (s, vals) in col.iter().enumerate() {
            for (k, &v) in vals.iter().enumerate() {
                layers[s][k][j] = v;
            }
        }
    }
    let total = (0..na)
        .map(|k| (0..nf).map(|j| layers.iter().map(|l| l[k][j]).sum()).collect())
        .collect();
    Ok(SqueezeGrid { freqs: freqs.to_vec(), angles: angles.to_vec(), layers, total })
}

/// Best squeezing and its band. All optional fields are `None` when
/// `present` is false. A band edge that lies beyond the grid is also `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeSummary {
    pub n_min: Option<f64>,
    /// rad.
    pub best_angle: Option<f64>,
    pub best_freq: Option<f64>,
    pub f_low: Option<f64>,
    pub f_high: Option<f64>,
    pub present: bool,
}

impl SqueezeSummary {
    pub fn absent() -> Self {
        SqueezeSummary { n_min: None, best_angle: None, best_freq: None, f_low: None, f_high: None, present: false }
    }

    /// n_min in dB, 10·log₁₀.
    pub fn n_min_db(&self) -> Option<f64> {
        self.n_min.map(db)
    }
}

pub fn db(psd: f64) -> f64 {
    10.0 * psd.log10()
}

fn crossing(freqs: &[f64], row: &[f64], j: usize) -> f64 {
    let (u0, u1) = (freqs[j].log10(), freqs[j + 1].log10());
    let (t0, t1) = (row[j], row[j + 1]);
    10f64.powf(u0 + (1.0 - t0) / (t1 - t0) * (u1 - u0))
}

/// Minimum over cells with f ≤ `f_cap`, ties going to the lower angle and
/// then the lower frequency. The band edges are the outermost crossings of
/// total = 1 on either side of the best frequency at the best angle.
pub fn extract_summary(grid: &SqueezeGrid, f_cap: f64) -> SqueezeSummary {
    let mut best: Option<(f64, usize, usize)> = None;
    for (k, row) in grid.total.iter().enumerate() {
        for (j, &v) in row.iter().enumerate().take_while(|&(j, _)| grid.freqs[j] <= f_cap) {
            if best.map_or(true, |(b, _, _)| v < b) {
                best = Some((v, k, j));
            }
        }
    }
    let Some((n_min, k, jb)) = best.filter(|b| b.0 < 1.0) else {
        return SqueezeSummary::absent();
    };
    let row = &grid.total[k];
    let f_low = (0..jb).find(|&j| row[j] >= 1.0 && row[j + 1] < 1.0).map(|j| crossing(&grid.freqs, row, j));
    let f_high = (jb..row.len() - 1)
        .rev()
        .find(|&j| row[j] < 1.0 && row[j + 1] >= 1.0)
        .map(|j| crossing(&grid.freqs, row, j));
    SqueezeSummary {
        n_min: Some(n_min),
        best_angle: Some(grid.angles[k]),
        best_freq: Some(grid.freqs[jb]),
        f_low,
        f_high,
        present: true,
    }
}

/// One frequency of a per-source budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub freq: f64,
    pub quantum: f64,
    pub thermal: f64,
    pub rin: f64,
    pub pn: f64,
    pub total: f64,
}

/// Per-source noise at one grid angle.
pub fn noise_budget(grid: &SqueezeGrid, angle: f64) -> Result<Vec<BudgetRow>> {
    let k = grid.angle_index(angle)?;
    let l = |s: Source| &grid.layers[s as usize][k];
    Ok(grid
        .freqs
        .iter()
        .enumerate()
        .map(|(j, &freq)| BudgetRow {
            freq,
            quantum: l(Source::Quantum)[j],
            thermal: l(Source::Thermal)[j],
            rin: l(Source::Rin)[j],
            pn: l(Source::Pn)[j],
            total: grid.total[k][j],
        })
        .collect())
}

/// ∫ max(0, −10·log₁₀N) d(log₁₀ f) by the trapezoid rule, dB·decades.
pub fn squeezing_area(freqs: &[f64], total: &[f64]) -> f64 {
    let depth = |n: f64| (-db(n)).max(0.0);
    freqs
        .windows(2)
        .zip(total.windows(2))
        .map(|(f, n)| 0.5 * (depth(n[0]) + depth(n[1])) * (f[1].log10() - f[0].log10()))
        .sum()
}

/// Squeezing area at the summary's best angle, 0 when nothing squeezes.
pub fn area_at_best(grid: &SqueezeGrid, summary: &SqueezeSummary) -> f64 {
    match summary.best_angle.and_then(|a| grid.angle_index(a).ok()) {
        Some(k) => squeezing_area(&grid.freqs, &grid.total[k]),
        None => 0.0,
    }
}
