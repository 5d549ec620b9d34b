//! Grid search over cavity parameters. Each configuration is summarized
//! independently; rows come back in a fixed lexicographic order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cavity::{derive, CavityConfig, MeasurementPort};
use crate::error::{ensure, Error, Result};
use crate::mechanics::Oscillator;
use crate::metrics::{area_at_best, build_grid, extract_summary, spring_frequency, NoiseModel, SqueezeSummary};
use crate::parallel::par_map;

pub const DEFAULT_MAX_CONFIGS: usize = 1_000_000;

/// A swept cavity parameter. The declaration order is the canonical axis
/// order: the first axis varies slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    T1,
    T2,
    L2,
    Detuning,
    ModeMatching,
    Power,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::T1, Axis::T2, Axis::L2, Axis::Detuning, Axis::ModeMatching, Axis::Power];

    pub fn name(self) -> &'static str {
        match self {
            Axis::T1 => "t1",
            Axis::T2 => "t2",
            Axis::L2 => "l2",
            Axis::Detuning => "detuning",
            Axis::ModeMatching => "mode_matching",
            Axis::Power => "power",
        }
    }

    /// The power axis keeps the template's power convention.
    fn apply(self, cfg: &mut CavityConfig, v: f64) {
        match self {
            Axis::T1 => cfg.t1 = v,
            Axis::T2 => cfg.t2 = v,
            Axis::L2 => cfg.l2 = v,
            Axis::Detuning => cfg.detuning = v,
            Axis::ModeMatching => cfg.mode_matching = v,
            Axis::Power => cfg.power = cfg.power.with_watts(v),
        }
    }
}

/// Upper frequency for the squeezing search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FCapRule {
    /// Fraction of each configuration's optical-spring frequency.
    SpringFraction(f64),
    /// Fixed cap, Hz.
    Hz(f64),
}

impl Default for FCapRule {
    fn default() -> Self {
        FCapRule::SpringFraction(crate::metrics::DEFAULT_CAP_FRACTION)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axes: BTreeMap<Axis, Vec<f64>>,
    pub template: CavityConfig,
    pub osc: Oscillator,
    pub noise: NoiseModel,
    pub port: MeasurementPort,
    pub f_cap: FCapRule,
    pub freqs: Vec<f64>,
    pub angles: Vec<f64>,
    pub max_configs: usize,
}

impl SweepSpec {
    pub fn new(template: CavityConfig, osc: Oscillator, freqs: Vec<f64>, angles: Vec<f64>) -> Self {
        SweepSpec {
            axes: BTreeMap::new(),
            port: template.port,
            template,
            osc,
            noise: NoiseModel::default(),
            f_cap: FCapRule::default(),
            freqs,
            angles,
            max_configs: DEFAULT_MAX_CONFIGS,
        }
    }

    pub fn with_axis(mut self, axis: Axis, values: Vec<f64>) -> Self {
        self.axes.insert(axis, values);
        self
    }

    /// Number of configurations, or an error when it exceeds `max_configs`.
    pub fn size(&self) -> Result<usize> {
        let n = self
            .axes
            .values()
            .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
            .filter(|&n| n <= self.max_configs);
        n.ok_or_else(|| Error::invalid("sweep.axes", format!("more than {} configurations", self.max_configs)))
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, vals) in &self.axes {
            let key = format!("sweep.axes.{}", axis.name());
            ensure(!vals.is_empty(), &key, || "must not be empty".into())?;
            ensure(vals.iter().all(|v| v.is_finite()), &key, || "values must be finite".into())?;
            ensure(vals.windows(2).all(|w| w[0] < w[1]), &key, || "must be strictly ascending".into())?;
        }
        let (FCapRule::SpringFraction(x) | FCapRule::Hz(x)) = self.f_cap;
        ensure(x > 0.0 && x.is_finite(), "sweep.f_cap", || format!("must be > 0, got {x}"))?;
        self.size().map(|_| ())
    }

    /// Configuration `idx` in lexicographic axis order.
    fn config(&self, mut idx: usize) -> (CavityConfig, Vec<(Axis, f64)>) {
        let mut cfg = CavityConfig { port: self.port, ..self.template };
        let mut params = vec![(Axis::T1, 0.0); self.axes.len()];
        for (slot, (axis, vals)) in self.axes.iter().enumerate().rev() {
            let v = vals[idx % vals.len()];
            idx /= vals.len();
            axis.apply(&mut cfg, v);
            params[slot] = (*axis, v);
        }
        (cfg, params)
    }
}

/// One evaluated configuration. Every parameter is recorded, swept or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub t1: f64,
    pub t2: f64,
    pub l2: f64,
    pub detuning: f64,
    pub mode_matching: f64,
    pub power: f64,
    pub summary: SqueezeSummary,
    /// HWHM linewidth, Hz.
    pub gamma_hz: Option<f64>,
    pub f_os: Option<f64>,
    /// dB·decades at the best angle.
    pub area: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::T1 => self.t1,
            Axis::T2 => self.t2,
            Axis::L2 => self.l2,
            Axis::Detuning => self.detuning,
            Axis::ModeMatching => self.mode_matching,
            Axis::Power => self.power,
        }
    }
}

fn evaluate(spec: &SweepSpec, cfg: &CavityConfig) -> Result<(SqueezeSummary, f64, f64, f64)> {
    let der = derive(cfg)?;
    let f_os = spring_frequency(cfg, &spec.osc)?;
    let cap = match spec.f_cap {
        FCapRule::SpringFraction(x) => x * f_os,
        FCapRule::Hz(f) => f,
    };
    let grid = build_grid(cfg, &spec.osc, &spec.noise, &spec.freqs, &spec.angles)?;
    let summary = extract_summary(&grid, cap);
    Ok((summary, der.gamma_hwhm, f_os, area_at_best(&grid, &summary)))
}

/// Evaluate every configuration. Per-configuration failures become rows with
/// `error` set; only an invalid spec aborts.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let idx: Vec<usize> = (0..spec.size()?).collect();
    Ok(par_map(&idx, |&i| {
        let (cfg, _) = spec.config(i);
        let mut row = SweepRow {
            index: i,
            t1: cfg.t1,
            t2: cfg.t2,
            l2: cfg.l2,
            detuning: cfg.detuning,
            mode_matching: cfg.mode_matching,
            power: cfg.power.watts(),
            summary: SqueezeSummary::absent(),
            gamma_hz: None,
            f_os: None,
            area: None,
            error: None,
        };
        match evaluate(spec, &cfg) {
            Ok((s, g, f, a)) => {
                row.summary = s;
                row.gamma_hz = Some(g);
                row.f_os = Some(f);
                row.area = Some(a);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MinNMin,
    MaxAreaDbHz,
    MinFLow,
}

/// Best row for `objective`. Rows without squeezing rank last; ties go to
/// the smaller t2, then t1, then |detuning|.
pub fn select_optimum(rows: &[SweepRow], objective: Objective) -> Result<&SweepRow> {
    let score = |r: &SweepRow| match objective {
        Objective::MinNMin => r.summary.n_min.unwrap_or(f64::INFINITY),
        Objective::MaxAreaDbHz => -r.area.unwrap_or(0.0),
        Objective::MinFLow => r.summary.f_low.unwrap_or(f64::INFINITY),
    };
    let key = |r: &SweepRow| [score(r), r.t2, r.t1, r.detuning.abs()];
    let cmp = |a: &[f64; 4], b: &[f64; 4]| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
    };
    rows.iter()
        .filter(|r| r.error.is_none())
        .min_by(|a, b| cmp(&key(a), &key(b)))
        .ok_or_else(|| Error::invalid("rows", "no successful configuration to choose from"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{fixtures, LaserNoise, PowerSpec};
    use crate::mechanics::fixtures as mech;
    use crate::metrics::{angle_space, log_space};

    fn spec() -> SweepSpec {
        let mut s = SweepSpec::new(
            fixtures::baseline(),
            mech::multimode(),
            log_space(100.0, 1e6, 80).unwrap(),
            angle_space(90).unwrap(),
        );
        s.noise = NoiseModel { pn: false, laser: LaserNoise { rin_asd: 5e-8, ..LaserNoise::default() }, ..NoiseModel::default() };
        s
    }

    fn n_min(r: &SweepRow) -> f64 {
        r.summary.n_min.unwrap_or(1.0)
    }

    #[test]
    fn single_configuration_matches_direct_run() {
        let s = spec();
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 1);
        let grid = build_grid(&s.template, &s.osc, &s.noise, &s.freqs, &s.angles).unwrap();
        let cap = spring_frequency(&s.template, &s.osc).unwrap() / 3.0;
        assert_eq!(rows[0].summary, extract_summary(&grid, cap));
        assert!(rows[0].error.is_none());
    }

    #[test]
    fn lexicographic_order_and_canonical_axes() {
        let a = spec().with_axis(Axis::T2, vec![1e-4, 3e-4]).with_axis(Axis::Detuning, vec![0.3, 0.5, 0.8]);
        let b = spec().with_axis(Axis::Detuning, vec![0.3, 0.5, 0.8]).with_axis(Axis::T2, vec![1e-4, 3e-4]);
        let (ra, rb) = (run_sweep(&a).unwrap(), run_sweep(&b).unwrap());
        assert_eq!(ra, rb);
        let order: Vec<(f64, f64)> = ra.iter().map(|r| (r.t2, r.detuning)).collect();
        assert_eq!(order, vec![(1e-4, 0.3), (1e-4, 0.5), (1e-4, 0.8), (3e-4, 0.3), (3e-4, 0.5), (3e-4, 0.8)]);
        assert!(ra.iter().enumerate().all(|(i, r)| r.index == i));
    }

    #[test]
    fn spec_rejections() {
        let s = spec().with_axis(Axis::T2, vec![]);
        assert!(run_sweep(&s).unwrap_err().is_validation());
        let s = spec().with_axis(Axis::T2, vec![2e-4, 1e-4]);
        assert!(run_sweep(&s).unwrap_err().is_validation());
        let many: Vec<f64> = (1..=1001).map(|i| i as f64 * 1e-7).collect();
        let s = spec().with_axis(Axis::T1, many.clone()).with_axis(Axis::T2, many);
        assert!(s.size().is_err());
        assert!(run_sweep(&s).unwrap_err().is_validation());
    }

    #[test]
    fn failed_configurations_become_error_rows() {
        let s = spec().with_axis(Axis::T2, vec![250e-6, 0.99999]);
        let rows = run_sweep(&s).unwrap();
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.as_deref().unwrap().contains("cavity.t1+t2+l1+l2"));
        assert!(!rows[1].summary.present);
        assert_eq!(select_optimum(&rows, Objective::MinNMin).unwrap().index, 0);
        assert!(select_optimum(&rows[1..], Objective::MinNMin).is_err());
    }

    #[test]
    fn interior_optimum_in_output_transmission() {
        let s = spec().with_axis(Axis::T2, vec![100e-6, 250e-6, 600e-6, 1000e-6]);
        let rows = run_sweep(&s).unwrap();
        let n: Vec<f64> = rows.iter().map(n_min).collect();
        let best = (0..n.len()).min_by(|&a, &b| n[a].total_cmp(&n[b])).unwrap();
        assert!(best > 0 && best < n.len() - 1, "{n:?}");
    }

    #[test]
    fn escape_efficiency_monotonic_without_classical_noise() {
        let mut s = spec().with_axis(Axis::T2, vec![50e-6, 100e-6, 250e-6, 600e-6, 1000e-6]);
        s.noise = NoiseModel::quantum_only();
        let rows = run_sweep(&s).unwrap();
        for w in rows.windows(2) {
            assert!(n_min(&w[1]) < n_min(&w[0]), "{} !< {}", n_min(&w[1]), n_min(&w[0]));
        }
    }

    #[test]
    fn optimum_transmission_drops_with_more_noise() {
        let t2: Vec<f64> = [40.0, 60.0, 100.0, 160.0, 250.0, 400.0, 600.0, 1000.0].iter().map(|p| p * 1e-6).collect();
        let best_t2 = |rin: f64| {
            let mut s = spec().with_axis(Axis::T2, t2.clone());
            s.noise.laser.rin_asd = rin;
            let rows = run_sweep(&s).unwrap();
            select_optimum(&rows, Objective::MinNMin).unwrap().t2
        };
        let (lo, hi) = (best_t2(5e-8), best_t2(5e-7));
        assert!(hi < lo, "{hi} !< {lo}");
    }

    fn synthetic(t1: f64, t2: f64, n: Option<f64>, area: f64, f_low: Option<f64>) -> SweepRow {
        SweepRow {
            index: 0,
            t1,
            t2,
            l2: 0.0,
            detuning: 0.5,
            mode_matching: 1.0,
            power: 0.4,
            summary: SqueezeSummary { n_min: n, present: n.is_some(), f_low, ..SqueezeSummary::absent() },
            gamma_hz: Some(1.0),
            f_os: Some(1.0),
            area: Some(area),
            error: None,
        }
    }

    #[test]
    fn objectives_and_tie_breaks() {
        let rows = vec![
            synthetic(50e-6, 600e-6, Some(0.5), 3.0, Some(200.0)),
            synthetic(50e-6, 250e-6, Some(0.5), 1.0, Some(900.0)),
            synthetic(80e-6, 100e-6, None, 0.0, None),
        ];
        assert_eq!(select_optimum(&rows, Objective::MinNMin).unwrap().t2, 250e-6);
        assert_eq!(select_optimum(&rows, Objective::MaxAreaDbHz).unwrap().t2, 600e-6);
        assert_eq!(select_optimum(&rows, Objective::MinFLow).unwrap().t2, 600e-6);
        assert_eq!(select_optimum(&rows[..1], Objective::MinNMin).unwrap().t2, 600e-6);
        let ties = vec![synthetic(80e-6, 250e-6, Some(0.5), 1.0, None), synthetic(50e-6, 250e-6, Some(0.5), 1.0, None)];
        assert_eq!(select_optimum(&ties, Objective::MinNMin).unwrap().t1, 50e-6);
    }

    #[test]
    fn area_objective_matches_trapezoid_oracle() {
        let s = spec().with_axis(Axis::T2, vec![100e-6, 600e-6]);
        let rows = run_sweep(&s).unwrap();
        for r in &rows {
            let cfg = CavityConfig { t2: r.t2, ..s.template };
            let grid = build_grid(&cfg, &s.osc, &s.noise, &s.freqs, &s.angles).unwrap();
            let k = grid.angles.iter().position(|&a| Some(a) == r.summary.best_angle).unwrap();
            let u: Vec<f64> = grid.freqs.iter().map(|f| f.log10()).collect();
            let d: Vec<f64> = grid.total[k].iter().map(|n| (-10.0 * n.log10()).max(0.0)).collect();
            let oracle: f64 = (1..u.len()).map(|j| 0.5 * (d[j] + d[j - 1]) * (u[j] - u[j - 1])).sum();
            assert!((r.area.unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
        }
        let best = select_optimum(&rows, Objective::MaxAreaDbHz).unwrap();
        assert!(rows.iter().all(|r| r.area.unwrap() <= best.area.unwrap()));
    }

    #[test]
    fn power_axis_keeps_convention() {
        let mut s = spec().with_axis(Axis::Power, vec![0.2, 0.4]);
        s.template.power = PowerSpec::IntracavityAtResonance(1.0);
        let (cfg, params) = s.config(1);
        assert_eq!(cfg.power, PowerSpec::IntracavityAtResonance(0.4));
        assert_eq!(params, vec![(Axis::Power, 0.4)]);
    }
}
