//! Subcommand implementations. Each returns the bytes it wrote so repeated
//! runs can be compared directly.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use serde_json::json;

use ponder::analytic::{multiport_total_uncertainty, sigma_quantum_port};
use ponder::cavity::{derive, exact_linewidth};
use ponder::detection::{homodyne_angles, homodyne_measured};
use ponder::mechanics::{analytic_modes, susceptibility};
use ponder::metrics::{
    area_at_best, build_grid, db, default_f_cap, extract_summary, noise_budget, SqueezeGrid,
    SqueezeSummary, SOURCES,
};
use ponder::optomech::{loop_margins, open_loop_gain, optical_spring, GainModel, LoopModel, Plant};
use ponder::quantum::{multiport_uncertainty, quadrature_noise, Engine};
use ponder::sweep::{run_sweep, select_optimum, SweepRow};
use ponder::{CavityConfig, LaserNoise, MeasurementPort, MechMode, Oscillator, SweepSpec};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::output::{csv_text, emit, json_text, num, opt};

/// Raised when an oracle comparison exceeds its tolerance.
#[derive(Debug)]
pub struct OracleBreach(pub usize);

impl std::fmt::Display for OracleBreach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} oracle check(s) outside tolerance", self.0)
    }
}

impl std::error::Error for OracleBreach {}

fn port_name(p: MeasurementPort) -> &'static str {
    match p {
        MeasurementPort::Transmission => "transmission",
        MeasurementPort::Reflection => "reflection",
    }
}

fn f_cap(cfg: &RunConfig) -> Result<f64> {
    match cfg.grid.f_cap {
        Some(c) => Ok(c),
        None => Ok(default_f_cap(&cfg.cavity, &cfg.oscillator)?),
    }
}

pub fn derive_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<u8>> {
    let c = &cfg.cavity;
    let d = derive(c)?;
    let mass = cfg.oscillator.fundamental().modal_mass;
    let spring = optical_spring(c, &d, mass, 0.0, GainModel::Approximate)?;
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "port": port_name(c.port),
        "total_loss": d.total_loss,
        "finesse": d.finesse,
        "linewidth_hwhm_hz": d.gamma_hwhm,
        "linewidth_exact_hz": exact_linewidth(c)?,
        "escape_refl": d.escape_refl,
        "escape_trans": d.escape_trans,
        "p_in_w": d.p_in,
        "p_coupled_w": d.p_coupled,
        "p_cav_w": d.p_cav,
        "p_trans_w": d.p_trans,
        "carrier_rotation_deg": d.carrier_rotation.to_degrees(),
        "xi0_deg": d.xi0.to_degrees(),
        "mass_kg": mass,
        "k_os_n_per_m": spring.k_os.re,
        "f_os_hz": spring.f_os(),
        "gamma_os_per_s": spring.gamma_os,
    });
    let bytes = json_text(&v)?;
    emit(out, &bytes)?;
    Ok(bytes)
}

fn grid(cfg: &RunConfig) -> Result<SqueezeGrid> {
    Ok(build_grid(&cfg.cavity, &cfg.oscillator, &cfg.noise, &cfg.grid.freqs, &cfg.grid.angles)?)
}

pub fn spectrum_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<u8>> {
    let g = grid(cfg)?;
    let mut rows = Vec::with_capacity(g.freqs.len() * g.angles.len());
    for (j, &f) in g.freqs.iter().enumerate() {
        for (k, &a) in g.angles.iter().enumerate() {
            let mut r = vec![num(f), num(a.to_degrees())];
            r.extend(SOURCES.iter().map(|&s| num(g.layer(s)[k][j])));
            r.push(num(g.total[k][j]));
            rows.push(r);
        }
    }
    let bytes = csv_text("spectrum", &["f_hz", "angle_deg", "quantum", "thermal", "rin", "pn", "total"], rows)?;
    emit(out.or(cfg.outputs.spectrum.as_deref()), &bytes)?;
    Ok(bytes)
}

pub fn budget_cmd(cfg: &RunConfig, angle_deg: Option<f64>, out: Option<&Path>) -> Result<Vec<u8>> {
    let (g, angle) = match angle_deg {
        Some(a) => {
            let rad = a.to_radians().rem_euclid(std::f64::consts::PI);
            (build_grid(&cfg.cavity, &cfg.oscillator, &cfg.noise, &cfg.grid.freqs, &[rad])?, rad)
        }
        None => {
            let g = grid(cfg)?;
            let s = extract_summary(&g, f_cap(cfg)?);
            let a = s.best_angle.unwrap_or(0.0);
            (g, a)
        }
    };
    let rows = noise_budget(&g, angle)?.into_iter().map(|r| {
        vec![num(r.freq), num(r.quantum), num(r.thermal), num(r.rin), num(r.pn), num(r.total), num(db(r.total))]
    });
    let header = ["f_hz", "quantum", "thermal", "rin", "pn", "total", "total_db"];
    let mut bytes = csv_text("budget", &header, rows)?;
    let note = format!("# angle_deg={}\n", num(angle.to_degrees()));
    let split = bytes.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1);
    bytes.splice(split..split, note.into_bytes());
    emit(out.or(cfg.outputs.budget.as_deref()), &bytes)?;
    Ok(bytes)
}

fn summary_json(s: &SqueezeSummary) -> serde_json::Value {
    json!({
        "present": s.present,
        "n_min": s.n_min,
        "n_min_db": s.n_min_db(),
        "best_angle_deg": s.best_angle.map(f64::to_degrees),
        "best_freq_hz": s.best_freq,
        "f_low_hz": s.f_low,
        "f_high_hz": s.f_high,
    })
}

pub fn summary_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<u8>> {
    let g = grid(cfg)?;
    let cap = f_cap(cfg)?;
    let s = extract_summary(&g, cap);
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "port": port_name(cfg.cavity.port),
        "f_cap_hz": cap,
        "area_db_decades": area_at_best(&g, &s),
        "summary": summary_json(&s),
    });
    if let (Some(setup), Some(f)) = (cfg.detection, s.best_freq) {
        let engine = engine(cfg)?;
        let cov = engine.covariance(f, cfg.cavity.port)?.matrix;
        let (phi_s, phi_lo) = homodyne_angles(&setup)?;
        let measured = homodyne_measured(&cov, &setup)?;
        v["homodyne"] = json!({
            "phi_signal_deg": phi_s.to_degrees(),
            "phi_lo_deg": phi_lo.to_degrees(),
            "detected_power_w": setup.detected_power(),
            "measured_at_best_freq": measured,
            "measured_db": db(measured),
        });
    }
    let bytes = json_text(&v)?;
    emit(out.or(cfg.outputs.summary.as_deref()), &bytes)?;
    Ok(bytes)
}

fn engine(cfg: &RunConfig) -> Result<Engine> {
    let mut e = Engine::new(&cfg.cavity, &cfg.oscillator, &cfg.noise.laser)?;
    e.thermal = cfg.noise.thermal;
    e.rin = cfg.noise.rin;
    e.pn = cfg.noise.pn;
    Ok(e)
}

pub const SWEEP_HEADER: [&str; 18] = [
    "index",
    "t1",
    "t2",
    "l2",
    "detuning",
    "mode_matching",
    "power_w",
    "present",
    "n_min",
    "n_min_db",
    "best_angle_deg",
    "best_freq_hz",
    "f_low_hz",
    "f_high_hz",
    "gamma_hz",
    "f_os_hz",
    "area_db_decades",
    "error",
];

fn sweep_record(r: &SweepRow) -> Vec<String> {
    let s = &r.summary;
    vec![
        r.index.to_string(),
        num(r.t1),
        num(r.t2),
        num(r.l2),
        num(r.detuning),
        num(r.mode_matching),
        num(r.power),
        s.present.to_string(),
        opt(s.n_min),
        opt(s.n_min_db()),
        opt(s.best_angle.map(f64::to_degrees)),
        opt(s.best_freq),
        opt(s.f_low),
        opt(s.f_high),
        opt(r.gamma_hz),
        opt(r.f_os),
        opt(r.area),
        r.error.clone().unwrap_or_default(),
    ]
}

/// Writes the row table to `out` and prints the chosen optimum as JSON.
pub fn sweep_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<u8>> {
    let settings = cfg.sweep.as_ref().ok_or_else(|| ponder::Error::invalid("sweep", "the spec has no [sweep] table"))?;
    let mut spec = SweepSpec::new(cfg.cavity, cfg.oscillator.clone(), cfg.grid.freqs.clone(), cfg.grid.angles.clone());
    for (axis, vals) in &settings.axes {
        spec = spec.with_axis(*axis, vals.clone());
    }
    spec.noise = cfg.noise;
    spec.f_cap = match cfg.grid.f_cap {
        Some(hz) => ponder::sweep::FCapRule::Hz(hz),
        None => settings.f_cap,
    };
    spec.max_configs = settings.max_configs;
    let rows = run_sweep(&spec)?;
    let bytes = csv_text("sweep", &SWEEP_HEADER, rows.iter().map(sweep_record))?;
    let path = out.or(cfg.outputs.sweep.as_deref());
    emit(path, &bytes)?;
    if path.is_some() {
        let best = match select_optimum(&rows, settings.objective) {
            Ok(r) => json!({ "index": r.index, "t1": r.t1, "t2": r.t2, "detuning": r.detuning, "summary": summary_json(&r.summary), "area_db_decades": r.area }),
            Err(_) => serde_json::Value::Null,
        };
        emit(None, &json_text(&json!({ "schema_version": SCHEMA_VERSION, "rows": rows.len(), "optimum": best }))?)?;
    }
    Ok(bytes)
}

pub fn lock_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<u8>> {
    let lock = cfg.lock.as_ref().ok_or_else(|| ponder::Error::invalid("lock", "the config has no [lock] table"))?;
    let c = cfg.cavity;
    let d = derive(&c)?;
    let osc = cfg.oscillator.clone();
    let mass = osc.fundamental().modal_mass;
    let model = lock.model;
    let spring = optical_spring(&c, &d, mass, 0.0, model)?;
    // Evaluate once to surface configuration errors before the grid loop.
    optical_spring(&c, &d, mass, lock.freqs[0], model)?;
    let plant = Plant::Function(Arc::new(move |f| {
        let k = optical_spring(&c, &d, mass, f, model).map(|s| s.k_os).unwrap_or(f64::NAN.into());
        open_loop_gain(k, susceptibility(&osc, f))
    }));
    let lp = LoopModel { plant, filter: lock.filter.clone(), label: "optical spring".into() };
    let m = loop_margins(&lp, &lock.freqs)?;
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "f_os_hz": spring.f_os(),
        "unity_gain_crossings_hz": m.unity_gain_crossings,
        "phase_margins_deg": m.phase_margins,
        "gain_margin_db": m.gain_margin_db,
        "phase_crossover_hz": m.phase_crossover_hz,
        "stable": m.stable,
    });
    let bytes = json_text(&v)?;
    emit(out, &bytes)?;
    Ok(bytes)
}

pub fn modes_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<u8>> {
    let configured: Vec<_> = cfg
        .oscillator
        .modes()
        .iter()
        .map(|m| json!({ "freq_hz": m.freq, "modal_mass_kg": m.modal_mass, "q": 1.0 / m.loss_factor, "damping": m.damping }))
        .collect();
    let mut v = json!({ "schema_version": SCHEMA_VERSION, "configured": configured });
    if let Some(g) = &cfg.geometry {
        let modes: Vec<_> = analytic_modes(g)?.into_iter().map(|(k, f)| json!({ "mode": k, "freq_hz": f })).collect();
        v["analytic"] = json!(modes);
    }
    let bytes = json_text(&v)?;
    emit(out, &bytes)?;
    Ok(bytes)
}

struct Check {
    name: String,
    value: f64,
    expected: f64,
    tol: f64,
}

impl Check {
    fn pass(&self) -> bool {
        (self.value - self.expected).abs() <= self.tol
    }
}

/// Compare the engine against closed forms for the configured optics, with
/// classical noise off and a light, low-frequency oscillator so the
/// spring-dominated band is wide.
pub fn oracle_check_cmd(cfg: &RunConfig) -> Result<Vec<u8>> {
    let c = CavityConfig { mode_matching: 1.0, ..cfg.cavity };
    let d = derive(&c)?;
    if c.detuning == 0.0 {
        bail!(ponder::Error::invalid("cavity.detuning", "oracle checks need a nonzero detuning"));
    }
    let mass = cfg.oscillator.fundamental().modal_mass;
    let f_os = optical_spring(&c, &d, mass, 0.0, GainModel::Approximate)?.f_os();
    let osc = Oscillator::single(MechMode::new(f_os * 1e-5, mass, 1e6), 1e-6)?;
    let mut e = Engine::new(&c, &osc, &LaserNoise::quiet())?;
    e.thermal = false;
    let f = f_os / 300.0;
    let sol = e.solve(f)?;
    let mut checks = Vec::new();

    let cov = e.covariance(f, MeasurementPort::Transmission)?.matrix;
    let (expect, s_min) = sigma_quantum_port(d.escape_trans, c.detuning)?;
    for (k, name) in ["s11", "s21", "s12", "s22"].iter().enumerate() {
        checks.push(Check {
            name: format!("transmission covariance {name}"),
            value: cov[k],
            expected: expect[k],
            tol: 2e-2 * expect[k].abs().max(1e-2),
        });
    }
    checks.push(Check {
        name: "squeezed quadrature".into(),
        value: quadrature_noise(&cov, d.xi0),
        expected: s_min,
        tol: 2e-2 * s_min,
    });
    let floor = e.covariance(f_os / 1e3, MeasurementPort::Transmission)?.matrix;
    checks.push(Check { name: "amplitude shot-noise floor".into(), value: quadrature_noise(&floor, 0.0), expected: 1.0, tol: 1e-3 });
    let e_loss = c.l2 / d.total_loss;
    let (_, det) = multiport_uncertainty(&sol.tfs, &sol.noise)?;
    let expect_det = multiport_total_uncertainty(e_loss, c.detuning)?;
    checks.push(Check { name: "joint determinant".into(), value: det, expected: expect_det, tol: 1e-4 * expect_det });

    let mut text = String::new();
    let mut failed = 0;
    for ch in &checks {
        let tag = if ch.pass() { "PASS" } else { "FAIL" };
        failed += usize::from(!ch.pass());
        text.push_str(&format!("{tag} {}: {} (expected {} ± {})\n", ch.name, num(ch.value), num(ch.expected), num(ch.tol)));
    }
    emit(None, text.as_bytes())?;
    if failed > 0 {
        return Err(anyhow!(OracleBreach(failed)));
    }
    Ok(text.into_bytes())
}
