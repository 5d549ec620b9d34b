//! End-to-end behavior of the `ponder` binary: exit codes, output formats and
//! input validation.

use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
schema_version = 1

[cavity]
length = 100e-6
t1 = 50e-6
t2 = 250e-6
l2 = 120e-6
detuning = 0.5
power = 0.4
mode_matching = 0.4

[oscillator]
modes = [
    { freq = 221.0, mass = 40e-12 },
    { freq = 1900.0, mass = 2e-9 },
]

[noise]
pn = false

[grid]
f_min = 100.0
f_max = 1e6
points = 40
angles = 36
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ponder")).current_dir(dir).args(args).output().unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn derive_reports_cavity_quantities() {
    let dir = setup(CONFIG);
    let o = run(dir.path(), &["derive", "-c", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    let tt = v["total_loss"].as_f64().unwrap();
    assert!((tt - 420e-6).abs() < 1e-15);
    assert!((v["escape_trans"].as_f64().unwrap() - 250.0 / 420.0).abs() < 1e-12);
    assert!(v["f_os_hz"].as_f64().unwrap() > 0.0);
    assert!(v["finesse"].as_f64().unwrap() > 14_000.0);
}

#[test]
fn spectrum_is_long_format_csv() {
    let dir = setup(CONFIG);
    let o = run(dir.path(), &["spectrum", "-c", "run.toml", "-o", "s.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# ponder spectrum schema_version=1"));
    assert_eq!(lines.next(), Some("f_hz,angle_deg,quantum,thermal,rin,pn,total"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 40 * 36);
    for r in &rows {
        // Sources add: the total is the sum of the layers.
        let sum: f64 = r[2..6].iter().sum();
        assert!((r[6] - sum).abs() <= 1e-9 * r[6], "{r:?}");
        assert_eq!(r[5], 0.0);
    }
}

#[test]
fn summary_and_budget_agree() {
    let dir = setup(CONFIG);
    let o = run(dir.path(), &["summary", "-c", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let s = &v["summary"];
    assert_eq!(s["present"], true);
    let n_min = s["n_min"].as_f64().unwrap();
    let best_f = s["best_freq_hz"].as_f64().unwrap();
    assert!(n_min < 1.0);

    let o = run(dir.path(), &["budget", "-c", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("freq") && !l.starts_with("f_hz"))
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|r| r[0] == best_f)
        .expect("best frequency row");
    assert_eq!(row[5], n_min);
}

#[test]
fn invalid_grid_exits_one() {
    let dir = setup(&CONFIG.replace("f_min = 100.0", "f_min = 0.0"));
    let o = run(dir.path(), &["summary", "-c", "run.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("f_min"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_subcommand_exit_one() {
    let dir = setup(&CONFIG.replace("detuning = 0.5", "detuning = 0.5\nfinesse = 3"));
    assert_eq!(code(&run(dir.path(), &["derive", "-c", "run.toml"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["derive", "-c", "missing.toml"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn bad_thread_count_exits_one() {
    let dir = setup(CONFIG);
    let o = Command::new(env!("CARGO_BIN_EXE_ponder"))
        .current_dir(dir.path())
        .env("PONDER_THREADS", "zero")
        .args(["derive", "-c", "run.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("PONDER_THREADS"));
}

#[test]
fn unsorted_modes_csv_names_rows() {
    let cfg = CONFIG.replace(
        "modes = [\n    { freq = 221.0, mass = 40e-12 },\n    { freq = 1900.0, mass = 2e-9 },\n]",
        "modes_csv = \"modes.csv\"",
    );
    let dir = setup(&cfg);
    std::fs::write(dir.path().join("modes.csv"), "freq_hz,mass_kg\n221,40e-12\n1900,2e-9\n900,1e-9\n").unwrap();
    let o = run(dir.path(), &["modes", "-c", "run.toml"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("row 4") && e.contains("row 3"), "{e}");

    std::fs::write(dir.path().join("modes.csv"), "freq_hz,mass_kg,q\n221,40e-12,\n1900,2e-9,500\n").unwrap();
    let o = run(dir.path(), &["modes", "-c", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn oracle_check_passes() {
    let dir = setup(CONFIG);
    let o = run(dir.path(), &["oracle-check", "-c", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn sweep_prints_optimum_and_writes_rows() {
    let dir = setup(&format!("{CONFIG}\n[sweep]\ndetuning = [0.3, 0.5, 0.8]\n"));
    let o = run(dir.path(), &["sweep", "--spec", "run.toml", "-o", "rows.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"], 3);
    let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 3);
    assert!(text.lines().nth(1).unwrap().starts_with("index,t1,t2"));
}
