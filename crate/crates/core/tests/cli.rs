//! The command-line tool end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use donor_nmr::cli::parse_config;
use tempfile::TempDir;

const HAHN: &str = r#"
[system]
nu0 = "7.315 MHz"
nu_Q = "10 kHz"

[disorder]
sigma_delta_nu0 = "45 Hz"
sigma_nu_Q = "45 Hz"

[[bath]]
target = "field"
statistics = "lorentzian"
n_fluctuators = 2
coupling = "1.6476 Hz"
rate_min = "300 Hz"
rate_max = "900 Hz"

[protocol.hahn]
transition = "center"
tau = { start = "1 ms", stop = "50 ms", count = 8 }

[execution]
ensemble = 50
realizations = 4
seed = 7

[output]
formats = ["json", "csv"]
"#;

const QUIET_HAHN: &str = r#"
[system]
nu0 = "7.315 MHz"
nu_Q = "10 kHz"

[protocol.hahn]
transition = "satellite"
tau = ["1 ms", "2 ms", "3 ms", "4 ms"]

[execution]
seed = 1
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_donor-nmr"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// CSV body without the comment preamble.
fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn same_seed_same_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hahn.toml", HAHN);
    let cfg = cfg.to_str().unwrap();
    for out in ["a", "b"] {
        let o = dir.path().join(out);
        let r = run(&["run", cfg, "--out-dir", o.to_str().unwrap(), "--quiet"]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["run_hahn.csv", "run_fits.csv"] {
        assert_eq!(body(&dir.path().join("a").join(f)), body(&dir.path().join("b").join(f)));
    }
    let json = |d: &str| -> serde_json::Value {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(d).join("run.json")).unwrap()).unwrap();
        v["results"].clone()
    };
    assert_eq!(json("a"), json("b"));

    let c = dir.path().join("c");
    let r = run(&["run", cfg, "--out-dir", c.to_str().unwrap(), "--seed", "8", "-q"]);
    assert_eq!(code(&r), 0);
    assert_ne!(body(&dir.path().join("a/run_hahn.csv")), body(&c.join("run_hahn.csv")));
}

#[test]
fn bundle_records_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hahn.toml", HAHN);
    let out = dir.path().join("out");
    let r = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "-q"]);
    assert_eq!(code(&r), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(v["provenance"]["seed"], 7);
    assert_eq!(v["provenance"]["config_sha256"], parse_config(HAHN).unwrap().hash());
    assert_eq!(v["incomplete"], false);
    assert_eq!(v["results"]["protocol"], "hahn");
    let csv = fs::read_to_string(out.join("run_hahn.csv")).unwrap();
    assert!(csv.starts_with("# donor-nmr "));
    assert!(csv.contains("\ntime_s,amplitude\n"));
}

#[test]
fn noise_free_hahn_is_a_fit_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "quiet.toml", QUIET_HAHN);
    let out = dir.path().join("out");
    let r = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "-q"]);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("constant"));
    // The trace is still written, flagged as incomplete.
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(v["incomplete"], true);
    assert_eq!(v["status"], "fit_failure");
    let amps = &v["results"]["trace"]["trace"]["amplitudes"];
    assert!(amps.as_array().unwrap().iter().all(|a| a.as_f64() == Some(1.0)));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.toml", &QUIET_HAHN.replace("\"10 kHz\"", "10000"));
    let r = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 4") && err.contains("unit"), "{err}");

    let r = run(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&r), 2);

    let ok = write(dir.path(), "ok.toml", QUIET_HAHN);
    let r = run(&["describe", ok.to_str().unwrap(), "--seed", "9223372036854775808"]);
    assert_ne!(code(&r), 0);
}

#[test]
fn canonical_form_is_a_fixed_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hahn.toml", HAHN);
    let r = run(&["validate", "--canonical", cfg.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let first = String::from_utf8(r.stdout).unwrap();
    let again = write(dir.path(), "canon.toml", &first);
    let r = run(&["validate", "--canonical", again.to_str().unwrap()]);
    assert_eq!(String::from_utf8(r.stdout).unwrap(), first);
    assert_eq!(parse_config(&first).unwrap().hash(), parse_config(HAHN).unwrap().hash());
}

#[test]
fn describe_prints_the_timeline() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "quiet.toml", QUIET_HAHN);
    let r = run(&["describe", cfg.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("protocol: hahn"));
    assert!(text.contains("π/2 | 2 ms | π | 2 ms | π/2 | detect"), "{text}");
    // Nothing is written by describe.
    assert!(!dir.path().join("results").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
}
