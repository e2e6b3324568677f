use std::path::Path;
use std::process::{Command, Output};

use hubbard_gf::circuit::TrotterPlan;
use hubbard_gf::greens::dimer_suite;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hubbard-gf"));
    c.env_remove("HUBBARD_GF_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn vha_sweep_finds_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["vha-sweep", "--t", "1", "--u", "4", "--grid", "101"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("summary.json"));
    let (a, b) = (s["optimum"]["alpha"].as_f64().unwrap(), s["optimum"]["beta"].as_f64().unwrap());
    assert!((a + 0.92).abs() < 0.04 && (b - 0.39).abs() < 0.02, "({a}, {b})");
    assert!(s["max_closed_form_error"].as_f64().unwrap() < 1e-10);
    assert_eq!(s["config"]["grid"], 101);
    assert_eq!(rows(&dir.path().join("landscape.csv")).len(), 101 * 101);
    let svg = std::fs::read_to_string(dir.path().join("landscape.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn empty_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["vha-sweep", "--grid", "0"], dir.path())), 2);
}

#[test]
fn exact_correlator_matches_trotterized_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["correlator", "--t", "1", "--u", "4", "--dtau", "0.314", "--steps", "25", "--phi", "1.5708", "--kind", "retarded", "--shots", "0"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let want = dimer_suite(1.0, 4.0, &TrotterPlan::new(0.314, 25).unwrap(), 1.5708, 0, 0).unwrap();
    for rec in &want {
        let got = rows(&dir.path().join(format!("{}.csv", rec.label)));
        assert_eq!(got.len(), 26);
        for (row, p) in got.iter().zip(&rec.points) {
            assert!((row[1].parse::<f64>().unwrap() - p.estimate).abs() < 1e-10);
        }
        assert!(dir.path().join(format!("{}.svg", rec.label)).exists());
    }
    let r = json(&dir.path().join("run.json"));
    assert_eq!(r["series"].as_array().unwrap().len(), 3);
    assert_eq!(r["config"]["protocol"], "direct");
}

#[test]
fn correlator_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["correlator", "--protocol", "telepathy"], dir.path())), 2);
    assert_eq!(code(&run(&["correlator", "--kind", "advanced"], dir.path())), 2);
    assert_eq!(code(&run(&["correlator", "--shots", "100"], dir.path())), 2, "seed is mandatory with shots");
    assert_eq!(code(&run(&["correlator", "--dtau", "nan"], dir.path())), 2);
    assert_eq!(code(&run(&["correlator", "--steps"], dir.path())), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["correlator", "--steps", "4", "--shots", "256", "--seed", "3", "--protocol", "hadamard", "--kind", "keldysh"];
    assert_eq!(code(&run(&args, a.path())), 0);
    assert_eq!(code(&run(&args, b.path())), 0);
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let text = std::fs::read_to_string(a.path().join("y2-y2.csv")).unwrap();
    for key in ["# seed = 3", "# shots = 256", "# protocol = hadamard", "# t = 1.0", "# dtau = 0.314"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn compare_passes_exact_and_fails_wrong_dtau() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("run");
    assert_eq!(code(&run(&["correlator", "--shots", "0"], &runs)), 0);
    let o = run(&["compare", runs.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let s = json(&dir.path().join("compare.json"));
    assert_eq!(s["pass"], true);
    assert_eq!(s["files"].as_array().unwrap().len(), 3);
    assert!(s["files"][0]["max_abs_deviation"].as_f64().unwrap() > 0.0);

    let o = run(&["compare", runs.to_str().unwrap(), "--dtau", "0.35"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(json(&dir.path().join("compare.json"))["pass"], false);
}

#[test]
fn compare_shot_mode_band() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("run");
    assert_eq!(code(&run(&["correlator", "--shots", "4096", "--seed", "7"], &runs)), 0);
    let o = run(&["compare", runs.join("y2-y2.csv").to_str().unwrap(), runs.join("x3-y2.csv").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&dir.path().join("compare.json"))["files"][1]["mode"], "shots");
}

#[test]
fn compare_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare", "/nonexistent/run.csv"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "t = 0.5\nu = 2.0\nsteps = 3\nshots = 0\n").unwrap();
    let out = dir.path().join("a");
    let o = bin().args(["correlator", "--config", cfg.to_str().unwrap(), "--u", "3", "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = &json(&out.join("run.json"))["config"];
    assert_eq!(c["t"], 0.5);
    assert_eq!(c["u"], 3.0);
    assert_eq!(c["steps"], 3);

    std::fs::write(&cfg, "t = 0.5\nbogus = 1\n").unwrap();
    let o = bin().args(["correlator", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn env_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["vha-sweep", "--grid", "5"]).env("HUBBARD_GF_OUT", dir.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn zne_demo_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["zne-demo", "--steps", "2", "--twirls", "2", "--shots", "128", "--seed", "1", "--correlators", "y2-y2,x3-y2", "--zne-scales", "1,2,3", "--zne-order", "1", "--repetitions", "2"];
    let mut args = base.to_vec();
    args.extend(["--min-win", "0"]);
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["series"].as_array().unwrap().len(), 2);
    assert_eq!(s["config"]["mitigation"]["twirl_variants"], 2);
    assert_eq!(s["config"]["noise_model"], "device5");
    assert_eq!(s["config"]["repetitions"], 2);
    assert_eq!(rows(&dir.path().join("y2-y2.csv")).len(), 3);

    let mut args = base.to_vec();
    args.extend(["--min-win", "1.01"]);
    assert_eq!(code(&run(&args, dir.path())), 3);
    let mut args = base.to_vec();
    args.extend(["--dd", "xy4"]);
    assert_eq!(code(&run(&args, dir.path())), 2);
    assert_eq!(code(&run(&["zne-demo", "--correlators", "z9-z9", "--seed", "1"], dir.path())), 2);
    assert_eq!(code(&run(&["zne-demo", "--repetitions", "0", "--seed", "1"], dir.path())), 2);
}

#[test]
fn dump_circuit_prints_stages() {
    let o = bin().args(["dump-circuit", "--circuit", "protocol", "--index", "2", "--steps", "3"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("# circuit = y2-y2 retarded direct"));
    assert!(text.contains("## stage"));
    assert!(text.contains("# measured ="));
    let o = bin().args(["dump-circuit", "--circuit", "step"]).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("cnots ="));
    assert_eq!(code(&bin().args(["dump-circuit", "--index", "99", "--steps", "3"]).output().unwrap()), 2);
    assert_eq!(code(&bin().args(["dump-circuit", "--circuit", "teapot"]).output().unwrap()), 2);
}
