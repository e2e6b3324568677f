use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hubbard_gf::circuit::{trotter_step, Circuit, TermOrder, TrotterPlan};
use hubbard_gf::greens::{
    advanced_hadamard_circuits, dimer_ground_circuit, dimer_suite_reference, dimer_suite_run, dimer_suite_specs, direct_circuits, hadamard_circuits,
    Evolution, HadamardVariant, Kind, MeasurementRecord, Protocol, DIMER_SUITE,
};
use hubbard_gf::noise::{dimer_noisy_suite_repeated, DdSequence, MitigationConfig, NoiseModel, NoisySeries};
use hubbard_gf::oracle::{dimer_ground_energy, FermionHamiltonian};
use hubbard_gf::report::{heatmap_svg, overlay_svg, PlotSeries};
use hubbard_gf::vha::{dimer_optimal_angles, energy_closed_form, landscape_sweep, linspace};
use hubbard_gf::JwLayout;
use serde::{Deserialize, Serialize};

use crate::config::{pick, read_header, ConfigFile, RunConfig};
use crate::error::{CliError, Result};
use crate::{CompareArgs, CorrelatorArgs, DumpArgs, VhaSweepArgs, ZneArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvolutionKind {
    Trotter,
    Exact,
}

impl FromStr for EvolutionKind {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trotter" => Ok(EvolutionKind::Trotter),
            "exact" => Ok(EvolutionKind::Exact),
            o => Err(CliError::Usage(format!("unknown evolution `{o}` (trotter, exact)"))),
        }
    }
}

fn usage<T: FromStr<Err = String>>(s: &str) -> Result<T> {
    s.parse().map_err(CliError::Usage)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write(path, s)
}

fn suite_index(label: &str) -> Result<usize> {
    DIMER_SUITE
        .iter()
        .position(|(name, ..)| *name == label)
        .ok_or_else(|| CliError::Usage(format!("unknown correlator `{label}` (y2-y2, y3-y3, x3-y2)")))
}

fn evolution(kind: EvolutionKind, t: f64, u: f64, plan: &TrotterPlan) -> Result<Evolution> {
    let h = FermionHamiltonian::dimer(t, u);
    Ok(match kind {
        EvolutionKind::Trotter => Evolution::trotter(h, JwLayout::dimer(), plan),
        EvolutionKind::Exact => Evolution::exact(h, JwLayout::dimer())?,
    })
}

fn plan(dtau: f64, steps: usize) -> Result<TrotterPlan> {
    TrotterPlan::new(dtau, steps).map_err(|e| CliError::Usage(e.to_string()))
}

fn abs_devs(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    let mean = if d.is_empty() { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 };
    (max, mean)
}

/// Dense closed-form curve over `[0, tmax]` for plotting.
fn analytic_curve(kind: Kind, t: f64, u: f64, k: usize, tmax: f64) -> (Vec<f64>, Vec<f64>) {
    let xs = linspace(0.0, tmax, 400);
    let ys = xs.iter().map(|&tau| dimer_suite_reference(kind, t, u, tau)[k]).collect();
    (xs, ys)
}

// ---------------------------------------------------------------- vha-sweep

#[derive(Serialize)]
struct Optimum {
    alpha: f64,
    beta: f64,
    energy: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    config: RunConfig,
    optimum: Optimum,
    closed_form_optimum: Optimum,
    /// Largest |measured - closed form| over the grid.
    max_closed_form_error: f64,
}

pub fn vha_sweep(a: VhaSweepArgs, file: &ConfigFile, out: &Path) -> Result<()> {
    let t = pick(a.model.t, file.t, 1.0);
    let u = pick(a.model.u, file.u, 4.0);
    let grid = pick(a.grid, file.grid, 101);
    let seed = a.seed.or(file.seed);
    let mut rc = RunConfig::new("vha-sweep");
    rc.t = Some(t);
    rc.u = Some(u);
    rc.grid = Some(grid);
    rc.shots = pick(a.shots, file.shots, 0);
    rc.seed = seed.unwrap_or(0);
    rc.validate(seed.is_some())?;
    if grid == 0 {
        return Err(CliError::Usage("--grid must be at least 1".into()));
    }
    let alphas = linspace(-PI, PI, grid);
    let betas = linspace(0.0, FRAC_PI_2, grid);
    let land = landscape_sweep(t, u, &alphas, &betas, rc.shots, rc.seed)?;

    let mut csv = vec![];
    land.write_csv(&mut csv, &rc.header())?;
    write(&out.join("landscape.csv"), csv)?;
    let energies: Vec<f64> = land.points.iter().map(|p| p.energy).collect();
    let m = land.argmin;
    let svg = heatmap_svg(&format!("VHA energy, t = {t}, U = {u}"), "alpha", "beta", &alphas, &betas, &energies, Some((m.alpha, m.beta)));
    write(&out.join("landscape.svg"), svg)?;

    let max_err = land.points.iter().map(|p| (p.energy - energy_closed_form(t, u, p.alpha, p.beta)).abs()).fold(0.0, f64::max);
    let (ca, cb) = dimer_optimal_angles(t, u);
    let summary = SweepSummary {
        optimum: Optimum { alpha: m.alpha, beta: m.beta, energy: m.energy, stderr: m.stderr },
        closed_form_optimum: Optimum { alpha: ca, beta: cb, energy: dimer_ground_energy(t, u), stderr: 0.0 },
        max_closed_form_error: max_err,
        config: rc,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!("optimum alpha = {:.4}, beta = {:.4}, energy = {:.6} (ground {:.6})", m.alpha, m.beta, m.energy, dimer_ground_energy(t, u));
    Ok(())
}

// --------------------------------------------------------------- correlator

#[derive(Serialize)]
struct SeriesSummary {
    label: String,
    csv: String,
    svg: String,
    max_abs_deviation: f64,
    mean_abs_deviation: f64,
}

#[derive(Serialize)]
struct CorrelatorRun {
    config: RunConfig,
    series: Vec<SeriesSummary>,
}

fn correlator_svg(rec: &MeasurementRecord, kind: Kind, t: f64, u: f64, k: usize, sampled: bool) -> String {
    let times = rec.times();
    let tmax = times.last().copied().unwrap_or(0.0);
    let (ax, ay) = analytic_curve(kind, t, u, k, tmax);
    let band = sampled.then(|| rec.points.iter().map(|p| p.stderr).collect());
    let series = [PlotSeries::line("analytic", ax, ay), PlotSeries::points("measured", times, rec.estimates(), band)];
    let what = if kind == Kind::Retarded { "<{A(tau), B}>" } else { "-i <[A(tau), B]>" };
    overlay_svg(&format!("{} {kind}", rec.label), "tau", what, &series)
}

pub fn correlator(a: CorrelatorArgs, file: &ConfigFile, out: &Path) -> Result<()> {
    let t = pick(a.model.t, file.t, 1.0);
    let u = pick(a.model.u, file.u, 4.0);
    let dtau = pick(a.trotter.dtau, file.dtau, 0.314);
    let steps = pick(a.trotter.steps, file.steps, 25);
    let phi = pick(a.trotter.phi, file.phi, FRAC_PI_2);
    let kind: Kind = usage(&pick(a.kind, file.kind.clone(), "retarded".into()))?;
    let protocol: Protocol = usage(&pick(a.protocol, file.protocol.clone(), "direct".into()))?;
    let evo_name = pick(a.evolution, file.evolution.clone(), "trotter".into());
    let evo_kind: EvolutionKind = evo_name.parse()?;
    let seed = a.seed.or(file.seed);
    let mut rc = RunConfig::new("correlator");
    rc.t = Some(t);
    rc.u = Some(u);
    rc.dtau = Some(dtau);
    rc.steps = Some(steps);
    rc.phi = Some(phi);
    rc.kind = Some(kind.to_string());
    rc.protocol = Some(protocol.to_string());
    rc.evolution = Some(evo_name);
    rc.shots = pick(a.shots, file.shots, 0);
    rc.seed = seed.unwrap_or(0);
    rc.validate(seed.is_some())?;

    let plan = plan(dtau, steps)?;
    let evo = evolution(evo_kind, t, u, &plan)?;
    let recs = dimer_suite_run(&evo, t, u, &plan, kind, protocol, phi, rc.shots, rc.seed)?;
    let header = rc.header();
    let mut series = vec![];
    for (k, rec) in recs.iter().enumerate() {
        let mut csv = vec![];
        rec.write_csv(&mut csv, &header)?;
        let csv_name = format!("{}.csv", rec.label);
        let svg_name = format!("{}.svg", rec.label);
        write(&out.join(&csv_name), csv)?;
        write(&out.join(&svg_name), correlator_svg(rec, kind, t, u, k, rc.shots > 0))?;
        let reference: Vec<f64> = rec.times().iter().map(|&tau| dimer_suite_reference(kind, t, u, tau)[k]).collect();
        let (max, mean) = abs_devs(&rec.estimates(), &reference);
        println!("{}: max |dev| = {max:.3e}, mean |dev| = {mean:.3e} vs analytic", rec.label);
        series.push(SeriesSummary { label: rec.label.clone(), csv: csv_name, svg: svg_name, max_abs_deviation: max, mean_abs_deviation: mean });
    }
    write_json(&out.join("run.json"), &CorrelatorRun { config: rc, series })
}

// ------------------------------------------------------------------ compare

#[derive(Deserialize)]
struct Row {
    tau: f64,
    estimate: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct FileReport {
    file: String,
    label: String,
    mode: String,
    points: usize,
    max_abs_deviation: f64,
    mean_abs_deviation: f64,
    /// What the pass/fail decision measured.
    check: String,
    pass: bool,
}

#[derive(Serialize)]
struct CompareSummary {
    command: String,
    dtau_override: Option<f64>,
    files: Vec<FileReport>,
    pass: bool,
}

fn csv_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = vec![];
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(CliError::io(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(CliError::Input { path: p.clone(), msg: "no such file or directory".into() });
        }
    }
    if files.is_empty() {
        return Err(CliError::Usage("no CSV inputs found".into()));
    }
    Ok(files)
}

struct Header {
    path: PathBuf,
    map: BTreeMap<String, String>,
}

impl Header {
    fn new(path: &Path, text: &str) -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in read_header(text) {
            map.entry(k).or_insert(v);
        }
        Header { path: path.to_path_buf(), map }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.map.get(key).ok_or_else(|| CliError::Input { path: self.path.clone(), msg: format!("header has no `{key}`") })?;
        raw.parse().map_err(|_| CliError::Input { path: self.path.clone(), msg: format!("bad `{key}` value `{raw}`") })
    }
}

fn compare_file(path: &Path, dtau_override: Option<f64>) -> Result<FileReport> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let h = Header::new(path, &text);
    let label: String = h.get("label")?;
    let k = suite_index(&label).map_err(|_| CliError::Input { path: path.to_path_buf(), msg: format!("`{label}` is not a dimer suite correlator") })?;
    let (t, u): (f64, f64) = (h.get("t")?, h.get("u")?);
    let steps: usize = h.get("steps")?;
    let kind: Kind = h.get::<String>("kind")?.parse().map_err(|e: String| CliError::Input { path: path.to_path_buf(), msg: e })?;
    let protocol: Protocol = h.get::<String>("protocol")?.parse().map_err(|e: String| CliError::Input { path: path.to_path_buf(), msg: e })?;
    let phi: f64 = h.get("phi")?;
    let shots: u64 = h.get("shots")?;
    let evo_kind: EvolutionKind = h.get::<String>("evolution")?.parse()?;
    let dtau = dtau_override.unwrap_or(h.get("dtau")?);

    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let times: Vec<f64> = match dtau_override {
        Some(d) => (0..rows.len()).map(|i| i as f64 * d).collect(),
        None => rows.iter().map(|r| r.tau).collect(),
    };
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let analytic: Vec<f64> = times.iter().map(|&tau| dimer_suite_reference(kind, t, u, tau)[k]).collect();
    let (max, mean) = abs_devs(&est, &analytic);

    let plan = plan(dtau, steps)?;
    let evo = evolution(evo_kind, t, u, &plan)?;
    let (mode, check, pass) = if shots == 0 {
        // exact probabilities: the only error left is the propagator's
        let mut worst_ratio = 0.0f64;
        let mut pass = true;
        for (i, &tau) in times.iter().enumerate() {
            let bound = 4.0 * evo.propagator_error(tau)? + 1e-10;
            let dev = (est[i] - analytic[i]).abs();
            pass &= dev <= bound;
            worst_ratio = worst_ratio.max(dev / bound);
        }
        ("exact".to_string(), format!("max deviation / propagator bound = {worst_ratio:.3} (needs <= 1 at every point)"), pass)
    } else {
        let reference = dimer_suite_run(&evo, t, u, &plan, kind, protocol, phi, 0, 0)?;
        let ref_est = reference[k].estimates();
        if ref_est.len() != rows.len() {
            return Err(CliError::Input { path: path.to_path_buf(), msg: format!("{} rows for {} steps", rows.len(), steps) });
        }
        let inside = rows.iter().zip(&ref_est).filter(|(r, x)| (r.estimate - *x).abs() <= 4.0 * r.stderr + 1e-12).count();
        let frac = inside as f64 / rows.len() as f64;
        ("shots".to_string(), format!("{inside}/{} points within 4 sigma of the shot-free value ({frac:.3}, needs >= 0.95)", rows.len()), frac >= 0.95)
    };
    Ok(FileReport { file: path.display().to_string(), label, mode, points: rows.len(), max_abs_deviation: max, mean_abs_deviation: mean, check, pass })
}

pub fn compare(a: CompareArgs, file: &ConfigFile, out: &Path) -> Result<()> {
    let dtau = a.dtau.or(file.dtau);
    if let Some(d) = dtau {
        if !(d.is_finite() && d > 0.0) {
            return Err(CliError::Usage(format!("--dtau must be positive and finite, got {d}")));
        }
    }
    let files = csv_inputs(&a.inputs)?;
    let reports = files.iter().map(|f| compare_file(f, dtau)).collect::<Result<Vec<_>>>()?;
    for r in &reports {
        println!("{} {} ({}): max |dev| = {:.3e}, mean |dev| = {:.3e}; {}", if r.pass { "PASS" } else { "FAIL" }, r.label, r.file, r.max_abs_deviation, r.mean_abs_deviation, r.check);
    }
    let pass = reports.iter().all(|r| r.pass);
    let failed = reports.iter().filter(|r| !r.pass).count();
    write_json(&out.join("compare.json"), &CompareSummary { command: "compare".into(), dtau_override: dtau, files: reports, pass })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("{failed} of {} series out of tolerance", files.len())))
    }
}

// ----------------------------------------------------------------- zne-demo

#[derive(Serialize)]
struct NoisySummary {
    label: String,
    csv: String,
    svg: String,
    wins: usize,
    points: usize,
    win_fraction: f64,
    win_fraction_vs_analytic: f64,
    win_fraction_vs_noiseless: f64,
    max_abs_deviation_raw: f64,
    max_abs_deviation_mitigated: f64,
}

#[derive(Serialize)]
struct ZneSummary {
    config: RunConfig,
    reference: String,
    series: Vec<NoisySummary>,
    pooled_win_fraction: f64,
    min_win: f64,
    pass: bool,
}

fn noisy_svg(s: &NoisySeries) -> String {
    let series = [
        PlotSeries::line("analytic", s.times.clone(), s.analytic.clone()),
        PlotSeries::line("noiseless", s.times.clone(), s.noiseless.clone()),
        PlotSeries::points("raw", s.times.clone(), s.raw.clone(), Some(s.raw_stderr.clone())),
        PlotSeries::points("mitigated", s.times.clone(), s.mitigated_values(), None),
    ];
    overlay_svg(&format!("{} under noise", s.label), "tau", "<{A(tau), B}>", &series)
}

pub fn zne_demo(a: ZneArgs, file: &ConfigFile, out: &Path) -> Result<()> {
    let t = pick(a.model.t, file.t, 1.0);
    let u = pick(a.model.u, file.u, 4.0);
    let dtau = pick(a.trotter.dtau, file.dtau, 0.314);
    let steps = pick(a.trotter.steps, file.steps, 25);
    let phi = pick(a.trotter.phi, file.phi, FRAC_PI_2);
    let model = match a.noise_model.or(file.noise_model.clone()) {
        Some(p) => NoiseModel::load(&p).map_err(|e| CliError::Input { path: p, msg: e.to_string() })?,
        None => NoiseModel::device5(),
    };
    let mut mit = MitigationConfig::for_model(&model);
    if let Some(r) = a.readout.or(file.readout) {
        mit.readout = r;
    }
    if let Some(n) = a.twirls.or(file.twirls) {
        mit.twirl_variants = n;
    }
    if let Some(d) = a.dd.or(file.dd.clone()) {
        mit.dd = d.parse::<DdSequence>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(s) = a.zne_scales.or(file.zne_scales.clone()) {
        mit.zne_scales = s;
    }
    if let Some(o) = a.zne_order.or(file.zne_order) {
        mit.zne_order = o;
    }
    mit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let names = pick(a.correlators, file.correlators.clone(), DIMER_SUITE.iter().map(|s| s.0.to_string()).collect());
    let which = names.iter().map(|n| suite_index(n)).collect::<Result<Vec<_>>>()?;
    let min_win = pick(a.min_win, file.min_win, 0.8);
    let reference = pick(a.reference, file.reference.clone(), "noiseless".into());
    if reference != "noiseless" && reference != "analytic" {
        return Err(CliError::Usage(format!("unknown reference `{reference}` (noiseless, analytic)")));
    }
    let seed = a.seed.or(file.seed);
    let mut rc = RunConfig::new("zne-demo");
    rc.t = Some(t);
    rc.u = Some(u);
    rc.dtau = Some(dtau);
    rc.steps = Some(steps);
    rc.phi = Some(phi);
    rc.kind = Some(Kind::Retarded.to_string());
    rc.protocol = Some(Protocol::Direct.to_string());
    rc.shots = pick(a.shots, file.shots, 4096);
    let repetitions = pick(a.repetitions, file.repetitions, 3);
    if repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be at least 1".into()));
    }
    rc.repetitions = Some(repetitions);
    rc.seed = seed.unwrap_or(0);
    rc.noise_model = Some(model.name.clone());
    rc.mitigation = Some(serde_json::to_value(&mit)?);
    rc.validate(seed.is_some())?;

    let plan = plan(dtau, steps)?;
    let runs = dimer_noisy_suite_repeated(t, u, &plan, phi, &model, &mit, &which, rc.shots, repetitions, rc.seed)?;
    let mut header = rc.header();
    header.push(("reference".into(), reference.clone()));
    let (mut wins, mut total) = (0usize, 0usize);
    let mut series = vec![];
    for s in &runs {
        let mut csv = vec![];
        s.write_csv(&mut csv, &header)?;
        let (csv_name, svg_name) = (format!("{}.csv", s.label), format!("{}.svg", s.label));
        write(&out.join(&csv_name), csv)?;
        write(&out.join(&svg_name), noisy_svg(s))?;
        let r = if reference == "noiseless" { &s.noiseless } else { &s.analytic };
        let n = s.times.len();
        let w = (s.win_fraction(r) * n as f64).round() as usize;
        wins += w;
        total += n;
        let sum = NoisySummary {
            label: s.label.clone(),
            csv: csv_name,
            svg: svg_name,
            wins: w,
            points: n,
            win_fraction: w as f64 / n as f64,
            win_fraction_vs_analytic: s.win_fraction(&s.analytic),
            win_fraction_vs_noiseless: s.win_fraction(&s.noiseless),
            max_abs_deviation_raw: NoisySeries::max_deviation(&s.raw, r),
            max_abs_deviation_mitigated: NoisySeries::max_deviation(&s.mitigated_values(), r),
        };
        println!("{}: mitigated closer on {}/{} points; max |dev| raw {:.3}, mitigated {:.3} (vs {reference})", sum.label, w, n, sum.max_abs_deviation_raw, sum.max_abs_deviation_mitigated);
        series.push(sum);
    }
    let pooled = if total == 0 { 0.0 } else { wins as f64 / total as f64 };
    let pass = pooled >= min_win;
    println!("{} pooled {wins}/{total} = {pooled:.3} (needs >= {min_win})", if pass { "PASS" } else { "FAIL" });
    write_json(&out.join("summary.json"), &ZneSummary { config: rc, reference, series, pooled_win_fraction: pooled, min_win, pass })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("mitigation won on {pooled:.3} of points, below {min_win}")))
    }
}

// ------------------------------------------------------------- dump-circuit

fn print_circuit(name: &str, c: &Circuit, measured: Option<&[usize]>) {
    println!("# circuit = {name}");
    println!("# qubits = {}, ops = {}, cnots = {}, two-qubit = {}", c.n_qubits(), c.len(), c.cnot_count(), c.two_qubit_count());
    for (label, ops) in c.stages() {
        let cnots = ops.iter().filter(|o| o.gate == hubbard_gf::Gate::Cnot).count();
        println!("## stage {}: {} ops, {} cnots", if label.is_empty() { "(start)" } else { label }, ops.len(), cnots);
        for op in ops {
            println!("{op}");
        }
    }
    if c.global_phase() != 0.0 {
        println!("# global phase = {}", c.global_phase());
    }
    if let Some(m) = measured {
        println!("# measured = {m:?}");
    }
}

pub fn dump_circuit(a: DumpArgs, file: &ConfigFile) -> Result<()> {
    let t = pick(a.model.t, file.t, 1.0);
    let u = pick(a.model.u, file.u, 4.0);
    let dtau = pick(a.trotter.dtau, file.dtau, 0.314);
    let steps = pick(a.trotter.steps, file.steps, 25);
    let phi = pick(a.trotter.phi, file.phi, FRAC_PI_2);
    let kind: Kind = usage(&pick(a.kind, file.kind.clone(), "retarded".into()))?;
    let protocol: Protocol = usage(&pick(a.protocol, file.protocol.clone(), "direct".into()))?;
    let mut rc = RunConfig::new("dump-circuit");
    rc.t = Some(t);
    rc.u = Some(u);
    rc.dtau = Some(dtau);
    rc.phi = Some(phi);
    rc.validate(true)?;
    let h = FermionHamiltonian::dimer(t, u);
    match a.circuit.as_str() {
        "ground" => print_circuit("ground", &dimer_ground_circuit(t, u), None),
        "step" => print_circuit("trotter step", &trotter_step(&h, &JwLayout::dimer(), dtau, TermOrder::default())?, None),
        "protocol" => {
            let k = suite_index(&a.correlator)?;
            let plan = plan(dtau, steps)?;
            let evo = Evolution::trotter(h, JwLayout::dimer(), &plan);
            let spec = &dimer_suite_specs(&plan, kind, protocol)?[k];
            let ground = dimer_ground_circuit(t, u);
            let pcs = match protocol {
                Protocol::Direct => direct_circuits(spec, phi, kind.lambda(), &ground, &evo)?,
                Protocol::Hadamard => hadamard_circuits(spec, &ground, &evo, HadamardVariant::default())?,
                Protocol::AdvancedHadamard => advanced_hadamard_circuits(spec, &ground, &evo)?,
            };
            let pc = pcs.get(a.index).ok_or_else(|| CliError::Usage(format!("--index {} out of range (0..={steps})", a.index)))?;
            print_circuit(&format!("{} {kind} {protocol} at tau = {}", a.correlator, pc.tau), &pc.circuit, Some(&pc.measured));
        }
        o => return Err(CliError::Usage(format!("unknown circuit `{o}` (ground, step, protocol)"))),
    }
    Ok(())
}
