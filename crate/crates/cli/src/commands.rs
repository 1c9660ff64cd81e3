use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use erasim_core::analysis::{
    afm_probability, conditional_profile, conditioned_magnetization_timeseries, erasure_cross_correlation,
    erasure_density, magnetization_histogram, threshold_scan, Condition, Image, ObservableResult,
};
use erasim_core::bell::{estimate_bell, read_count_table, write_count_table, PopulationPoint};
use erasim_core::error::{Error, Result};
use erasim_core::experiment::{run_bell_campaign, run_sweep_campaign, Provenance, TOOL_NAME, TOOL_VERSION};
use erasim_core::imaging::{ExcisionPolicy, ShotBatch, ShotRecord};
use erasim_core::oracle::minimum_gap_scan;
use serde_json::json;

use crate::output::{num, read_shots, write_csv_with_sidecar, write_shots, Table};
use crate::{Command, Common};

/// Run one subcommand on a thread pool of the requested size.
pub fn run_command(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cmd {
        Command::SimulateBell { common } => simulate_bell(common),
        Command::SimulateSweep { common } => simulate_sweep(common),
        Command::FitBell { common, counts } => fit_bell(common, counts),
        Command::Analyze { common, shots, max_distance } => analyze(common, shots, *max_distance),
        Command::ThresholdScan { common, shots, thresholds, policy } => {
            threshold(common, shots, thresholds, (*policy).into())
        }
        Command::GapScan { common, delta_lo, delta_hi, points } => gap_scan(common, *delta_lo, *delta_hi, *points),
    })
}

fn out_path(common: &Common, prefix: &str, suffix: &str) -> PathBuf {
    common.out.join(format!("{prefix}{suffix}"))
}

fn warn_invalid(n: u64) {
    if n > 0 {
        eprintln!("warning: {n} trajectories underflowed and were sampled from their last valid state");
    }
}

fn simulate_bell(common: &Common) -> Result<()> {
    let cfg = common.resolve_config()?;
    let prov = Provenance::new("simulate-bell", &cfg)?;
    let camp = run_bell_campaign(&cfg)?;
    warn_invalid(camp.invalid_trajectories);
    let prefix = &cfg.output.prefix;
    let bell = cfg.bell.as_ref().expect("validated campaign");
    let meta = json!({
        "provenance": prov,
        "times": camp.times,
        "shots_per_point": bell.shots_per_point,
        "invalid_trajectories": camp.invalid_trajectories,
    });
    let batch = ShotBatch::new(2, meta, camp.shots);
    write_shots(&out_path(common, prefix, ".shots"), &batch, cfg.output.text_shots)?;
    for (name, points, policy) in
        [("_counts_raw.csv", &camp.raw, ExcisionPolicy::None), ("_counts_excised.csv", &camp.excised, ExcisionPolicy::PrepAndDecay)]
    {
        let mut text = Vec::new();
        write_count_table(points, &mut text)?;
        let details = json!({ "excision": policy.name(), "t_pi": camp.times.t_pi, "t_two_pi": camp.times.t_two_pi });
        write_csv_with_sidecar(&out_path(common, prefix, name), &prov, &String::from_utf8_lossy(&text), &details)?;
    }
    if let Some(b) = &camp.budget {
        let mut t = Table::new(&["item", "fidelity", "infidelity", "bound", "gap"]);
        for (item, e) in [("noiseless", &b.noiseless), ("full", &b.full)] {
            t.row([item.to_string(), num(e.fidelity), num(1.0 - e.fidelity), num(e.bound), num(e.gap())]);
        }
        for c in &b.channels {
            t.row([c.channel.name().to_string(), "NaN".into(), num(c.infidelity), "NaN".into(), "NaN".into()]);
        }
        write_csv_with_sidecar(&out_path(common, prefix, "_budget.csv"), &prov, t.as_str(), b)?;
    }
    Ok(())
}

fn policy_cells(shots: &[ShotRecord], n: usize, policy: ExcisionPolicy) -> Result<[String; 2]> {
    if n % 2 == 1 {
        return Ok(["NaN".into(), "NaN".into()]);
    }
    match afm_probability(shots, n, policy) {
        Ok(r) => Ok([num(r.value), num(r.sigma())]),
        Err(Error::EmptyStatistics(_)) => Ok(["NaN".into(), "NaN".into()]),
        Err(e) => Err(e),
    }
}

fn density(shots: &[ShotRecord], n: usize, image: Image) -> Result<String> {
    match erasure_density(shots, n, image) {
        Ok(r) => Ok(num(r.value)),
        Err(Error::EmptyStatistics(_)) => Ok("NaN".into()),
        Err(e) => Err(e),
    }
}

fn simulate_sweep(common: &Common) -> Result<()> {
    let cfg = common.resolve_config()?;
    let prov = Provenance::new("simulate-sweep", &cfg)?;
    let camp = run_sweep_campaign(&cfg)?;
    warn_invalid(camp.invalid_trajectories);
    let sweep = cfg.sweep.as_ref().expect("validated campaign");
    let schedule = sweep.schedule();
    let n = cfg.lattice.n_atoms;
    let prefix = &cfg.output.prefix;
    let mut t = Table::new(&[
        "checkpoint",
        "time_us",
        "detuning_mhz",
        "file",
        "n_shots",
        "e1_density",
        "e2_density",
        "p_afm_none",
        "sigma_none",
        "p_afm_prep_only",
        "sigma_prep_only",
        "p_afm_prep_and_decay",
        "sigma_prep_and_decay",
    ]);
    for (k, (time, shots)) in camp.checkpoints.iter().zip(camp.batches).enumerate() {
        let file = format!("{prefix}_cp{k:02}.shots");
        let detuning = schedule.detuning(*time);
        let mut row = vec![
            k.to_string(),
            num(*time),
            num(detuning),
            file.clone(),
            shots.len().to_string(),
            density(&shots, n, Image::E1)?,
            density(&shots, n, Image::E2)?,
        ];
        for p in ExcisionPolicy::ALL {
            row.extend(policy_cells(&shots, n, p)?);
        }
        t.row(row);
        let meta = json!({
            "provenance": prov,
            "checkpoint": k,
            "time_us": time,
            "detuning_mhz": detuning,
            "invalid_trajectories": camp.invalid_trajectories,
        });
        write_shots(&common.out.join(&file), &ShotBatch::new(n, meta, shots), cfg.output.text_shots)?;
    }
    let details = json!({ "invalid_trajectories": camp.invalid_trajectories, "n_atoms": n });
    write_csv_with_sidecar(&out_path(common, prefix, "_summary.csv"), &prov, t.as_str(), &details)
}

fn fit_bell(common: &Common, counts: &Path) -> Result<()> {
    let cfg = common.resolve_config()?;
    let prov = Provenance::new("fit-bell", &cfg)?;
    let text = fs::read(counts).map_err(|e| Error::Config(format!("{}: {e}", counts.display())))?;
    let points: Vec<PopulationPoint> = read_count_table(&text[..])?;
    let spam = cfg.spam_model()?;
    let mut opts = cfg.bell.as_ref().map(|b| b.estimator).unwrap_or_default();
    opts.seed = cfg.seed;
    let report = estimate_bell(&points, &spam, &opts)?;
    let mut t = Table::new(&["tier", "mode", "lower", "upper", "plus", "minus", "n_samples", "rejection_rate", "rejection_warning"]);
    for (tier, b) in [("raw", &report.raw), ("measurement", &report.measurement), ("spam", &report.spam)] {
        let (plus, minus) = b.error_bars();
        if b.rejection_warning {
            eprintln!("warning: {tier} tier rejected {:.1}% of draws", 100.0 * b.rejection_rate);
        }
        t.row([
            tier.to_string(),
            num(b.mode),
            num(b.interval.0),
            num(b.interval.1),
            num(plus),
            num(minus),
            b.n_samples.to_string(),
            num(b.rejection_rate),
            b.rejection_warning.to_string(),
        ]);
    }
    let details = json!({ "counts": counts.display().to_string(), "spam": spam, "report": report });
    write_csv_with_sidecar(&out_path(common, &cfg.output.prefix, "_fit.csv"), &prov, t.as_str(), &details)
}

/// Provenance of outputs computed from shot files alone.
fn derived_provenance(command: &str, sources: &[Provenance], seed: Option<u64>) -> Provenance {
    let hashes: BTreeSet<&str> = sources.iter().map(|p| p.config_hash.as_str()).collect();
    let single = sources.first().filter(|_| hashes.len() == 1);
    Provenance {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: command.into(),
        config_hash: hashes.into_iter().collect::<Vec<_>>().join("+"),
        seed: seed.or_else(|| sources.first().map(|p| p.seed)).unwrap_or(0),
        config: single.map(|p| p.config.clone()).unwrap_or_default(),
    }
}

struct Source {
    label: String,
    time: f64,
    batch: ShotBatch,
    provenance: Option<Provenance>,
}

fn load_sources(paths: &[PathBuf]) -> Result<Vec<Source>> {
    paths
        .iter()
        .map(|p| {
            let batch = read_shots(p)?;
            let provenance = batch.metadata.get("provenance").and_then(|v| serde_json::from_value(v.clone()).ok());
            let time = batch.metadata.get("time_us").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
            let label = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Source { label, time, batch, provenance })
        })
        .collect()
}

fn result_cells(r: &ObservableResult) -> [String; 4] {
    [num(r.value), num(r.interval.0), num(r.interval.1), r.n_shots_used.to_string()]
}

fn empty_ok<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyStatistics(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn analyze(common: &Common, paths: &[PathBuf], max_d: usize) -> Result<()> {
    let sources = load_sources(paths)?;
    if sources.iter().all(|s| s.batch.shots.is_empty()) {
        return Err(Error::EmptyStatistics("every shot file is empty".into()));
    }
    let provs: Vec<Provenance> = sources.iter().filter_map(|s| s.provenance.clone()).collect();
    let prov = derived_provenance("analyze", &provs, common.seed);
    let prefix = "analysis";

    let mut afm = Table::new(&["file", "time_us", "policy", "value", "lower", "upper", "n_used", "retention"]);
    let mut hist = Table::new(&["file", "time_us", "policy", "m", "count", "probability"]);
    let mut dens = Table::new(&["file", "time_us", "image", "density", "lower", "upper", "n_sites"]);
    let mut prof = Table::new(&["file", "time_us", "anchor", "d", "p_empty", "lower", "upper", "n"]);
    let mut corr = Table::new(&["file", "time_us", "d", "conditional", "baseline", "z"]);
    for s in &sources {
        let n = s.batch.n_atoms;
        let shots = &s.batch.shots;
        let head = || [s.label.clone(), num(s.time)];
        for policy in ExcisionPolicy::ALL {
            let kept = erasim_core::imaging::excise(shots, policy).retention();
            if n % 2 == 0 {
                let cells = match empty_ok(afm_probability(shots, n, policy))? {
                    Some(r) => result_cells(&r),
                    None => ["NaN".into(), "NaN".into(), "NaN".into(), "0".into()],
                };
                afm.row(head().into_iter().chain([policy.name().to_string()]).chain(cells).chain([num(kept)]));
            }
            if let Some(h) = empty_ok(magnetization_histogram(shots, n, policy))? {
                for b in &h.bins {
                    hist.row(head().into_iter().chain([
                        policy.name().to_string(),
                        num(b.m),
                        b.count.to_string(),
                        num(b.probability),
                    ]));
                }
            }
        }
        for (name, image) in [("e1", Image::E1), ("e2", Image::E2)] {
            if let Some(r) = empty_ok(erasure_density(shots, n, image))? {
                dens.row(head().into_iter().chain([name.to_string()]).chain(result_cells(&r)));
            }
        }
        let conditions = [
            ("none", Condition { image: Image::E1, value: false, single_erasure: false }),
            ("e1", Condition { image: Image::E1, value: true, single_erasure: true }),
            ("e2", Condition { image: Image::E2, value: true, single_erasure: true }),
        ];
        for (name, c) in conditions {
            if let Some(points) = empty_ok(conditional_profile(shots, n, c, max_d))? {
                for p in points {
                    prof.row(
                        head().into_iter().chain([name.to_string(), p.d.to_string()]).chain(result_cells(&p.empty)),
                    );
                }
            }
        }
        for d in 1..=max_d.min(n.saturating_sub(1)) {
            if let Some(c) = empty_ok(erasure_cross_correlation(shots, n, d))? {
                corr.row(head().into_iter().chain([d.to_string(), num(c.conditional.value), num(c.baseline.value), num(c.z)]));
            }
        }
    }

    let mut mag = Table::new(&["anchor", "time_us", "mean", "sem", "n_shots"]);
    let n0 = sources[0].batch.n_atoms;
    if sources.iter().all(|s| s.batch.n_atoms == n0) {
        let series: Vec<(f64, &[ShotRecord])> = sources.iter().map(|s| (s.time, &s.batch.shots[..])).collect();
        for (name, image) in [("e1", Image::E1), ("e2", Image::E2)] {
            if let Some(points) = empty_ok(conditioned_magnetization_timeseries(&series, n0, image))? {
                for p in points {
                    mag.row([name.to_string(), num(p.time), num(p.mean), num(p.sem), p.n_shots.to_string()]);
                }
            }
        }
    }

    let files: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let details = json!({ "inputs": files, "max_distance": max_d });
    for (suffix, table) in [
        ("_afm.csv", &afm),
        ("_histogram.csv", &hist),
        ("_erasures.csv", &dens),
        ("_profile.csv", &prof),
        ("_correlation.csv", &corr),
        ("_magnetization.csv", &mag),
    ] {
        write_csv_with_sidecar(&out_path(common, prefix, suffix), &prov, table.as_str(), &details)?;
    }
    Ok(())
}

fn threshold(common: &Common, path: &Path, thresholds: &[u32], policy: ExcisionPolicy) -> Result<()> {
    let sources = load_sources(&[path.to_path_buf()])?;
    let s = &sources[0];
    if s.batch.shots.is_empty() {
        return Err(Error::EmptyStatistics("shot file is empty".into()));
    }
    let provs: Vec<Provenance> = s.provenance.iter().cloned().collect();
    let prov = derived_provenance("threshold-scan", &provs, common.seed);
    let points = threshold_scan(&s.batch.shots, s.batch.n_atoms, thresholds, policy)?;
    let mut t = Table::new(&["threshold", "retention", "p_afm", "lower", "upper", "n_used"]);
    for p in &points {
        let cells = match &p.afm {
            Some(r) => result_cells(r),
            None => ["NaN".into(), "NaN".into(), "NaN".into(), "0".into()],
        };
        t.row([p.threshold.to_string(), num(p.retention)].into_iter().chain(cells));
    }
    let details = json!({ "input": path.display().to_string(), "policy": policy.name() });
    write_csv_with_sidecar(&out_path(common, "threshold", "_scan.csv"), &prov, t.as_str(), &details)
}

fn gap_scan(common: &Common, lo: Option<f64>, hi: Option<f64>, points: usize) -> Result<()> {
    let cfg = common.resolve_config()?;
    let prov = Provenance::new("gap-scan", &cfg)?;
    let lattice = cfg.lattice.resolve()?;
    let (omega, dmax) = match (&cfg.sweep, &cfg.bell) {
        (Some(s), _) => (s.omega_max, s.delta_max),
        (None, Some(b)) => (b.omega, 2.0 * b.omega),
        _ => return Err(Error::Config("gap-scan needs a [sweep] or [bell] section for the Rabi frequency".into())),
    };
    let scan = minimum_gap_scan(&lattice, omega, lo.unwrap_or(-dmax), hi.unwrap_or(dmax), points)?;
    let mut t = Table::new(&["delta_mhz", "gap_mhz"]);
    for (d, g) in scan.deltas.iter().zip(&scan.gaps) {
        t.row([num(*d), num(*g)]);
    }
    let details = json!({ "omega_mhz": omega, "min_delta_mhz": scan.min_delta(), "min_gap_mhz": scan.min_gap() });
    write_csv_with_sidecar(&out_path(common, &cfg.output.prefix, "_gap.csv"), &prov, t.as_str(), &details)
}
