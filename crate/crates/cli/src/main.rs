use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lanecrit_core::config::{
    parse_mis_scenario, parse_sample_scenario, render_mis_scenario, render_sample_scenario, RunConfig,
};
use lanecrit_core::criticality::{analyze_recording, boxplot_json, direction_stats, histograms_json, Metric, Track};
use lanecrit_core::detect::{Criterion, LaneChangeEvent};
use lanecrit_core::io::{self, Recording};
use lanecrit_core::mis::{reference_fixture, run_closed_loop, BrakeTiming, FrontBrake, MisEvalReport};
use lanecrit_core::perturb::PerturbationKind;
use lanecrit_core::pipeline::detect_events;
use lanecrit_core::robustness::{self, RobustnessReport, SweepSetup};
use lanecrit_core::scenario::{overtaking_fixture, sample_cc1};
use lanecrit_core::stats::event_stats;
use lanecrit_core::synth::generate_corpus;
use lanecrit_core::traj::{Trajectory, VehicleClass};

#[derive(Parser)]
#[command(name = "lanecrit", version, about = "Lane-change detection and criticality analysis")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Trajectory CSV file or directory; overrides `input`.
    #[arg(short, long, global = true)]
    input: Option<PathBuf>,
    /// Output directory; overrides `output`.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Any config key, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration.
    Config,
    /// Write synthetic inputs.
    Synth {
        #[arg(long, value_enum, default_value = "corpus")]
        kind: SynthKind,
        /// Vehicle count for the corpus; overrides `synth.count`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Detect lane changes with every configured criterion.
    Detect,
    /// Detection rate under lateral bias and Brownian noise.
    Robustness,
    /// Most critical opponent per lane change.
    Criticality,
    /// Car-following substitution for a range of cc1 values.
    Sample,
    /// Closed-loop margin increase runs, with and without the system.
    MisEval,
    /// Duration and speed box plots of detected events.
    Stats {
        /// Events CSV; defaults to `<out>/events.csv`.
        #[arg(long)]
        events: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Corpus,
    Overtaking,
    Mis,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    for s in &cli.sets {
        cfg.set(s).with_context(|| format!("--set {s}"))?;
    }
    if let Some(p) = &cli.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &cli.out {
        cfg.output = p.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    io::write_file(path, |w| io::write_json(w, value))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn load_recordings(cfg: &RunConfig) -> Result<Vec<Recording>> {
    let Some(input) = &cfg.input else {
        bail!("no input; pass --input or set `input`");
    };
    let recordings = io::ingest(input)?;
    for rec in &recordings {
        let r = &rec.report;
        for w in &r.warnings {
            log::warn!("{}: {w}", r.source);
        }
        for issue in &r.rejected_rows {
            log::warn!("{}:{}: row dropped: {}", r.source, issue.line, issue.reason);
        }
        for (id, reason) in &r.rejected_trajectories {
            log::warn!("{}: vehicle {id} dropped: {reason}", r.source);
        }
    }
    let vehicles: usize = recordings.iter().map(|r| r.trajectories.len()).sum();
    if vehicles == 0 {
        bail!("no usable trajectories in {}", input.display());
    }
    log::info!("{} recordings, {vehicles} vehicles", recordings.len());
    Ok(recordings)
}

fn ingest_summary(recordings: &[Recording]) -> Value {
    json!({
        "recordings": recordings.len(),
        "vehicles": recordings.iter().map(|r| r.trajectories.len()).sum::<usize>(),
        "rows": recordings.iter().map(|r| r.report.rows).sum::<usize>(),
        "rejected_rows": recordings.iter().map(|r| r.report.rejected_rows.len()).sum::<usize>(),
        "rejected_vehicles": recordings.iter().map(|r| r.report.rejected_trajectories.len()).sum::<usize>(),
    })
}

/// Events of one recording; gradient detection is skipped for vehicles
/// without marking distances.
fn detect_recording(cfg: &RunConfig, rec: &Recording, criteria: &[Criterion]) -> Result<(Vec<LaneChangeEvent>, usize)> {
    let mut events = Vec::new();
    let mut skipped = 0;
    for traj in &rec.trajectories {
        for &c in criteria {
            if c == Criterion::Gradient && !traj.has_markings() {
                skipped += 1;
                continue;
            }
            let found = detect_events(traj, c, &cfg.layout, &cfg.preprocess, &cfg.detect)
                .with_context(|| format!("{}: vehicle {} ({})", rec.source, traj.vehicle_id, c.as_str()))?;
            events.extend(found);
        }
    }
    Ok((events, skipped))
}

fn cmd_detect(cfg: &RunConfig) -> Result<()> {
    let recordings = load_recordings(cfg)?;
    let results: Vec<Result<(Vec<LaneChangeEvent>, usize)>> = std::thread::scope(|s| {
        let handles: Vec<_> = recordings
            .iter()
            .map(|rec| s.spawn(|| detect_recording(cfg, rec, &cfg.criteria)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("detection thread panicked"))
            .collect()
    });
    let mut events = Vec::new();
    let mut skipped = 0;
    for r in results {
        let (e, s) = r?;
        events.extend(e);
        skipped += s;
    }
    if skipped > 0 {
        log::warn!("gradient criterion skipped for {skipped} vehicles without marking distances");
    }
    let mut per_criterion = BTreeMap::new();
    for &c in &cfg.criteria {
        let of: Vec<&LaneChangeEvent> = events.iter().filter(|e| e.criterion == c).collect();
        let count = |f: &dyn Fn(&LaneChangeEvent) -> bool| of.iter().filter(|e| f(e)).count();
        per_criterion.insert(
            c.as_str(),
            json!({
                "events": of.len(),
                "countable": count(&|e| e.counts_for_statistics()),
                "left": count(&|e| e.direction == lanecrit_core::detect::Direction::Left),
                "right": count(&|e| e.direction == lanecrit_core::detect::Direction::Right),
                "double": count(&|e| e.kind == lanecrit_core::detect::EventKind::Double),
                "truncated": count(&|e| e.truncated),
            }),
        );
    }
    let path = cfg.output.join("events.csv");
    io::write_file(&path, |w| io::write_events(w, &events))?;
    log::info!("wrote {} ({} events)", path.display(), events.len());
    write_json(
        &cfg.output.join("detect_summary.json"),
        &json!({
            "input": ingest_summary(&recordings),
            "gradient_skipped_vehicles": skipped,
            "criteria": per_criterion,
        }),
    )
}

fn cmd_robustness(cfg: &RunConfig) -> Result<()> {
    let recordings = load_recordings(cfg)?;
    let corpus: Vec<Trajectory> = recordings.into_iter().flat_map(|r| r.trajectories).collect();
    let mut params = cfg.detect;
    params.min_lateral_extent = cfg.robustness.min_lateral_extent;
    let setup = SweepSetup {
        layout: cfg.layout,
        preprocess: cfg.preprocess,
        params,
    };
    let mut grid = robustness::grid(PerturbationKind::Bias, &cfg.robustness.bias_grid, cfg.seed);
    grid.extend(robustness::grid(
        PerturbationKind::Brownian,
        &cfg.robustness.brownian_grid,
        cfg.seed,
    ));
    let mut report = RobustnessReport::default();
    for &c in &cfg.robustness.criteria {
        if c == Criterion::Gradient && !corpus.iter().all(Trajectory::has_markings) {
            log::warn!("gradient criterion skipped: some vehicles lack marking distances");
            continue;
        }
        report.extend(robustness::sweep(&corpus, c, &grid, &setup)?);
    }
    let path = cfg.output.join("robustness.csv");
    io::write_file(&path, |w| io::write_robustness(w, &report))?;
    log::info!("wrote {}", path.display());
    write_json(&cfg.output.join("robustness_plot.json"), &report.plot_data())
}

fn cmd_criticality(cfg: &RunConfig) -> Result<()> {
    let criterion = cfg.criticality_criterion;
    let recordings = load_recordings(cfg)?;
    let mut records = Vec::new();
    for (index, rec) in recordings.iter().enumerate() {
        if criterion == Criterion::Gradient && !rec.trajectories.iter().all(Trajectory::has_markings) {
            bail!(
                "{}: gradient criterion needs marking distances for every vehicle",
                rec.source
            );
        }
        let ready = rec
            .trajectories
            .iter()
            .map(|t| cfg.preprocess.run(t, &cfg.layout, None))
            .collect::<lanecrit_core::Result<Vec<_>>>()?;
        let tracks = ready
            .iter()
            .map(|t| Track::new(t, &cfg.layout))
            .collect::<lanecrit_core::Result<Vec<_>>>()?;
        let (events, _) = detect_recording(cfg, rec, &[criterion])?;
        records.extend(analyze_recording(
            &tracks,
            &events,
            index,
            &cfg.thresholds,
            cfg.layout.speed_limit,
        ));
    }
    let critical: BTreeMap<&str, usize> = Metric::ALL
        .iter()
        .map(|&m| (m.as_str(), records.iter().filter(|r| r.flags.get(m)).count()))
        .collect();
    let path = cfg.output.join("criticality.csv");
    io::write_file(&path, |w| io::write_criticality(w, &records))?;
    log::info!("wrote {} ({} lane changes)", path.display(), records.len());
    write_json(
        &cfg.output.join("histograms.json"),
        &histograms_json(&records, cfg.histogram_bins, &cfg.thresholds, cfg.layout.speed_limit),
    )?;
    write_json(
        &cfg.output.join("boxplot.json"),
        &boxplot_json(&direction_stats(&records, cfg.whisker_iqr)),
    )?;
    write_json(
        &cfg.output.join("criticality_summary.json"),
        &json!({
            "criterion": criterion.as_str(),
            "lane_changes": records.len(),
            "critical": critical,
        }),
    )
}

fn cmd_sample(cfg: &RunConfig) -> Result<()> {
    let spec = match &cfg.sample.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_sample_scenario(&text, path.parent().unwrap_or(Path::new("")), cfg.w99)?
        }
        None => {
            let mut spec = overtaking_fixture()?;
            spec.model = cfg.w99;
            spec
        }
    };
    let set = sample_cc1(&spec, &cfg.sample.cc1_values)?;
    let dir = cfg.output.join("sample");
    let path = dir.join("thw_traces.csv");
    io::write_file(&path, |w| io::write_thw_traces(w, &set))?;
    log::info!("wrote {}", path.display());
    let mut runs = Vec::new();
    for entry in &set.entries {
        let name = format!("trajectory_cc1_{}.csv", io::num(entry.cc1));
        io::write_file(&dir.join(&name), |w| {
            io::write_trajectories(w, std::slice::from_ref(&entry.trajectory))
        })?;
        let min_thw: BTreeMap<String, Option<f64>> = entry
            .traces
            .iter()
            .map(|t| (t.opponent_id.to_string(), t.min()))
            .collect();
        let critical = min_thw.values().flatten().any(|&x| x < cfg.thresholds.thw_crit);
        runs.push(json!({
            "cc1": entry.cc1,
            "trajectory": name,
            "min_thw": min_thw,
            "thw_critical": critical,
        }));
    }
    write_json(
        &dir.join("sample_summary.json"),
        &json!({
            "substituted_id": spec.substituted_id,
            "thw_threshold": cfg.thresholds.thw_crit,
            "runs": runs,
        }),
    )
}

/// The trace goes to its own CSV.
fn without_trace(report: &MisEvalReport) -> Result<Value> {
    let mut v = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut v {
        map.remove("trace");
    }
    Ok(v)
}

fn cmd_mis_eval(cfg: &RunConfig) -> Result<()> {
    let sc = match &cfg.mis_run.scenario {
        Some(path) => {
            parse_mis_scenario(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?
        }
        None => reference_fixture(),
    };
    let brake = (cfg.mis_run.brake_decel > 0.0).then_some(FrontBrake {
        timing: BrakeTiming::RearWithin(sc.rear_lc_gap),
        decel: cfg.mis_run.brake_decel,
        duration: cfg.mis_run.brake_duration,
    });
    let on = run_closed_loop(&sc, Some(&cfg.mis), brake)?;
    let off = run_closed_loop(&sc, None, brake)?;
    let dir = cfg.output.join("mis");
    for (name, report) in [("trace_on.csv", &on), ("trace_off.csv", &off)] {
        io::write_file(&dir.join(name), |w| io::write_mis_trace(w, &report.trace))?;
    }
    log::info!(
        "with system: min rear gap {:.2} m; without: {:.2} m",
        on.min_rear_gap,
        off.min_rear_gap
    );
    write_json(
        &dir.join("mis_report.json"),
        &json!({
            "front_brake": brake.map(|b| json!({"decel": b.decel, "duration": b.duration})),
            "with_system": without_trace(&on)?,
            "without_system": without_trace(&off)?,
        }),
    )
}

fn cmd_stats(cfg: &RunConfig, events: Option<&Path>) -> Result<()> {
    let path = events.map_or_else(|| cfg.output.join("events.csv"), Path::to_path_buf);
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let events = io::read_events(file, &path.display().to_string())?;
    let classes: HashMap<u64, VehicleClass> = match &cfg.input {
        Some(_) => load_recordings(cfg)?
            .iter()
            .flat_map(|r| r.trajectories.iter().map(|t| (t.vehicle_id, t.shape.class)))
            .collect(),
        None => {
            log::warn!("no input set; class groups stay empty");
            HashMap::new()
        }
    };
    let groups = event_stats(&events, |id| classes.get(&id).copied(), cfg.whisker_iqr);
    let out = cfg.output.join("stats.csv");
    io::write_file(&out, |w| io::write_event_stats(w, &groups))?;
    log::info!("wrote {}", out.display());
    write_json(&cfg.output.join("stats.json"), &json!({ "groups": groups }))
}

fn cmd_synth(cfg: &RunConfig, kind: SynthKind, n: Option<usize>) -> Result<()> {
    match kind {
        SynthKind::Corpus => {
            let corpus = generate_corpus(&cfg.synth, n.unwrap_or(cfg.synth_count), cfg.seed)?;
            let dir = cfg.output.join("trajectories");
            for (r, trajs) in corpus.recordings().into_iter().enumerate() {
                let owned: Vec<Trajectory> = trajs.into_iter().cloned().collect();
                io::write_file(&dir.join(format!("rec_{r:03}.csv")), |w| {
                    io::write_trajectories(w, &owned)
                })?;
            }
            let recording_of: HashMap<u64, usize> = corpus
                .trajectories
                .iter()
                .zip(&corpus.recording)
                .map(|(t, &r)| (t.vehicle_id, r))
                .collect();
            io::write_file(&cfg.output.join("truth.csv"), |w| {
                io::write_truth(w, &corpus.truth, |id| recording_of[&id])
            })?;
            log::info!(
                "wrote {} vehicles in {} recordings, {} true lane changes",
                corpus.trajectories.len(),
                corpus.recording_count(),
                corpus.truth.len()
            );
        }
        SynthKind::Overtaking => {
            let spec = overtaking_fixture()?;
            let dir = cfg.output.join("overtaking");
            io::write_file(&dir.join("trajectories.csv"), |w| {
                io::write_trajectories(w, &spec.trajectories)
            })?;
            fs::write(
                dir.join("scenario.cfg"),
                render_sample_scenario(&spec, "trajectories.csv"),
            )?;
        }
        SynthKind::Mis => {
            let dir = cfg.output.join("mis");
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("scenario.cfg"), render_mis_scenario(&reference_fixture()))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.render());
        return Ok(());
    }
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    fs::write(cfg.output.join("config.used"), cfg.render())?;
    match &cli.command {
        Command::Config => unreachable!(),
        Command::Synth { kind, n } => cmd_synth(&cfg, *kind, *n),
        Command::Detect => cmd_detect(&cfg),
        Command::Robustness => cmd_robustness(&cfg),
        Command::Criticality => cmd_criticality(&cfg),
        Command::Sample => cmd_sample(&cfg),
        Command::MisEval => cmd_mis_eval(&cfg),
        Command::Stats { events } => cmd_stats(&cfg, events.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
