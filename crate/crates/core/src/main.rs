use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bcsync::harness::output::{
    export_snapshots, read_json, read_snapshots, replica_csv_name, replica_snapshot_name, write_json, TOOL_VERSION,
};
use bcsync::harness::run::{check_seeds, default_snapshot_stride};
use bcsync::harness::svg::{agents_svg, diameter_svg, write_svg, PlotOptions};
use bcsync::harness::{
    export_csv, fingerprint, load, run_ensemble, run_trajectory, seed_range, verify, Check, EnsembleOptions,
    LoadedConfig, RunManifest, StagedDir, Summary, TrajectoryOptions, VerifyOptions,
};
use bcsync::metrics::{quasi_sync_im_check, Reduction};
use bcsync::{Error, Result};

const MANIFEST: &str = "manifest.json";
const SUMMARY: &str = "summary.json";

#[derive(Parser)]
#[command(name = "bcsync", version, about = "Noisy bounded-confidence opinion dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write its CSV and snapshots.
    Run(RunArgs),
    /// Simulate independent replicas and aggregate their diameters.
    Ensemble(EnsembleArgs),
    /// Run one of the theorem property suites and print a JSON verdict.
    Verify(VerifyArgs),
    /// Render an SVG from a run or ensemble output directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "BCSYNC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory [default: runs/<fingerprint>-s<seed>]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicas: Option<usize>,
    /// Explicit seed list; replaces `--seed` and `--replicas`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// First of `replicas` consecutive seeds.
    #[arg(long, env = "BCSYNC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run replicas on the thread pool (aggregates may differ in the last bits).
    #[arg(long)]
    parallel: bool,
    /// Also write diameter.svg (and agents.svg when snapshots are recorded).
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_parser = parse_check)]
    check: Check,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    strict: bool,
    #[arg(long, env = "BCSYNC_SEED", default_value_t = 0)]
    seed: u64,
    /// Runs, windows, Monte Carlo steps or replicas, depending on the check.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Protocol atom bound.
    #[arg(long)]
    a: Option<f64>,
    /// Protocol noise magnitude, between `a` and delta.
    #[arg(long)]
    magnitude: Option<f64>,
    /// Tail probability for large-noise.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Window `START:END` for im.
    #[arg(long, value_parser = parse_window)]
    window: Option<(usize, usize)>,
    /// For im: extend the horizon until every replica's d_V reaches this level.
    #[arg(long)]
    settle: Option<f64>,
    /// Also write the verdict to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotMode {
    Agents,
    Diameter,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: PlotMode,
    #[arg(long)]
    out: PathBuf,
    /// Replica whose snapshots are drawn in agents mode.
    #[arg(long, default_value_t = 0)]
    replica: usize,
}

fn parse_check(s: &str) -> std::result::Result<Check, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_window(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
    Ok((a, b))
}

fn manifest(config_path: &Path, loaded: &LoadedConfig, seeds: &[u64], horizon: usize, out: &Path) -> RunManifest {
    RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_path: Some(config_path.to_path_buf()),
        fingerprint: fingerprint(&loaded.model),
        seeds: seeds.to_vec(),
        replicas: seeds.len(),
        horizon,
        output_dir: out.to_path_buf(),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let loaded = load(&args.config)?;
    let horizon = args.horizon.unwrap_or(loaded.settings.horizon);
    let fp = fingerprint(&loaded.model);
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{fp}-s{}", args.seed)));
    let staged = StagedDir::create(&out)?;
    write_json(
        &manifest(&args.config, &loaded, &[args.seed], horizon, &out),
        &staged.file(MANIFEST),
    )?;

    let opts = TrajectoryOptions {
        replica: 0,
        snapshot_stride: Some(
            loaded
                .settings
                .snapshot_stride
                .unwrap_or_else(|| default_snapshot_stride(horizon)),
        ),
        initial: loaded.settings.initial.clone(),
    };
    let record = run_trajectory(&loaded.model, args.seed, horizon, &opts)?;
    export_csv(&record, &staged.file(&replica_csv_name(0)))?;
    export_snapshots(&record.snapshots, &staged.file(&replica_snapshot_name(0)))?;
    let out = staged.commit()?;

    let last = record.steps.last().expect("horizon >= 1");
    println!("fingerprint {fp}  seed {}  horizon {horizon}", args.seed);
    println!("final d_V {}  mean opinion {}", last.d, last.mean);
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    let loaded = load(&args.config)?;
    let settings = &loaded.settings;
    let seeds = match (&args.seeds, &settings.seeds, args.replicas) {
        (Some(s), _, _) => s.clone(),
        (None, Some(s), None) => s.clone(),
        (None, _, r) => seed_range(args.seed, r.unwrap_or(settings.replicas)),
    };
    check_seeds(&seeds)?;
    let horizon = args.horizon.unwrap_or(settings.horizon);
    let fp = fingerprint(&loaded.model);
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{fp}-ensemble-s{}", seeds[0])));
    let staged = StagedDir::create(&out)?;
    write_json(
        &manifest(&args.config, &loaded, &seeds, horizon, &out),
        &staged.file(MANIFEST),
    )?;

    let opts = EnsembleOptions {
        snapshot_stride: settings.snapshot_stride,
        initial: settings.initial.clone(),
        reduction: if args.parallel {
            Reduction::Parallel
        } else {
            Reduction::Sequential
        },
    };
    let ensemble = run_ensemble(&loaded.model, &seeds, horizon, &opts)?;
    for (i, r) in ensemble.records.iter().enumerate() {
        export_csv(r, &staged.file(&replica_csv_name(i)))?;
        if !r.snapshots.is_empty() {
            export_snapshots(&r.snapshots, &staged.file(&replica_snapshot_name(i)))?;
        }
    }
    let eps = loaded.model.epsilon;
    let verdict = quasi_sync_im_check(&ensemble.stats, eps, settings.tail_fraction)?;
    let summary = Summary {
        tool_version: TOOL_VERSION.to_string(),
        fingerprint: fp.clone(),
        horizon,
        epsilon: eps,
        tail_fraction: settings.tail_fraction,
        seeds: seeds.clone(),
        stats: ensemble.stats,
        verdict: verdict.clone(),
    };
    write_json(&summary, &staged.file(SUMMARY))?;
    if args.svg {
        let opts = PlotOptions {
            title: format!("mean d_V, {} replicas", seeds.len()),
            ..Default::default()
        };
        write_svg(&diameter_svg(&summary.stats, eps, &opts)?, &staged.file("diameter.svg"))?;
        if let Some(r) = ensemble.records.first().filter(|r| !r.snapshots.is_empty()) {
            let opts = PlotOptions {
                title: "opinions, replica 0".into(),
                ..Default::default()
            };
            write_svg(&agents_svg(&r.snapshots, &opts)?, &staged.file("agents.svg"))?;
        }
    }
    let out = staged.commit()?;

    println!("fingerprint {fp}  replicas {}  horizon {horizon}", seeds.len());
    println!(
        "i.m. verdict: {}  (max upper band {:.6} at t={}, epsilon {eps}, margin {:.6})",
        if verdict.pass { "pass" } else { "fail" },
        verdict.worst_upper,
        verdict.worst_step,
        verdict.margin
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let loaded = load(&args.config)?;
    let opts = VerifyOptions {
        strict: args.strict,
        seed: args.seed,
        runs: args.runs,
        horizon: args.horizon,
        mu: args.mu,
        lambda: args.lambda,
        a: args.a,
        magnitude: args.magnitude,
        p: args.p,
        window: args.window,
        settle_threshold: args.settle,
        ..Default::default()
    };
    let verdict = verify(args.check, &loaded, &opts)?;
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    if let Some(path) = &args.out {
        write_json(&verdict, path)?;
    }
    Ok(verdict.pass)
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let svg = match args.mode {
        PlotMode::Agents => {
            let path = args.input.join(replica_snapshot_name(args.replica));
            if !path.exists() {
                return Err(Error::Plot(format!(
                    "no snapshots at {} (set snapshot_stride in the config)",
                    path.display()
                )));
            }
            let opts = PlotOptions {
                title: format!("opinions, replica {}", args.replica),
                ..Default::default()
            };
            agents_svg(&read_snapshots(&path)?, &opts)?
        }
        PlotMode::Diameter => {
            let path = args.input.join(SUMMARY);
            if !path.exists() {
                return Err(Error::Plot(format!(
                    "no {SUMMARY} in {} (diameter plots need an ensemble output)",
                    args.input.display()
                )));
            }
            let summary: Summary = read_json(&path)?;
            let opts = PlotOptions {
                title: format!("mean d_V, {} replicas", summary.stats.replicas),
                ..Default::default()
            };
            diameter_svg(&summary.stats, summary.epsilon, &opts)?
        }
    };
    write_svg(&svg, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Ensemble(a) => cmd_ensemble(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Plot(a) => cmd_plot(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
