//! `trace`: generate synthetic logs, pretrain a model bundle, replay a
//! stream, and merge metric reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trace_core::bundle::{pretrain_bundle, ModelBundle};
use trace_core::config::RunConfig;
use trace_core::datagen::{bayes_auc, generate, GeneratorSpec};
use trace_core::estimators::StaticIntent;
use trace_core::experiment::Preset;
use trace_core::logio::{ingest, write_log, write_truth, LogSchema};
use trace_core::report::{ComparisonTable, Report};
use trace_core::stream::{run_simulation, Auxiliary, Backbone, Learner, LogSource};
use trace_core::Error;

#[derive(Parser)]
#[command(name = "trace", version, about = "Delayed-feedback CVR learning with feedback trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log, its ground truth and a run config.
    Gen(GenArgs),
    /// Pretrain the static, trajectory and completer networks into a bundle.
    Pretrain(PretrainArgs),
    /// Replay the streaming range predict-then-update and write a metric report.
    Stream(StreamArgs),
    /// Merge metric reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec (TOML); omitted keys take their defaults.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for log.csv, truth.csv and run.toml.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Length of the pretraining period in seconds from the first click.
    #[arg(long, default_value_t = 3 * 86_400)]
    pretrain_secs: i64,
}

#[derive(Args)]
struct PretrainArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the pretraining seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip training the retrospective completer.
    #[arg(long)]
    no_retro: bool,
    /// Bundle directory; defaults to `data.bundle` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// trace, vanilla or oracle; overrides the config.
    #[arg(long)]
    backbone: Option<String>,
    /// Comma-separated ablations: no_traj, no_retro, no_gate.
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<String>,
    /// Same as `--ablate no_retro`.
    #[arg(long)]
    no_retro: bool,
    /// Add the gated consistency term to a vanilla or oracle backbone.
    #[arg(long)]
    plugin: bool,
    /// Overrides the mini-batch shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bundle directory; defaults to `data.bundle` from the config.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Output directory; defaults to `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files written by `stream`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Writes PREFIX.csv and PREFIX.txt in addition to printing the table.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::GeneratorSpec(_) | Error::Horizon(_) | Error::Schema(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(&std::env::var("RUST_LOG").unwrap_or_else(|_| level.to_string()))
        .format_timestamp(None)
        .try_init();
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let text = fs::read_to_string(&a.spec)
        .map_err(|e| Failure::Usage(format!("{}: {e}", a.spec.display())))?;
    let mut spec = GeneratorSpec::from_toml(&text).map_err(usage)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.pretrain_secs <= 0 || a.pretrain_secs >= spec.span_secs {
        return Err(Failure::Usage("pretrain-secs must lie inside the span".into()));
    }
    let g = generate(&spec)?;
    create_dir(&a.out)?;
    let schema = LogSchema::for_generator(&spec);
    write_log(&a.out.join("log.csv"), &g.log, &schema)?;
    write_truth(&a.out.join("truth.csv"), &g.truth)?;

    // run config sized like the desk preset, pointing at the files above
    let preset = Preset::desk(spec.seed);
    let horizon = spec.horizon_config()?;
    let mut cfg = RunConfig::new(
        schema,
        horizon.boundaries().to_vec(),
        spec.start_ts + a.pretrain_secs,
    );
    cfg.pretrain = preset.pretrain;
    cfg.stream = preset.stream;
    write(&a.out.join("run.toml"), &cfg.to_toml())?;

    let pos = g.truth.iter().filter(|t| t.y).count();
    println!(
        "wrote {} samples ({} positive, {:.2}%) to {}; bayes auc {:.4}",
        g.log.len(),
        pos,
        100.0 * pos as f64 / g.log.len().max(1) as f64,
        a.out.display(),
        bayes_auc(&g.truth).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(path).map_err(usage)?;
    init_logging(&cfg.log_level);
    Ok(cfg)
}

fn load_log(cfg: &RunConfig) -> Result<Vec<trace_core::event::ClickEvent>, Failure> {
    let ing = ingest(&cfg.data.log, &cfg.schema)?;
    for w in &ing.warnings {
        log::warn!("{w}");
    }
    Ok(ing.log)
}

fn cmd_pretrain(a: &PretrainArgs) -> CmdResult {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.pretrain.train.seed = s;
    }
    cfg.pretrain.skip_completer |= a.no_retro;
    let horizon = cfg.horizon_config()?;
    let log = load_log(&cfg)?;
    let n_pre = log.partition_point(|e| e.click_ts <= cfg.stream_start);
    if n_pre == 0 {
        return Err(Failure::Usage("no clicks before stream_start".into()));
    }
    let bundle = pretrain_bundle(&log[..n_pre], &horizon, &cfg.schema.feature_schema(), &cfg.pretrain)?;
    let dir = a.out.clone().unwrap_or(cfg.data.bundle);
    bundle.save(&dir)?;
    println!(
        "pretrained on {n_pre} samples; bundle in {}; eta {:?}",
        dir.display(),
        bundle.weights.eta
    );
    Ok(())
}

fn apply_ablations(cfg: &mut RunConfig, a: &StreamArgs) -> CmdResult {
    for name in &a.ablate {
        match name.as_str() {
            "no_traj" => cfg.stream.ablation.no_traj = true,
            "no_retro" => cfg.stream.ablation.no_retro = true,
            "no_gate" => cfg.stream.ablation.no_gate = true,
            other => return Err(Failure::Usage(format!("unknown ablation {other:?}"))),
        }
    }
    cfg.stream.ablation.no_retro |= a.no_retro;
    cfg.stream.plugin |= a.plugin;
    Ok(())
}

fn run_name(cfg: &RunConfig) -> String {
    let mut name = cfg.backbone.name().to_string();
    if cfg.stream.plugin {
        name.push_str("+con");
    }
    let ab = cfg.stream.ablation.label();
    if cfg.backbone == Backbone::Trace && !ab.is_empty() {
        name.push('-');
        name.push_str(&ab);
    }
    name
}

fn cmd_stream(a: &StreamArgs) -> CmdResult {
    let mut cfg = load_config(&a.config)?;
    if let Some(b) = &a.backbone {
        cfg.backbone = Backbone::parse(b).map_err(usage)?;
    }
    apply_ablations(&mut cfg, a)?;
    if let Some(s) = a.seed {
        cfg.stream.seed = s;
    }
    cfg.validate().map_err(usage)?;
    let horizon = cfg.horizon_config()?;
    let schema = cfg.schema.feature_schema();

    let dir = a.bundle.clone().unwrap_or(cfg.data.bundle.clone());
    let bundle = if dir.join(trace_core::bundle::MANIFEST).exists() {
        let b = ModelBundle::load(&dir)?;
        b.check_compatible(&horizon, &schema)?;
        Some(b)
    } else {
        None
    };
    let needs_bundle = cfg.backbone == Backbone::Trace || cfg.stream.plugin;
    if needs_bundle && bundle.is_none() {
        return Err(Failure::Usage(format!(
            "no model bundle at {}; run `trace pretrain` first",
            dir.display()
        )));
    }
    let model = match &bundle {
        Some(b) => b.static_intent.clone(),
        None => StaticIntent::new(schema, &cfg.pretrain.architecture, cfg.pretrain.train.seed + 1)?,
    };
    let aux = match &bundle {
        Some(b) => Auxiliary {
            likelihood: Some(&b.likelihood),
            completer: b.completer.as_ref(),
            weights: Some(&b.weights),
        },
        None => Auxiliary {
            likelihood: None,
            completer: None,
            weights: None,
        },
    };

    let log = load_log(&cfg)?;
    let source = LogSource::new(&log, horizon.d_max())?;
    let learner = Learner::new(cfg.backbone, model, cfg.stream.clone(), aux, &horizon)?;
    let result = run_simulation(&source, learner, &horizon, cfg.stream_start)?;
    for r in &result.intervals {
        log::debug!("interval {} n {} auc {:?}", r.interval_start, r.n, r.auc);
    }

    let name = run_name(&cfg);
    let s = &cfg.stream;
    let meta = vec![
        ("method".to_string(), name.clone()),
        ("backbone".into(), cfg.backbone.name().into()),
        ("ablation".into(), s.ablation.label()),
        ("plugin".into(), s.plugin.to_string()),
        ("delta".into(), s.delta.to_string()),
        ("lambda".into(), s.lambda.to_string()),
        ("beta".into(), cfg.pretrain.beta.to_string()),
        ("seed".into(), s.seed.to_string()),
    ];
    let report = Report::new(meta, result.intervals, result.aggregate)?;
    let out = a.out.clone().unwrap_or(cfg.out_dir);
    create_dir(&out)?;
    let rpath = out.join(format!("{name}.report.csv"));
    report.write(&rpath)?;
    write(&out.join(format!("{name}.intervals.csv")), &report.intervals_csv())?;
    let m = &report.aggregate.mean;
    println!(
        "{name}: mean auc {:.4} nll {:.4} pr_auc {:.4} ece {:.4} over {} intervals; report {}",
        m.auc.unwrap_or(f64::NAN),
        m.nll.unwrap_or(f64::NAN),
        m.pr_auc.unwrap_or(f64::NAN),
        m.ece.unwrap_or(f64::NAN),
        report.aggregate.counts.intervals,
        rpath.display()
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> CmdResult {
    let reports = a
        .reports
        .iter()
        .map(|p| Report::read(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| match e {
            Error::Report(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
            other => Failure::from(other),
        })?;
    let table = ComparisonTable::merge(&reports)?;
    print!("{}", table.to_text());
    if let Some(prefix) = &a.out {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        write(&prefix.with_extension("csv"), &table.to_csv())?;
        write(&prefix.with_extension("txt"), &table.to_text())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Stream(a) => cmd_stream(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
