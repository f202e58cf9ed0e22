//! `triprec` command line.
//!
//! Exit codes: 0 on success, 1 on input or stage errors, 2 when the
//! evaluation gate fails.

mod inspect;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use triprec_core::config::RunConfig;
use triprec_core::evaluation::{
    compute_stats, evaluate_gate, join_trips, load_recognitions_csv, render_report, write_recognitions_csv,
    GateOutcome, Method, Recognition, ReportFormat,
};
use triprec_core::ingest::{load_manual_log, LoadOptions};
use triprec_core::pipeline::{load_dataset, run_pipeline, write_files, Dataset, PipelineOutput};
use triprec_core::segmentation::{build_segments, load_segments_csv, vehicular_candidates, write_segments_csv};
use triprec_core::static_matcher::write_assessments_csv;

const EXIT_INPUT: u8 = 1;
const EXIT_GATE: u8 = 2;

#[derive(Parser)]
#[command(name = "triprec", version, about = "Recognize public-transport trips from device traces")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration and TRIPREC_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Skip malformed rows with a warning instead of failing.
    #[arg(long, global = true)]
    permissive: bool,
    /// Comma-separated methods: new_live, old_live, static.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Worker threads for matching; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load every input and print row counts and integrity findings.
    Ingest,
    /// Split the filtered trace into activity segments (segments.csv).
    Segment,
    /// Match vehicular segments against live vehicle positions
    /// (recognitions_live.csv).
    MatchLive,
    /// Match vehicular segments against timetabled itineraries
    /// (recognitions_static.csv, static_assessments.csv).
    MatchStatic,
    /// Evaluate recognitions against the manual log and apply the gate.
    Evaluate {
        /// Recognition tables; defaults to the ones present in the output
        /// directory.
        #[arg(long)]
        recognitions: Vec<PathBuf>,
        /// Segment table; defaults to segments.csv in the output directory.
        #[arg(long)]
        segments: Option<PathBuf>,
    },
    /// Run every stage and apply the gate.
    Run,
    /// Print diagnostics for one segment.
    InspectSegment {
        id: u32,
    },
}

struct Session {
    cfg: RunConfig,
    opts: LoadOptions,
}

impl Session {
    fn new(global: &GlobalArgs) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        if let Some(out) = &global.out {
            cfg.out_dir = out.clone();
        }
        if let Some(methods) = &global.methods {
            cfg.methods = Method::ALL.iter().copied().filter(|m| methods.contains(m)).collect();
        }
        cfg.validate()?;
        let opts = LoadOptions {
            permissive: global.permissive,
            default_date: cfg.date,
            ..LoadOptions::default()
        };
        Ok(Self { cfg, opts })
    }

    fn dataset(&self, with_gtfs: bool) -> Result<Dataset> {
        let paths = self.cfg.resolve_paths()?;
        let data = load_dataset(&paths, &self.opts, with_gtfs).context("ingest")?;
        for note in &data.notes {
            log::warn!("{note}");
        }
        Ok(data)
    }

    fn out_dir(&self) -> &Path {
        &self.cfg.out_dir
    }

    fn pipeline(&self, methods: Vec<Method>) -> Result<PipelineOutput> {
        let mut cfg = self.cfg.clone();
        cfg.methods = methods;
        let data = self.dataset(cfg.methods.contains(&Method::Static))?;
        run_pipeline(&cfg, &data, None).context("matching")
    }
}

fn print_gate(gate: &[GateOutcome]) -> bool {
    for g in gate {
        println!(
            "gate {} {} / {}: {} (expected {} +/- {})",
            if g.pass { "PASS" } else { "FAIL" },
            g.check.column,
            g.check.row,
            g.actual.map_or("-".to_string(), |a| a.to_string()),
            g.check.expected,
            g.check.tolerance
        );
    }
    gate.iter().all(|g| g.pass)
}

fn written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_ingest(ctx: &Session) -> Result<u8> {
    let data = ctx.dataset(true)?;
    println!("{}", data.summary());
    let diff = data.filter_diff(&ctx.cfg).context("filter replay")?;
    println!(
        "filter replay: {} regenerated, {} published, {} common, {} only regenerated, {} only published, {} activity mismatches",
        diff.regenerated,
        diff.reference,
        diff.common,
        diff.only_regenerated,
        diff.only_reference,
        diff.activity_mismatch
    );
    Ok(0)
}

fn cmd_segment(ctx: &Session) -> Result<u8> {
    let data = ctx.dataset(false)?;
    let segments = build_segments(&data.filtered, ctx.cfg.segmentation.max_gap_s);
    let candidates = vehicular_candidates(&segments);
    println!("{} segments, {} vehicular candidates", segments.len(), candidates.len());
    written(&write_files(ctx.out_dir(), &[("segments.csv", write_segments_csv(&segments))])?);
    Ok(0)
}

fn cmd_match_live(ctx: &Session) -> Result<u8> {
    let methods: Vec<Method> = ctx.cfg.methods.iter().copied().filter(|m| *m != Method::Static).collect();
    if methods.is_empty() {
        bail!("no live method selected");
    }
    let out = ctx.pipeline(methods)?;
    for (label, results) in [("new live", &out.live_new), ("old live", &out.live_old)] {
        if !results.is_empty() {
            let n = results.iter().flatten().count();
            println!("{label}: {n} of {} candidates matched", out.candidates.len());
        }
    }
    written(&write_files(
        ctx.out_dir(),
        &[
            ("segments.csv", write_segments_csv(&out.segments)),
            ("recognitions_live.csv", write_recognitions_csv(&out.recognitions)),
        ],
    )?);
    Ok(0)
}

fn cmd_match_static(ctx: &Session) -> Result<u8> {
    let out = ctx.pipeline(vec![Method::Static])?;
    let matched = out.static_outcomes.iter().filter(|o| o.result.is_some()).count();
    println!("static: {matched} of {} candidates matched", out.candidates.len());
    written(&write_files(
        ctx.out_dir(),
        &[
            ("segments.csv", write_segments_csv(&out.segments)),
            ("recognitions_static.csv", write_recognitions_csv(&out.recognitions)),
            ("static_assessments.csv", write_assessments_csv(&out.static_outcomes)),
        ],
    )?);
    Ok(0)
}

fn cmd_evaluate(ctx: &Session, recognitions: &[PathBuf], segments: Option<&Path>, explicit_methods: bool) -> Result<u8> {
    let dir = ctx.out_dir();
    let files: Vec<PathBuf> = if recognitions.is_empty() {
        let staged: Vec<PathBuf> = ["recognitions_live.csv", "recognitions_static.csv"]
            .iter()
            .map(|n| dir.join(n))
            .filter(|p| p.exists())
            .collect();
        if staged.is_empty() {
            vec![dir.join("recognitions.csv")]
        } else {
            staged
        }
    } else {
        recognitions.to_vec()
    };
    let mut all: Vec<Recognition> = Vec::new();
    for f in &files {
        all.extend(load_recognitions_csv(f, &ctx.opts)?);
    }
    let seg_path = segments.map_or_else(|| dir.join("segments.csv"), Path::to_path_buf);
    let summaries = load_segments_csv(&seg_path, &ctx.opts)?;
    let log_path = ctx.cfg.resolve_paths()?.manual_log;
    let trips = load_manual_log(&log_path, &ctx.opts)?.rows;

    let methods: Vec<Method> = if explicit_methods {
        ctx.cfg.methods.clone()
    } else {
        let present: Vec<Method> = Method::ALL.iter().copied().filter(|m| all.iter().any(|r| r.method == *m)).collect();
        if present.is_empty() {
            ctx.cfg.methods.clone()
        } else {
            present
        }
    };
    all.retain(|r| methods.contains(&r.method));

    let verdicts = join_trips(&trips, &summaries, &all);
    let stats = compute_stats(&verdicts, &methods);
    let text = render_report(&stats, &verdicts, &all, &methods, ReportFormat::Text);
    let csv = render_report(&stats, &verdicts, &all, &methods, ReportFormat::Csv);
    print!("{text}");
    written(&write_files(dir, &[("report.txt", text), ("report.csv", csv)])?);
    let gate = evaluate_gate(&stats, &ctx.cfg.gate);
    Ok(if print_gate(&gate) { 0 } else { EXIT_GATE })
}

fn cmd_run(ctx: &Session) -> Result<u8> {
    let out = ctx.pipeline(ctx.cfg.methods.clone())?;
    print!("{}", out.report(ReportFormat::Text));
    written(&out.write(ctx.out_dir())?);
    Ok(if print_gate(&out.gate) { 0 } else { EXIT_GATE })
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let ctx = Session::new(&cli.global)?;
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Ingest => cmd_ingest(&ctx),
        Command::Segment => cmd_segment(&ctx),
        Command::MatchLive => cmd_match_live(&ctx),
        Command::MatchStatic => cmd_match_static(&ctx),
        Command::Evaluate { recognitions, segments } => {
            cmd_evaluate(&ctx, recognitions, segments.as_deref(), cli.global.methods.is_some())
        }
        Command::Run => cmd_run(&ctx),
        Command::InspectSegment { id } => inspect::run(&ctx.cfg, &ctx.dataset(ctx.cfg.methods.contains(&Method::Static))?, *id),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap uses 2 for usage errors, which is reserved for the gate.
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
