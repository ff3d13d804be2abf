use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use risbench::exec::Exec;
use risbench::io::pipeline::{
    stage_extract, stage_features, stage_figdata, stage_localize, stage_pipeline, stage_report,
    stage_synth, FIGDATA_DIR, RESULTS_CSV,
};
use risbench::io::CampaignConfig;
use risbench::positioning::ScenarioId;

/// Synthetic RIS beam-sweep campaigns: synthesis, MPC extraction, features,
/// LS positioning and error reports.
#[derive(Debug, Parser)]
#[command(name = "risbench", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Campaign configuration (TOML); the built-in default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Campaign seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenario id to run or report (repeatable); all configured ones when omitted.
    #[arg(long = "scenario", global = true)]
    scenarios: Vec<String>,
    /// Run every stage on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the configuration and print a summary.
    Validate,
    /// Synthesize every beam sweep into channel containers.
    Synth,
    /// Extract MPCs from the containers into gains.csv and mpcs.csv.
    Extract,
    /// Build AoD and distance features into features.csv.
    Features,
    /// Solve every scenario into results.csv.
    Localize,
    /// Build the error report from a results table.
    Report {
        /// Results table; `<out>/results.csv` when omitted.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Run every stage.
    Pipeline,
    /// Write the plot tables into `<out>/figdata`.
    Figdata,
}

struct Session {
    cfg: CampaignConfig,
    seed: u64,
    out: PathBuf,
    scenarios: Vec<ScenarioId>,
    exec: Exec,
}

fn load(common: &Common) -> Result<Session> {
    let cfg = match &common.config {
        Some(path) => CampaignConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => CampaignConfig::builtin(),
    };
    let scenarios = if common.scenarios.is_empty() {
        cfg.scenario_ids()?
    } else {
        common
            .scenarios
            .iter()
            .map(|s| s.parse())
            .collect::<risbench::Result<_>>()?
    };
    Ok(Session {
        seed: common.seed.unwrap_or(cfg.seed),
        out: common.out.clone().unwrap_or_else(|| cfg.out_dir.clone()),
        exec: if common.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
        scenarios,
        cfg,
    })
}

fn stage<T>(name: &str, r: risbench::Result<T>) -> Result<T> {
    r.with_context(|| format!("stage `{name}` failed"))
}

fn run(cli: Cli) -> Result<()> {
    let ctx = load(&cli.common).context("stage `validate` failed")?;
    let (cfg, out) = (&ctx.cfg, ctx.out.as_path());
    match cli.command {
        Command::Validate => {
            let scene = cfg.scene();
            println!(
                "ok: {} UEs, {} RIS, {} pointings, {} frequency bins, {} scenarios, seed {}",
                scene.ue_truths.len(),
                scene.ris.len(),
                scene.sweep.len(),
                scene.band.len(),
                ctx.scenarios.len(),
                ctx.seed
            );
        }
        Command::Synth => {
            let paths = stage("synth", stage_synth(cfg, out, ctx.seed, ctx.exec))?;
            println!("wrote {} containers under {}", paths.len(), out.display());
        }
        Command::Extract => {
            let e = stage("extract", stage_extract(cfg, out, ctx.exec))?;
            println!("extracted {} acquisitions", e.len());
        }
        Command::Features => {
            let f = stage("features", stage_features(cfg, out))?;
            println!("wrote features for {} UEs", f.len());
        }
        Command::Localize => {
            let r = stage(
                "localize",
                stage_localize(cfg, out, &ctx.scenarios, ctx.seed, ctx.exec),
            )?;
            let failed = r.iter().filter(|r| !r.is_ok()).count();
            println!("solved {} of {} scenario runs", r.len() - failed, r.len());
        }
        Command::Report { results } => {
            let path = results.unwrap_or_else(|| out.join(RESULTS_CSV));
            let keep = (!cli.common.scenarios.is_empty()).then_some(ctx.scenarios.as_slice());
            print!("{}", stage("report", stage_report(&path, out, keep))?);
        }
        Command::Pipeline => {
            let text = stage_pipeline(cfg, out, &ctx.scenarios, ctx.seed, ctx.exec)
                .context("pipeline failed")?;
            print!("{text}");
        }
        Command::Figdata => {
            stage("figdata", stage_figdata(cfg, out))?;
            println!("wrote {}", out.join(FIGDATA_DIR).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
