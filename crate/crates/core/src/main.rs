use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serp_audit::run::{self, Command, RunConfig};
use serp_audit::synth::CohortSpec;
use serp_audit::{Error, Result};

#[derive(Parser)]
#[command(name = "serp-audit", version, about = "Audit donated search-result lists")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Parse record files and summarize them.
    Ingest,
    /// Run the cleaning pipeline and write clean/lists.jsonl.
    Clean,
    /// Host rankings, categories and the host census.
    Classify,
    /// Pairwise overlap statistics.
    Overlap,
    /// Overlap with regional hosts removed.
    Region,
    /// Daily series per term and slot.
    Dynamics,
    /// Cluster detection and locale partitions.
    Detect,
    /// Reach regression and over/under-delivered hosts.
    Reach,
    /// Generate a synthetic cohort and check the analyses against it.
    Simulate,
    /// Every stage from record files to a text report.
    Report,
}

#[derive(Args)]
struct Opts {
    /// Input file (records, or clean lists for analysis subcommands).
    #[arg(long = "input", global = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML cohort specification for `simulate`.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    #[arg(long, global = true)]
    popularity: Option<f64>,
    #[arg(long, global = true)]
    min_shared: Option<usize>,
    #[arg(long, global = true)]
    distinctness: Option<f64>,
    #[arg(long, global = true)]
    overrep_factor: Option<f64>,
    #[arg(long, global = true)]
    german_share: Option<f64>,
    #[arg(long, global = true)]
    no_language_filter: bool,
    #[arg(long, global = true)]
    full_matrices: bool,
    #[arg(long, global = true)]
    language_table: Option<PathBuf>,
    #[arg(long, global = true)]
    category_table: Option<PathBuf>,
    #[arg(long, global = true)]
    gazetteer: Option<PathBuf>,
    #[arg(long, global = true)]
    reach_panel: Option<PathBuf>,
    #[arg(long, global = true)]
    reach_points: Option<PathBuf>,
    #[arg(long, global = true)]
    locale_patterns: Option<PathBuf>,
    #[arg(long, global = true)]
    blocklist: Option<PathBuf>,
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn config(o: Opts) -> Result<RunConfig> {
    let mut c = match &o.config {
        Some(p) => RunConfig::from_toml(&read(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &o.spec {
        c.cohort = toml::from_str::<CohortSpec>(&read(p)?).map_err(|e| Error::Spec(e.to_string()))?;
    }
    if !o.inputs.is_empty() {
        c.inputs = o.inputs;
    }
    if let Some(v) = o.out {
        c.out = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
        c.cohort.seed = v;
    }
    c.threads = o.threads.or(c.threads);
    if let Some(v) = o.popularity {
        c.bubble.popularity = v;
    }
    if let Some(v) = o.min_shared {
        c.bubble.min_shared = v;
    }
    if let Some(v) = o.distinctness {
        c.bubble.distinctness = v;
    }
    if let Some(v) = o.overrep_factor {
        c.reach.factor = v;
    }
    if let Some(v) = o.german_share {
        c.clean.german_share = v;
    }
    if o.no_language_filter {
        c.clean.language_filter = false;
    }
    c.full_matrices |= o.full_matrices;
    let t = &mut c.tables;
    for (slot, v) in [
        (&mut t.language, o.language_table),
        (&mut t.category, o.category_table),
        (&mut t.gazetteer, o.gazetteer),
        (&mut t.reach, o.reach_panel),
        (&mut t.reach_points, o.reach_points),
        (&mut t.locale_patterns, o.locale_patterns),
        (&mut t.blocklist, o.blocklist),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Clean => Command::Clean,
        Cmd::Classify => Command::Classify,
        Cmd::Overlap => Command::Overlap,
        Cmd::Region => Command::Region,
        Cmd::Dynamics => Command::Dynamics,
        Cmd::Detect => Command::Detect,
        Cmd::Reach => Command::Reach,
        Cmd::Simulate => Command::Simulate,
        Cmd::Report => Command::Report,
    };
    let result = config(cli.opts).and_then(|cfg| {
        let a = run::execute(command, &cfg)?;
        Ok((cfg.out, a))
    });
    match result {
        Ok((out, artifacts)) => {
            for (name, bytes) in &artifacts {
                let shown = match command {
                    Command::Report => "report.txt",
                    Command::Simulate => "simulate/oracle.txt",
                    _ => "clean/report.txt",
                };
                if name == shown {
                    print!("{}", String::from_utf8_lossy(bytes));
                }
            }
            eprintln!("wrote {} artifacts to {}", artifacts.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code(&e) as u8)
        }
    }
}
