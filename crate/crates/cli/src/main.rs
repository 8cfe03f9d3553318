use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use numeraire_lab::analysis::{NetworkFormat, TestCount};
use numeraire_lab::pipeline::{self, Artifacts, RunConfig};
use numeraire_lab::{ErrorClass, ExclusionRules, Exec};

/// Log-return statistics of FX panels in any numeraire, numeraire-invariant
/// partial correlations and significance-filtered networks.
#[derive(Parser)]
#[command(name = "numeraire-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw quotes, apply the exclusion rules and write panel.csv and removed.tsv.
    Ingest(Opts),
    /// Direct and transformed mean, covariance and correlation matrices for
    /// every ordered pair of numeraires.
    Transform(Opts),
    /// Assembled partial-correlation matrix with its cross-numeraire audit.
    Partial(Opts),
    /// Bonferroni-filtered partial-correlation network.
    Network(Opts),
    /// Most-similar asset table across all numeraires.
    Similar(Opts),
    /// Threshold clusters of the correlation matrix under each numeraire.
    Clusters(Opts),
    /// Whether numeraire X masks the correlations of asset Y.
    Masking {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Comparison numeraire; defaults to the base.
        #[arg(long)]
        neutral: Option<String>,
    },
    /// Ingest a raw panel and run every analysis stage.
    Pipeline(Opts),
}

#[derive(Args)]
struct Opts {
    /// Price panel (CSV or TSV, one date column then one column per asset).
    #[arg(long)]
    input: PathBuf,
    /// Asset in which the input prices are quoted.
    #[arg(long, default_value = "USD")]
    base: String,
    /// Numeraire to measure in; repeat or comma-separate for several.
    #[arg(long = "numeraire", visible_alias = "numeraires", num_args = 1.., value_delimiter = ',')]
    numeraires: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.8,0.6")]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bonferroni test count: square (N²) or pairs (N(N-1)/2).
    #[arg(long, default_value = "square")]
    tests: TestCount,
    /// Ridge added to the diagonal before inversion; bare flag uses 1e-8.
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-8")]
    ridge: Option<f64>,
    /// Assets exempt from the missing-value rule.
    #[arg(long, value_delimiter = ',')]
    keep: Vec<String>,
    #[arg(long, default_value_t = 10)]
    max_missing: usize,
    #[arg(long, default_value_t = 5)]
    constant_run: usize,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Network format(s): dot, json, edgelist or tsv.
    #[arg(long = "format", value_delimiter = ',', default_value = "dot")]
    formats: Vec<NetworkFormat>,
    /// Also compare partial correlations between the first two numeraires.
    #[arg(long)]
    invariance_audit: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<numeraire_lab::Error> for Failure {
    fn from(e: numeraire_lab::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Input => 2,
            ErrorClass::Numerical => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_failure(context: String, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{context}: {e}"),
    }
}

fn exec_from_env() -> Result<Exec, Failure> {
    let Ok(raw) = std::env::var("NUMERAIRE_LAB_THREADS") else {
        return Ok(Exec::default());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        input_failure(
            "NUMERAIRE_LAB_THREADS".into(),
            format!("`{raw}` is not a positive integer"),
        )
    })?;
    if threads == 1 {
        return Ok(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(Exec::default())
}

impl Opts {
    fn config(&self, exec: Exec) -> RunConfig {
        RunConfig {
            base: self.base.clone(),
            numeraires: self.numeraires.clone(),
            thresholds: self.thresholds.clone(),
            alpha: self.alpha,
            tests: self.tests,
            ridge: self.ridge,
            rules: ExclusionRules {
                max_missing: self.max_missing,
                constant_run: self.constant_run,
                keep: self.keep.iter().cloned().collect(),
            },
            formats: self.formats.clone(),
            invariance_audit: self.invariance_audit,
            exec,
        }
    }

    /// Validate parameters, read the input and make sure the output
    /// directory exists, all before any computation.
    fn prepare(&self) -> Result<(RunConfig, String), Failure> {
        let cfg = self.config(exec_from_env()?);
        cfg.validate_parameters()?;
        let raw = fs::read_to_string(&self.input)
            .map_err(|e| input_failure(format!("cannot read {}", self.input.display()), e))?;
        fs::create_dir_all(&self.out)
            .map_err(|e| input_failure(format!("cannot create {}", self.out.display()), e))?;
        Ok((cfg, raw))
    }
}

fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<(), Failure> {
    for (name, text) in artifacts {
        let path = dir.join(name);
        fs::write(&path, text)
            .map_err(|e| input_failure(format!("cannot write {}", path.display()), e))?;
    }
    Ok(())
}

/// Lines worth echoing to stdout: the R² table, the audit maxima and the
/// removal report.
fn summary(artifacts: &Artifacts) -> Vec<String> {
    let body = |text: &str| -> Vec<String> {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    let mut out = Vec::new();
    for (name, text) in artifacts {
        match name.as_str() {
            "transform_r2.tsv" => out.extend(body(text)),
            "removed.tsv" => out.extend(body(text).into_iter().map(|l| format!("removed\t{l}"))),
            "partial_audit.tsv" | "invariance.tsv" => out.extend(
                text.lines()
                    .filter(|l| l.contains("max_discrepancy=") || l.starts_with("# invariance"))
                    .map(|l| l.trim_start_matches("# ").to_string()),
            ),
            _ => {}
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (opts, artifacts) = match &cli.command {
        Command::Ingest(o) => {
            let (cfg, raw) = o.prepare()?;
            let (clean, artifacts) = pipeline::ingest(&raw, &cfg)?;
            println!(
                "kept {} assets over {} dates",
                clean.assets().len(),
                clean.dates().len()
            );
            (o, artifacts)
        }
        Command::Pipeline(o) => {
            let (cfg, raw) = o.prepare()?;
            (o, pipeline::run_pipeline(&raw, &cfg)?)
        }
        Command::Masking {
            opts,
            x,
            y,
            neutral,
        } => {
            let (cfg, raw) = opts.prepare()?;
            let aligned = pipeline::load_clean(&raw, &cfg)?;
            let artifacts =
                pipeline::masking_stage(&aligned, &cfg, raw.as_bytes(), x, y, neutral.as_deref())?;
            (opts, artifacts)
        }
        Command::Transform(o)
        | Command::Partial(o)
        | Command::Network(o)
        | Command::Similar(o)
        | Command::Clusters(o) => {
            let (cfg, raw) = o.prepare()?;
            let aligned = pipeline::load_clean(&raw, &cfg)?;
            let input = raw.as_bytes();
            let artifacts = match &cli.command {
                Command::Transform(_) => pipeline::transform_stage(&aligned, &cfg, input)?,
                Command::Partial(_) => pipeline::partial_stage(&aligned, &cfg, input)?,
                Command::Network(_) => pipeline::network_stage(&aligned, &cfg, input)?,
                Command::Similar(_) => pipeline::similar_stage(&aligned, &cfg, input)?,
                _ => pipeline::clusters_stage(&aligned, &cfg, input)?,
            };
            (o, artifacts)
        }
    };
    write_artifacts(&opts.out, &artifacts)?;
    for line in summary(&artifacts) {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
