//! `pcf`: noise generation, renormalization tables, the Γ map, energy
//! minimization, diagnostics and resolution sweeps.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcf_core::config::{parse_config, RunConfig};
use pcf_core::PcfError;

#[derive(Parser)]
#[command(name = "pcf", version, about = "Paracontrolled Anderson Hamiltonian toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run parameters; flags override the config file, which overrides defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// TOML file of run parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid size; `sweep` takes a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Exponent of the paracontrolled space.
    #[arg(long, alias = "gamma")]
    alpha: Option<f64>,
    /// `zero`, `cubic:C3`, `double_well:A,B` or `table:S=F,...`.
    #[arg(long)]
    nl: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    threshold_l: Option<i32>,
    #[arg(long, allow_negative_numbers = true)]
    threshold_k: Option<i32>,
}

impl Common {
    pub fn resolve(&self) -> pcf_core::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => parse_config(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        match self.n.as_slice() {
            [] => {}
            [n] => c.n = *n,
            _ => {
                return Err(PcfError::ConfigValue {
                    key: "n".into(),
                    msg: "takes a single value outside sweep".into(),
                })
            }
        }
        over!(mu, seed, eps, kappa, alpha, nl, tol, max_iter);
        if self.threshold_l.is_some() {
            c.threshold_l = self.threshold_l;
        }
        if self.threshold_k.is_some() {
            c.threshold_k = self.threshold_k;
        }
        c.validate()?;
        Ok(c)
    }

    /// Whether the grid was fixed on the command line or in the file.
    pub fn grid_given(&self) -> bool {
        !self.n.is_empty() || self.mu.is_some() || self.config.is_some()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample ξ and write ξ, ϑ, the renormalized area and a JSON sidecar.
    Noise {
        /// Output prefix.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Table of renormalization constants.
    Renorm {
        /// Comma-separated mollification scales; defaults to the run eps.
        #[arg(long, value_delimiter = ',')]
        eps_list: Vec<f64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply Γ to a smooth field and write the resulting triple.
    Gamma {
        /// Noise prefix (or its `.json` / `.xi.pcf` file).
        #[arg(long)]
        noise: PathBuf,
        /// PCF1 field for `u^ϑ`.
        #[arg(long)]
        sharp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Minimize the energy and write the minimizer, trace and summary.
    Minimize {
        /// Noise prefix; sampled from the run parameters when absent.
        #[arg(long, conflicts_with = "zero_noise")]
        noise: Option<PathBuf>,
        /// Use ξ ≡ 0 with no renormalization.
        #[arg(long)]
        zero_noise: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Regularity and consistency report for a stored triple.
    Diagnose {
        /// Prefix written by `gamma` or `minimize`.
        #[arg(long)]
        triple: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Minimizers over derived seeds and resolutions, one CSV row each.
    Sweep {
        #[arg(long)]
        root_seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with its exit code: 2 for invalid input, 3 for numerical failure.
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub msg: String,
}

impl From<PcfError> for Failure {
    fn from(e: PcfError) -> Self {
        let kind = match &e {
            PcfError::NonConvergence { .. } => "non_convergence",
            PcfError::LineSearch { .. } => "line_search",
            PcfError::Divergence(_) => "divergence",
            PcfError::NoAdmissibleThreshold { .. } => "no_threshold",
            PcfError::ConfigParse { .. } => "config_parse",
            PcfError::ConfigValue { .. } | PcfError::OutOfRange { .. } => "config_value",
            PcfError::Io(_) => "io",
            PcfError::Format(_) => "format",
            _ => "invalid_input",
        };
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            kind,
            msg: e.to_string(),
        }
    }
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "usage",
            msg: msg.into(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("PCF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("PCF_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Noise { out, common } => commands::noise(&common, &out),
        Command::Renorm { eps_list, out, common } => commands::renorm(&common, &eps_list, out.as_deref()),
        Command::Gamma { noise, sharp, out, common } => commands::gamma(&common, &noise, &sharp, &out),
        Command::Minimize {
            noise,
            zero_noise,
            out,
            common,
        } => commands::minimize(&common, noise.as_deref(), zero_noise, &out),
        Command::Diagnose {
            triple,
            noise,
            out,
            common,
        } => commands::diagnose(&common, &triple, &noise, &out),
        Command::Sweep {
            root_seed,
            count,
            out,
            common,
        } => commands::sweep(&common, root_seed, count, &out),
    }
}

fn report(f: &Failure) -> ExitCode {
    let msg = f.msg.replace(['\n', '\r'], " ");
    eprintln!("pcf: error code={} kind={}: {}", f.code, f.kind, msg.trim());
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return report(&Failure::usage(first.trim_start_matches("error: ")));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
