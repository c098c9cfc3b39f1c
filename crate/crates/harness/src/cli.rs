//! `elabc` command line. Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use elabc_core::entropy::EntropyMode;

use crate::spec::{ExperimentSpec, GridSpec, Kind, Method};

#[derive(Parser, Debug)]
#[command(name = "elabc", version, about = "Empirical-likelihood ABC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Repeated posterior estimates over a parameter grid.
    Profile(Flags),
    /// One MCMC chain on data simulated at the reference parameter.
    Sample(Flags),
    /// Credible-interval coverage over replicated datasets.
    Coverage(Flags),
    /// abcEL, synthetic likelihood and rejection ABC on the same data.
    Compare(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON experiment spec; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// normal_location, normal_variance, erdos_renyi, gk, arch1 or stereology.
    #[arg(long, required_unless_present = "config")]
    model: Option<String>,
    #[arg(long)]
    summaries: Option<String>,
    /// Simulated datasets per posterior evaluation.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// kl, gaussian or none.
    #[arg(long)]
    entropy: Option<EntropyMode>,
    /// Neighbour order of the KL entropy estimator.
    #[arg(long)]
    k: Option<usize>,
    /// Paper-scale MCMC budgets.
    #[arg(long)]
    full: bool,
    /// lo:hi:points, or auto:points for the region of high analytic posterior.
    #[arg(long)]
    grid: Option<GridSpec>,
    #[arg(long)]
    grid_param: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Comma-separated proposal scales, one per parameter.
    #[arg(long, value_delimiter = ',')]
    proposal_sd: Option<Vec<f64>>,
    #[arg(long)]
    no_pilot: bool,
    /// Comma-separated subset of abcel, synthetic, rejection_abc.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Observations per dataset.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_nodes: Option<usize>,
    /// Rejection ABC prior draws.
    #[arg(long)]
    abc_sims: Option<usize>,
    #[arg(long)]
    abc_keep: Option<f64>,
}

impl Flags {
    fn into_spec(self, kind: Kind) -> anyhow::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut s = ExperimentSpec::from_json(&text)?;
                s.kind = kind;
                s
            }
            None => ExperimentSpec::new(kind, ""),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { spec.$($field).+ = Some(v); })*
            };
        }
        if let Some(model) = self.model {
            spec.model = model;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        spec.full |= self.full;
        if self.no_pilot {
            spec.mcmc.pilot = Some(false);
        }
        set!(
            summaries => summaries,
            m => m,
            out => out,
            entropy => entropy,
            k => k,
            grid => grid,
            grid_param => grid_param,
            repeats => repeats,
            replicates => replicates,
            iterations => mcmc.iterations,
            burn_in => mcmc.burn_in,
            proposal_sd => mcmc.proposal_sd,
            methods => methods,
            n => n,
            n_nodes => n_nodes,
            abc_sims => abc.n_sims,
            abc_keep => abc.keep_fraction,
        );
        Ok(spec)
    }
}

/// Parses `args` (program name first), runs the experiment and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (kind, flags) = match cli.command {
        Command::Profile(f) => (Kind::Profile, f),
        Command::Sample(f) => (Kind::Sample, f),
        Command::Coverage(f) => (Kind::Coverage, f),
        Command::Compare(f) => (Kind::Compare, f),
    };
    let resolved = match flags.into_spec(kind).and_then(|s| s.resolve()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("run `elabc --help` for usage");
            return 1;
        }
    };
    match crate::run(&resolved) {
        Ok(report) => {
            println!("{}", report.summary_line());
            if let Some(out) = &resolved.out {
                println!("wrote {}", out.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
