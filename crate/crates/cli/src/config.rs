//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use synthctl_core::{GeneratorSpec, LagScheme, SolverSettings};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SYNTHCTL_OUT";
const DEFAULT_OUT: &str = "synthctl-out";

/// Flags shared by every analysis subcommand. Each one may instead be set
/// in the config file under the same name (with underscores).
#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// Long-format outcome panel (`unit,period,value`).
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Long-format covariates (`unit,predictor,value`).
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub treated: Option<String>,
    /// Number of pre-treatment periods.
    #[arg(long)]
    pub t0: Option<usize>,
    /// Lag scheme by name or number (1-7).
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub with_covariates: bool,
    /// Panel whose pre-period values replace the outcome lags.
    #[arg(long)]
    pub proxy_panel: Option<PathBuf>,
    /// Seed for the predictor-weight multistart.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to $SYNTHCTL_OUT, then `synthctl-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Units to drop from the donor pool and the placebo set.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Also run in-space placebos.
    #[arg(long)]
    pub placebo: bool,
    /// Also run leave-one-donor-out.
    #[arg(long)]
    pub loo: bool,
    /// Also run the 14-variant lag search.
    #[arg(long)]
    pub specsearch: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DiffArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    /// Second group's outcome panel.
    #[arg(long)]
    pub panel_b: Option<PathBuf>,
    /// Pre-treatment periods in the second panel; defaults to `--t0`.
    #[arg(long)]
    pub t0_b: Option<usize>,
    /// Event-time origin period in the first panel.
    #[arg(long)]
    pub origin_a: Option<String>,
    /// Event-time origin period in the second panel.
    #[arg(long)]
    pub origin_b: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub t0: Option<usize>,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of covariates to draw.
    #[arg(long)]
    pub n_covariates: Option<usize>,
    /// Planted weights over the first donors, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Constant effect added to the treated unit after t0.
    #[arg(long)]
    pub effect: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Config file contents. Every key is optional; flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub panel: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub treated: Option<String>,
    pub t0: Option<usize>,
    pub scheme: Option<String>,
    pub with_covariates: Option<bool>,
    pub proxy_panel: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub exclude: Option<Vec<String>>,
    pub placebo: Option<bool>,
    pub loo: Option<bool>,
    pub specsearch: Option<bool>,
    pub panel_b: Option<PathBuf>,
    pub t0_b: Option<usize>,
    pub origin_a: Option<String>,
    pub origin_b: Option<String>,
    pub solver: Option<SolverSettings>,
    pub generator: Option<GeneratorSpec>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffConfig {
    pub panel_b: PathBuf,
    pub t0_b: usize,
    /// Both set, or both absent for first-positive origins.
    pub origins: Option<(String, String)>,
}

/// A fully resolved analysis run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub panel: PathBuf,
    pub covariates: Option<PathBuf>,
    pub treated: String,
    pub t0: usize,
    pub scheme: LagScheme,
    pub with_covariates: bool,
    pub proxy_panel: Option<PathBuf>,
    pub exclude: Vec<String>,
    pub placebo: bool,
    pub loo: bool,
    pub specsearch: bool,
    pub diff: Option<DiffConfig>,
    pub solver: SolverSettings,
    /// Left out of the metadata so runs into different directories match.
    #[serde(skip)]
    pub out: PathBuf,
}

fn default_out(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf> {
    if !path.is_file() {
        bail!("{what} file {} does not exist", path.display());
    }
    Ok(path)
}

impl RunConfig {
    pub fn resolve(args: AnalysisArgs, file: FileConfig) -> Result<Self> {
        let panel = args
            .panel
            .or(file.panel)
            .context("no panel given (--panel or `panel` in the config file)")?;
        let treated = args
            .treated
            .or(file.treated)
            .context("no treated unit given (--treated)")?;
        let t0 = args.t0.or(file.t0).context("no pre-period length given (--t0)")?;
        let scheme = match args.scheme.or(file.scheme) {
            Some(s) => s.parse::<LagScheme>().map_err(anyhow::Error::msg)?,
            None => LagScheme::PretreatmentMean,
        };
        let mut solver = file.solver.unwrap_or_default();
        if let Some(seed) = args.seed.or(file.seed) {
            solver.rng_seed = seed;
        }
        solver.validate()?;
        let mut exclude = if args.exclude.is_empty() {
            file.exclude.unwrap_or_default()
        } else {
            args.exclude
        };
        exclude.sort();
        exclude.dedup();

        let with_covariates = args.with_covariates || file.with_covariates.unwrap_or(false);
        let covariates = args.covariates.or(file.covariates);
        if with_covariates && covariates.is_none() {
            bail!("--with-covariates needs a covariate file (--covariates)");
        }
        Ok(Self {
            panel: existing(panel, "panel")?,
            covariates: covariates.map(|p| existing(p, "covariate")).transpose()?,
            treated,
            t0,
            scheme,
            with_covariates,
            proxy_panel: args
                .proxy_panel
                .or(file.proxy_panel)
                .map(|p| existing(p, "proxy panel"))
                .transpose()?,
            exclude,
            placebo: args.placebo || file.placebo.unwrap_or(false),
            loo: args.loo || file.loo.unwrap_or(false),
            specsearch: args.specsearch || file.specsearch.unwrap_or(false),
            diff: None,
            solver,
            out: default_out(args.out, file.out),
        })
    }

    pub fn resolve_diff(args: DiffArgs, file: FileConfig) -> Result<Self> {
        let panel_b = args
            .panel_b
            .or(file.panel_b.clone())
            .context("the diff analysis needs a second panel (--panel-b)")?;
        let t0_b = args.t0_b.or(file.t0_b);
        let origins = match (args.origin_a.or(file.origin_a.clone()), args.origin_b.or(file.origin_b.clone())) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => bail!("give both --origin-a and --origin-b, or neither"),
        };
        let mut cfg = Self::resolve(args.common, file)?;
        cfg.diff = Some(DiffConfig {
            panel_b: existing(panel_b, "second panel")?,
            t0_b: t0_b.unwrap_or(cfg.t0),
            origins,
        });
        Ok(cfg)
    }
}

/// Generator spec from defaults, then the `[generator]` table, then flags.
pub fn resolve_generator(args: GenerateArgs, file: FileConfig) -> Result<(GeneratorSpec, PathBuf)> {
    let mut spec = file.generator.unwrap_or_default();
    macro_rules! take {
        ($($field:ident <- $flag:ident),*) => {
            $(if let Some(v) = args.$flag { spec.$field = v; })*
        };
    }
    take!(units <- units, periods <- periods, t0 <- t0, factors <- factors,
          noise <- noise, covariates <- n_covariates, seed <- seed);
    if let Some(w) = args.weights {
        spec.planted_weights = Some(w);
    }
    if let Some(e) = args.effect {
        spec.effect = Some(synthctl_core::EffectProfile::Constant(e));
    }
    if let Some(seed) = file.seed.filter(|_| args.seed.is_none()) {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok((spec, default_out(args.out, file.out)))
}
