//! Command-line interface: `estimate` on a CSV file, `simulate` for
//! replicated experiments.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset;
use crate::error::{Error, Result};
use crate::inference::{
    ci_analytical, ci_monte_carlo, ci_no_correction, public_estimate, RatioEstimate, Scale,
    DEFAULT_MC_DRAWS,
};
use crate::mechanisms::{release, MechanismKind, PrivacyBudget, ReleasedSums};
use crate::simulation::{run_experiment, substream, CellResult, SimulationConfig, DEFAULT_SEED};
use crate::sums::{compute_sums, Bounds};

pub const GAUSSIAN_DEFAULT_DELTA: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "private-ratio",
    version,
    about = "Differentially private inference on a ratio of two means"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Release noisy sums of a CSV dataset and report intervals for every method.
    Estimate(EstimateArgs),
    /// Run replicated synthetic experiments.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Gaussian,
    Laplace,
}

impl From<MechanismArg> for MechanismKind {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Gaussian => MechanismKind::Gaussian,
            MechanismArg::Laplace => MechanismKind::Laplace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Ratio,
    Log,
    Both,
}

impl ScaleArg {
    fn scales(self) -> Vec<Scale> {
        match self {
            ScaleArg::Ratio => vec![Scale::Ratio],
            ScaleArg::Log => vec![Scale::Log],
            ScaleArg::Both => vec![Scale::Ratio, Scale::Log],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Binary,
    Continuous,
}

fn parse_pair(raw: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = raw
        .split_once(',')
        .ok_or_else(|| format!("expected LOWER,UPPER, got {raw:?}"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("cannot parse {s:?} as a number"))
    };
    Ok((parse(a)?, parse(b)?))
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV file with columns y,s and optional w.
    #[arg(long)]
    pub input: PathBuf,
    /// Total privacy budget epsilon.
    #[arg(long)]
    pub epsilon: f64,
    /// Total delta; defaults to 1e-6 for gaussian and 0 for laplace.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub mechanism: MechanismArg,
    #[arg(long, value_enum, default_value = "both")]
    pub scale: ScaleArg,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long = "mc-draws", default_value_t = DEFAULT_MC_DRAWS)]
    pub mc_draws: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Label type; binary fixes label and score bounds to [0, 1].
    #[arg(long, value_enum, default_value = "binary")]
    pub labels: LabelArg,
    /// Label bounds LOWER,UPPER (continuous labels only).
    #[arg(long = "y-bounds", value_parser = parse_pair, allow_hyphen_values = true)]
    pub y_bounds: Option<(f64, f64)>,
    /// Score bounds LOWER,UPPER (continuous labels only).
    #[arg(long = "s-bounds", value_parser = parse_pair, allow_hyphen_values = true)]
    pub s_bounds: Option<(f64, f64)>,
    /// Weight bounds LOWER,UPPER; required when the input has a w column.
    #[arg(long = "w-bounds", value_parser = parse_pair, allow_hyphen_values = true)]
    pub w_bounds: Option<(f64, f64)>,
    /// Also report the non-private estimate computed from the exact sums.
    #[arg(long = "include-public", requires = "acknowledge_non_private")]
    pub include_public: bool,
    /// Confirms that public output is not differentially private.
    #[arg(long = "acknowledge-non-private")]
    pub acknowledge_non_private: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory for per-cell CSV files and report.json.
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
    /// Total epsilon values; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.2, 0.5, 1.0, 4.0])]
    pub epsilon: Vec<f64>,
    /// Total delta; defaults to 1e-6 for gaussian and 0 for laplace.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub mechanism: MechanismArg,
    #[arg(long, value_enum, default_value = "ratio")]
    pub scale: ScaleArg,
    /// Sample sizes; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [5000])]
    pub n: Vec<usize>,
    #[arg(long)]
    pub weighted: bool,
    #[arg(long = "true-ratio", default_value_t = 1.1)]
    pub true_ratio: f64,
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
    #[arg(long = "mc-draws", default_value_t = DEFAULT_MC_DRAWS)]
    pub mc_draws: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON file with one simulation config or a list of them; replaces the
    /// cell flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn default_delta(mechanism: MechanismKind) -> f64 {
    match mechanism {
        MechanismKind::Gaussian => GAUSSIAN_DEFAULT_DELTA,
        MechanismKind::Laplace => 0.0,
    }
}

/// Output of `estimate`.
#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub released: ReleasedSums,
    pub estimates: Vec<RatioEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub public: Option<Vec<RatioEstimate>>,
}

fn estimate_bounds(args: &EstimateArgs, has_weights: bool) -> Result<Bounds> {
    let weights = match (args.w_bounds, has_weights) {
        (Some(w), _) => w,
        (None, false) => (1.0, 1.0),
        (None, true) => {
            return Err(Error::InvalidConfig(
                "input has a w column; --w-bounds LOWER,UPPER is required".into(),
            ))
        }
    };
    match args.labels {
        LabelArg::Binary => {
            if args.y_bounds.is_some() || args.s_bounds.is_some() {
                return Err(Error::InvalidConfig(
                    "--y-bounds and --s-bounds apply to --labels continuous only".into(),
                ));
            }
            Bounds::binary(weights.0, weights.1)
        }
        LabelArg::Continuous => {
            let (Some(y), Some(s)) = (args.y_bounds, args.s_bounds) else {
                return Err(Error::InvalidConfig(
                    "--labels continuous requires --y-bounds and --s-bounds".into(),
                ));
            };
            Bounds::continuous(y, s, weights)
        }
    }
}

pub fn estimate(args: &EstimateArgs) -> Result<EstimateReport> {
    let mechanism: MechanismKind = args.mechanism.into();
    let budget = PrivacyBudget::new(args.epsilon, args.delta.unwrap_or(default_delta(mechanism)))?;
    budget.validate_for(mechanism)?;
    if args.mc_draws < 2 {
        return Err(Error::InvalidConfig("--mc-draws must be at least 2".into()));
    }
    let data = dataset::read_path(&args.input)?;
    let bounds = estimate_bounds(args, data.has_weights)?;
    let sums = compute_sums(&data.records, &bounds)?;
    if sums.count < 2 {
        return Err(Error::InsufficientData(sums.count));
    }

    let mut release_rng = substream(args.seed, 0, "release", 0);
    let released = release(&sums, &bounds, &budget, mechanism, &mut release_rng)?;

    let scales = args.scale.scales();
    let mut estimates = Vec::new();
    for (i, &scale) in scales.iter().enumerate() {
        let mut mc_rng = substream(args.seed, 0, "monte_carlo", i as u64);
        estimates.push(ci_no_correction(&released, scale, args.level)?);
        estimates.push(ci_monte_carlo(
            &released,
            scale,
            args.level,
            args.mc_draws,
            &mut mc_rng,
        )?);
        estimates.push(ci_analytical(&released, scale, args.level)?);
    }
    let public = if args.include_public && args.acknowledge_non_private {
        Some(
            scales
                .iter()
                .map(|&scale| public_estimate(&sums, scale, args.level))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(EstimateReport {
        released,
        estimates,
        public,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Many(Vec<SimulationConfig>),
    One(SimulationConfig),
}

/// Simulation cells requested by the flags or the config file.
pub fn simulation_cells(args: &SimulateArgs) -> Result<Vec<SimulationConfig>> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        let parsed: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cells = match parsed {
            ConfigFile::Many(v) => v,
            ConfigFile::One(c) => vec![c],
        };
        if cells.is_empty() {
            return Err(Error::InvalidConfig("config file lists no cells".into()));
        }
        for c in &cells {
            c.validate()?;
        }
        return Ok(cells);
    }
    let mechanism: MechanismKind = args.mechanism.into();
    let delta = args.delta.unwrap_or(default_delta(mechanism));
    let mut cells = Vec::new();
    for &n in &args.n {
        for scale in args.scale.scales() {
            let config = SimulationConfig {
                n,
                true_ratio: args.true_ratio,
                epsilons: args.epsilon.clone(),
                delta,
                weighted: args.weighted,
                mechanism,
                scale,
                replications: args.replications,
                mc_draws: args.mc_draws,
                level: args.level,
                master_seed: args.seed,
            };
            config.validate()?;
            cells.push(config);
        }
    }
    Ok(cells)
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    cells: &'a [CellResult],
}

pub fn simulate<W: Write>(args: &SimulateArgs, out: &mut W) -> Result<Vec<CellResult>> {
    let cells = simulation_cells(args)?;
    if args.threads == Some(0) {
        return Err(Error::InvalidConfig("--threads must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = args.threads {
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;

    let mut results = Vec::with_capacity(cells.len());
    for config in &cells {
        let result = pool.install(|| run_experiment(config))?;
        writeln!(out, "{}", result.render_table())?;
        results.push(result);
    }

    if let Some(dir) = &args.output_dir {
        std::fs::create_dir_all(dir)?;
        for result in &results {
            let path = dir.join(format!("{}.csv", result.config.cell_name()));
            result.write_csv(std::fs::File::create(&path)?)?;
        }
        let report = serde_json::to_string_pretty(&SimulationReport { cells: &results })
            .map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("report.json"), report + "\n")?;
    }
    Ok(results)
}

/// Exit status for an error: 2 for bad input or usage, 3 for estimates that
/// are undefined on the released sums, 1 for I/O failures.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_degenerate() || matches!(err, Error::InsufficientData(_)) {
        3
    } else if matches!(err, Error::Io(_)) {
        1
    } else {
        2
    }
}

/// JSON diagnostic for an error.
pub fn error_json(err: &Error) -> serde_json::Value {
    let mut body = serde_json::json!({
        "kind": err.kind(),
        "message": err.to_string(),
    });
    match err {
        Error::Parse { line, .. } => body["line"] = (*line).into(),
        Error::BoundsViolation { index, .. } => body["record_index"] = (*index).into(),
        _ => {}
    }
    serde_json::json!({ "error": body })
}

pub fn run(cli: Cli) -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Estimate(args) => estimate(args).and_then(|report| {
            let text =
                serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out, "{text}")?;
            Ok(())
        }),
        Command::Simulate(args) => simulate(args, &mut out).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
