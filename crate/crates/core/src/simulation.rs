//! Replicated synthetic experiments: coverage, width and interval score of
//! the public and private interval methods.
//!
//! Data follow `s ~ Beta(2, 2)`, `y ~ Bernoulli(s / r)` so that the true
//! calibration ratio is `r`, and optionally weights `w = clip(Exp(1), 1/3, 3)`.
//!
//! Every replication draws from its own random streams, derived from the
//! master seed, the replication index and a purpose tag. Replications run in
//! parallel and are aggregated in index order, so results do not depend on
//! the number of threads.

use std::fmt::Write as _;
use std::io::Write;

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::{
    ci_analytical, ci_monte_carlo, ci_no_correction, public_estimate, Method, RatioEstimate, Scale,
    DEFAULT_MC_DRAWS,
};
use crate::mechanisms::{release, MechanismKind, PrivacyBudget};
use crate::sums::{compute_sums, kish_effective_n, Bounds, Record};

pub const WEIGHT_LOWER: f64 = 1.0 / 3.0;
pub const WEIGHT_UPPER: f64 = 3.0;
pub const DEFAULT_SEED: u64 = 42;

fn default_true_ratio() -> f64 {
    1.1
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.5, 1.0, 4.0]
}
fn default_delta() -> f64 {
    1e-6
}
fn default_replications() -> usize {
    1000
}
fn default_mc_draws() -> usize {
    DEFAULT_MC_DRAWS
}
fn default_level() -> f64 {
    0.95
}
fn default_n() -> usize {
    5000
}
fn default_mechanism() -> MechanismKind {
    MechanismKind::Gaussian
}
fn default_scale() -> Scale {
    Scale::Ratio
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_true_ratio")]
    pub true_ratio: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_mechanism")]
    pub mechanism: MechanismKind,
    #[serde(default = "default_scale")]
    pub scale: Scale,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            true_ratio: default_true_ratio(),
            epsilons: default_epsilons(),
            delta: default_delta(),
            weighted: false,
            mechanism: default_mechanism(),
            scale: default_scale(),
            replications: default_replications(),
            mc_draws: default_mc_draws(),
            level: default_level(),
            master_seed: DEFAULT_SEED,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.epsilons.is_empty() {
            return bad("at least one epsilon is required".into());
        }
        if self.mc_draws < 2 {
            return bad(format!(
                "mc_draws must be at least 2, got {}",
                self.mc_draws
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        check_true_ratio(self.true_ratio)?;
        for &epsilon in &self.epsilons {
            PrivacyBudget::new(epsilon, self.delta)?.validate_for(self.mechanism)?;
        }
        Ok(())
    }

    /// Bounds matching the generated data.
    pub fn bounds(&self) -> Bounds {
        if self.weighted {
            Bounds::binary(WEIGHT_LOWER, WEIGHT_UPPER).expect("constant weight bounds are valid")
        } else {
            Bounds::binary_unweighted()
        }
    }

    /// Short identifier of the cell, used for file names.
    pub fn cell_name(&self) -> String {
        format!(
            "{}_n{}_{}_{}",
            if self.weighted {
                "weighted"
            } else {
                "unweighted"
            },
            self.n,
            self.mechanism.name(),
            self.scale.name()
        )
    }
}

fn check_true_ratio(true_ratio: f64) -> Result<()> {
    // s reaches 1, so s / true_ratio must stay a probability
    if !(true_ratio >= 1.0) || !true_ratio.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "true_ratio must be at least 1 so that s / true_ratio lies in [0, 1], got {true_ratio}"
        )));
    }
    Ok(())
}

/// Derives an independent random stream for one purpose of one replication.
pub fn substream(master_seed: u64, replication: u64, tag: &str, salt: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(replication.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(salt.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(seed)
}

/// Synthetic records with calibration ratio `true_ratio`.
pub fn generate_dataset<R: Rng + ?Sized>(
    n: usize,
    weighted: bool,
    true_ratio: f64,
    rng: &mut R,
) -> Result<Vec<Record>> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    check_true_ratio(true_ratio)?;
    let beta = Beta::new(2.0, 2.0).expect("Beta(2, 2) parameters are valid");
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let s: f64 = beta.sample(rng);
        let p = s / true_ratio;
        let y = Bernoulli::new(p)
            .map_err(|_| Error::InvalidConfig(format!("label probability {p} outside [0, 1]")))?
            .sample(rng);
        let w = if weighted {
            let e: f64 = Exp1.sample(rng);
            e.clamp(WEIGHT_LOWER, WEIGHT_UPPER)
        } else {
            1.0
        };
        records.push(Record::new(if y { 1.0 } else { 0.0 }, s, w));
    }
    Ok(records)
}

/// Interval score of `[lower, upper]` for `truth` at miss rate `alpha`:
/// width plus `2/α` times the distance by which the truth falls outside.
pub fn interval_score(lower: f64, upper: f64, truth: f64, alpha: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::InvalidInterval { lower, upper });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut score = upper - lower;
    if truth < lower {
        score += 2.0 / alpha * (lower - truth);
    }
    if truth > upper {
        score += 2.0 / alpha * (truth - upper);
    }
    Ok(score)
}

/// Aggregate over replications for one method and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: Method,
    /// `None` for the public method.
    pub epsilon: Option<f64>,
    pub mean_width: f64,
    pub coverage: f64,
    pub mean_interval_score: f64,
    pub mean_effective_n: f64,
    pub refusal_count: usize,
}

/// Result of one cell: the public row followed by one row per (ε, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: SimulationConfig,
    pub rows: Vec<ExperimentRow>,
}

impl CellResult {
    pub fn public(&self) -> &ExperimentRow {
        &self.rows[0]
    }

    pub fn row(&self, method: Method, epsilon: f64) -> Option<&ExperimentRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.epsilon == Some(epsilon))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record([
            "method",
            "epsilon",
            "width",
            "coverage",
            "score",
            "effective_n",
            "refusals",
        ])
        .map_err(io)?;
        for row in &self.rows {
            wtr.write_record([
                row.method.name().to_string(),
                row.epsilon.map(|e| e.to_string()).unwrap_or_default(),
                row.mean_width.to_string(),
                row.coverage.to_string(),
                row.mean_interval_score.to_string(),
                row.mean_effective_n.to_string(),
                row.refusal_count.to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// Text table laid out with one line per ε and the three private methods
    /// side by side.
    pub fn render_table(&self) -> String {
        let c = &self.config;
        let public = self.public();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}, n={}, effective n={:.0}, {} mechanism, {} scale",
            if c.weighted {
                "With weights"
            } else {
                "No weights"
            },
            c.n,
            public.mean_effective_n,
            c.mechanism.name(),
            c.scale.name()
        );
        let _ = writeln!(
            out,
            "public method: width = {:.3}, coverage = {:.3}, score = {:.3}",
            public.mean_width, public.coverage, public.mean_interval_score
        );
        let _ = writeln!(
            out,
            "{:>6} | {:^23} | {:^23} | {:^23}",
            "eps", "No Correction", "Monte Carlo", "Analytical"
        );
        let _ = writeln!(
            out,
            "{:>6} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
            "", "width", "cover", "score", "width", "cover", "score", "width", "cover", "score"
        );
        for &eps in &c.epsilons {
            let mut line = format!("{eps:>6}");
            for method in Method::PRIVATE {
                match self.row(method, eps) {
                    Some(r) => {
                        let _ = write!(
                            line,
                            " | {:>7.3} {:>7.3} {:>7.3}",
                            r.mean_width, r.coverage, r.mean_interval_score
                        );
                    }
                    None => line.push_str(" |       -       -       -"),
                }
            }
            let refusals: usize = Method::PRIVATE
                .iter()
                .filter_map(|&m| self.row(m, eps))
                .map(|r| r.refusal_count)
                .sum();
            if refusals > 0 {
                let _ = write!(line, "  ({refusals} refused)");
            }
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct IntervalOutcome {
    width: f64,
    covered: bool,
    score: f64,
}

struct ReplicationOutcome {
    effective_n: f64,
    public: Option<IntervalOutcome>,
    /// Indexed by ε position, then by `Method::PRIVATE` position.
    private: Vec<[Option<IntervalOutcome>; 3]>,
}

const TAG_DATA: &str = "data";
const TAG_RELEASE: &str = "release";
const TAG_MONTE_CARLO: &str = "monte_carlo";

fn score_estimate(est: &RatioEstimate, truth: f64, alpha: f64) -> Result<IntervalOutcome> {
    Ok(IntervalOutcome {
        width: est.width(),
        covered: est.covers(truth),
        score: interval_score(est.ci_lower, est.ci_upper, truth, alpha)?,
    })
}

fn run_replication(config: &SimulationConfig, index: u64) -> Result<ReplicationOutcome> {
    let seed = config.master_seed;
    let bounds = config.bounds();
    let truth = config.scale.transform(config.true_ratio);
    let alpha = 1.0 - config.level;

    let mut data_rng = substream(seed, index, TAG_DATA, 0);
    let records = generate_dataset(config.n, config.weighted, config.true_ratio, &mut data_rng)?;
    let sums = compute_sums(&records, &bounds)?;
    let effective_n = kish_effective_n(&sums)?;

    let public = public_estimate(&sums, config.scale, config.level)
        .and_then(|e| score_estimate(&e, truth, alpha))
        .ok();

    let mut private = Vec::with_capacity(config.epsilons.len());
    for &epsilon in &config.epsilons {
        // streams keyed by ε so adding budgets leaves the others untouched
        let salt = epsilon.to_bits();
        let budget = PrivacyBudget::new(epsilon, config.delta)?;
        let mut release_rng = substream(seed, index, TAG_RELEASE, salt);
        let released = release(&sums, &bounds, &budget, config.mechanism, &mut release_rng)?;
        let mut mc_rng = substream(seed, index, TAG_MONTE_CARLO, salt);

        let mut outcomes = [None; 3];
        for (slot, method) in outcomes.iter_mut().zip(Method::PRIVATE) {
            let est = match method {
                Method::NoCorrection => ci_no_correction(&released, config.scale, config.level),
                Method::MonteCarlo => ci_monte_carlo(
                    &released,
                    config.scale,
                    config.level,
                    config.mc_draws,
                    &mut mc_rng,
                ),
                Method::Analytical => ci_analytical(&released, config.scale, config.level),
                Method::Public => unreachable!("public is not a private method"),
            };
            *slot = match est {
                Ok(e) => Some(score_estimate(&e, truth, alpha)?),
                Err(e) if e.is_degenerate() => None,
                Err(e) => return Err(e),
            };
        }
        private.push(outcomes);
    }
    Ok(ReplicationOutcome {
        effective_n,
        public,
        private,
    })
}

#[derive(Default)]
struct Accumulator {
    width: f64,
    covered: usize,
    score: f64,
    used: usize,
    refused: usize,
}

impl Accumulator {
    fn push(&mut self, outcome: Option<IntervalOutcome>) {
        match outcome {
            Some(o) => {
                self.width += o.width;
                self.score += o.score;
                self.covered += o.covered as usize;
                self.used += 1;
            }
            None => self.refused += 1,
        }
    }

    fn row(&self, method: Method, epsilon: Option<f64>, mean_effective_n: f64) -> ExperimentRow {
        let k = self.used as f64;
        let mean = |x: f64| if self.used == 0 { f64::NAN } else { x / k };
        ExperimentRow {
            method,
            epsilon,
            mean_width: mean(self.width),
            coverage: mean(self.covered as f64),
            mean_interval_score: mean(self.score),
            mean_effective_n,
            refusal_count: self.refused,
        }
    }
}

/// Runs every replication of `config` on the current rayon pool.
pub fn run_experiment(config: &SimulationConfig) -> Result<CellResult> {
    config.validate()?;
    let outcomes: Vec<ReplicationOutcome> = (0..config.replications as u64)
        .into_par_iter()
        .map(|i| run_replication(config, i))
        .collect::<Result<_>>()?;

    let mut effective_n = 0.0;
    let mut public = Accumulator::default();
    let mut private: Vec<[Accumulator; 3]> =
        config.epsilons.iter().map(|_| Default::default()).collect();
    for outcome in &outcomes {
        effective_n += outcome.effective_n;
        public.push(outcome.public);
        for (accs, results) in private.iter_mut().zip(&outcome.private) {
            for (acc, &result) in accs.iter_mut().zip(results) {
                acc.push(result);
            }
        }
    }
    let mean_effective_n = effective_n / outcomes.len() as f64;

    let mut rows = vec![public.row(Method::Public, None, mean_effective_n)];
    for (&epsilon, accs) in config.epsilons.iter().zip(&private) {
        for (acc, method) in accs.iter().zip(Method::PRIVATE) {
            rows.push(acc.row(method, Some(epsilon), mean_effective_n));
        }
    }
    Ok(CellResult {
        config: config.clone(),
        rows,
    })
}

/// Runs `config` on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(
    config: &SimulationConfig,
    threads: usize,
) -> Result<CellResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_score_examples() {
        assert_eq!(interval_score(0.0, 1.0, 0.5, 0.05).unwrap(), 1.0);
        assert!((interval_score(0.0, 1.0, 1.1, 0.05).unwrap() - 5.0).abs() < 1e-12);
        assert!((interval_score(0.0, 1.0, -0.1, 0.05).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(interval_score(0.0, 1.0, 1.0, 0.05).unwrap(), 1.0);
        assert_eq!(interval_score(0.0, 1.0, 0.0, 0.05).unwrap(), 1.0);
        assert!(matches!(
            interval_score(1.0, 0.0, 0.5, 0.05),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn generated_probabilities_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records = generate_dataset(2000, true, 1.1, &mut rng).unwrap();
        assert_eq!(records.len(), 2000);
        for r in &records {
            assert!((0.0..=1.0).contains(&r.s));
            assert!(r.s / 1.1 <= 1.0 / 1.1);
            assert!(r.y == 0.0 || r.y == 1.0);
            assert!((WEIGHT_LOWER..=WEIGHT_UPPER).contains(&r.w));
        }
        assert!(generate_dataset(10, false, 1.0, &mut rng).is_ok());
        assert!(matches!(
            generate_dataset(10, false, 0.9, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            generate_dataset(0, false, 1.1, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn substreams_differ_by_every_key() {
        let a: u64 = substream(1, 2, "data", 0).random();
        assert_eq!(a, substream(1, 2, "data", 0).random::<u64>());
        assert_ne!(a, substream(2, 2, "data", 0).random::<u64>());
        assert_ne!(a, substream(1, 3, "data", 0).random::<u64>());
        assert_ne!(a, substream(1, 2, "release", 0).random::<u64>());
        assert_ne!(a, substream(1, 2, "data", 1).random::<u64>());
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::default().validate().is_ok());
        let mut c = SimulationConfig::default();
        c.n = 1;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.epsilons.clear();
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.level = 1.0;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.mechanism = MechanismKind::Laplace;
        assert!(matches!(c.validate(), Err(Error::MechanismMismatch(_))));
        c.delta = 0.0;
        assert!(c.validate().is_ok());
        let mut c = SimulationConfig::default();
        c.delta = 0.0;
        assert!(matches!(c.validate(), Err(Error::MechanismMismatch(_))));
    }

    #[test]
    fn config_json_defaults() {
        let c: SimulationConfig = serde_json::from_str(r#"{"n": 100, "weighted": true}"#).unwrap();
        assert_eq!(c.n, 100);
        assert!(c.weighted);
        assert_eq!(c.epsilons, vec![0.2, 0.5, 1.0, 4.0]);
        assert_eq!(c.replications, 1000);
        assert_eq!(c.mc_draws, 200);
    }

    #[test]
    fn single_replication_is_reproducible() {
        let config = SimulationConfig {
            n: 300,
            replications: 1,
            master_seed: 17,
            ..Default::default()
        };
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        assert_eq!(a.rows.len(), 1 + 4 * 3);
        assert_eq!(a.public().method, Method::Public);
        assert_eq!(a.public().epsilon, None);
    }

    #[test]
    fn adding_an_epsilon_leaves_other_rows_unchanged() {
        let small = SimulationConfig {
            n: 400,
            replications: 20,
            epsilons: vec![1.0],
            master_seed: 3,
            ..Default::default()
        };
        let large = SimulationConfig {
            epsilons: vec![0.5, 1.0, 4.0],
            ..small.clone()
        };
        let a = run_experiment(&small).unwrap();
        let b = run_experiment(&large).unwrap();
        assert_eq!(a.public(), b.public());
        for m in Method::PRIVATE {
            assert_eq!(a.row(m, 1.0), b.row(m, 1.0));
        }
    }
}
