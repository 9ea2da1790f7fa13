//! Monte Carlo validation of the estimators' guarantees, metrics for
//! synthesized programs, and distribution-shift scenarios.
//!
//! Every run is a pure function of its configuration and seed. Trial `i`
//! draws from ChaCha8 stream `i` of the configured seed, so results do not
//! depend on the number of threads.

use crate::estimators::{lower_bound_estimate, threshold_estimate, verify_indicator, BitSample, EstimatorConfig, EstimatorError, ScoreSample};
use crate::listdsl::{
    dsl_eval, dsl_output_error, generate_examples, synth_predictor, DslError, DslExample, DslProgram, DslType,
    EvalMode, HoleAssignment, ImageRecord, PredictorConfig,
};
use crate::sketch_ir::{ComponentRegistry, Const, Expr, Mode, NodePath, Param, SpecExpr, Valuation};
use crate::sketcher::{sketch, SketchError, SketchJob};
use crate::synthesizer::{synthesize_partial_sketch, synthesize_with_sketch, IoExample, SynthError, SynthOptions, TaskSpec};
use crate::verifier::{verify, VerifyError, VerifyJob};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn check_prob(name: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(config(format!("{name} = {v} must lie strictly between 0 and 1")))
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Three-sigma binomial slack for an observed fraction with nominal rate
/// `p` over `trials` trials.
pub fn binomial_slack(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Continuous score distributions with closed-form CDFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = match *self {
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Distribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Distribution::Exponential { rate } => rate.is_finite() && rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(config(format!("bad distribution parameters: {self:?}")))
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Uniform { low, high } => Uniform::new(low, high).sample(rng),
            Distribution::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            Distribution::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        match *self {
            Distribution::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Distribution::Normal { mean, sd } => NormalCdf::new(mean, sd).expect("validated").cdf(x),
            Distribution::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub distribution: Distribution,
    pub n: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.distribution.validate()?;
        check_prob("eps", self.eps)?;
        check_prob("delta", self.delta)?;
        if self.trials < 100 {
            return Err(config(format!("trials = {} is below 100", self.trials)));
        }
        Ok(())
    }
}

/// Outcome of a validity suite: how often the bad event happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutcome {
    pub trials: usize,
    pub violations: usize,
    pub fraction: f64,
    /// Three-sigma half-width of `fraction`.
    pub half_width: f64,
    /// Largest fraction consistent with the guarantee: nominal rate plus
    /// three-sigma slack.
    pub bound: f64,
    pub passed: bool,
    /// Mean true coverage or mean estimate, reported for tightness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

impl McOutcome {
    fn new(trials: usize, violations: usize, nominal: f64, mean: Option<f64>) -> Self {
        let fraction = violations as f64 / trials as f64;
        let bound = nominal + binomial_slack(nominal, trials);
        Self {
            trials,
            violations,
            fraction,
            half_width: binomial_slack(fraction, trials),
            bound,
            passed: fraction <= bound,
            mean,
        }
    }
}

/// Draws `n` scores per trial, sets `t = threshold_estimate`, and counts
/// trials where the true coverage `P(z <= t)` falls below `1 - eps`.
pub fn mc_validate_threshold(cfg: &TrialConfig) -> Result<McOutcome, HarnessError> {
    cfg.validate()?;
    let est = EstimatorConfig::new(cfg.eps, cfg.delta)?;
    let coverage: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let z: Vec<f64> = (0..cfg.n).map(|_| cfg.distribution.sample(&mut rng)).collect();
            let t = threshold_estimate(&ScoreSample::new(z).expect("samples are finite"), &est);
            cfg.distribution.cdf(t)
        })
        .collect();
    let bad = coverage.iter().filter(|c| **c < 1.0 - cfg.eps).count();
    let mean = coverage.iter().sum::<f64>() / coverage.len() as f64;
    Ok(McOutcome::new(cfg.trials, bad, cfg.delta, Some(mean)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliConfig {
    pub mu: f64,
    pub n: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
}

impl BernoulliConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(config(format!("mu = {} is not a probability", self.mu)));
        }
        check_prob("eps", self.eps)?;
        check_prob("delta", self.delta)?;
        if self.trials < 100 {
            return Err(config(format!("trials = {} is below 100", self.trials)));
        }
        if self.n == 0 {
            return Err(config("n must be positive"));
        }
        Ok(())
    }

    fn bits(&self, trial: usize) -> BitSample {
        let mut rng = trial_rng(self.seed, trial);
        (0..self.n).map(|_| rng.gen_bool(self.mu)).collect()
    }
}

/// Counts trials where the lower bound exceeds the true mean.
pub fn mc_validate_lower_bound(cfg: &BernoulliConfig) -> Result<McOutcome, HarnessError> {
    cfg.validate()?;
    let est: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| lower_bound_estimate::<f64>(&cfg.bits(t), cfg.delta))
        .collect::<Result<_, _>>()?;
    let bad = est.iter().filter(|v| **v > cfg.mu).count();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    Ok(McOutcome::new(cfg.trials, bad, cfg.delta, Some(mean)))
}

/// Counts trials where the verifier accepts. When `mu < 1 - eps` every
/// acceptance is a false accept and the guarantee bounds the fraction;
/// otherwise the fraction is the verifier's power and is only reported.
pub fn mc_validate_verifier(cfg: &BernoulliConfig) -> Result<McOutcome, HarnessError> {
    cfg.validate()?;
    let accepted: Vec<bool> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| verify_indicator(&cfg.bits(t), cfg.eps, cfg.delta))
        .collect::<Result<_, _>>()?;
    let acc = accepted.iter().filter(|a| **a).count();
    let mut out = McOutcome::new(cfg.trials, acc, cfg.delta, None);
    if cfg.mu >= 1.0 - cfg.eps {
        out.passed = true;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchTrialConfig {
    /// Valuations per run.
    pub n: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
}

/// Per-run details of [`mc_validate_sketch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchMcOutcome {
    pub outcome: McOutcome,
    /// Runs in which each specification individually failed.
    pub per_spec: [usize; 3],
}

const P_Q1: f64 = 0.7;
const P_Q2: f64 = 0.5;
const C3: f64 = 0.5;
const Z1: Distribution = Distribution::Normal { mean: 0.0, sd: 1.0 };
const Z2: Distribution = Distribution::Exponential { rate: 1.0 };
const Z3: Distribution = Distribution::Uniform { low: 0.0, high: 1.0 };

/// The three-hole sketch used by [`mc_validate_sketch`]:
///
/// - `[z1 <= ??]{q1}` conditional,
/// - `[z2 <= ??]{q2}` implication,
/// - `[z3 <= 0.5]{q1}` conditional with an `eps` hole.
pub fn three_hole_sketch(eps: f64) -> Expr {
    let s1 = SpecExpr::new(Expr::input("z1"), Param::named("c1"), Expr::truth("q1"), Param::Value(eps), Mode::Conditional);
    let s2 = SpecExpr::new(Expr::input("z2"), Param::named("c2"), Expr::truth("q2"), Param::Value(eps), Mode::Implication);
    let s3 = SpecExpr::new(Expr::input("z3"), Param::Value(C3), Expr::truth("q1"), Param::named("e3"), Mode::Conditional);
    Expr::apply("list", vec![Expr::spec(s1), Expr::spec(s2), Expr::spec(s3)])
}

fn three_hole_row<R: Rng>(rng: &mut R) -> Valuation {
    let q1 = rng.gen_bool(P_Q1);
    let q2 = rng.gen_bool(P_Q2);
    // Scores of irrelevant examples come from a far-away range so that
    // conditioning matters.
    let z1 = if q1 { Z1.sample(rng) } else { rng.gen_range(5.0..6.0) };
    let z2 = if q2 { Z2.sample(rng) } else { rng.gen_range(5.0..6.0) };
    let z3 = Z3.sample(rng);
    Valuation::new()
        .with_input("z1", Const::Real(z1))
        .with_input("z2", Const::Real(z2))
        .with_input("z3", Const::Real(z3))
        .with_truth("q1", Const::Bool(q1))
        .with_truth("q2", Const::Bool(q2))
}

/// Sketches [`three_hole_sketch`] on fresh data each run and counts runs in
/// which any specification's true satisfaction probability falls below
/// `1 - eps` (using the filled `eps` for the third).
pub fn mc_validate_sketch(cfg: &SketchTrialConfig) -> Result<SketchMcOutcome, HarnessError> {
    check_prob("eps", cfg.eps)?;
    check_prob("delta", cfg.delta)?;
    if cfg.trials < 100 {
        return Err(config(format!("trials = {} is below 100", cfg.trials)));
    }
    let program = three_hole_sketch(cfg.eps);
    let registry = ComponentRegistry::standard();
    let fails: Vec<[bool; 3]> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let data: Vec<Valuation> = (0..cfg.n).map(|_| three_hole_row(&mut rng)).collect();
            let report = sketch(SketchJob::new(&program, &data, cfg.delta, &registry))?;
            let spec = |i: usize| report.completed.spec_at(&NodePath(vec![i])).expect("three specs").clone();
            let c1 = spec(0).threshold.value().expect("filled");
            let c2 = spec(1).threshold.value().expect("filled");
            let e3 = spec(2).eps.value().expect("filled");
            let sat1 = Z1.cdf(c1);
            let sat2 = 1.0 - P_Q2 * (1.0 - Z2.cdf(c2));
            let sat3 = Z3.cdf(C3);
            Ok([sat1 < 1.0 - cfg.eps, sat2 < 1.0 - cfg.eps, sat3 < 1.0 - e3])
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut per_spec = [0; 3];
    for f in &fails {
        for i in 0..3 {
            per_spec[i] += f[i] as usize;
        }
    }
    let any = fails.iter().filter(|f| f.iter().any(|b| *b)).count();
    Ok(SketchMcOutcome {
        outcome: McOutcome::new(cfg.trials, any, cfg.delta, None),
        per_spec,
    })
}

/// Abstention and failure counts of one completed program on one
/// evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramMetrics {
    pub n: usize,
    pub bots: usize,
    pub failures: usize,
    pub bot_rate: f64,
    pub failure_rate: f64,
    /// 95% Wilson intervals.
    pub bot_interval: (f64, f64),
    pub failure_interval: (f64, f64),
}

const Z95: f64 = 1.959_963_984_540_054;

impl ProgramMetrics {
    fn from_counts(n: usize, bots: usize, failures: usize) -> Self {
        let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Self {
            n,
            bots,
            failures,
            bot_rate: rate(bots),
            failure_rate: rate(failures),
            bot_interval: wilson_interval(bots, n, Z95),
            failure_interval: wilson_interval(failures, n, Z95),
        }
    }
}

/// Runs the program under test semantics and compares each non-abstaining
/// output with the train-semantics output. An output fails when its error
/// exceeds `e`; lists of different lengths always fail.
pub fn evaluate_program(p: &DslProgram, fill: &HoleAssignment, data: &[DslExample], e: f64) -> Result<ProgramMetrics, DslError> {
    let mut bots = 0;
    let mut failures = 0;
    for ex in data {
        let test = dsl_eval(p, ex, EvalMode::Test, fill)?;
        if test.is_bot() {
            bots += 1;
            continue;
        }
        let truth = dsl_eval(p, ex, EvalMode::Train, fill)?;
        if dsl_output_error(&test, &truth).map_or(true, |err| err > e) {
            failures += 1;
        }
    }
    Ok(ProgramMetrics::from_counts(data.len(), bots, failures))
}

/// In-distribution and shifted image records with the same schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScenario {
    pub base: Vec<ImageRecord>,
    pub shifted: Vec<ImageRecord>,
}

/// `n` records from each predictor. The base set depends only on
/// `(base, n, seed)`.
pub fn shift_scenario(base: &PredictorConfig, shifted: &PredictorConfig, n: usize, seed: u64) -> ShiftScenario {
    ShiftScenario {
        base: synth_predictor(base, n, seed),
        shifted: synth_predictor(shifted, n, seed ^ 0x5eed_5eed_5eed_5eed),
    }
}

/// A classifier record as a valuation: inputs `x.pred`, `x.conf`; ground
/// truth `x.truth`.
pub fn classifier_valuation(r: &ImageRecord) -> Valuation {
    Valuation::new()
        .with_input("x.pred", Const::Int(r.pred.value.round() as i64))
        .with_input("x.conf", Const::Real(r.pred.confidence))
        .with_truth("x.truth", Const::Int(r.truth_int()))
}

/// One classifier with its abstention specification: abstain (`conf <= c`)
/// whenever the prediction is wrong, except with probability `eps`.
/// `threshold = None` leaves the threshold as a hole.
pub fn classifier_program(threshold: Option<f64>, eps: f64) -> Expr {
    let c = threshold.map_or_else(|| Param::named("c"), Param::Value);
    Expr::spec(SpecExpr::new(
        Expr::input("x.conf"),
        c,
        Expr::apply("ne", vec![Expr::input("x.pred"), Expr::truth("x.truth")]),
        Param::Value(eps),
        Mode::Implication,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub base_accuracy: f64,
    pub shifted_accuracy: f64,
    pub window: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftOutcome {
    pub trials: usize,
    pub base_accept_rate: f64,
    pub shifted_reject_rate: f64,
}

/// Verifies a never-abstaining classifier on one in-distribution window and
/// one shifted window per trial.
pub fn mc_shift_detection(cfg: &ShiftConfig) -> Result<ShiftOutcome, HarnessError> {
    check_prob("eps", cfg.eps)?;
    check_prob("delta", cfg.delta)?;
    let program = classifier_program(Some(f64::NEG_INFINITY), cfg.eps);
    let registry = ComponentRegistry::standard();
    let predictor = |accuracy: f64| PredictorConfig {
        accuracy,
        ..Default::default()
    };
    let (base, shifted) = (predictor(cfg.base_accuracy), predictor(cfg.shifted_accuracy));
    let verdicts: Vec<(bool, bool)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_rng(cfg.seed, trial).gen();
            let sc = shift_scenario(&base, &shifted, cfg.window, seed);
            let accepted = |records: &[ImageRecord]| -> Result<bool, HarnessError> {
                let data: Vec<Valuation> = records.iter().map(classifier_valuation).collect();
                Ok(verify(VerifyJob {
                    program: &program,
                    data: &data,
                    delta: cfg.delta,
                    registry: &registry,
                })?
                .accepted)
            };
            Ok((accepted(&sc.base)?, accepted(&sc.shifted)?))
        })
        .collect::<Result<_, HarnessError>>()?;
    let t = cfg.trials.max(1) as f64;
    Ok(ShiftOutcome {
        trials: cfg.trials,
        base_accept_rate: verdicts.iter().filter(|v| v.0).count() as f64 / t,
        shifted_reject_rate: verdicts.iter().filter(|v| !v.1).count() as f64 / t,
    })
}

/// A named synthesis task and the program it should produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub task: TaskSpec,
    pub expected: String,
}

fn bench(name: &str, inputs: &[DslType], output: DslType, examples: serde_json::Value, expected: &str) -> Benchmark {
    let examples = examples
        .as_array()
        .expect("literal array")
        .iter()
        .map(|e| IoExample {
            inputs: e[0].as_array().expect("literal inputs").clone(),
            output: e[1].clone(),
        })
        .collect();
    let mut task = TaskSpec::new(DslType::function(inputs, output), examples);
    task.name = Some(name.to_string());
    Benchmark {
        name: name.to_string(),
        task,
        expected: expected.to_string(),
    }
}

/// The five list benchmarks. Images in the examples are digits.
pub fn benchmarks() -> Vec<Benchmark> {
    let il = DslType::list(DslType::Image);
    let img = DslType::Image;
    vec![
        bench(
            "sum",
            &[il.clone()],
            DslType::Float,
            json!([[[[1, 2, 3]], 6], [[[4, 0]], 4], [[[7]], 7]]),
            "(fold + (map predict_float input1) 0)",
        ),
        bench(
            "max",
            &[il.clone()],
            DslType::Float,
            json!([[[[1, 5, 3]], 5], [[[4, 0]], 4], [[[2, 7]], 7]]),
            "(fold max (map predict_float input1) 0)",
        ),
        bench(
            "conditional sum",
            &[img.clone(), il.clone()],
            DslType::Float,
            json!([
                [[3, [1, 2, 3]], 3],
                [[4, [2, 4, 2]], 4],
                [[2, [5, 1, 2]], 7],
                [[0, [3, 3]], 6],
                [[9, [1, 8]], 0],
                [[5, [5, 9, 4]], 14]
            ]),
            "(fold + (filter (cond-≤ (predict_int input1)) (map predict_float input2)) 0)",
        ),
        bench(
            "prefix max",
            &[img.clone(), il.clone()],
            DslType::Float,
            json!([
                [[2, [3, 1, 4]], 3],
                [[1, [2, 5]], 2],
                [[3, [1, 4, 2]], 4],
                [[0, [7]], 0],
                [[2, [1, 6, 9]], 6],
                [[2, [1, 0, 5]], 1]
            ]),
            "(fold max (slice (map predict_float input2) 0 (predict_int input1)) 0)",
        ),
        bench(
            "conditional count",
            &[img, il],
            DslType::Int,
            json!([
                [[3, [1, 2, 3]], 1],
                [[4, [2, 4, 5]], 2],
                [[2, [5, 1, 2]], 2],
                [[0, [3, 3]], 2],
                [[9, [1, 8]], 0]
            ]),
            "(length (filter (≤ (predict_int input1)) (map predict_int input2)))",
        ),
    ]
}

/// Synthesis variant compared in the benchmark tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Search,
    NoSearch,
    K0,
}

impl BenchMode {
    pub const ALL: [BenchMode; 3] = [BenchMode::Search, BenchMode::NoSearch, BenchMode::K0];

    pub fn options(self, seed: u64) -> SynthOptions {
        let base = SynthOptions {
            seed,
            ..Default::default()
        };
        match self {
            BenchMode::Search => base,
            BenchMode::NoSearch => SynthOptions {
                no_search: true,
                ..base
            },
            BenchMode::K0 => base.k0(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BenchMode::Search => "search",
            BenchMode::NoSearch => "no search",
            BenchMode::K0 => "k=0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub predictor: PredictorConfig,
    /// Labeled examples split between synthesis and sketching.
    pub train_size: usize,
    pub eval_size: usize,
    pub max_len: usize,
    pub seeds: Vec<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorConfig {
                accuracy: 0.99,
                ..Default::default()
            },
            train_size: 5000,
            eval_size: 5000,
            max_len: 3,
            seeds: (0..10).collect(),
        }
    }
}

/// Metrics of one task and mode across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub mode: BenchMode,
    pub program: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<ProgramMetrics>,
    /// Means over seeds.
    pub bot_rate: f64,
    pub failure_rate: f64,
    pub max_failure_rate: f64,
    /// 95% Wilson half-widths of the pooled rates.
    pub bot_half_width: f64,
    pub failure_half_width: f64,
}

impl MetricsReport {
    fn new(task: &str, mode: BenchMode, program: String, seeds: Vec<u64>, per_seed: Vec<ProgramMetrics>) -> Self {
        let k = per_seed.len().max(1) as f64;
        let n: usize = per_seed.iter().map(|m| m.n).sum();
        let bots: usize = per_seed.iter().map(|m| m.bots).sum();
        let fails: usize = per_seed.iter().map(|m| m.failures).sum();
        let half = |c: usize| {
            let (lo, hi) = wilson_interval(c, n, Z95);
            (hi - lo) / 2.0
        };
        Self {
            task: task.to_string(),
            mode,
            program,
            bot_rate: per_seed.iter().map(|m| m.bot_rate).sum::<f64>() / k,
            failure_rate: per_seed.iter().map(|m| m.failure_rate).sum::<f64>() / k,
            max_failure_rate: per_seed.iter().map(|m| m.failure_rate).fold(0.0, f64::max),
            bot_half_width: half(bots),
            failure_half_width: half(fails),
            seeds,
            per_seed,
        }
    }
}

/// Synthesizes `b` once per seed and mode on fresh synthetic data, then
/// measures the result on a separate evaluation set.
pub fn run_benchmark(b: &Benchmark, modes: &[BenchMode], cfg: &BenchConfig) -> Result<Vec<MetricsReport>, HarnessError> {
    let p = synthesize_partial_sketch(&b.task, b.task.depth_limit)?;
    let mut per_mode: Vec<Vec<ProgramMetrics>> = vec![Vec::new(); modes.len()];
    for &seed in &cfg.seeds {
        let data = generate_examples(p.input_types(), cfg.train_size, cfg.max_len, &cfg.predictor, 2 * seed);
        let eval = generate_examples(p.input_types(), cfg.eval_size, cfg.max_len, &cfg.predictor, 2 * seed + 1);
        for (slot, mode) in per_mode.iter_mut().zip(modes) {
            let r = synthesize_with_sketch(&b.task, &p, &data, mode.options(seed))?;
            slot.push(evaluate_program(&p, &r.fill, &eval, b.task.err)?);
        }
    }
    Ok(modes
        .iter()
        .zip(per_mode)
        .map(|(m, per_seed)| MetricsReport::new(&b.name, *m, p.to_string(), cfg.seeds.clone(), per_seed))
        .collect())
}

/// Plain-text table: one row per task, an `∅ rate` and a `failure rate`
/// column per mode.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let mut modes: Vec<BenchMode> = Vec::new();
    let mut tasks: Vec<&str> = Vec::new();
    for r in reports {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
    }
    let width = tasks.iter().map(|t| t.chars().count()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}", "task");
    for m in &modes {
        let _ = write!(out, " | {:>21}", format!("{} ∅ / fail", m.label()));
    }
    out.push('\n');
    out.push_str(&"-".repeat(width + modes.len() * 24));
    out.push('\n');
    for t in tasks {
        let _ = write!(out, "{t:<width$}");
        for m in &modes {
            match reports.iter().find(|r| r.task == t && r.mode == *m) {
                Some(r) => {
                    let _ = write!(out, " | {:>10.4} / {:>8.4}", r.bot_rate, r.failure_rate);
                }
                None => {
                    let _ = write!(out, " | {:>21}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
