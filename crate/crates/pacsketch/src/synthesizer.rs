//! Synthesis from input-output examples.
//!
//! 1. Enumerate the smallest program whose train semantics reproduces the
//!    examples.
//! 2. Split labeled data into `alpha_synth` and `alpha_sketch`. Lower the
//!    program once per `(eps, e)` grid candidate, sketch each on
//!    `alpha_synth`, and keep the candidate that abstains least.
//! 3. Re-sketch the winner on `alpha_sketch`, which so far has not been
//!    touched.

mod enumerate;

use crate::allocator::{fill_all, AllocError, Assignment, CandidateGrid};
use crate::estimators::BudgetRule;
use crate::listdsl::{
    dsl_eval, dsl_output_error, flatten_example, length_bound, lower_to_sketch_ir, DslError, DslExample, DslProgram,
    DslType, DslValue, EvalMode, HoleAssignment, LengthBound, OccId,
};
use crate::sketch_ir::{ComponentRegistry, Valuation};
use crate::sketcher::{sketch, SketchError, SketchJob, SketchOptions, SketchReport};
use crate::SCHEMA_VERSION;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use thiserror::Error;

/// Unrolling bound: a fixed list length, or one learned from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NSetting {
    Fixed(usize),
    Auto,
}

impl Default for NSetting {
    fn default() -> Self {
        NSetting::Fixed(3)
    }
}

impl Serialize for NSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NSetting::Fixed(n) => s.serialize_u64(*n as u64),
            NSetting::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for NSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(NSetting::Fixed(n)),
            Raw::S(s) if s == "auto" => Ok(NSetting::Auto),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoExample {
    pub inputs: Vec<serde_json::Value>,
    pub output: serde_json::Value,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_prob() -> f64 {
    0.05
}
fn default_err() -> f64 {
    6.0
}
fn default_depth() -> usize {
    5
}

/// A synthesis problem as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Curried type of the program, e.g. `image -> list(image) -> float`.
    pub function_type: DslType,
    pub examples: Vec<IoExample>,
    #[serde(default = "default_prob")]
    pub eps: f64,
    #[serde(default = "default_prob")]
    pub delta: f64,
    #[serde(default = "default_err")]
    pub err: f64,
    #[serde(default)]
    pub n: NSetting,
    #[serde(default)]
    pub grid: CandidateGrid,
    #[serde(default = "default_depth")]
    pub depth_limit: usize,
}

impl TaskSpec {
    pub fn new(function_type: DslType, examples: Vec<IoExample>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: None,
            function_type,
            examples,
            eps: default_prob(),
            delta: default_prob(),
            err: default_err(),
            n: NSetting::default(),
            grid: CandidateGrid::default(),
            depth_limit: default_depth(),
        }
    }

    pub fn input_types(&self) -> Vec<DslType> {
        self.function_type.signature().0
    }

    pub fn output_type(&self) -> DslType {
        self.function_type.signature().1
    }

    /// Examples decoded against the function type. Images given as bare
    /// digits become perfectly predicted records.
    pub fn decoded_examples(&self) -> Result<Vec<(DslExample, DslValue)>, SynthError> {
        let (inputs, output) = self.function_type.signature();
        if self.examples.is_empty() {
            return Err(SynthError::Task("at least one example is required".into()));
        }
        let mut next_id = 0;
        self.examples
            .iter()
            .enumerate()
            .map(|(k, ex)| {
                if ex.inputs.len() != inputs.len() {
                    return Err(SynthError::Task(format!(
                        "example {} has {} inputs, the type has {}",
                        k + 1,
                        ex.inputs.len(),
                        inputs.len()
                    )));
                }
                let values = ex
                    .inputs
                    .iter()
                    .zip(&inputs)
                    .map(|(v, t)| DslValue::from_json(v, t, &mut next_id))
                    .collect::<Result<Vec<_>, _>>()?;
                let out = DslValue::from_json(&ex.output, &output, &mut next_id)?;
                if values.iter().any(DslValue::is_bot) || out.is_bot() {
                    return Err(SynthError::Task(format!("example {} contains null", k + 1)));
                }
                Ok((values, out))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(SynthError::Task(format!("{name} = {v} must lie strictly between 0 and 1")))
            }
        };
        prob("eps", self.eps)?;
        prob("delta", self.delta)?;
        if !(self.err >= 0.0) {
            return Err(SynthError::Task(format!("err = {} must be nonnegative", self.err)));
        }
        if self.n == NSetting::Fixed(0) {
            return Err(SynthError::Task("n must be positive".into()));
        }
        self.decoded_examples().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Use only the grid point `(1, ..., 1)`.
    #[serde(default)]
    pub no_search: bool,
    #[serde(default)]
    pub sketch: SketchOptions,
    #[serde(default)]
    pub seed: u64,
}

impl SynthOptions {
    /// The baseline that sets every mistake budget to zero.
    pub fn k0(mut self) -> Self {
        self.sketch.budget_rule = BudgetRule::ZeroMistakes;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub schema_version: u32,
    pub program: String,
    pub function_type: DslType,
    pub n: usize,
    /// Whether `n` was learned from `alpha_synth`.
    pub n_learned: bool,
    /// `eps` available to the program after any share spent on `n`.
    pub eps_program: f64,
    pub fill: HoleAssignment,
    pub candidate: usize,
    pub candidates: usize,
    /// Fraction of `alpha_synth` on which the winner does not abstain.
    pub score: f64,
    pub scores: Vec<f64>,
    pub synth_size: usize,
    pub sketch_size: usize,
    pub report: SketchReport,
}

impl SynthesisResult {
    pub fn parsed(&self) -> Result<DslProgram, DslError> {
        Ok(DslProgram::with_signature(
            crate::listdsl::parse_program(&self.program)?,
            &self.function_type,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid task: {0}")]
    Task(String),
    #[error("no program of depth at most {0} matches the examples")]
    NoProgram(usize),
    #[error("need at least two labeled examples, got {0}")]
    TooLittleData(usize),
    #[error("the list length bound is unbounded for this data")]
    Unbounded,
    #[error("the synthesized program disagrees with example {0}")]
    ExampleMismatch(usize),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

impl From<crate::listdsl::TypeError> for SynthError {
    fn from(e: crate::listdsl::TypeError) -> Self {
        SynthError::Dsl(e.into())
    }
}

/// Smallest-depth program agreeing with every example under train
/// semantics. Ties go to the first program in enumeration order: leaves,
/// then applications, folds, maps, filters, slices and lengths, each over
/// children in the order they were found.
pub fn synthesize_partial_sketch(task: &TaskSpec, depth_limit: usize) -> Result<DslProgram, SynthError> {
    let examples = task.decoded_examples()?;
    let inputs = task.input_types();
    let expr = enumerate::Enumerator::new(&inputs, &examples, task.output_type())
        .run(depth_limit)
        .ok_or(SynthError::NoProgram(depth_limit))?;
    let p = DslProgram::with_signature(expr, &task.function_type)?;
    check_examples(&p, &examples)?;
    Ok(p)
}

fn check_examples(p: &DslProgram, examples: &[(DslExample, DslValue)]) -> Result<(), SynthError> {
    let none = HoleAssignment::default();
    for (k, (ins, want)) in examples.iter().enumerate() {
        let got = dsl_eval(p, ins, EvalMode::Train, &none)?;
        if dsl_output_error(&got, want) != Ok(0.0) {
            return Err(SynthError::ExampleMismatch(k + 1));
        }
    }
    Ok(())
}

/// Disjoint halves of a shuffled copy of `data`; an odd element goes to the
/// first half.
pub fn split_data<T: Clone>(data: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>), SynthError> {
    if data.len() < 2 {
        return Err(SynthError::TooLittleData(data.len()));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = data.len().div_ceil(2);
    let take = |ids: &[usize]| ids.iter().map(|&i| data[i].clone()).collect();
    Ok((take(&idx[..cut]), take(&idx[cut..])))
}

/// Fraction of `data` on which the completed program does not abstain.
pub fn score_program(p: &DslProgram, fill: &HoleAssignment, data: &[DslExample]) -> Result<f64, DslError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut answered = 0usize;
    for ex in data {
        if !dsl_eval(p, ex, EvalMode::Test, fill)?.is_bot() {
            answered += 1;
        }
    }
    Ok(answered as f64 / data.len() as f64)
}

fn flatten_all(types: &[DslType], data: &[DslExample], n: usize) -> Result<Vec<Valuation>, DslError> {
    data.iter().map(|ex| flatten_example(types, ex, n)).collect()
}

/// Sketches one budget candidate and returns the filled holes.
fn sketch_candidate(
    p: &DslProgram,
    cand: &Assignment<f64>,
    n: usize,
    data: &[Valuation],
    delta: f64,
    options: SketchOptions,
) -> Result<(HoleAssignment, SketchReport), SynthError> {
    let mut fill = cand.to_holes(p);
    let ir = lower_to_sketch_ir(p, n, &fill.eps, &fill.errs)?;
    let registry = ComponentRegistry::standard();
    let report = sketch(SketchJob::new(&ir, data, delta, &registry).with_options(options))?;
    for (label, value) in report.values_by_label() {
        if let Ok(occ) = label.parse::<OccId>() {
            fill.thresholds.insert(occ, value);
        }
    }
    Ok((fill, report))
}

/// Steps 2 and 3 for an already synthesized partial sketch.
pub fn synthesize_with_sketch(
    task: &TaskSpec,
    p: &DslProgram,
    data: &[DslExample],
    options: SynthOptions,
) -> Result<SynthesisResult, SynthError> {
    let (alpha_synth, alpha_sketch) = split_data(data, options.seed)?;
    synthesize_split(task, p, &alpha_synth, &alpha_sketch, options)
}

/// Steps 2 and 3 on an explicit split. Everything except the final
/// thresholds depends on `alpha_synth` alone.
pub fn synthesize_split(
    task: &TaskSpec,
    p: &DslProgram,
    alpha_synth: &[DslExample],
    alpha_sketch: &[DslExample],
    options: SynthOptions,
) -> Result<SynthesisResult, SynthError> {
    task.validate()?;
    if alpha_synth.is_empty() || alpha_sketch.is_empty() {
        return Err(SynthError::TooLittleData(alpha_synth.len() + alpha_sketch.len()));
    }
    let (n, eps_program) = match task.n {
        NSetting::Fixed(n) => (n, task.eps),
        NSetting::Auto => match length_bound(alpha_synth, task.eps / 2.0, task.delta)? {
            LengthBound::Finite(n) => (n, task.eps / 2.0),
            LengthBound::Unbounded => return Err(SynthError::Unbounded),
        },
    };
    let grid = if options.no_search {
        CandidateGrid::no_search()
    } else {
        task.grid.clone()
    };
    let candidates = fill_all::<f64>(p, eps_program, task.err, n, &grid)?;
    let types = p.input_types();
    let synth_vals = flatten_all(types, alpha_synth, n)?;

    let scored: Vec<f64> = candidates
        .par_iter()
        .map(|c| {
            let (fill, _) = sketch_candidate(p, c, n, &synth_vals, task.delta, options.sketch)?;
            Ok(score_program(p, &fill, alpha_synth)?)
        })
        .collect::<Result<_, SynthError>>()?;
    let mut best = 0;
    for (i, s) in scored.iter().enumerate() {
        if *s > scored[best] {
            best = i;
        }
    }

    let sketch_vals = flatten_all(types, alpha_sketch, n)?;
    let (fill, report) = sketch_candidate(p, &candidates[best], n, &sketch_vals, task.delta, options.sketch)?;
    Ok(SynthesisResult {
        schema_version: SCHEMA_VERSION,
        program: p.expr().to_string(),
        function_type: task.function_type.clone(),
        n,
        n_learned: task.n == NSetting::Auto,
        eps_program,
        fill,
        candidate: best,
        candidates: candidates.len(),
        score: scored[best],
        scores: scored,
        synth_size: alpha_synth.len(),
        sketch_size: alpha_sketch.len(),
        report,
    })
}

/// The full pipeline: enumerate, pick budgets on `alpha_synth`, sketch on
/// `alpha_sketch`.
pub fn synthesize(task: &TaskSpec, data: &[DslExample], options: SynthOptions) -> Result<SynthesisResult, SynthError> {
    task.validate()?;
    let p = synthesize_partial_sketch(task, task.depth_limit)?;
    synthesize_with_sketch(task, &p, data, options)
}

/// Thresholds per occurrence in a form convenient for printing.
pub fn describe_fill(fill: &HoleAssignment) -> BTreeMap<String, String> {
    fill.thresholds
        .iter()
        .map(|(o, t)| {
            let eps = fill.eps.get(o).map(|e| format!(", eps {e:.5}")).unwrap_or_default();
            let err = match fill.errs.get(o) {
                Some(e) if e.is_finite() => format!(", err {e:.4}"),
                _ => String::new(),
            };
            (o.to_string(), format!("threshold {t:.6}{eps}{err}"))
        })
        .collect()
}
