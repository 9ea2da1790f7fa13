//! Statistical verification of complete programs and a sliding-window
//! runtime monitor.
//!
//! Each of the `m` specifications is checked with its own share `delta / m`
//! of the failure budget; the program is accepted when every check passes.
//!
//! The monitor re-runs verification on its window every `K` arrivals with
//! the same `delta` each time. No correction for repeated testing is made,
//! so over many refreshes the chance of at least one wrong verdict grows.

use crate::estimators::{compute_k, MistakeBudget};
use crate::sketch_ir::{
    collect_specs, spec_nodes, validate, ComponentRegistry, EvalError, Evaluator, Expr, Mode, NodePath, SpecExpr,
    ValidationError, Valuation,
};
use crate::sketcher::{eps_samples_at, SketchError};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct VerifyJob<'a> {
    pub program: &'a Expr,
    pub data: &'a [Valuation],
    pub delta: f64,
    pub registry: &'a ComponentRegistry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecVerdict {
    pub path: NodePath,
    pub mode: Mode,
    pub eps: f64,
    /// Relevant examples: those satisfying the predicate in conditional mode,
    /// all examples in implication mode.
    pub n: usize,
    pub violations: usize,
    pub k: MistakeBudget,
    pub delta_share: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub accepted: bool,
    pub m: usize,
    pub specs: Vec<SpecVerdict>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("the program still has holes")]
    HasHoles,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Samples(#[from] SketchError),
    #[error("delta = {0} must lie strictly between 0 and 1")]
    Delta(f64),
    #[error("invalid monitor configuration: {0}")]
    Config(String),
}

fn check_spec(ev: &Evaluator<'_>, path: &NodePath, spec: &SpecExpr, data: &[Valuation], share: f64) -> Result<SpecVerdict, VerifyError> {
    let eps = spec.eps.value().ok_or(VerifyError::HasHoles)?;
    let bits = eps_samples_at(ev, path, data)?;
    let n = bits.len();
    let violations = bits.iter().filter(|b| !**b).count();
    let (k, passed) = if eps >= 1.0 {
        (MistakeBudget::Exists(n as u64), true)
    } else if eps <= 0.0 || n == 0 {
        (MistakeBudget::NotExists, false)
    } else {
        let k = compute_k(n as u64, eps, share).map_err(SketchError::from)?;
        let passed = matches!(k, MistakeBudget::Exists(k) if violations as u64 <= k);
        (k, passed)
    };
    Ok(SpecVerdict {
        path: path.clone(),
        mode: spec.mode,
        eps,
        n,
        violations,
        k,
        delta_share: share,
        passed,
    })
}

pub fn verify(job: VerifyJob<'_>) -> Result<VerifyReport, VerifyError> {
    if !collect_specs(job.program).holed().is_empty() {
        return Err(VerifyError::HasHoles);
    }
    validate(job.program, job.registry)?;
    let nodes = spec_nodes(job.program);
    let m = nodes.len();
    let share = job.delta / m.max(1) as f64;
    if !(share > 0.0 && share < 1.0) {
        return Err(VerifyError::Delta(job.delta));
    }
    let ev = Evaluator::new(job.program, job.registry)?;
    let specs = nodes
        .iter()
        .map(|(path, spec)| check_spec(&ev, path, spec, job.data, share))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport {
        schema_version: crate::SCHEMA_VERSION,
        accepted: specs.iter().all(|s| s.passed),
        m,
        specs,
    })
}

/// Checks one probabilistic assertion with the whole `delta`.
pub fn passert_check(
    assertion: &SpecExpr,
    data: &[Valuation],
    delta: f64,
    registry: &ComponentRegistry,
) -> Result<bool, VerifyError> {
    let program = Expr::Spec(assertion.clone());
    Ok(verify(VerifyJob {
        program: &program,
        data,
        delta,
        registry,
    })?
    .accepted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Re-verify after this many new arrivals (`K`).
    pub refresh_every: usize,
    /// Minimum window size before any verdict (`N`).
    pub min_window: usize,
    /// Examples older than this many arrivals are dropped (`T`).
    pub max_age: usize,
    pub delta: f64,
}

impl MonitorConfig {
    pub fn new(refresh_every: usize, min_window: usize, max_age: usize, delta: f64) -> Result<Self, VerifyError> {
        if refresh_every == 0 || min_window == 0 || max_age == 0 {
            return Err(VerifyError::Config("K, N and T must be positive".into()));
        }
        if min_window > max_age {
            return Err(VerifyError::Config(format!("N = {min_window} exceeds T = {max_age}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(VerifyError::Delta(delta));
        }
        Ok(Self {
            refresh_every,
            min_window,
            max_age,
            delta,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct MonitorState {
    window: VecDeque<(u64, Valuation)>,
    since_check: usize,
    checked: bool,
    arrivals: u64,
}

impl MonitorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Arrival indices (1-based) currently in the window, oldest first.
    pub fn arrivals_in_window(&self) -> impl Iterator<Item = u64> + '_ {
        self.window.iter().map(|(i, _)| *i)
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    /// Arrival index of the example that triggered the check.
    pub arrival: u64,
    pub window: usize,
    pub accepted: bool,
    pub specs: Vec<SpecVerdict>,
}

/// Appends `example`, evicts examples older than `T` arrivals and, once the
/// window holds at least `N` examples and `K` have arrived since the last
/// check (or none has happened yet), verifies the window.
pub fn monitor_record(
    state: &mut MonitorState,
    cfg: &MonitorConfig,
    example: Valuation,
    program: &Expr,
    registry: &ComponentRegistry,
) -> Result<Option<MonitorVerdict>, VerifyError> {
    state.arrivals += 1;
    state.since_check += 1;
    state.window.push_back((state.arrivals, example));
    while state.window.len() > cfg.max_age {
        state.window.pop_front();
    }
    let due = !state.checked || state.since_check >= cfg.refresh_every;
    if state.window.len() < cfg.min_window || !due {
        return Ok(None);
    }
    let data: Vec<Valuation> = state.window.iter().map(|(_, v)| v.clone()).collect();
    let report = verify(VerifyJob {
        program,
        data: &data,
        delta: cfg.delta,
        registry,
    })?;
    state.checked = true;
    state.since_check = 0;
    Ok(Some(MonitorVerdict {
        arrival: state.arrivals,
        window: data.len(),
        accepted: report.accepted,
        specs: report.specs,
    }))
}
