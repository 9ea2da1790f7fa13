//! Fills every hole of a full sketch from labeled data.
//!
//! Holed specifications are processed bottom-up so that a score never
//! depends on an unfilled hole. Each hole gets an equal share `delta / m`
//! of the failure budget, where `m` counts holed specification nodes.
//! Holes sharing a label form one group: their samples are pooled and they
//! receive one value. Pooled samples from one valuation are not
//! independent, so groups are only appropriate for copies of one component
//! that the caller wants to treat as a single parameter.

use crate::estimators::{
    lower_bound_estimate, threshold_estimate, BitSample, BudgetRule, EstimatorConfig, EstimatorError, GammaPolicy,
    MistakeBudget, ScoreSample,
};
use crate::sketch_ir::{
    fill_many, is_full_sketch, score_dependencies, spec_nodes, validate, ComponentRegistry, EvalError,
    Evaluator, Expr, HoleKind, Mode, NodePath, Semantics, SpecExpr, ValidationError, Valuation,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SketchOptions {
    #[serde(default)]
    pub gamma_policy: GammaPolicy,
    #[serde(default)]
    pub budget_rule: BudgetRule,
}

#[derive(Debug, Clone, Copy)]
pub struct SketchJob<'a> {
    pub program: &'a Expr,
    pub data: &'a [Valuation],
    pub delta: f64,
    pub registry: &'a ComponentRegistry,
    pub options: SketchOptions,
}

impl<'a> SketchJob<'a> {
    pub fn new(program: &'a Expr, data: &'a [Valuation], delta: f64, registry: &'a ComponentRegistry) -> Self {
        Self {
            program,
            data,
            delta,
            registry,
            options: SketchOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SketchOptions) -> Self {
        self.options = options;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleRecord {
    pub path: NodePath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: HoleKind,
    pub mode: Mode,
    #[serde(with = "crate::serde_ext::ext_real")]
    pub value: f64,
    /// Samples used for the group this hole belongs to.
    pub n: usize,
    /// Mistake budget, for threshold holes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<MistakeBudget>,
    /// Lower confidence bound on the satisfaction rate, for eps holes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_hat: Option<f64>,
    /// The specification's eps after sketching.
    #[serde(with = "crate::serde_ext::ext_real")]
    pub eps: f64,
    pub delta_share: f64,
    pub group_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchReport {
    pub schema_version: u32,
    pub completed: Expr,
    pub delta: f64,
    pub m: usize,
    pub records: Vec<HoleRecord>,
}

impl SketchReport {
    /// Filled value per hole label; unlabeled holes are omitted.
    pub fn values_by_label(&self) -> BTreeMap<String, f64> {
        self.records
            .iter()
            .filter_map(|r| r.label.clone().map(|l| (l, r.value)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("the program is not a full sketch: every specification needs a hole")]
    NotFullSketch,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("evaluation failed at {path}: {source}")]
    Eval { path: NodePath, source: EvalError },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("delta share {0} must lie strictly between 0 and 1")]
    Delta(f64),
    #[error("holes labeled {0:?} mix threshold and eps holes or disagree on eps")]
    InconsistentGroup(String),
    #[error("hole groups depend on each other cyclically: {0:?}")]
    Cycle(Vec<String>),
}

fn eval_err(path: &NodePath) -> impl Fn(EvalError) -> SketchError + '_ {
    move |source| SketchError::Eval {
        path: path.clone(),
        source,
    }
}

fn predicate(ev: &Evaluator<'_>, path: &NodePath, v: &Valuation) -> Result<bool, SketchError> {
    let q = ev.eval_at(&path.child(1), v, Semantics::Train).map_err(eval_err(path))?;
    q.as_bool().ok_or_else(|| eval_err(path)(EvalError::SpecNotBool(q)))
}

fn score(ev: &Evaluator<'_>, path: &NodePath, v: &Valuation) -> Result<f64, SketchError> {
    let z = ev.eval_at(&path.child(0), v, Semantics::Test).map_err(eval_err(path))?;
    z.as_f64().ok_or_else(|| eval_err(path)(EvalError::ScoreNotReal(z)))
}

/// Threshold samples for the specification at `path` of `ev`'s program.
/// Conditional mode keeps scores where the predicate holds; implication
/// mode keeps one entry per example, `-inf` where the predicate fails.
pub fn threshold_samples_at(ev: &Evaluator<'_>, path: &NodePath, data: &[Valuation]) -> Result<Vec<f64>, SketchError> {
    let mode = spec_mode(ev.root(), path)?;
    let per: Vec<Option<f64>> = data
        .par_iter()
        .map(|v| {
            if predicate(ev, path, v)? {
                score(ev, path, v).map(Some)
            } else {
                Ok(match mode {
                    Mode::Conditional => None,
                    Mode::Implication => Some(f64::NEG_INFINITY),
                })
            }
        })
        .collect::<Result<_, SketchError>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Indicator samples for the specification at `path` with its concrete
/// threshold: `[score <= c]` where the predicate holds (conditional), or
/// `Q => [score <= c]` on every example (implication).
pub fn eps_samples_at(ev: &Evaluator<'_>, path: &NodePath, data: &[Valuation]) -> Result<Vec<bool>, SketchError> {
    let spec = ev.root().spec_at(path).ok_or_else(|| eval_err(path)(EvalError::BadPath(path.clone())))?;
    let c = spec.threshold.value().ok_or_else(|| eval_err(path)(EvalError::Hole))?;
    let mode = spec.mode;
    let per: Vec<Option<bool>> = data
        .par_iter()
        .map(|v| {
            if predicate(ev, path, v)? {
                Ok(Some(score(ev, path, v)? <= c))
            } else {
                Ok(match mode {
                    Mode::Conditional => None,
                    Mode::Implication => Some(true),
                })
            }
        })
        .collect::<Result<_, SketchError>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn spec_mode(root: &Expr, path: &NodePath) -> Result<Mode, SketchError> {
    root.spec_at(path)
        .map(|s| s.mode)
        .ok_or_else(|| eval_err(path)(EvalError::BadPath(path.clone())))
}

pub fn build_threshold_samples(
    spec: &SpecExpr,
    data: &[Valuation],
    registry: &ComponentRegistry,
) -> Result<ScoreSample<f64>, SketchError> {
    let root = Expr::Spec(spec.clone());
    let ev = Evaluator::new(&root, registry).map_err(eval_err(&NodePath::root()))?;
    let values = threshold_samples_at(&ev, &NodePath::root(), data)?;
    Ok(ScoreSample::new(values)?)
}

pub fn build_eps_samples(
    spec: &SpecExpr,
    data: &[Valuation],
    registry: &ComponentRegistry,
) -> Result<BitSample, SketchError> {
    let root = Expr::Spec(spec.clone());
    let ev = Evaluator::new(&root, registry).map_err(eval_err(&NodePath::root()))?;
    Ok(BitSample::new(eps_samples_at(&ev, &NodePath::root(), data)?))
}

/// A set of holed specifications filled with one value.
#[derive(Debug, Clone)]
pub struct HoleGroup {
    pub label: Option<String>,
    pub kind: HoleKind,
    /// Member paths in post-order.
    pub members: Vec<NodePath>,
    /// Concrete eps shared by threshold-hole members.
    pub eps: Option<f64>,
}

/// Groups holes by label and orders groups so that every group comes after
/// the groups its scores depend on. Ties follow the post-order position of
/// each group's first member.
pub fn plan_groups(program: &Expr) -> Result<Vec<HoleGroup>, SketchError> {
    let nodes = spec_nodes(program);
    let deps = score_dependencies(program);
    let mut group_of: Vec<Option<usize>> = vec![None; nodes.len()];
    let mut groups: Vec<HoleGroup> = Vec::new();
    let mut by_label: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, (path, spec)) in nodes.iter().enumerate() {
        let Some(kind) = spec.hole_kind() else { continue };
        let eps = if kind == HoleKind::Threshold { spec.eps.value() } else { None };
        let existing = spec.hole_label().and_then(|l| by_label.get(l).copied());
        let g = match existing {
            Some(g) => {
                let grp = &mut groups[g];
                if grp.kind != kind || grp.eps != eps {
                    return Err(SketchError::InconsistentGroup(grp.label.clone().unwrap_or_default()));
                }
                grp.members.push(path.clone());
                g
            }
            None => {
                groups.push(HoleGroup {
                    label: spec.hole_label().map(str::to_string),
                    kind,
                    members: vec![path.clone()],
                    eps,
                });
                let g = groups.len() - 1;
                if let Some(l) = spec.hole_label() {
                    by_label.insert(l, g);
                }
                g
            }
        };
        group_of[i] = Some(g);
    }

    let n = groups.len();
    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, d) in deps.iter().enumerate() {
        let Some(g) = group_of[i] else { continue };
        for &j in d {
            if let Some(h) = group_of[j] {
                preds[g].insert(h);
            }
        }
    }
    // Kahn's algorithm; groups are already numbered by first member.
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&g| !done[g] && preds[g].iter().all(|&h| done[h] && h != g));
        match next {
            Some(g) => {
                done[g] = true;
                order.push(g);
            }
            None => {
                let stuck = (0..n)
                    .filter(|&g| !done[g])
                    .map(|g| groups[g].label.clone().unwrap_or_else(|| groups[g].members[0].to_string()))
                    .collect();
                return Err(SketchError::Cycle(stuck));
            }
        }
    }
    let mut slots: Vec<Option<HoleGroup>> = groups.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|g| slots[g].take().expect("each group ordered once")).collect())
}

fn delta_share(delta: f64, m: usize) -> Result<f64, SketchError> {
    let share = delta / m.max(1) as f64;
    if share > 0.0 && share < 1.0 {
        Ok(share)
    } else {
        Err(SketchError::Delta(share))
    }
}

/// Threshold fill for a pooled sample. `eps` outside `(0, 1)` is handled
/// directly: `eps >= 1` asks for nothing and `eps <= 0` allows no violation.
pub fn fill_threshold(values: Vec<f64>, eps: f64, delta: f64, options: SketchOptions) -> Result<(f64, Option<MistakeBudget>), SketchError> {
    if eps >= 1.0 {
        return Ok((f64::NEG_INFINITY, None));
    }
    if eps <= 0.0 {
        return Ok((f64::INFINITY, None));
    }
    let cfg = EstimatorConfig::new(eps, delta)?
        .with_gamma_policy(options.gamma_policy)
        .with_budget_rule(options.budget_rule);
    let sample = ScoreSample::new(values)?;
    let k = cfg.mistake_budget(sample.len() as u64);
    Ok((threshold_estimate(&sample, &cfg), Some(k)))
}

/// Eps fill `1 - nu_hat`, or 1 when there are no samples.
pub fn fill_eps(bits: Vec<bool>, delta: f64) -> Result<(f64, Option<f64>), SketchError> {
    if bits.is_empty() {
        return Ok((1.0, None));
    }
    let nu: f64 = lower_bound_estimate(&BitSample::new(bits), delta)?;
    Ok((1.0 - nu, Some(nu)))
}

pub fn sketch(job: SketchJob<'_>) -> Result<SketchReport, SketchError> {
    if !is_full_sketch(job.program) {
        return Err(SketchError::NotFullSketch);
    }
    validate(job.program, job.registry)?;
    let groups = plan_groups(job.program)?;
    let m: usize = groups.iter().map(|g| g.members.len()).sum();
    if m == 0 {
        return Ok(SketchReport {
            schema_version: crate::SCHEMA_VERSION,
            completed: job.program.clone(),
            delta: job.delta,
            m: 0,
            records: Vec::new(),
        });
    }
    let share = delta_share(job.delta, m)?;
    let mut current = job.program.clone();
    let mut records = Vec::with_capacity(m);
    for group in groups {
        let ev = Evaluator::new(&current, job.registry).map_err(eval_err(&group.members[0]))?;
        let (value, n, k, nu) = match group.kind {
            HoleKind::Threshold => {
                let mut pooled = Vec::new();
                for p in &group.members {
                    pooled.extend(threshold_samples_at(&ev, p, job.data)?);
                }
                let n = pooled.len();
                let eps = group.eps.expect("threshold groups carry eps");
                let (value, k) = fill_threshold(pooled, eps, share, job.options)?;
                (value, n, k, None)
            }
            HoleKind::Eps => {
                let mut pooled = Vec::new();
                for p in &group.members {
                    pooled.extend(eps_samples_at(&ev, p, job.data)?);
                }
                let n = pooled.len();
                let (value, nu) = fill_eps(pooled, share)?;
                (value, n, None, nu)
            }
        };
        for p in &group.members {
            let spec = current.spec_at(p).expect("planned from this program");
            records.push(HoleRecord {
                path: p.clone(),
                label: group.label.clone(),
                kind: group.kind,
                mode: spec.mode,
                value,
                n,
                k,
                nu_hat: nu,
                eps: if group.kind == HoleKind::Eps { value } else { group.eps.expect("threshold groups carry eps") },
                delta_share: share,
                group_size: group.members.len(),
            });
        }
        let fills: Vec<(NodePath, f64)> = group.members.iter().map(|p| (p.clone(), value)).collect();
        current = fill_many(&current, &fills).expect("members are holed specs");
    }
    records.sort_by(|a, b| crate::sketch_ir::post_order_cmp(&a.path, &b.path));
    Ok(SketchReport {
        schema_version: crate::SCHEMA_VERSION,
        completed: current,
        delta: job.delta,
        m,
        records,
    })
}
