//! Static analyses of list programs: how many times each component
//! occurrence runs once lists are unrolled to `N` slots, and a linear bound
//! on the output error in terms of the per-component error budgets. Both
//! feed the grid of candidate `eps` and error assignments searched by the
//! synthesizer.

use crate::listdsl::{DslProgram, HoleAssignment, Node, OccId, Prim};
use crate::SCHEMA_VERSION;
use num_traits::{FromPrimitive, Num, ToPrimitive};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Scalar used for coefficients and budgets.
pub trait Coefficient: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display {}

impl<T> Coefficient for T where T: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("{0} budgeted components need a grid of more than 3^6 points")]
    GridTooLarge(usize),
    #[error("grid levels must be positive integers")]
    BadLevels,
    #[error("eps = {0} must lie strictly between 0 and 1")]
    Eps(f64),
    #[error("the error tolerance must be finite and nonnegative, got {0}")]
    Err(f64),
    #[error("N must be at least 1")]
    ZeroBound,
}

const MAX_DIMENSION: usize = 6;

/// Number of specification instances of `f` in `p` unrolled with `n` list
/// slots.
pub fn count_occurrences(p: &DslProgram, f: OccId, n: usize) -> usize {
    fn go(node: &Node, f: OccId, n: usize) -> usize {
        match node {
            Node::Input(_) | Node::Lit(_) => 0,
            Node::Prim(_, occ) => usize::from(*occ == Some(f)),
            Node::App(a, b) => go(a, f, n) + go(b, f, n),
            Node::Map(g, l) | Node::Filter(g, l) => n * go(g, f, n) + go(l, f, n),
            Node::Fold(g, l, b) => n * go(g, f, n) + go(l, f, n) + go(b, f, n),
            Node::Slice(l, i, j) => go(l, f, n) + go(i, f, n) + go(j, f, n),
            Node::Length(l) => go(l, f, n),
        }
    }
    go(p.node(), f, n)
}

/// Counts for every annotated occurrence, in occurrence order.
pub fn count_all(p: &DslProgram, n: usize) -> BTreeMap<OccId, usize> {
    p.occurrences().iter().map(|(o, _)| (*o, count_occurrences(p, *o, n))).collect()
}

/// Linear form `sum_f a_f * e_f` with nonnegative coefficients; absent
/// occurrences have coefficient zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolicError<T> {
    pub coeffs: BTreeMap<OccId, T>,
}

impl<T: Coefficient> SymbolicError<T> {
    pub fn zero() -> Self {
        Self { coeffs: BTreeMap::new() }
    }

    pub fn symbol(f: OccId) -> Self {
        Self {
            coeffs: [(f, T::one())].into_iter().collect(),
        }
    }

    pub fn coeff(&self, f: OccId) -> T {
        self.coeffs.get(&f).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| c.is_zero())
    }

    fn merge(&self, other: &Self, op: impl Fn(T, T) -> T) -> Self {
        let keys: BTreeSet<OccId> = self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        Self {
            coeffs: keys
                .into_iter()
                .map(|k| (k, op(self.coeff(k), other.coeff(k))))
                .filter(|(_, c)| !c.is_zero())
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.merge(other, |a, b| a + b)
    }

    /// Coefficientwise maximum.
    pub fn join(&self, other: &Self) -> Self {
        self.merge(other, |a, b| if a >= b { a } else { b })
    }

    /// Value of the form at `errs`; missing budgets count as zero.
    pub fn eval(&self, errs: &BTreeMap<OccId, T>) -> T {
        self.coeffs
            .iter()
            .fold(T::zero(), |acc, (f, a)| acc + a.clone() * errs.get(f).cloned().unwrap_or_else(T::zero))
    }
}

impl<T: Coefficient> fmt::Display for SymbolicError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(o, c)| if c.is_one() { format!("e_{o}") } else { format!("{c}·e_{o}") })
            .collect();
        if terms.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&terms.join(" + "))
        }
    }
}

/// Abstract value: an error form, or a primitive awaiting arguments.
#[derive(Debug, Clone)]
enum ErrorAbstraction<T> {
    Value(SymbolicError<T>),
    Function(Prim, Option<OccId>, Vec<SymbolicError<T>>),
}

fn apply_abs<T: Coefficient>(f: &ErrorAbstraction<T>, arg: SymbolicError<T>) -> ErrorAbstraction<T> {
    let ErrorAbstraction::Function(p, occ, captured) = f else {
        panic!("typed programs apply functions");
    };
    let mut args = captured.clone();
    args.push(arg);
    if args.len() < p.arity() {
        return ErrorAbstraction::Function(*p, *occ, args);
    }
    ErrorAbstraction::Value(match p {
        Prim::PredictFloat => SymbolicError::symbol(occ.expect("annotated")),
        Prim::Add | Prim::Sub => args[0].add(&args[1]),
        Prim::Max | Prim::Min => args[0].join(&args[1]),
        // Exact by annotation, or boolean.
        Prim::PredictInt | Prim::CondFlip | Prim::Le | Prim::Eq | Prim::Ge | Prim::CondLe | Prim::CondGe => {
            SymbolicError::zero()
        }
    })
}

fn value<T: Coefficient>(a: ErrorAbstraction<T>) -> SymbolicError<T> {
    match a {
        ErrorAbstraction::Value(v) => v,
        ErrorAbstraction::Function(..) => panic!("typed programs pass values here"),
    }
}

/// Bound on the L-infinity distance between the test and train outputs
/// of `p` whenever every component meets its specification and lists have
/// at most `n` elements.
pub fn error_bound<T: Coefficient>(p: &DslProgram, n: usize) -> SymbolicError<T> {
    fn go<T: Coefficient>(node: &Node, n: usize) -> ErrorAbstraction<T> {
        match node {
            Node::Input(_) | Node::Lit(_) | Node::Length(_) => ErrorAbstraction::Value(SymbolicError::zero()),
            Node::Prim(p, occ) => ErrorAbstraction::Function(*p, *occ, Vec::new()),
            Node::App(f, a) => apply_abs(&go(f, n), value(go(a, n))),
            Node::Map(f, l) => apply_abs(&go(f, n), value(go(l, n))),
            Node::Filter(_, l) | Node::Slice(l, _, _) => go(l, n),
            Node::Fold(f, l, b) => {
                let f = go(f, n);
                let elem = value(go(l, n));
                let mut iterate = value(go(b, n));
                let mut best = iterate.clone();
                for _ in 0..n {
                    iterate = value(apply_abs(&apply_abs(&f, elem.clone()), iterate));
                    best = best.join(&iterate);
                }
                ErrorAbstraction::Value(best)
            }
        }
    }
    value(go(p.node(), n))
}

/// Grid of raw points `levels^d`, normalized onto the simplex. Points that
/// normalize to the same vector appear once, at their first position, so
/// `(1, ..., 1)` always comes first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub levels: Vec<u32>,
}

impl Default for CandidateGrid {
    fn default() -> Self {
        Self { levels: vec![1, 3, 5] }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl CandidateGrid {
    /// The single point `(1, ..., 1)`.
    pub fn no_search() -> Self {
        Self { levels: vec![1] }
    }

    /// Raw integer points, reduced by their gcd and deduplicated.
    pub fn raw_points(&self, d: usize) -> Result<Vec<Vec<u32>>, AllocError> {
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(AllocError::BadLevels);
        }
        if d > MAX_DIMENSION {
            return Err(AllocError::GridTooLarge(d));
        }
        let mut levels = self.levels.clone();
        levels.sort_unstable();
        levels.dedup();
        let mut out: Vec<Vec<u32>> = Vec::new();
        let mut seen = BTreeSet::new();
        let total = levels.len().pow(d as u32);
        for mut idx in 0..total {
            let mut point = vec![0; d];
            for slot in point.iter_mut().rev() {
                *slot = levels[idx % levels.len()];
                idx /= levels.len();
            }
            let g = point.iter().copied().fold(0, gcd).max(1);
            let reduced: Vec<u32> = point.iter().map(|x| x / g).collect();
            if seen.insert(reduced.clone()) {
                out.push(reduced);
            }
        }
        Ok(out)
    }

    /// Normalized points `x / sum(x)`.
    pub fn points<T: Coefficient>(&self, d: usize) -> Result<Vec<Vec<T>>, AllocError> {
        Ok(self
            .raw_points(d)?
            .into_iter()
            .map(|p| {
                let sum: u32 = p.iter().sum();
                p.iter()
                    .map(|x| T::from_u32(*x).expect("small integer") / T::from_u32(sum.max(1)).expect("small integer"))
                    .collect()
            })
            .collect())
    }
}

/// Per-occurrence `eps` and error budgets of one grid candidate.
/// Occurrences absent from `errs` are unconstrained: their error does not
/// reach the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment<T> {
    pub eps: BTreeMap<OccId, T>,
    pub errs: BTreeMap<OccId, T>,
}

impl<T: Coefficient> Assignment<T> {
    /// Budgets as binary64 hole values, with unconstrained error budgets
    /// set to `+inf`.
    pub fn to_holes(&self, p: &DslProgram) -> HoleAssignment {
        let f = |v: &T| v.to_f64().expect("representable budget");
        let mut errs: BTreeMap<OccId, f64> = self.errs.iter().map(|(k, v)| (*k, f(v))).collect();
        for (o, prim) in p.occurrences() {
            if *prim == Prim::PredictFloat {
                errs.entry(*o).or_insert(f64::INFINITY);
            }
        }
        HoleAssignment {
            thresholds: BTreeMap::new(),
            eps: self.eps.iter().map(|(k, v)| (*k, f(v))).collect(),
            errs,
        }
    }
}

/// One `eps` vector per grid point: `eps_f = x_f * eps / count_f`, so that
/// `sum_f count_f * eps_f = eps`. Occurrences that never run get 1.
pub fn candidate_eps<T: Coefficient>(
    p: &DslProgram,
    eps_total: T,
    n: usize,
    grid: &CandidateGrid,
) -> Result<Vec<BTreeMap<OccId, T>>, AllocError> {
    let eps_f = eps_total.to_f64().unwrap_or(f64::NAN);
    if !(eps_f > 0.0 && eps_f < 1.0) {
        return Err(AllocError::Eps(eps_f));
    }
    if n == 0 {
        return Err(AllocError::ZeroBound);
    }
    let counts = count_all(p, n);
    let active: Vec<(OccId, usize)> = counts.iter().filter(|(_, c)| **c > 0).map(|(o, c)| (*o, *c)).collect();
    let mut out = Vec::new();
    for x in grid.points::<T>(active.len())? {
        let mut eps: BTreeMap<OccId, T> = counts.keys().map(|o| (*o, T::one())).collect();
        for ((o, c), xf) in active.iter().zip(x) {
            eps.insert(*o, xf * eps_total.clone() / T::from_usize(*c).expect("small integer"));
        }
        let used = active
            .iter()
            .fold(T::zero(), |acc, (o, c)| acc + T::from_usize(*c).expect("small integer") * eps[o].clone());
        debug_assert!(active.is_empty() || (used.to_f64().unwrap() - eps_f).abs() <= 1e-9 * eps_f.max(1.0));
        out.push(eps);
    }
    Ok(out)
}

/// One error vector per grid point over the occurrences with a positive
/// coefficient in the error form: `e_f = x_f * e / a_f`, so the form
/// evaluates to exactly `e`.
pub fn candidate_errs<T: Coefficient>(
    p: &DslProgram,
    e_total: T,
    n: usize,
    grid: &CandidateGrid,
) -> Result<Vec<BTreeMap<OccId, T>>, AllocError> {
    let e_f = e_total.to_f64().unwrap_or(f64::NAN);
    if !(e_f.is_finite() && e_f >= 0.0) {
        return Err(AllocError::Err(e_f));
    }
    if n == 0 {
        return Err(AllocError::ZeroBound);
    }
    let form = error_bound::<T>(p, n);
    let active: Vec<(OccId, T)> = form
        .coeffs
        .iter()
        .filter(|(_, a)| **a > T::zero())
        .map(|(o, a)| (*o, a.clone()))
        .collect();
    let mut out = Vec::new();
    for x in grid.points::<T>(active.len())? {
        let errs: BTreeMap<OccId, T> = active
            .iter()
            .zip(x)
            .map(|((o, a), xf)| (*o, xf * e_total.clone() / a.clone()))
            .collect();
        debug_assert!(active.is_empty() || (form.eval(&errs).to_f64().unwrap() - e_f).abs() <= 1e-9 * e_f.max(1.0));
        out.push(errs);
    }
    Ok(out)
}

/// Every combination of an `eps` candidate with an error candidate, in
/// grid order (errors vary fastest).
pub fn fill_all<T: Coefficient>(
    p: &DslProgram,
    eps_total: T,
    e_total: T,
    n: usize,
    grid: &CandidateGrid,
) -> Result<Vec<Assignment<T>>, AllocError> {
    let eps = candidate_eps(p, eps_total, n, grid)?;
    let errs = candidate_errs(p, e_total, n, grid)?;
    Ok(eps
        .iter()
        .flat_map(|e| {
            errs.iter().map(move |r| Assignment {
                eps: e.clone(),
                errs: r.clone(),
            })
        })
        .collect())
}

/// Everything the analyses say about one program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub schema_version: u32,
    pub program: String,
    pub n: usize,
    pub counts: BTreeMap<OccId, usize>,
    pub error_form: SymbolicError<f64>,
    pub error_form_text: String,
    pub eps_candidates: Vec<BTreeMap<OccId, f64>>,
    pub err_candidates: Vec<BTreeMap<OccId, f64>>,
}

pub fn analyze(p: &DslProgram, eps_total: f64, e_total: f64, n: usize, grid: &CandidateGrid) -> Result<Analysis, AllocError> {
    let error_form = error_bound::<f64>(p, n);
    Ok(Analysis {
        schema_version: SCHEMA_VERSION,
        program: p.to_string(),
        n,
        counts: count_all(p, n),
        error_form_text: error_form.to_string(),
        error_form,
        eps_candidates: candidate_eps(p, eps_total, n, grid)?,
        err_candidates: candidate_errs(p, e_total, n, grid)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::listdsl::{unroll_occurrences, DslType};
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn img_list() -> Vec<DslType> {
        vec![DslType::Image, DslType::list(DslType::Image)]
    }

    fn prog(src: &str) -> DslProgram {
        DslProgram::parse(src, img_list()).unwrap()
    }

    fn fig9() -> DslProgram {
        prog("(fold + (filter (cond-≤ (predict_int input1)) (map predict_float input2)) 0)")
    }

    #[test]
    fn fig9_counts_and_form() {
        let p = fig9();
        let counts: Vec<usize> = count_all(&p, 3).into_values().collect();
        assert_eq!(counts, vec![3, 3, 3]);
        let form = error_bound::<Q>(&p, 3);
        assert_eq!(form.coeff(OccId(3)), Q::from_integer(3));
        assert_eq!(form.coeffs.len(), 1);
        assert_eq!(form.to_string(), "3·e_f3");
        let errs = candidate_errs(&p, Q::from_integer(6), 3, &CandidateGrid::default()).unwrap();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0][&OccId(3)], Q::from_integer(2));
    }

    #[test]
    fn fig9_eps_candidates() {
        let p = fig9();
        let cands = candidate_eps(&p, Q::new(1, 20), 3, &CandidateGrid::default()).unwrap();
        assert_eq!(cands.len(), 25);
        assert!(cands[0].values().all(|e| *e == Q::new(1, 180)));
        for c in &cands {
            let used: Q = c.values().map(|e| e * Q::from_integer(3)).sum();
            assert_eq!(used, Q::new(1, 20));
        }
    }

    #[test]
    fn counting_rules() {
        let nested = prog("(filter (cond-≤ (fold + (map predict_float input2) 0)) (map predict_float input2))");
        assert_eq!(count_occurrences(&nested, OccId(2), 2), 4);
        assert_eq!(count_occurrences(&nested, OccId(2), 3), 9);
        assert_eq!(count_occurrences(&prog("input1"), OccId(1), 3), 0);
        assert_eq!(count_occurrences(&prog("(predict_int input1)"), OccId(1), 3), 1);
    }

    #[test]
    fn form_examples() {
        assert!(error_bound::<f64>(&prog("(length input2)"), 3).is_zero());
        let p = prog("(fold + (map predict_float input2) (predict_float input1))");
        let form = error_bound::<Q>(&p, 2);
        assert_eq!(form.coeff(OccId(1)), Q::from_integer(2));
        assert_eq!(form.coeff(OccId(2)), Q::from_integer(1));
        let maxed = error_bound::<Q>(&prog("(fold max (map predict_float input2) 0)"), 3);
        assert_eq!(maxed.coeff(OccId(1)), Q::from_integer(1));
    }

    #[test]
    fn two_budgeted_components() {
        let p = prog("(+ (fold + (map predict_float input2) 0) (predict_float input1))");
        let form = error_bound::<Q>(&p, 3);
        assert_eq!((form.coeff(OccId(1)), form.coeff(OccId(2))), (Q::from_integer(3), Q::from_integer(1)));
        let cands = candidate_errs(&p, Q::from_integer(6), 3, &CandidateGrid::default()).unwrap();
        assert_eq!(cands.len(), 7);
        let half = cands.iter().find(|c| c[&OccId(1)] == Q::from_integer(1)).unwrap();
        assert_eq!(half[&OccId(2)], Q::from_integer(3));
        assert!(cands.iter().all(|c| form.eval(c) == Q::from_integer(6)));
    }

    #[test]
    fn no_float_means_one_empty_candidate() {
        let p = prog("(fold + (map predict_int input2) 0)");
        let cands = candidate_errs::<f64>(&p, 6.0, 3, &CandidateGrid::default()).unwrap();
        assert_eq!(cands, vec![BTreeMap::new()]);
        let eps = candidate_eps::<f64>(&p, 0.05, 3, &CandidateGrid::default()).unwrap();
        assert_eq!(eps.len(), 1);
        assert!((eps[0][&OccId(1)] - 0.05 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grid_sizes() {
        let g = CandidateGrid::default();
        let sizes: Vec<usize> = (0..=3).map(|d| g.raw_points(d).unwrap().len()).collect();
        assert_eq!(sizes, vec![1, 1, 7, 25]);
        assert_eq!(g.raw_points(2).unwrap()[0], vec![1, 1]);
        assert!(matches!(g.raw_points(7), Err(AllocError::GridTooLarge(7))));
        assert_eq!(CandidateGrid::no_search().raw_points(3).unwrap().len(), 1);
        for p in g.points::<Q>(3).unwrap() {
            assert_eq!(p.iter().sum::<Q>(), Q::from_integer(1));
        }
    }

    #[test]
    fn scalar_instantiations_agree() {
        let p = fig9();
        let a = error_bound::<f32>(&p, 3).coeff(OccId(3));
        let b = error_bound::<f64>(&p, 3).coeff(OccId(3));
        assert_eq!(a as f64, b);
    }

    #[test]
    fn unconstrained_errors_become_infinite() {
        let p = prog("(filter (cond-≤ (predict_float input1)) (map predict_float input2))");
        let all = fill_all::<f64>(&p, 0.05, 6.0, 3, &CandidateGrid::default()).unwrap();
        let holes = all[0].to_holes(&p);
        assert_eq!(holes.errs[&OccId(2)], f64::INFINITY);
        assert!(holes.errs[&OccId(3)].is_finite());
    }

    #[test]
    fn counts_match_unrolling() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let types = img_list();
        let mut checked = 0;
        while checked < 200 {
            let Some(p) = crate::listdsl::random_program(&types, 4, &mut rng) else { continue };
            for n in 1..=3 {
                let unrolled: BTreeMap<OccId, usize> = unroll_occurrences(&p, n).unwrap().into_iter().collect();
                assert_eq!(unrolled, count_all(&p, n), "{p}");
            }
            checked += 1;
        }
    }

    #[test]
    fn bound_is_monotone_in_n() {
        let p = prog("(fold - (map predict_float input2) (predict_float input1))");
        let mut prev = error_bound::<Q>(&p, 1);
        for n in 2..6 {
            let next = error_bound::<Q>(&p, n);
            for (f, a) in &prev.coeffs {
                assert!(next.coeff(*f) >= *a);
            }
            prev = next;
        }
    }
}
