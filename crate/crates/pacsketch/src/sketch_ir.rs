//! The core sketch language.
//!
//! Programs are trees of constants, input variables, ground-truth variables,
//! component applications and specification expressions
//! `phi(score, c){Q}_eps^mode` with `phi(z, t) = [z <= t]`. Two semantics
//! are provided:
//!
//! - *train* semantics replaces every specification by its `Q` part and may
//!   read ground truth;
//! - *test* semantics replaces every specification by `[score <= c]` and
//!   never reads ground truth.
//!
//! Straight-line sharing is expressed with `Let`, whose bindings are
//! evaluated lazily and at most once per evaluation. A binding sees the
//! bindings before it in the same `Let` and everything in scope outside.
//!
//! Holes may carry a label; all holes with the same label are filled with
//! the same value by the sketcher.

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// A constant. Reals may be infinite but never NaN; `Bot` is abstention.
#[derive(Debug, Clone, PartialEq)]
pub enum Const {
    Bool(bool),
    Int(i64),
    Real(f64),
    Token(String),
    Bot,
}

impl Const {
    pub fn real(v: f64) -> Result<Self, ComponentError> {
        if v.is_nan() {
            Err(ComponentError::new("NaN is not a valid real constant"))
        } else {
            Ok(Const::Real(v))
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Const::Int(i) => Some(*i as f64),
            Const::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Const::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Const::Bot)
    }

    /// Equality with integers and reals compared numerically.
    pub fn loosely_equals(&self, other: &Const) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => self == other,
        }
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Bool(b) => write!(f, "{b}"),
            Const::Int(i) => write!(f, "{i}"),
            Const::Real(r) => write!(f, "{r}"),
            Const::Token(t) => write!(f, "{t}"),
            Const::Bot => f.write_str("∅"),
        }
    }
}

impl Serialize for Const {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Const::Bool(b) => s.serialize_bool(*b),
            Const::Int(i) => s.serialize_i64(*i),
            Const::Real(r) => crate::serde_ext::ser_ext_real(*r, s),
            Const::Token(t) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("token", t)?;
                m.end()
            }
            Const::Bot => s.serialize_unit(),
        }
    }
}

struct ConstVisitor;

impl<'de> Visitor<'de> for ConstVisitor {
    type Value = Const;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a boolean, number, \"inf\", \"-inf\", null or {\"token\": ...}")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Const, E> {
        Ok(Const::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Const, E> {
        Ok(Const::Int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Const, E> {
        i64::try_from(v).map(Const::Int).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Const, E> {
        Ok(Const::Real(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Const, E> {
        crate::serde_ext::parse_ext_real(v)
            .map(Const::Real)
            .ok_or_else(|| E::custom(format!("unexpected string {v:?}; tokens are written {{\"token\": ...}}")))
    }

    fn visit_unit<E: de::Error>(self) -> Result<Const, E> {
        Ok(Const::Bot)
    }

    fn visit_none<E: de::Error>(self) -> Result<Const, E> {
        Ok(Const::Bot)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Const, A::Error> {
        let key: String = map.next_key()?.ok_or_else(|| de::Error::custom("empty object"))?;
        if key != "token" {
            return Err(de::Error::unknown_field(&key, &["token"]));
        }
        let token: String = map.next_value()?;
        if map.next_key::<String>()?.is_some() {
            return Err(de::Error::custom("token object must have exactly one key"));
        }
        Ok(Const::Token(token))
    }
}

impl<'de> Deserialize<'de> for Const {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ConstVisitor)
    }
}

/// A threshold or confidence slot: a concrete extended real or a hole.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Value(f64),
    /// Holes sharing a label are filled with one value.
    Hole(Option<String>),
}

impl Param {
    pub fn hole() -> Self {
        Param::Hole(None)
    }

    pub fn named(label: impl Into<String>) -> Self {
        Param::Hole(Some(label.into()))
    }

    pub fn is_hole(&self) -> bool {
        matches!(self, Param::Hole(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Param::Value(v) => Some(*v),
            Param::Hole(_) => None,
        }
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Param::Value(v) => crate::serde_ext::ser_ext_real(*v, s),
            Param::Hole(None) => s.serialize_str("??"),
            Param::Hole(Some(l)) => s.serialize_str(&format!("??{l}")),
        }
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Param;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"inf\", \"-inf\", \"??\" or \"??label\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Param, E> {
                Ok(Param::Value(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Param, E> {
                Ok(Param::Value(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Param, E> {
                Ok(Param::Value(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Param, E> {
                if let Some(label) = v.strip_prefix("??") {
                    return Ok(if label.is_empty() { Param::Hole(None) } else { Param::named(label) });
                }
                crate::serde_ext::parse_ext_real(v)
                    .map(Param::Value)
                    .ok_or_else(|| E::custom(format!("not a parameter: {v:?}")))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Guarantee conditioned on `Q`.
    Conditional,
    /// Guarantee on `Q => phi` over all examples.
    Implication,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Conditional => "|",
            Mode::Implication => "=>",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecExpr {
    pub score: Box<Expr>,
    pub threshold: Param,
    pub spec: Box<Expr>,
    pub eps: Param,
    pub mode: Mode,
}

impl SpecExpr {
    pub fn new(score: Expr, threshold: Param, spec: Expr, eps: Param, mode: Mode) -> Self {
        Self {
            score: Box::new(score),
            threshold,
            spec: Box::new(spec),
            eps,
            mode,
        }
    }

    pub fn has_hole(&self) -> bool {
        self.threshold.is_hole() || self.eps.is_hole()
    }

    pub fn hole_kind(&self) -> Option<HoleKind> {
        if self.threshold.is_hole() {
            Some(HoleKind::Threshold)
        } else if self.eps.is_hole() {
            Some(HoleKind::Eps)
        } else {
            None
        }
    }

    pub fn hole_label(&self) -> Option<&str> {
        match (&self.threshold, &self.eps) {
            (Param::Hole(Some(l)), _) | (_, Param::Hole(Some(l))) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleKind {
    Threshold,
    Eps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    #[serde(rename = "const")]
    Constant(Const),
    #[serde(rename = "input")]
    InputVar(String),
    #[serde(rename = "truth")]
    GroundTruthVar(String),
    Apply { component: String, args: Vec<Expr> },
    Spec(SpecExpr),
    Let { bindings: Vec<(String, Expr)>, body: Box<Expr> },
    Local(String),
}

impl Expr {
    pub fn constant(c: Const) -> Self {
        Expr::Constant(c)
    }

    pub fn real(v: f64) -> Self {
        Expr::Constant(Const::Real(v))
    }

    pub fn int(v: i64) -> Self {
        Expr::Constant(Const::Int(v))
    }

    pub fn boolean(v: bool) -> Self {
        Expr::Constant(Const::Bool(v))
    }

    pub fn input(name: impl Into<String>) -> Self {
        Expr::InputVar(name.into())
    }

    pub fn truth(name: impl Into<String>) -> Self {
        Expr::GroundTruthVar(name.into())
    }

    pub fn local(name: impl Into<String>) -> Self {
        Expr::Local(name.into())
    }

    pub fn apply(component: impl Into<String>, args: Vec<Expr>) -> Self {
        Expr::Apply {
            component: component.into(),
            args,
        }
    }

    pub fn spec(s: SpecExpr) -> Self {
        Expr::Spec(s)
    }

    /// Children in path order: arguments, `[score, Q]`, or bindings then body.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Apply { args, .. } => args.iter().collect(),
            Expr::Spec(s) => vec![&s.score, &s.spec],
            Expr::Let { bindings, body } => {
                bindings.iter().map(|(_, e)| e).chain(std::iter::once(&**body)).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn child(&self, i: usize) -> Option<&Expr> {
        match self {
            Expr::Apply { args, .. } => args.get(i),
            Expr::Spec(s) => match i {
                0 => Some(&s.score),
                1 => Some(&s.spec),
                _ => None,
            },
            Expr::Let { bindings, body } => {
                if i < bindings.len() {
                    Some(&bindings[i].1)
                } else if i == bindings.len() {
                    Some(body)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn child_mut(&mut self, i: usize) -> Option<&mut Expr> {
        match self {
            Expr::Apply { args, .. } => args.get_mut(i),
            Expr::Spec(s) => match i {
                0 => Some(&mut s.score),
                1 => Some(&mut s.spec),
                _ => None,
            },
            Expr::Let { bindings, body } => {
                let n = bindings.len();
                if i < n {
                    Some(&mut bindings[i].1)
                } else if i == n {
                    Some(body)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn at(&self, path: &NodePath) -> Option<&Expr> {
        path.0.iter().try_fold(self, |e, &i| e.child(i))
    }

    pub fn at_mut(&mut self, path: &NodePath) -> Option<&mut Expr> {
        path.0.iter().try_fold(self, |e, &i| e.child_mut(i))
    }

    pub fn spec_at(&self, path: &NodePath) -> Option<&SpecExpr> {
        match self.at(path) {
            Some(Expr::Spec(s)) => Some(s),
            _ => None,
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Expr::node_count).sum::<usize>()
    }
}

/// Root-to-node child indices. Spec children are `0 = score`, `1 = Q`; a
/// `Let` with `n` bindings has children `0..n` for bindings and `n` for the
/// body.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        NodePath(v)
    }

    pub fn is_ancestor_of(&self, other: &NodePath) -> bool {
        other.0.len() > self.0.len() && other.0.starts_with(&self.0)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

/// Bindings for one example. Input and ground-truth names must be disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Valuation {
    #[serde(default)]
    pub inputs: BTreeMap<String, Const>,
    #[serde(default)]
    pub ground_truth: BTreeMap<String, Const>,
}

impl Valuation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_input(mut self, name: impl Into<String>, value: Const) -> Self {
        self.inputs.insert(name.into(), value);
        self
    }

    pub fn with_truth(mut self, name: impl Into<String>, value: Const) -> Self {
        self.ground_truth.insert(name.into(), value);
        self
    }

    /// Copy without ground truth, as seen at test time.
    pub fn test_view(&self) -> Self {
        Self {
            inputs: self.inputs.clone(),
            ground_truth: BTreeMap::new(),
        }
    }

    pub fn check_disjoint(&self) -> Result<(), EvalError> {
        match self.inputs.keys().find(|k| self.ground_truth.contains_key(*k)) {
            Some(k) => Err(EvalError::OverlappingName(k.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ComponentError {
    pub message: String,
}

impl ComponentError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

pub type ComponentFn = Arc<dyn Fn(&[Const]) -> Result<Const, ComponentError> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Exact(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exact(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Exact(k) => write!(f, "{k}"),
            Arity::AtLeast(k) => write!(f, "at least {k}"),
        }
    }
}

#[derive(Clone)]
pub struct Component {
    pub arity: Arity,
    pub func: ComponentFn,
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Component").field("arity", &self.arity).finish_non_exhaustive()
    }
}

/// Named pure components. [`ComponentRegistry::standard`] holds the
/// arithmetic, logic and abstention helpers used throughout the crate.
#[derive(Debug, Clone, Default)]
pub struct ComponentRegistry {
    components: HashMap<String, Component>,
}

impl ComponentRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: impl Into<String>, arity: Arity, func: F)
    where
        F: Fn(&[Const]) -> Result<Const, ComponentError> + Send + Sync + 'static,
    {
        self.components.insert(
            name.into(),
            Component {
                arity,
                func: Arc::new(func),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Component> {
        self.components.get(name)
    }

    pub fn names(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.components.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        components::install(&mut r);
        r
    }
}

/// The standard component set.
pub mod components {
    use super::{Arity, ComponentError, ComponentRegistry, Const};

    type R = Result<Const, ComponentError>;

    fn err(msg: impl Into<String>) -> ComponentError {
        ComponentError::new(msg)
    }

    fn num(c: &Const) -> Result<f64, ComponentError> {
        c.as_f64().ok_or_else(|| err(format!("expected a number, got {c}")))
    }

    fn boolean(c: &Const) -> Result<bool, ComponentError> {
        c.as_bool().ok_or_else(|| err(format!("expected a boolean, got {c}")))
    }

    fn int(c: &Const) -> Result<i64, ComponentError> {
        match c {
            Const::Int(i) => Ok(*i),
            _ => Err(err(format!("expected an integer, got {c}"))),
        }
    }

    fn real(v: f64) -> R {
        Const::real(v)
    }

    fn any_bot(args: &[Const]) -> bool {
        args.iter().any(Const::is_bot)
    }

    /// Integer result when both sides are integers, real otherwise.
    pub fn arith(
        a: &Const,
        b: &Const,
        fi: fn(i64, i64) -> Option<i64>,
        ff: fn(f64, f64) -> f64,
    ) -> R {
        match (a, b) {
            (Const::Bot, _) | (_, Const::Bot) => Ok(Const::Bot),
            (Const::Int(x), Const::Int(y)) => fi(*x, *y).map(Const::Int).ok_or_else(|| err("integer overflow")),
            _ => real(ff(num(a)?, num(b)?)),
        }
    }

    pub fn add(a: &Const, b: &Const) -> R {
        arith(a, b, i64::checked_add, |x, y| x + y)
    }

    pub fn sub(a: &Const, b: &Const) -> R {
        arith(a, b, i64::checked_sub, |x, y| x - y)
    }

    pub fn max(a: &Const, b: &Const) -> R {
        arith(a, b, |x, y| Some(x.max(y)), f64::max)
    }

    pub fn min(a: &Const, b: &Const) -> R {
        arith(a, b, |x, y| Some(x.min(y)), f64::min)
    }

    fn strict2(f: fn(&Const, &Const) -> R) -> impl Fn(&[Const]) -> R {
        move |a| if any_bot(a) { Ok(Const::Bot) } else { f(&a[0], &a[1]) }
    }

    fn strict1(f: fn(&Const) -> R) -> impl Fn(&[Const]) -> R {
        move |a| if any_bot(a) { Ok(Const::Bot) } else { f(&a[0]) }
    }

    fn cmp(f: fn(f64, f64) -> bool) -> impl Fn(&[Const]) -> R {
        move |a| {
            if any_bot(a) {
                return Ok(Const::Bot);
            }
            Ok(Const::Bool(f(num(&a[0])?, num(&a[1])?)))
        }
    }

    fn fold_step(op: fn(&Const, &Const) -> R) -> impl Fn(&[Const]) -> R {
        move |a| match &a[0] {
            Const::Bot => Ok(Const::Bot),
            Const::Bool(false) => Ok(a[2].clone()),
            Const::Bool(true) => op(&a[1], &a[2]),
            other => Err(err(format!("presence flag must be boolean, got {other}"))),
        }
    }

    fn presences(ps: &[Const]) -> Result<Option<Vec<bool>>, ComponentError> {
        if any_bot(ps) {
            return Ok(None);
        }
        ps.iter().map(boolean).collect::<Result<Vec<_>, _>>().map(Some)
    }

    fn slice_start(i: i64, len: usize) -> usize {
        i.clamp(0, len as i64) as usize
    }

    pub(super) fn install(r: &mut ComponentRegistry) {
        use Arity::{AtLeast, Exact};
        r.register("add", Exact(2), strict2(add));
        r.register("sub", Exact(2), strict2(sub));
        r.register("max", Exact(2), strict2(max));
        r.register("min", Exact(2), strict2(min));
        r.register(
            "mul",
            Exact(2),
            strict2(|a, b| arith(a, b, i64::checked_mul, |x, y| x * y)),
        );
        r.register("neg", Exact(1), strict1(|a| sub(&Const::Int(0), a)));
        r.register("abs", Exact(1), strict1(|a| match a {
            Const::Int(i) => i.checked_abs().map(Const::Int).ok_or_else(|| err("integer overflow")),
            _ => real(num(a)?.abs()),
        }));
        r.register("absdiff", Exact(2), strict2(|a, b| real((num(a)? - num(b)?).abs())));
        r.register("one_minus", Exact(1), strict1(|a| real(1.0 - num(a)?)));
        r.register("round", Exact(1), strict1(|a| {
            let v = num(a)?.round();
            if v.is_finite() && v.abs() < 9.0e18 {
                Ok(Const::Int(v as i64))
            } else {
                Err(err("cannot round a non-finite value"))
            }
        }));
        r.register("ind", Exact(1), strict1(|a| Ok(Const::Int(boolean(a)? as i64))));
        r.register("le", Exact(2), cmp(|a, b| a <= b));
        r.register("lt", Exact(2), cmp(|a, b| a < b));
        r.register("ge", Exact(2), cmp(|a, b| a >= b));
        r.register("gt", Exact(2), cmp(|a, b| a > b));
        r.register("eq", Exact(2), strict2(|a, b| Ok(Const::Bool(a.loosely_equals(b)))));
        r.register("ne", Exact(2), strict2(|a, b| Ok(Const::Bool(!a.loosely_equals(b)))));
        r.register("not", Exact(1), strict1(|a| Ok(Const::Bool(!boolean(a)?))));
        r.register("and", Exact(2), strict2(|a, b| Ok(Const::Bool(boolean(a)? && boolean(b)?))));
        r.register("or", Exact(2), strict2(|a, b| Ok(Const::Bool(boolean(a)? || boolean(b)?))));
        r.register("implies", Exact(2), strict2(|a, b| Ok(Const::Bool(!boolean(a)? || boolean(b)?))));
        r.register("ite", Exact(3), |a| match &a[0] {
            Const::Bot => Ok(Const::Bot),
            c => Ok(if boolean(c)? { a[1].clone() } else { a[2].clone() }),
        });
        // gate(c, v): abstain when c holds.
        r.register("gate", Exact(2), |a| match &a[0] {
            Const::Bot => Ok(Const::Bot),
            c => Ok(if boolean(c)? { Const::Bot } else { a[1].clone() }),
        });
        // seq(s, v): v unless s abstained.
        r.register("seq", Exact(2), |a| Ok(if a[0].is_bot() { Const::Bot } else { a[1].clone() }));
        r.register("coalesce", Exact(2), |a| Ok(if a[0].is_bot() { a[1].clone() } else { a[0].clone() }));
        r.register("is_bot", Exact(1), |a| Ok(Const::Bool(a[0].is_bot())));
        // Score of a component whose input may have abstained: an abstained
        // input forces abstention for every threshold.
        r.register("abstain_score", Exact(2), |a| {
            if a[0].is_bot() {
                Ok(Const::Real(f64::NEG_INFINITY))
            } else if a[1].is_bot() {
                Err(err("confidence must not abstain"))
            } else {
                real(num(&a[1])?)
            }
        });
        r.register("mask_present", Exact(2), |a| match &a[0] {
            Const::Bot => Ok(Const::Bot),
            Const::Bool(false) => Ok(Const::Bool(false)),
            Const::Bool(true) => Ok(if a[1].is_bot() { Const::Bot } else { Const::Bool(true) }),
            other => Err(err(format!("presence flag must be boolean, got {other}"))),
        });
        r.register("filter_present", Exact(2), |a| match &a[0] {
            Const::Bot => Ok(Const::Bot),
            Const::Bool(false) => Ok(Const::Bool(false)),
            Const::Bool(true) => match &a[1] {
                Const::Bot => Ok(Const::Bot),
                c => Ok(Const::Bool(boolean(c)?)),
            },
            other => Err(err(format!("presence flag must be boolean, got {other}"))),
        });
        r.register("fold_add", Exact(3), fold_step(add));
        r.register("fold_sub", Exact(3), fold_step(sub));
        r.register("fold_max", Exact(3), fold_step(max));
        r.register("fold_min", Exact(3), fold_step(min));
        // slice_present(s, i, j, p_0..p_{N-1}): whether output slot s of
        // the half-open clamped window [i, j) over present elements exists.
        r.register("slice_present", AtLeast(4), |a| {
            if any_bot(&a[1..]) {
                return Ok(Const::Bot);
            }
            let Some(ps) = presences(&a[3..])? else {
                return Ok(Const::Bot);
            };
            let (s, i, j) = (int(&a[0])?, int(&a[1])?, int(&a[2])?);
            let len = ps.iter().filter(|p| **p).count();
            let start = slice_start(i, len);
            let end = j.clamp(start as i64, len as i64) as usize;
            Ok(Const::Bool(s >= 0 && start + (s as usize) < end))
        });
        // slice_value(s, i, p_0..p_{N-1}, v_0..v_{N-1}): value of output slot
        // s; the last slot's value when the slot does not exist.
        r.register("slice_value", AtLeast(4), |a| {
            let rest = &a[2..];
            if rest.len() % 2 != 0 {
                return Err(err("slice_value needs as many values as presence flags"));
            }
            let n = rest.len() / 2;
            if a[1].is_bot() {
                return Ok(Const::Bot);
            }
            let Some(ps) = presences(&rest[..n])? else {
                return Ok(Const::Bot);
            };
            let (s, i) = (int(&a[0])?, int(&a[1])?);
            let len = ps.iter().filter(|p| **p).count();
            let idx = slice_start(i, len) as i64 + s;
            let slot = ps
                .iter()
                .enumerate()
                .filter(|(_, p)| **p)
                .nth(idx.max(0) as usize)
                .map(|(k, _)| k)
                .unwrap_or(n - 1);
            Ok(rest[n + slot].clone())
        });
        // list(p_0..p_{N-1}, v_0..v_{N-1}): rendered list of present values.
        r.register("list", AtLeast(0), |a| {
            if a.len() % 2 != 0 {
                return Err(err("list needs as many values as presence flags"));
            }
            let n = a.len() / 2;
            let Some(ps) = presences(&a[..n])? else {
                return Ok(Const::Bot);
            };
            let mut items = Vec::new();
            for (k, p) in ps.iter().enumerate() {
                if *p {
                    if a[n + k].is_bot() {
                        return Ok(Const::Bot);
                    }
                    items.push(a[n + k].to_string());
                }
            }
            Ok(Const::Token(format!("[{}]", items.join(", "))))
        });
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound input variable {0:?}")]
    UnboundInput(String),
    #[error("unbound ground-truth variable {0:?}")]
    UnboundTruth(String),
    #[error("unbound local {0:?}")]
    UnboundLocal(String),
    #[error("ground truth {0:?} read under test semantics")]
    TruthInTest(String),
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
    #[error("component {component:?} expects {expected} arguments, got {got}")]
    Arity {
        component: String,
        expected: Arity,
        got: usize,
    },
    #[error("component {component:?} failed: {message}")]
    Component { component: String, message: String },
    #[error("hole encountered under test semantics")]
    Hole,
    #[error("specification score must be a number, got {0}")]
    ScoreNotReal(Const),
    #[error("specification predicate must be boolean, got {0}")]
    SpecNotBool(Const),
    #[error("no node at path {0}")]
    BadPath(NodePath),
    #[error("duplicate binding {0:?} in one let")]
    DuplicateBinding(String),
    #[error("name {0:?} is both an input and a ground-truth variable")]
    OverlappingName(String),
    #[error("ground-truth variable {0:?} outside a specification predicate")]
    TruthOutsideSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semantics {
    Train,
    Test,
}

type LetIndex<'a> = HashMap<usize, HashMap<&'a str, usize>>;

fn node_key(e: &Expr) -> usize {
    e as *const Expr as usize
}

fn index_lets<'a>(e: &'a Expr, out: &mut LetIndex<'a>) -> Result<(), EvalError> {
    if let Expr::Let { bindings, .. } = e {
        let mut names = HashMap::with_capacity(bindings.len());
        for (i, (name, _)) in bindings.iter().enumerate() {
            if names.insert(name.as_str(), i).is_some() {
                return Err(EvalError::DuplicateBinding(name.clone()));
            }
        }
        out.insert(node_key(e), names);
    }
    for c in e.children() {
        index_lets(c, out)?;
    }
    Ok(())
}

struct Frame<'a, 'p> {
    bindings: &'a [(String, Expr)],
    names: &'p HashMap<&'a str, usize>,
    cells: Vec<OnceCell<Result<Const, EvalError>>>,
    parent: Option<Scope<'a, 'p>>,
}

#[derive(Clone, Copy)]
struct Scope<'a, 'p> {
    frame: &'p Frame<'a, 'p>,
    limit: usize,
}

/// Evaluator for one program, reusable across valuations.
pub struct Evaluator<'a> {
    root: &'a Expr,
    reg: &'a ComponentRegistry,
    lets: LetIndex<'a>,
}

impl<'a> Evaluator<'a> {
    pub fn new(root: &'a Expr, reg: &'a ComponentRegistry) -> Result<Self, EvalError> {
        let mut lets = HashMap::new();
        index_lets(root, &mut lets)?;
        Ok(Self { root, reg, lets })
    }

    pub fn root(&self) -> &'a Expr {
        self.root
    }

    pub fn eval(&self, val: &Valuation, sem: Semantics) -> Result<Const, EvalError> {
        self.eval_in(self.root, None, val, sem)
    }

    /// Evaluates the node at `path` in the scope of the enclosing bindings.
    pub fn eval_at(&self, path: &NodePath, val: &Valuation, sem: Semantics) -> Result<Const, EvalError> {
        self.walk(self.root, &path.0, None, val, sem)
            .ok_or_else(|| EvalError::BadPath(path.clone()))?
    }

    fn walk<'p>(
        &'p self,
        e: &'a Expr,
        path: &[usize],
        scope: Option<Scope<'a, 'p>>,
        val: &Valuation,
        sem: Semantics,
    ) -> Option<Result<Const, EvalError>> {
        let Some((&i, rest)) = path.split_first() else {
            return Some(self.eval_in(e, scope, val, sem));
        };
        match e {
            Expr::Let { bindings, body } => {
                let frame = self.frame(e, bindings, scope);
                let n = bindings.len();
                let target: &'a Expr = if i < n { &bindings[i].1 } else if i == n { body } else { return None };
                self.walk(target, rest, Some(Scope { frame: &frame, limit: i.min(n) }), val, sem)
            }
            _ => self.walk(e.child(i)?, rest, scope, val, sem),
        }
    }

    fn frame<'p>(&'p self, e: &'a Expr, bindings: &'a [(String, Expr)], parent: Option<Scope<'a, 'p>>) -> Frame<'a, 'p> {
        Frame {
            bindings,
            names: &self.lets[&node_key(e)],
            cells: (0..bindings.len()).map(|_| OnceCell::new()).collect(),
            parent,
        }
    }

    fn lookup<'p>(&'p self, name: &str, mut scope: Option<Scope<'a, 'p>>, val: &Valuation, sem: Semantics) -> Result<Const, EvalError> {
        while let Some(s) = scope {
            if let Some(&i) = s.frame.names.get(name) {
                if i < s.limit {
                    let frame = s.frame;
                    return frame.cells[i]
                        .get_or_init(|| {
                            self.eval_in(&frame.bindings[i].1, Some(Scope { frame, limit: i }), val, sem)
                        })
                        .clone();
                }
            }
            scope = s.frame.parent;
        }
        Err(EvalError::UnboundLocal(name.to_string()))
    }

    fn eval_in<'p>(&'p self, e: &'a Expr, scope: Option<Scope<'a, 'p>>, val: &Valuation, sem: Semantics) -> Result<Const, EvalError> {
        match e {
            Expr::Constant(c) => Ok(c.clone()),
            Expr::InputVar(x) => val.inputs.get(x).cloned().ok_or_else(|| EvalError::UnboundInput(x.clone())),
            Expr::GroundTruthVar(y) => match sem {
                Semantics::Test => Err(EvalError::TruthInTest(y.clone())),
                Semantics::Train => val
                    .ground_truth
                    .get(y)
                    .cloned()
                    .ok_or_else(|| EvalError::UnboundTruth(y.clone())),
            },
            Expr::Apply { component, args } => {
                let comp = self
                    .reg
                    .get(component)
                    .ok_or_else(|| EvalError::UnknownComponent(component.clone()))?;
                if !comp.arity.accepts(args.len()) {
                    return Err(EvalError::Arity {
                        component: component.clone(),
                        expected: comp.arity,
                        got: args.len(),
                    });
                }
                let vals = args
                    .iter()
                    .map(|a| self.eval_in(a, scope, val, sem))
                    .collect::<Result<Vec<_>, _>>()?;
                (comp.func)(&vals).map_err(|err| EvalError::Component {
                    component: component.clone(),
                    message: err.message,
                })
            }
            Expr::Spec(s) => match sem {
                Semantics::Train => {
                    let q = self.eval_in(&s.spec, scope, val, sem)?;
                    match q {
                        Const::Bool(_) => Ok(q),
                        other => Err(EvalError::SpecNotBool(other)),
                    }
                }
                Semantics::Test => {
                    let c = s.threshold.value().ok_or(EvalError::Hole)?;
                    let z = self.eval_in(&s.score, scope, val, sem)?;
                    let z = z.as_f64().ok_or(EvalError::ScoreNotReal(z))?;
                    Ok(Const::Bool(z <= c))
                }
            },
            Expr::Let { bindings, body } => {
                let frame = self.frame(e, bindings, scope);
                self.eval_in(body, Some(Scope { frame: &frame, limit: bindings.len() }), val, sem)
            }
            Expr::Local(name) => self.lookup(name, scope, val, sem),
        }
    }
}

pub fn eval_train(e: &Expr, a: &Valuation, reg: &ComponentRegistry) -> Result<Const, EvalError> {
    Evaluator::new(e, reg)?.eval(a, Semantics::Train)
}

pub fn eval_test(e: &Expr, b: &Valuation, reg: &ComponentRegistry) -> Result<Const, EvalError> {
    Evaluator::new(e, reg)?.eval(b, Semantics::Test)
}

/// Specification nodes of a program, each list in post-order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecPartition {
    pub threshold_holes: Vec<NodePath>,
    pub eps_holes: Vec<NodePath>,
    pub concrete: Vec<NodePath>,
}

impl SpecPartition {
    pub fn holed(&self) -> Vec<NodePath> {
        let mut v: Vec<NodePath> = self.threshold_holes.iter().chain(&self.eps_holes).cloned().collect();
        v.sort_by(|a, b| post_order_cmp(a, b));
        v
    }

    pub fn total(&self) -> usize {
        self.threshold_holes.len() + self.eps_holes.len() + self.concrete.len()
    }
}

fn visit_post<'a>(e: &'a Expr, path: &mut Vec<usize>, out: &mut Vec<(NodePath, &'a SpecExpr)>) {
    for (i, c) in e.children().into_iter().enumerate() {
        path.push(i);
        visit_post(c, path, out);
        path.pop();
    }
    if let Expr::Spec(s) = e {
        out.push((NodePath(path.clone()), s));
    }
}

/// All specification nodes with their paths, in post-order.
pub fn spec_nodes(e: &Expr) -> Vec<(NodePath, &SpecExpr)> {
    let mut out = Vec::new();
    visit_post(e, &mut Vec::new(), &mut out);
    out
}

pub fn collect_specs(e: &Expr) -> SpecPartition {
    let mut part = SpecPartition::default();
    for (path, s) in spec_nodes(e) {
        match s.hole_kind() {
            Some(HoleKind::Threshold) => part.threshold_holes.push(path),
            Some(HoleKind::Eps) => part.eps_holes.push(path),
            None => part.concrete.push(path),
        }
    }
    part
}

/// Post-order comparison: descendants first, then left to right.
pub fn post_order_cmp(a: &NodePath, b: &NodePath) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for (x, y) in a.0.iter().zip(&b.0) {
        if x != y {
            return x.cmp(y);
        }
    }
    // One is a prefix of the other: the longer path is the descendant.
    match a.0.len().cmp(&b.0.len()) {
        Ordering::Greater => Ordering::Less,
        Ordering::Less => Ordering::Greater,
        Ordering::Equal => Ordering::Equal,
    }
}

pub fn bottom_up_order(specs: &[NodePath]) -> Vec<NodePath> {
    let mut v = specs.to_vec();
    v.sort_by(post_order_cmp);
    v
}

pub fn is_full_sketch(e: &Expr) -> bool {
    spec_nodes(e).iter().all(|(_, s)| s.has_hole())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FillError {
    #[error("no specification at {0}")]
    NotASpec(NodePath),
    #[error("specification at {0} has no hole")]
    NoHole(NodePath),
    #[error("fill value must not be NaN")]
    NaN,
}

/// Replaces the hole of the specification at `path` with `value`.
pub fn fill(e: &Expr, path: &NodePath, value: f64) -> Result<Expr, FillError> {
    fill_many(e, &[(path.clone(), value)])
}

pub fn fill_many(e: &Expr, fills: &[(NodePath, f64)]) -> Result<Expr, FillError> {
    let mut out = e.clone();
    for (path, value) in fills {
        if value.is_nan() {
            return Err(FillError::NaN);
        }
        let Some(Expr::Spec(s)) = out.at_mut(path) else {
            return Err(FillError::NotASpec(path.clone()));
        };
        if s.threshold.is_hole() {
            s.threshold = Param::Value(*value);
        } else if s.eps.is_hole() {
            s.eps = Param::Value(*value);
        } else {
            return Err(FillError::NoHole(path.clone()));
        }
    }
    Ok(out)
}

/// Structural checks beyond evaluation: at most one hole per
/// specification, registered components with matching arity, ground truth
/// only inside predicates, unique binding names and bound locals.
pub fn validate(e: &Expr, reg: &ComponentRegistry) -> Result<(), ValidationError> {
    fn go(e: &Expr, reg: &ComponentRegistry, in_q: bool, scope: &mut Vec<Vec<String>>) -> Result<(), ValidationError> {
        match e {
            Expr::Constant(Const::Real(r)) if r.is_nan() => Err(ValidationError::NaN),
            Expr::Constant(_) | Expr::InputVar(_) => Ok(()),
            Expr::GroundTruthVar(y) => {
                if in_q {
                    Ok(())
                } else {
                    Err(ValidationError::Eval(EvalError::TruthOutsideSpec(y.clone())))
                }
            }
            Expr::Apply { component, args } => {
                let comp = reg
                    .get(component)
                    .ok_or_else(|| ValidationError::Eval(EvalError::UnknownComponent(component.clone())))?;
                if !comp.arity.accepts(args.len()) {
                    return Err(ValidationError::Eval(EvalError::Arity {
                        component: component.clone(),
                        expected: comp.arity,
                        got: args.len(),
                    }));
                }
                args.iter().try_for_each(|a| go(a, reg, in_q, scope))
            }
            Expr::Spec(s) => {
                if s.threshold.is_hole() && s.eps.is_hole() {
                    return Err(ValidationError::TwoHoles);
                }
                for p in [&s.threshold, &s.eps] {
                    if let Param::Value(v) = p {
                        if v.is_nan() {
                            return Err(ValidationError::NaN);
                        }
                    }
                }
                if let Param::Value(eps) = s.eps {
                    if !(0.0..=1.0).contains(&eps) {
                        return Err(ValidationError::EpsRange(eps));
                    }
                }
                go(&s.score, reg, in_q, scope)?;
                go(&s.spec, reg, true, scope)
            }
            Expr::Let { bindings, body } => {
                let mut seen = BTreeSet::new();
                scope.push(Vec::new());
                for (name, b) in bindings {
                    if !seen.insert(name) {
                        scope.pop();
                        return Err(ValidationError::Eval(EvalError::DuplicateBinding(name.clone())));
                    }
                    let r = go(b, reg, in_q, scope);
                    if r.is_err() {
                        scope.pop();
                        return r;
                    }
                    scope.last_mut().expect("pushed above").push(name.clone());
                }
                let r = go(body, reg, in_q, scope);
                scope.pop();
                r
            }
            Expr::Local(name) => {
                if scope.iter().any(|f| f.contains(name)) {
                    Ok(())
                } else {
                    Err(ValidationError::Eval(EvalError::UnboundLocal(name.clone())))
                }
            }
        }
    }
    go(e, reg, false, &mut Vec::new())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("a specification may not have both its threshold and eps as holes")]
    TwoHoles,
    #[error("NaN constant")]
    NaN,
    #[error("eps = {0} outside [0, 1]")]
    EpsRange(f64),
}

/// For every specification node (post-order index), the post-order indices
/// of the specification nodes its score may force under test semantics,
/// following locals into the bindings they name. Predicates are skipped:
/// they are only evaluated under train semantics.
pub fn score_dependencies(e: &Expr) -> Vec<BTreeSet<usize>> {
    let nodes = spec_nodes(e);
    let index: HashMap<usize, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, (_, s))| (*s as *const SpecExpr as usize, i))
        .collect();

    struct Ctx<'a> {
        index: HashMap<usize, usize>,
        // binding identity (let node key, binding index) -> reachable specs
        memo: HashMap<(usize, usize), BTreeSet<usize>>,
        per_spec: HashMap<usize, BTreeSet<usize>>,
        _p: std::marker::PhantomData<&'a ()>,
    }

    type Scopes<'a> = Vec<(&'a Expr, usize)>;

    fn reach<'a>(e: &'a Expr, scopes: &Scopes<'a>, cx: &mut Ctx<'a>, out: &mut BTreeSet<usize>) {
        match e {
            Expr::Spec(s) => {
                out.insert(cx.index[&(s as *const SpecExpr as usize)]);
                reach(&s.score, scopes, cx, out);
            }
            Expr::Let { bindings, body } => {
                // Bindings are reached through locals only.
                let mut inner = scopes.clone();
                inner.push((e, bindings.len()));
                reach(body, &inner, cx, out);
            }
            Expr::Local(name) => {
                for (depth, (let_node, limit)) in scopes.iter().enumerate().rev() {
                    let Expr::Let { bindings, .. } = let_node else { continue };
                    if let Some(i) = bindings[..*limit].iter().position(|(n, _)| n == name) {
                        let key = (node_key(let_node), i);
                        if let Some(r) = cx.memo.get(&key) {
                            out.extend(r.iter().copied());
                        } else {
                            let mut inner: Scopes<'a> = scopes[..depth].to_vec();
                            inner.push((let_node, i));
                            let mut r = BTreeSet::new();
                            reach(&bindings[i].1, &inner, cx, &mut r);
                            out.extend(r.iter().copied());
                            cx.memo.insert(key, r);
                        }
                        return;
                    }
                }
            }
            _ => {
                for c in e.children() {
                    reach(c, scopes, cx, out);
                }
            }
        }
    }

    // Walk the whole tree tracking scopes; at each spec compute its score reach.
    fn walk<'a>(e: &'a Expr, scopes: &Scopes<'a>, cx: &mut Ctx<'a>) {
        match e {
            Expr::Spec(s) => {
                let mut r = BTreeSet::new();
                reach(&s.score, scopes, cx, &mut r);
                cx.per_spec.insert(cx.index[&(s as *const SpecExpr as usize)], r);
                walk(&s.score, scopes, cx);
                walk(&s.spec, scopes, cx);
            }
            Expr::Let { bindings, body } => {
                for (i, (_, b)) in bindings.iter().enumerate() {
                    let mut inner = scopes.clone();
                    inner.push((e, i));
                    walk(b, &inner, cx);
                }
                let mut inner = scopes.clone();
                inner.push((e, bindings.len()));
                walk(body, &inner, cx);
            }
            _ => {
                for c in e.children() {
                    walk(c, scopes, cx);
                }
            }
        }
    }

    let mut cx = Ctx {
        index,
        memo: HashMap::new(),
        per_spec: HashMap::new(),
        _p: std::marker::PhantomData,
    };
    walk(e, &Vec::new(), &mut cx);
    (0..nodes.len())
        .map(|i| cx.per_spec.remove(&i).unwrap_or_default())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg() -> ComponentRegistry {
        ComponentRegistry::standard()
    }

    fn simple_spec(threshold: Param, eps: Param) -> Expr {
        Expr::Spec(SpecExpr::new(
            Expr::input("x"),
            threshold,
            Expr::apply("eq", vec![Expr::truth("y"), Expr::int(1)]),
            eps,
            Mode::Conditional,
        ))
    }

    #[test]
    fn train_examples() {
        let a = Valuation::new().with_input("x", Const::Real(0.3)).with_truth("y", Const::Int(1));
        assert_eq!(eval_train(&Expr::int(5), &a, &reg()).unwrap(), Const::Int(5));
        assert_eq!(
            eval_train(&simple_spec(Param::hole(), Param::Value(0.05)), &a, &reg()).unwrap(),
            Const::Bool(true)
        );
        let sum = Expr::apply("add", vec![Expr::int(2), Expr::int(3)]);
        assert_eq!(eval_train(&sum, &a, &reg()).unwrap(), Const::Int(5));
    }

    #[test]
    fn test_examples() {
        let s = simple_spec(Param::Value(0.5), Param::Value(0.05));
        let b = Valuation::new().with_input("x", Const::Real(0.3));
        assert_eq!(eval_test(&s, &b, &reg()).unwrap(), Const::Bool(true));
        let b = Valuation::new().with_input("x", Const::Real(0.7));
        assert_eq!(eval_test(&s, &b, &reg()).unwrap(), Const::Bool(false));
        let holed = simple_spec(Param::hole(), Param::Value(0.05));
        assert_eq!(eval_test(&holed, &b, &reg()), Err(EvalError::Hole));
    }

    #[test]
    fn evaluation_errors() {
        let v = Valuation::new();
        assert_eq!(
            eval_train(&Expr::input("z"), &v, &reg()),
            Err(EvalError::UnboundInput("z".into()))
        );
        assert!(matches!(
            eval_train(&Expr::apply("nope", vec![]), &v, &reg()),
            Err(EvalError::UnknownComponent(_))
        ));
        assert!(matches!(
            eval_train(&Expr::apply("add", vec![Expr::int(1)]), &v, &reg()),
            Err(EvalError::Arity { .. })
        ));
        assert!(matches!(
            eval_test(&Expr::truth("y"), &v, &reg()),
            Err(EvalError::TruthInTest(_))
        ));
    }

    #[test]
    fn let_is_lazy_and_scoped() {
        // The unused binding would fail if evaluated.
        let e = Expr::Let {
            bindings: vec![
                ("a".into(), Expr::int(2)),
                ("bad".into(), Expr::input("missing")),
                ("b".into(), Expr::apply("add", vec![Expr::local("a"), Expr::local("a")])),
            ],
            body: Box::new(Expr::apply("mul", vec![Expr::local("b"), Expr::local("b")])),
        };
        assert_eq!(eval_test(&e, &Valuation::new(), &reg()).unwrap(), Const::Int(16));
        // A binding cannot see itself or later bindings.
        let e = Expr::Let {
            bindings: vec![("a".into(), Expr::local("b")), ("b".into(), Expr::int(1))],
            body: Box::new(Expr::local("a")),
        };
        assert_eq!(
            eval_test(&e, &Valuation::new(), &reg()),
            Err(EvalError::UnboundLocal("b".into()))
        );
    }

    #[test]
    fn eval_at_uses_enclosing_bindings() {
        let spec = SpecExpr::new(
            Expr::local("s"),
            Param::hole(),
            Expr::truth("y"),
            Param::Value(0.1),
            Mode::Implication,
        );
        let e = Expr::Let {
            bindings: vec![("s".into(), Expr::apply("one_minus", vec![Expr::input("x")]))],
            body: Box::new(Expr::Spec(spec)),
        };
        let r = reg();
        let ev = Evaluator::new(&e, &r).unwrap();
        let v = Valuation::new().with_input("x", Const::Real(0.25)).with_truth("y", Const::Bool(true));
        let score = ev.eval_at(&NodePath(vec![1, 0]), &v, Semantics::Test).unwrap();
        assert_eq!(score, Const::Real(0.75));
        let q = ev.eval_at(&NodePath(vec![1, 1]), &v, Semantics::Train).unwrap();
        assert_eq!(q, Const::Bool(true));
        assert!(ev.eval_at(&NodePath(vec![5]), &v, Semantics::Test).is_err());
    }

    fn nested() -> Expr {
        // Spec B whose score contains spec A.
        let a = Expr::Spec(SpecExpr::new(
            Expr::input("x"),
            Param::hole(),
            Expr::truth("y"),
            Param::Value(0.1),
            Mode::Conditional,
        ));
        Expr::Spec(SpecExpr::new(
            Expr::apply("ind", vec![a]),
            Param::Value(0.5),
            Expr::boolean(true),
            Param::hole(),
            Mode::Conditional,
        ))
    }

    #[test]
    fn collect_specs_examples() {
        assert_eq!(collect_specs(&Expr::int(1)), SpecPartition::default());
        let p = collect_specs(&nested());
        assert_eq!(p.threshold_holes, vec![NodePath(vec![0, 0])]);
        assert_eq!(p.eps_holes, vec![NodePath::root()]);
        assert_eq!(p.holed(), vec![NodePath(vec![0, 0]), NodePath::root()]);
        let c = collect_specs(&simple_spec(Param::Value(0.1), Param::Value(0.1)));
        assert_eq!(c.concrete, vec![NodePath::root()]);
        assert!(c.threshold_holes.is_empty() && c.eps_holes.is_empty());
    }

    #[test]
    fn bottom_up_examples() {
        let single = vec![NodePath(vec![1])];
        assert_eq!(bottom_up_order(&single), single);
        let (a, b) = (NodePath(vec![0, 0]), NodePath::root());
        assert_eq!(bottom_up_order(&[b.clone(), a.clone()]), vec![a, b]);
        let (l, r) = (NodePath(vec![0]), NodePath(vec![1]));
        assert_eq!(bottom_up_order(&[r.clone(), l.clone()]), vec![l, r]);
    }

    #[test]
    fn full_sketch_examples() {
        assert!(!is_full_sketch(&simple_spec(Param::Value(0.1), Param::Value(0.1))));
        assert!(is_full_sketch(&nested()));
        assert!(is_full_sketch(&Expr::int(3)));
    }

    #[test]
    fn fill_removes_hole_in_place() {
        let e = nested();
        let before = collect_specs(&e);
        let filled = fill(&e, &NodePath(vec![0, 0]), 0.4).unwrap();
        let after = collect_specs(&filled);
        assert!(after.threshold_holes.is_empty());
        assert_eq!(after.eps_holes, before.eps_holes);
        assert_eq!(after.concrete, vec![NodePath(vec![0, 0])]);
        assert!(matches!(fill(&filled, &NodePath(vec![0, 0]), 1.0), Err(FillError::NoHole(_))));
        assert!(matches!(fill(&e, &NodePath(vec![0]), 1.0), Err(FillError::NotASpec(_))));
    }

    #[test]
    fn dependencies_follow_locals() {
        let a = Expr::Spec(SpecExpr::new(
            Expr::input("x"),
            Param::hole(),
            Expr::truth("y"),
            Param::Value(0.1),
            Mode::Implication,
        ));
        let b = Expr::Spec(SpecExpr::new(
            Expr::apply("abstain_score", vec![Expr::local("t0"), Expr::input("x")]),
            Param::hole(),
            Expr::truth("y"),
            Param::Value(0.1),
            Mode::Implication,
        ));
        let e = Expr::Let {
            bindings: vec![
                ("t0".into(), Expr::apply("gate", vec![a, Expr::int(1)])),
                ("t1".into(), Expr::apply("gate", vec![b, Expr::int(2)])),
            ],
            body: Box::new(Expr::apply("add", vec![Expr::local("t0"), Expr::local("t1")])),
        };
        let deps = score_dependencies(&e);
        assert_eq!(deps.len(), 2);
        assert!(deps[0].is_empty());
        assert_eq!(deps[1], BTreeSet::from([0]));
    }

    #[test]
    fn validation() {
        let r = reg();
        assert!(validate(&nested(), &r).is_ok());
        let both = simple_spec(Param::hole(), Param::hole());
        assert_eq!(validate(&both, &r), Err(ValidationError::TwoHoles));
        let truth_outside = Expr::apply("add", vec![Expr::truth("y"), Expr::int(1)]);
        assert!(matches!(
            validate(&truth_outside, &r),
            Err(ValidationError::Eval(EvalError::TruthOutsideSpec(_)))
        ));
    }

    #[test]
    fn json_round_trip() {
        let e = Expr::Let {
            bindings: vec![("t".into(), nested())],
            body: Box::new(Expr::apply(
                "add",
                vec![
                    Expr::local("t"),
                    Expr::real(f64::NEG_INFINITY),
                    Expr::constant(Const::Token("tok".into())),
                    Expr::constant(Const::Bot),
                ],
            )),
        };
        let s = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        let named = simple_spec(Param::named("f1"), Param::Value(0.05));
        let s = serde_json::to_string(&named).unwrap();
        assert!(s.contains("\"??f1\""));
        assert_eq!(serde_json::from_str::<Expr>(&s).unwrap(), named);
        let v = Valuation::new().with_input("x", Const::Real(0.5)).with_truth("y", Const::Int(3));
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"inputs":{"x":0.5},"ground_truth":{"y":3}}"#);
        assert_eq!(serde_json::from_str::<Valuation>(&s).unwrap(), v);
    }

    #[test]
    fn abstention_components() {
        let r = reg();
        let call = |name: &str, args: Vec<Const>| (r.get(name).unwrap().func)(&args).unwrap();
        assert_eq!(call("gate", vec![Const::Bool(true), Const::Int(3)]), Const::Bot);
        assert_eq!(call("gate", vec![Const::Bool(false), Const::Int(3)]), Const::Int(3));
        assert_eq!(
            call("abstain_score", vec![Const::Bot, Const::Real(0.9)]),
            Const::Real(f64::NEG_INFINITY)
        );
        assert_eq!(
            call("fold_add", vec![Const::Bool(false), Const::Bot, Const::Int(4)]),
            Const::Int(4)
        );
        let ps = vec![Const::Bool(true), Const::Bool(false), Const::Bool(true)];
        let vs = vec![Const::Int(10), Const::Int(20), Const::Int(30)];
        let mut args = vec![Const::Int(1), Const::Int(0)];
        args.extend(ps.clone());
        args.extend(vs.clone());
        assert_eq!(call("slice_value", args), Const::Int(30));
        let mut args = vec![Const::Int(1), Const::Int(0), Const::Int(1)];
        args.extend(ps.clone());
        assert_eq!(call("slice_present", args), Const::Bool(false));
        let mut args = ps;
        args.extend(vs);
        assert_eq!(call("list", args), Const::Token("[10, 30]".into()));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5i64..5).prop_map(Expr::int),
            (-1.0..1.0f64).prop_map(Expr::real),
            Just(Expr::input("x")),
            Just(Expr::input("w")),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::apply("add", vec![a, b])),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::apply("max", vec![a, b])),
                (inner.clone(), -1.0..1.0f64, 0.01..0.5f64, any::<bool>()).prop_map(|(s, c, eps, m)| {
                    Expr::apply(
                        "ind",
                        vec![Expr::Spec(SpecExpr::new(
                            s,
                            Param::Value(c),
                            Expr::apply("eq", vec![Expr::truth("y"), Expr::int(1)]),
                            Param::Value(eps),
                            if m { Mode::Conditional } else { Mode::Implication },
                        ))],
                    )
                }),
            ]
        })
    }

    fn mutate_params(e: &Expr, c: f64, eps: f64) -> Expr {
        let mut out = e.clone();
        let paths: Vec<NodePath> = spec_nodes(e).into_iter().map(|(p, _)| p).collect();
        for p in paths {
            if let Some(Expr::Spec(s)) = out.at_mut(&p) {
                s.threshold = Param::Value(c);
                s.eps = Param::Value(eps);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn train_ignores_thresholds_and_eps(e in arb_expr(), x in -2.0..2.0f64, w in -2.0..2.0f64, y in 0i64..2, c in -3.0..3.0f64) {
            let v = Valuation::new().with_input("x", Const::Real(x)).with_input("w", Const::Real(w)).with_truth("y", Const::Int(y));
            let r = reg();
            prop_assert_eq!(eval_train(&e, &v, &r), eval_train(&mutate_params(&e, c, 0.3), &v, &r));
        }

        #[test]
        fn test_ignores_ground_truth(e in arb_expr(), x in -2.0..2.0f64, w in -2.0..2.0f64, y in 0i64..2) {
            let v = Valuation::new().with_input("x", Const::Real(x)).with_input("w", Const::Real(w)).with_truth("y", Const::Int(y));
            let r = reg();
            prop_assert_eq!(eval_test(&e, &v, &r), eval_test(&e, &v.test_view(), &r));
        }

        #[test]
        fn complete_spec_is_score_comparison(e in arb_expr(), x in -2.0..2.0f64, w in -2.0..2.0f64, c in -3.0..3.0f64, m in any::<bool>()) {
            let v = Valuation::new().with_input("x", Const::Real(x)).with_input("w", Const::Real(w));
            let r = reg();
            let spec = Expr::Spec(SpecExpr::new(e.clone(), Param::Value(c), Expr::boolean(true), Param::Value(0.1),
                if m { Mode::Conditional } else { Mode::Implication }));
            let z = eval_test(&e, &v, &r).unwrap().as_f64().unwrap();
            prop_assert_eq!(eval_test(&spec, &v, &r).unwrap(), Const::Bool(z <= c));
        }

        #[test]
        fn fill_keeps_other_holes_in_order(n in 1usize..6, pick in 0usize..6) {
            let specs: Vec<Expr> = (0..n).map(|_| Expr::apply("ind", vec![simple_spec(Param::hole(), Param::Value(0.1))])).collect();
            let e = specs.into_iter().reduce(|a, b| Expr::apply("add", vec![a, b])).unwrap();
            let before = collect_specs(&e).threshold_holes;
            let target = before[pick % n].clone();
            let after = collect_specs(&fill(&e, &target, 0.5).unwrap()).threshold_holes;
            let expected: Vec<NodePath> = before.into_iter().filter(|p| *p != target).collect();
            prop_assert_eq!(after, expected);
        }
    }
}
