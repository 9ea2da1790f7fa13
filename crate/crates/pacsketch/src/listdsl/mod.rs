//! A typed list-processing language over images with abstaining
//! components.
//!
//! Five components carry statistical specifications: `predict_int`,
//! `predict_float`, `cond-flip`, `cond-≤` and `cond-≥`. Under test
//! semantics each answers only when its score clears a threshold and
//! otherwise returns `∅`, which absorbs every operation it reaches. Under
//! train semantics every component returns the ground-truth behavior.
//!
//! Programs are values of [`DslProgram`]: a type-checked expression whose
//! annotated component occurrences are numbered `f1, f2, ...` in pre-order.

mod eval;
mod lower;
mod predictor;
mod random;
mod syntax;

pub(crate) use eval::{apply_train, coerce};
pub use eval::{dsl_eval, dsl_output_error, EvalMode, OutputError};
pub use lower::{flatten_example, length_bound, lower_to_sketch_ir, unroll_occurrences, LengthBound};
pub use predictor::{generate_examples, synth_predictor, ConfidenceModel, PredictorConfig};
pub use random::random_program;
pub use syntax::{parse_program, parse_type, ParseError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DslType {
    Bool,
    Int,
    Float,
    Image,
    List(Box<DslType>),
    Arrow(Box<DslType>, Box<DslType>),
}

impl DslType {
    pub fn list(elem: DslType) -> Self {
        DslType::List(Box::new(elem))
    }

    pub fn arrow(from: DslType, to: DslType) -> Self {
        DslType::Arrow(Box::new(from), Box::new(to))
    }

    /// Builds `a1 -> a2 -> ... -> out`.
    pub fn function(inputs: &[DslType], output: DslType) -> Self {
        inputs.iter().rev().fold(output, |acc, t| DslType::arrow(t.clone(), acc))
    }

    /// Splits a curried function type into its inputs and output.
    pub fn signature(&self) -> (Vec<DslType>, DslType) {
        let mut inputs = Vec::new();
        let mut t = self;
        while let DslType::Arrow(a, b) = t {
            inputs.push((**a).clone());
            t = b;
        }
        (inputs, t.clone())
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, DslType::Int | DslType::Float)
    }

    /// `int <: float`; otherwise equality.
    pub fn is_subtype_of(&self, other: &DslType) -> bool {
        self == other || (*self == DslType::Int && *other == DslType::Float)
    }

    pub fn contains_bool(&self) -> bool {
        match self {
            DslType::Bool => true,
            DslType::List(t) => t.contains_bool(),
            DslType::Arrow(a, b) => a.contains_bool() || b.contains_bool(),
            _ => false,
        }
    }
}

impl fmt::Display for DslType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslType::Bool => f.write_str("bool"),
            DslType::Int => f.write_str("int"),
            DslType::Float => f.write_str("float"),
            DslType::Image => f.write_str("image"),
            DslType::List(t) => write!(f, "list({t})"),
            DslType::Arrow(a, b) => match **a {
                DslType::Arrow(..) => write!(f, "({a}) -> {b}"),
                _ => write!(f, "{a} -> {b}"),
            },
        }
    }
}

impl FromStr for DslType {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_type(s)
    }
}

impl Serialize for DslType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DslType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prim {
    Add,
    Sub,
    Max,
    Min,
    Le,
    Eq,
    Ge,
    CondLe,
    CondGe,
    PredictInt,
    PredictFloat,
    CondFlip,
}

impl Prim {
    /// Enumeration order used by the synthesizer.
    pub const ALL: [Prim; 12] = [
        Prim::Add,
        Prim::Sub,
        Prim::Max,
        Prim::Min,
        Prim::Le,
        Prim::Eq,
        Prim::Ge,
        Prim::CondLe,
        Prim::CondGe,
        Prim::PredictInt,
        Prim::PredictFloat,
        Prim::CondFlip,
    ];

    pub fn arity(self) -> usize {
        match self {
            Prim::PredictInt | Prim::PredictFloat | Prim::CondFlip => 1,
            _ => 2,
        }
    }

    /// Whether the primitive carries a statistical specification.
    pub fn is_annotated(self) -> bool {
        matches!(
            self,
            Prim::CondLe | Prim::CondGe | Prim::PredictInt | Prim::PredictFloat | Prim::CondFlip
        )
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Prim::Add | Prim::Max | Prim::Min | Prim::Eq)
    }

    pub fn name(self) -> &'static str {
        match self {
            Prim::Add => "+",
            Prim::Sub => "-",
            Prim::Max => "max",
            Prim::Min => "min",
            Prim::Le => "≤",
            Prim::Eq => "=",
            Prim::Ge => "≥",
            Prim::CondLe => "cond-≤",
            Prim::CondGe => "cond-≥",
            Prim::PredictInt => "predict_int",
            Prim::PredictFloat => "predict_float",
            Prim::CondFlip => "cond-flip",
        }
    }

    pub fn from_name(s: &str) -> Option<Prim> {
        Some(match s {
            "+" => Prim::Add,
            "-" | "−" => Prim::Sub,
            "max" => Prim::Max,
            "min" => Prim::Min,
            "<=" | "≤" => Prim::Le,
            "=" => Prim::Eq,
            ">=" | "≥" => Prim::Ge,
            "cond-<=" | "cond-≤" => Prim::CondLe,
            "cond->=" | "cond-≥" => Prim::CondGe,
            "predict_int" => Prim::PredictInt,
            "predict_float" => Prim::PredictFloat,
            "cond-flip" => Prim::CondFlip,
            _ => return None,
        })
    }

    /// Result type after applying the primitive to `args` (possibly a
    /// prefix of its parameters).
    pub(crate) fn check_args(self, args: &[DslType]) -> Result<Option<DslType>, TypeError> {
        let bad = |i: usize| TypeError::Argument {
            prim: self,
            position: i + 1,
            found: args[i].clone(),
        };
        for (i, a) in args.iter().enumerate() {
            let ok = match self {
                Prim::Add | Prim::Sub | Prim::Max | Prim::Min | Prim::CondLe | Prim::CondGe => a.is_numeric(),
                Prim::Le | Prim::Eq | Prim::Ge => *a == DslType::Int,
                Prim::PredictInt | Prim::PredictFloat | Prim::CondFlip => *a == DslType::Image,
            };
            if !ok {
                return Err(bad(i));
            }
        }
        if args.len() > self.arity() {
            return Err(TypeError::TooManyArguments(self));
        }
        if args.len() < self.arity() {
            return Ok(None);
        }
        Ok(Some(match self {
            Prim::Add | Prim::Sub | Prim::Max | Prim::Min => {
                if args.iter().all(|a| *a == DslType::Int) {
                    DslType::Int
                } else {
                    DslType::Float
                }
            }
            Prim::Le | Prim::Eq | Prim::Ge | Prim::CondLe | Prim::CondGe => DslType::Bool,
            Prim::PredictInt => DslType::Int,
            Prim::PredictFloat => DslType::Float,
            Prim::CondFlip => DslType::Image,
        }))
    }
}

impl fmt::Display for Prim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expression tree. Inputs are 0-based here and written `input1, input2, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DslExpr {
    Input(usize),
    Lit(i64),
    Prim(Prim),
    App(Arc<DslExpr>, Arc<DslExpr>),
    Fold(Arc<DslExpr>, Arc<DslExpr>, Arc<DslExpr>),
    Map(Arc<DslExpr>, Arc<DslExpr>),
    Filter(Arc<DslExpr>, Arc<DslExpr>),
    Slice(Arc<DslExpr>, Arc<DslExpr>, Arc<DslExpr>),
    Length(Arc<DslExpr>),
}

impl DslExpr {
    pub fn app(f: DslExpr, a: DslExpr) -> Self {
        DslExpr::App(Arc::new(f), Arc::new(a))
    }

    pub fn children(&self) -> Vec<&Arc<DslExpr>> {
        match self {
            DslExpr::Input(_) | DslExpr::Lit(_) | DslExpr::Prim(_) => Vec::new(),
            DslExpr::App(a, b) | DslExpr::Map(a, b) | DslExpr::Filter(a, b) => vec![a, b],
            DslExpr::Fold(a, b, c) | DslExpr::Slice(a, b, c) => vec![a, b, c],
            DslExpr::Length(a) => vec![a],
        }
    }

    /// Depth with leaves at 1.
    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }
}

impl fmt::Display for DslExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        syntax::write_expr(self, f)
    }
}

/// Identifier of an annotated component occurrence, written `f1, f2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccId(pub u32);

impl fmt::Display for OccId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

impl FromStr for OccId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.strip_prefix('f')
            .and_then(|n| n.parse().ok())
            .filter(|n| *n > 0)
            .map(OccId)
            .ok_or_else(|| format!("not an occurrence id: {s:?}"))
    }
}

impl Serialize for OccId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OccId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Expression annotated with occurrence ids and static types.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Input(usize),
    Lit(i64),
    Prim(Prim, Option<OccId>),
    App(Box<Node>, Box<Node>),
    Fold(Box<Node>, Box<Node>, Box<Node>),
    Map(Box<Node>, Box<Node>),
    Filter(Box<Node>, Box<Node>),
    Slice(Box<Node>, Box<Node>, Box<Node>),
    Length(Box<Node>),
}

impl Node {
    fn build(e: &DslExpr, next: &mut u32, occs: &mut Vec<(OccId, Prim)>) -> Node {
        let mut b = |c: &Arc<DslExpr>| Box::new(Node::build(c, next, occs));
        match e {
            DslExpr::Input(i) => Node::Input(*i),
            DslExpr::Lit(v) => Node::Lit(*v),
            DslExpr::Prim(p) => {
                let occ = p.is_annotated().then(|| {
                    *next += 1;
                    occs.push((OccId(*next), *p));
                    OccId(*next)
                });
                Node::Prim(*p, occ)
            }
            DslExpr::App(f, a) => {
                let f = b(f);
                Node::App(f, b(a))
            }
            DslExpr::Fold(f, l, z) => {
                let f = b(f);
                let l = b(l);
                Node::Fold(f, l, b(z))
            }
            DslExpr::Map(f, l) => {
                let f = b(f);
                Node::Map(f, b(l))
            }
            DslExpr::Filter(f, l) => {
                let f = b(f);
                Node::Filter(f, b(l))
            }
            DslExpr::Slice(l, i, j) => {
                let l = b(l);
                let i = b(i);
                Node::Slice(l, i, b(j))
            }
            DslExpr::Length(l) => Node::Length(b(l)),
        }
    }
}

/// Static type of a subexpression: a value type or a partially applied
/// primitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum Ty {
    Val(DslType),
    Fun(Prim, Vec<DslType>),
}

impl Ty {
    pub(crate) fn apply(&self, arg: &Ty) -> Result<Ty, TypeError> {
        let Ty::Fun(p, captured) = self else {
            return Err(TypeError::NotAFunction);
        };
        let Ty::Val(a) = arg else {
            return Err(TypeError::FunctionArgument);
        };
        let mut args = captured.clone();
        args.push(a.clone());
        Ok(match p.check_args(&args)? {
            Some(t) => Ty::Val(t),
            None => Ty::Fun(*p, args),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("input{0} is not declared")]
    UnknownInput(usize),
    #[error("argument {position} of {prim} has type {found}")]
    Argument { prim: Prim, position: usize, found: DslType },
    #[error("{0} applied to too many arguments")]
    TooManyArguments(Prim),
    #[error("applying a value that is not a function")]
    NotAFunction,
    #[error("functions cannot be passed as arguments")]
    FunctionArgument,
    #[error("expected a list, found {0}")]
    NotAList(DslType),
    #[error("expected {expected}, found {found}")]
    Mismatch { expected: DslType, found: DslType },
    #[error("the program denotes a function, not a value")]
    FunctionValued,
    #[error("the function passed to {0} does not produce a value")]
    Partial(&'static str),
    #[error("fold accumulator type changes from {0} to {1}")]
    FoldAccumulator(DslType, DslType),
    #[error("input types may not be functions")]
    FunctionInput,
}

pub(crate) fn type_of(e: &DslExpr, inputs: &[DslType]) -> Result<Ty, TypeError> {
    let val = |t: Ty, what: &'static str| match t {
        Ty::Val(v) => Ok(v),
        Ty::Fun(..) => Err(TypeError::Partial(what)),
    };
    let list_elem = |t: Ty| match t {
        Ty::Val(DslType::List(e)) => Ok(*e),
        Ty::Val(other) => Err(TypeError::NotAList(other)),
        Ty::Fun(..) => Err(TypeError::FunctionArgument),
    };
    let int = |t: Ty| match t {
        Ty::Val(DslType::Int) => Ok(()),
        Ty::Val(found) => Err(TypeError::Mismatch {
            expected: DslType::Int,
            found,
        }),
        Ty::Fun(..) => Err(TypeError::FunctionArgument),
    };
    Ok(match e {
        DslExpr::Input(i) => Ty::Val(inputs.get(*i).cloned().ok_or(TypeError::UnknownInput(i + 1))?),
        DslExpr::Lit(_) => Ty::Val(DslType::Int),
        DslExpr::Prim(p) => Ty::Fun(*p, Vec::new()),
        DslExpr::App(f, a) => type_of(f, inputs)?.apply(&type_of(a, inputs)?)?,
        DslExpr::Map(f, l) => {
            let elem = list_elem(type_of(l, inputs)?)?;
            let out = val(type_of(f, inputs)?.apply(&Ty::Val(elem))?, "map")?;
            Ty::Val(DslType::list(out))
        }
        DslExpr::Filter(f, l) => {
            let elem = list_elem(type_of(l, inputs)?)?;
            match val(type_of(f, inputs)?.apply(&Ty::Val(elem.clone()))?, "filter")? {
                DslType::Bool => Ty::Val(DslType::list(elem)),
                found => {
                    return Err(TypeError::Mismatch {
                        expected: DslType::Bool,
                        found,
                    })
                }
            }
        }
        DslExpr::Fold(f, l, z) => {
            let elem = Ty::Val(list_elem(type_of(l, inputs)?)?);
            let ft = type_of(f, inputs)?;
            let base = type_of(z, inputs)?;
            let step = |acc: &Ty| -> Result<DslType, TypeError> { val(ft.apply(&elem)?.apply(acc)?, "fold") };
            let t1 = step(&base)?;
            let t2 = step(&Ty::Val(t1.clone()))?;
            if t1 != t2 {
                return Err(TypeError::FoldAccumulator(t1, t2));
            }
            if let Ty::Val(b) = &base {
                if !b.is_subtype_of(&t1) {
                    return Err(TypeError::FoldAccumulator(b.clone(), t1));
                }
            }
            Ty::Val(t1)
        }
        DslExpr::Slice(l, i, j) => {
            let lt = type_of(l, inputs)?;
            list_elem(lt.clone())?;
            int(type_of(i, inputs)?)?;
            int(type_of(j, inputs)?)?;
            lt
        }
        DslExpr::Length(l) => {
            list_elem(type_of(l, inputs)?)?;
            Ty::Val(DslType::Int)
        }
    })
}

/// A type-checked program.
#[derive(Debug, Clone, PartialEq)]
pub struct DslProgram {
    expr: Arc<DslExpr>,
    input_types: Vec<DslType>,
    output_type: DslType,
    node: Node,
    occurrences: Vec<(OccId, Prim)>,
}

impl DslProgram {
    pub fn new(expr: impl Into<Arc<DslExpr>>, input_types: Vec<DslType>) -> Result<Self, TypeError> {
        let expr = expr.into();
        if input_types.iter().any(|t| matches!(t, DslType::Arrow(..))) {
            return Err(TypeError::FunctionInput);
        }
        let output_type = match type_of(&expr, &input_types)? {
            Ty::Val(t) => t,
            Ty::Fun(..) => return Err(TypeError::FunctionValued),
        };
        let mut next = 0;
        let mut occurrences = Vec::new();
        let node = Node::build(&expr, &mut next, &mut occurrences);
        Ok(Self {
            expr,
            input_types,
            output_type,
            node,
            occurrences,
        })
    }

    /// Type-checks against a full function type; the output must match exactly.
    pub fn with_signature(expr: impl Into<Arc<DslExpr>>, signature: &DslType) -> Result<Self, TypeError> {
        let (inputs, output) = signature.signature();
        let p = Self::new(expr, inputs)?;
        if p.output_type != output {
            return Err(TypeError::Mismatch {
                expected: output,
                found: p.output_type,
            });
        }
        Ok(p)
    }

    pub fn parse(src: &str, input_types: Vec<DslType>) -> Result<Self, DslError> {
        let e = parse_program(src)?;
        Ok(Self::new(e, input_types)?)
    }

    pub fn expr(&self) -> &DslExpr {
        &self.expr
    }

    pub fn input_types(&self) -> &[DslType] {
        &self.input_types
    }

    pub fn output_type(&self) -> &DslType {
        &self.output_type
    }

    /// Annotated component occurrences in pre-order.
    pub fn occurrences(&self) -> &[(OccId, Prim)] {
        &self.occurrences
    }

    pub fn prim_of(&self, occ: OccId) -> Option<Prim> {
        self.occurrences.iter().find(|(o, _)| *o == occ).map(|(_, p)| *p)
    }

    pub(crate) fn node(&self) -> &Node {
        &self.node
    }
}

impl fmt::Display for DslProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipPrediction {
    pub value: bool,
    pub confidence: f64,
}

/// One image: its ground truth and what the predictors report about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_int: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_float: Option<f64>,
    #[serde(default)]
    pub truth_flipped: bool,
    pub pred: Prediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_fast: Option<Prediction>,
    pub flip_pred: FlipPrediction,
}

impl ImageRecord {
    /// A record whose predictors are exactly right with full confidence.
    pub fn perfect(id: u64, digit: i64) -> Self {
        Self {
            id,
            truth_int: Some(digit),
            truth_float: Some(digit as f64),
            truth_flipped: false,
            pred: Prediction {
                value: digit as f64,
                confidence: 1.0,
            },
            pred_fast: None,
            flip_pred: FlipPrediction {
                value: false,
                confidence: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), DslError> {
        let unit = |c: f64| (0.0..=1.0).contains(&c);
        if self.truth_int.is_none() && self.truth_float.is_none() {
            return Err(DslError::Record(self.id, "no ground truth".into()));
        }
        let fast_ok = self.pred_fast.map_or(true, |p| unit(p.confidence) && p.value.is_finite());
        if !unit(self.pred.confidence) || !unit(self.flip_pred.confidence) || !fast_ok {
            return Err(DslError::Record(self.id, "confidence outside [0, 1]".into()));
        }
        if !self.pred.value.is_finite() || self.truth_float.is_some_and(|t| !t.is_finite()) {
            return Err(DslError::Record(self.id, "non-finite value".into()));
        }
        Ok(())
    }

    pub fn truth_int(&self) -> i64 {
        self.truth_int
            .unwrap_or_else(|| self.truth_float.map_or(0, |t| t.round() as i64))
    }

    pub fn truth_float(&self) -> f64 {
        self.truth_float.unwrap_or_else(|| self.truth_int.unwrap_or(0) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageVal {
    pub record: Arc<ImageRecord>,
    /// Whether the image has been reoriented by `cond-flip`.
    pub flipped: bool,
}

/// Runtime value. `Bot` is abstention and absorbs every operation.
#[derive(Debug, Clone, PartialEq)]
pub enum DslValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Image(ImageVal),
    List(Vec<DslValue>),
    Bot,
}

impl DslValue {
    pub fn image(record: ImageRecord) -> Self {
        DslValue::Image(ImageVal {
            record: Arc::new(record),
            flipped: false,
        })
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, DslValue::Bot)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            DslValue::Int(i) => Some(*i as f64),
            DslValue::Float(x) => Some(*x),
            _ => None,
        }
    }

    /// Decodes JSON against a type. Images are either full records or
    /// plain numbers standing for an exactly-predicted digit.
    pub fn from_json(v: &serde_json::Value, ty: &DslType, next_id: &mut u64) -> Result<Self, DslError> {
        use serde_json::Value as J;
        let bad = || DslError::Json(format!("{v} is not a {ty}"));
        Ok(match (ty, v) {
            (_, J::Null) => DslValue::Bot,
            (DslType::Bool, J::Bool(b)) => DslValue::Bool(*b),
            (DslType::Int, J::Number(n)) => DslValue::Int(n.as_i64().ok_or_else(bad)?),
            (DslType::Float, J::Number(n)) => DslValue::Float(n.as_f64().ok_or_else(bad)?),
            (DslType::Image, J::Number(n)) => {
                let digit = n.as_i64().ok_or_else(bad)?;
                *next_id += 1;
                DslValue::image(ImageRecord::perfect(*next_id - 1, digit))
            }
            (DslType::Image, J::Object(_)) => {
                #[derive(Deserialize)]
                struct Img {
                    #[serde(flatten)]
                    record: ImageRecord,
                    #[serde(default)]
                    flipped: bool,
                }
                let img: Img = serde_json::from_value(v.clone()).map_err(|e| DslError::Json(e.to_string()))?;
                img.record.validate()?;
                DslValue::Image(ImageVal {
                    record: Arc::new(img.record),
                    flipped: img.flipped,
                })
            }
            (DslType::List(t), J::Array(items)) => DslValue::List(
                items
                    .iter()
                    .map(|i| DslValue::from_json(i, t, next_id))
                    .collect::<Result<_, _>>()?,
            ),
            _ => return Err(bad()),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::{json, Value as J};
        match self {
            DslValue::Bool(b) => J::Bool(*b),
            DslValue::Int(i) => json!(i),
            DslValue::Float(x) => json!(x),
            DslValue::Image(img) => {
                let mut v = serde_json::to_value(&*img.record).expect("records serialize");
                if img.flipped {
                    v["flipped"] = J::Bool(true);
                }
                v
            }
            DslValue::List(items) => J::Array(items.iter().map(DslValue::to_json).collect()),
            DslValue::Bot => J::Null,
        }
    }
}

impl fmt::Display for DslValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslValue::Bool(b) => write!(f, "{b}"),
            DslValue::Int(i) => write!(f, "{i}"),
            DslValue::Float(x) => write!(f, "{x}"),
            DslValue::Image(img) => write!(f, "image#{}{}", img.record.id, if img.flipped { "'" } else { "" }),
            DslValue::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            DslValue::Bot => f.write_str("∅"),
        }
    }
}

/// Inputs of one example.
pub type DslExample = Vec<DslValue>;

/// Values for the three hole kinds, keyed by occurrence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HoleAssignment {
    #[serde(default, with = "crate::serde_ext::ext_real_map")]
    pub thresholds: BTreeMap<OccId, f64>,
    #[serde(default, with = "crate::serde_ext::ext_real_map")]
    pub eps: BTreeMap<OccId, f64>,
    #[serde(default, with = "crate::serde_ext::ext_real_map")]
    pub errs: BTreeMap<OccId, f64>,
}

impl HoleAssignment {
    /// Every threshold at `-inf`: components never abstain.
    pub fn permissive(p: &DslProgram) -> Self {
        Self {
            thresholds: p.occurrences().iter().map(|(o, _)| (*o, f64::NEG_INFINITY)).collect(),
            ..Self::default()
        }
    }

    /// Every threshold at `+inf`: components always abstain.
    pub fn restrictive(p: &DslProgram) -> Self {
        Self {
            thresholds: p.occurrences().iter().map(|(o, _)| (*o, f64::INFINITY)).collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("input{index} does not match type {ty}")]
    InputType { index: usize, ty: DslType },
    #[error("no threshold for {0}")]
    MissingThreshold(OccId),
    #[error("no eps for {0}")]
    MissingEps(OccId),
    #[error("no error bound for {0}")]
    MissingErr(OccId),
    #[error("unsupported for lowering: {0}")]
    Unsupported(String),
    #[error("record {0}: {1}")]
    Record(u64, String),
    #[error("JSON: {0}")]
    Json(String),
    #[error("no examples to bound list lengths with")]
    NoData,
    #[error("N must be at least 1")]
    ZeroBound,
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
}

/// Checks a value against a type. `Bot` matches every type; integers are
/// accepted where floats are expected.
pub fn value_has_type(v: &DslValue, t: &DslType) -> bool {
    match (v, t) {
        (DslValue::Bot, _) => true,
        (DslValue::Bool(_), DslType::Bool) => true,
        (DslValue::Int(_), DslType::Int | DslType::Float) => true,
        (DslValue::Float(_), DslType::Float) => true,
        (DslValue::Image(_), DslType::Image) => true,
        (DslValue::List(items), DslType::List(e)) => items.iter().all(|i| value_has_type(i, e)),
        _ => false,
    }
}
