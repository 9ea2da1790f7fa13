//! Unrolling into the specification IR.
//!
//! Every value is tracked in three channels. The test channel is what the
//! program computes at test time and contains the specification nodes; it
//! may be `∅`. The raw channel is what the program would compute if no
//! component abstained, and the truth channel is the train-semantics
//! value. Predicates only read raw and truth, so a component is judged on
//! the input it actually receives.
//!
//! Lists become `N` slots with a presence flag per slot and channel. An
//! abstained list shows up as a `∅` presence flag in the test channel.
//!
//! Inputs of example position `i` (1-based) are named `xi` for scalars,
//! `xi.pred`, `xi.conf`, `xi.flip_pred`, `xi.flip_conf`, `xi.flipped` for
//! images (ground truth `xi.truth_int`, `xi.truth_float`,
//! `xi.truth_flipped`), and `xi.len` plus `xi[j]...` for list slots.

use super::{DslError, DslExample, DslProgram, DslType, DslValue, ImageVal, Node, OccId, Prim};
use crate::estimators::{threshold_estimate, EstimatorConfig, GammaPolicy, ScoreSample};
use crate::sketch_ir::{Const, Expr, Mode, Param, SpecExpr, Valuation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const T: usize = 0;
const R: usize = 1;
const Y: usize = 2;

const TEST_FIELDS: [&str; 5] = ["status", "pred", "conf", "flip_pred", "flip_conf"];
const RAW_FIELDS: [&str; 5] = ["pred", "flip_pred", "truth_int", "truth_float", "truth_flipped"];
const TRUTH_FIELDS: [&str; 3] = ["truth_int", "truth_float", "truth_flipped"];

#[derive(Debug, Clone)]
enum Atom {
    S(Expr),
    I(Vec<(&'static str, Expr)>),
}

impl Atom {
    fn field(&self, name: &str) -> &Expr {
        match self {
            Atom::I(fields) => &fields.iter().find(|(k, _)| *k == name).expect("image field").1,
            Atom::S(_) => panic!("scalar used as image"),
        }
    }

    fn scalar(&self) -> &Expr {
        match self {
            Atom::S(e) => e,
            Atom::I(_) => panic!("image used as scalar"),
        }
    }

    /// The expression that is `∅` exactly when the value is.
    fn key(&self) -> &Expr {
        match self {
            Atom::S(e) => e,
            Atom::I(_) => self.field("status"),
        }
    }

    fn map_key(&self, f: impl FnOnce(Expr) -> Expr) -> Atom {
        match self {
            Atom::S(e) => Atom::S(f(e.clone())),
            Atom::I(fields) => {
                let mut out = fields.clone();
                let slot = out.iter_mut().find(|(k, _)| *k == "status").expect("image status");
                slot.1 = f(slot.1.clone());
                Atom::I(out)
            }
        }
    }
}

type Tri = [Atom; 3];

#[derive(Debug, Clone)]
enum Lv<'n> {
    Val(Tri),
    List { pres: [Vec<Expr>; 3], items: Vec<Tri> },
    Fun { prim: Prim, occ: Option<OccId>, captured: Vec<&'n Node> },
}

fn ap(name: &str, args: Vec<Expr>) -> Expr {
    Expr::apply(name, args)
}

fn image_atoms(base: &str) -> Tri {
    let input = |f: &str| Expr::input(format!("{base}.{f}"));
    let truth = |f: &str| Expr::truth(format!("{base}.{f}"));
    let test = TEST_FIELDS
        .iter()
        .map(|f| (*f, if *f == "status" { input("flipped") } else { input(f) }))
        .collect();
    let raw = RAW_FIELDS
        .iter()
        .map(|f| (*f, if f.starts_with("truth") { truth(f) } else { input(f) }))
        .collect();
    let truth = TRUTH_FIELDS.iter().map(|f| (*f, truth(f))).collect();
    [Atom::I(test), Atom::I(raw), Atom::I(truth)]
}

fn leaf_atoms(base: &str, ty: &DslType) -> Result<Tri, DslError> {
    match ty {
        DslType::Image => Ok(image_atoms(base)),
        DslType::Bool | DslType::Int | DslType::Float => {
            let e = Expr::input(base);
            Ok([Atom::S(e.clone()), Atom::S(e.clone()), Atom::S(e)])
        }
        other => Err(DslError::Unsupported(format!("list elements of type {other}"))),
    }
}

struct Lowerer<'a> {
    n: usize,
    types: &'a [DslType],
    eps: &'a BTreeMap<OccId, f64>,
    errs: &'a BTreeMap<OccId, f64>,
    /// Counting mode: missing eps and error bounds get placeholders.
    counting: bool,
    bindings: Vec<(String, Expr)>,
    counts: BTreeMap<OccId, usize>,
}

impl<'n> Lowerer<'_> {
    fn share(&mut self, e: Expr) -> Expr {
        match e {
            Expr::Local(_) | Expr::Constant(_) | Expr::InputVar(_) => e,
            e => {
                let name = format!("t{}", self.bindings.len() + 1);
                self.bindings.push((name.clone(), e));
                Expr::local(name)
            }
        }
    }

    fn lookup(&self, map: &BTreeMap<OccId, f64>, occ: OccId, missing: fn(OccId) -> DslError) -> Result<f64, DslError> {
        match map.get(&occ) {
            Some(v) => Ok(*v),
            None if self.counting => Ok(0.5),
            None => Err(missing(occ)),
        }
    }

    fn spec(&mut self, occ: Option<OccId>, score: Expr, q: Expr) -> Result<Expr, DslError> {
        let occ = occ.expect("annotated primitives carry an occurrence");
        let eps = self.lookup(self.eps, occ, DslError::MissingEps)?;
        *self.counts.entry(occ).or_default() += 1;
        Ok(Expr::spec(SpecExpr::new(
            score,
            Param::named(occ.to_string()),
            q,
            Param::Value(eps),
            Mode::Implication,
        )))
    }

    fn lower(&mut self, node: &'n Node) -> Result<Lv<'n>, DslError> {
        Ok(match node {
            Node::Input(i) => {
                let base = format!("x{}", i + 1);
                match &self.types[*i] {
                    DslType::List(elem) => {
                        let len = Expr::input(format!("{base}.len"));
                        let flags: Vec<Expr> = (0..self.n).map(|j| ap("lt", vec![Expr::int(j as i64), len.clone()])).collect();
                        let items = (0..self.n)
                            .map(|j| leaf_atoms(&format!("{base}[{j}]"), elem))
                            .collect::<Result<_, _>>()?;
                        Lv::List {
                            pres: [flags.clone(), flags.clone(), flags],
                            items,
                        }
                    }
                    ty => Lv::Val(leaf_atoms(&base, ty)?),
                }
            }
            Node::Lit(v) => {
                let e = Expr::int(*v);
                Lv::Val([Atom::S(e.clone()), Atom::S(e.clone()), Atom::S(e)])
            }
            Node::Prim(p, occ) => Lv::Fun {
                prim: *p,
                occ: *occ,
                captured: Vec::new(),
            },
            Node::App(..) => {
                let mut args = Vec::new();
                let mut cur = node;
                while let Node::App(f, a) = cur {
                    args.push(&**a);
                    cur = f;
                }
                args.reverse();
                let Node::Prim(prim, occ) = cur else {
                    panic!("application heads are primitives in typed programs");
                };
                if args.len() < prim.arity() {
                    Lv::Fun {
                        prim: *prim,
                        occ: *occ,
                        captured: args,
                    }
                } else {
                    let vals = args.into_iter().map(|a| self.value(a)).collect::<Result<Vec<_>, _>>()?;
                    Lv::Val(self.prim(*prim, *occ, vals)?)
                }
            }
            Node::Map(f, l) => {
                let f = self.lower(f)?;
                let (pres, items) = self.list(l)?;
                let mut out_items = Vec::with_capacity(items.len());
                let mut out_test = Vec::with_capacity(items.len());
                for (j, item) in items.iter().enumerate() {
                    let arg = gate_slot(&pres[T][j], item);
                    let v = self.call(&f, arg)?;
                    let flag = ap("mask_present", vec![pres[T][j].clone(), v[T].key().clone()]);
                    out_test.push(self.share(flag));
                    out_items.push(v);
                }
                Lv::List {
                    pres: [out_test, pres[R].clone(), pres[Y].clone()],
                    items: out_items,
                }
            }
            Node::Filter(f, l) => {
                let f = self.lower(f)?;
                let (pres, items) = self.list(l)?;
                let mut out: [Vec<Expr>; 3] = Default::default();
                for (j, item) in items.iter().enumerate() {
                    let c = self.call(&f, gate_slot(&pres[T][j], item))?;
                    let flag = ap("filter_present", vec![pres[T][j].clone(), c[T].scalar().clone()]);
                    out[T].push(self.share(flag));
                    out[R].push(ap("and", vec![pres[R][j].clone(), c[R].scalar().clone()]));
                    out[Y].push(ap("and", vec![pres[Y][j].clone(), c[Y].scalar().clone()]));
                }
                Lv::List { pres: out, items }
            }
            Node::Fold(f, l, z) => {
                let op = match self.lower(f)? {
                    Lv::Fun { prim, captured, .. } if captured.is_empty() => match prim {
                        Prim::Add => "fold_add",
                        Prim::Sub => "fold_sub",
                        Prim::Max => "fold_max",
                        Prim::Min => "fold_min",
                        other => return Err(DslError::Unsupported(format!("fold with {other}"))),
                    },
                    _ => return Err(DslError::Unsupported("fold with a partially applied function".into())),
                };
                let (pres, items) = self.list(l)?;
                let z = self.value(z)?;
                let mut acc: Vec<Expr> = z.iter().map(|a| a.scalar().clone()).collect();
                for (j, item) in items.iter().enumerate() {
                    for ch in [T, R, Y] {
                        acc[ch] = ap(op, vec![pres[ch][j].clone(), item[ch].scalar().clone(), acc[ch].clone()]);
                    }
                }
                let test = self.share(acc[T].clone());
                Lv::Val([Atom::S(test), Atom::S(acc[R].clone()), Atom::S(acc[Y].clone())])
            }
            Node::Length(l) => {
                let (pres, _) = self.list(l)?;
                let mut acc = [Expr::int(0), Expr::int(0), Expr::int(0)];
                for ch in [T, R, Y] {
                    for p in &pres[ch] {
                        acc[ch] = ap("fold_add", vec![p.clone(), Expr::int(1), acc[ch].clone()]);
                    }
                }
                let [t, r, y] = acc;
                let t = self.share(t);
                Lv::Val([Atom::S(t), Atom::S(r), Atom::S(y)])
            }
            Node::Slice(l, i, j) => {
                let (pres, items) = self.list(l)?;
                let i = self.value(i)?;
                let j = self.value(j)?;
                let mut out_pres: [Vec<Expr>; 3] = Default::default();
                let mut out_items: Vec<Vec<Atom>> = vec![Vec::new(); self.n];
                for ch in [T, R, Y] {
                    let (ic, jc) = (i[ch].scalar().clone(), j[ch].scalar().clone());
                    for s in 0..self.n {
                        let mut args = vec![Expr::int(s as i64), ic.clone(), jc.clone()];
                        args.extend(pres[ch].iter().cloned());
                        let flag = ap("slice_present", args);
                        let value_of = |lw: &mut Self, slot_exprs: Vec<Expr>| {
                            let mut args = vec![Expr::int(s as i64), ic.clone()];
                            args.extend(pres[ch].iter().cloned());
                            args.extend(slot_exprs);
                            let e = ap("slice_value", args);
                            if ch == T {
                                lw.share(e)
                            } else {
                                e
                            }
                        };
                        let atom = match &items[0][ch] {
                            Atom::S(_) => Atom::S(value_of(self, items.iter().map(|it| it[ch].scalar().clone()).collect())),
                            Atom::I(fields) => {
                                let names: Vec<&'static str> = fields.iter().map(|(k, _)| *k).collect();
                                let mut out = Vec::with_capacity(names.len());
                                for k in names {
                                    let exprs = items.iter().map(|it| it[ch].field(k).clone()).collect();
                                    out.push((k, value_of(self, exprs)));
                                }
                                Atom::I(out)
                            }
                        };
                        let flag = if ch == T { self.share(flag) } else { flag };
                        out_pres[ch].push(flag);
                        out_items[s].push(atom);
                    }
                }
                let items = out_items
                    .into_iter()
                    .map(|v| <[Atom; 3]>::try_from(v).expect("three channels"))
                    .collect();
                Lv::List { pres: out_pres, items }
            }
        })
    }

    fn value(&mut self, node: &'n Node) -> Result<Tri, DslError> {
        match self.lower(node)? {
            Lv::Val(t) => Ok(t),
            _ => panic!("typed programs pass values here"),
        }
    }

    fn list(&mut self, node: &'n Node) -> Result<([Vec<Expr>; 3], Vec<Tri>), DslError> {
        match self.lower(node)? {
            Lv::List { pres, items } => Ok((pres, items)),
            _ => panic!("typed programs pass lists here"),
        }
    }

    /// Applies a function value; captured arguments are lowered afresh so
    /// each application carries its own specification nodes.
    fn call(&mut self, f: &Lv<'n>, arg: Tri) -> Result<Tri, DslError> {
        let Lv::Fun { prim, occ, captured } = f else {
            panic!("typed programs apply functions");
        };
        let mut args = captured.iter().map(|c| self.value(c)).collect::<Result<Vec<_>, _>>()?;
        args.push(arg);
        if args.len() != prim.arity() {
            return Err(DslError::Unsupported("list operation with a function-valued result".into()));
        }
        self.prim(*prim, *occ, args)
    }

    fn prim(&mut self, p: Prim, occ: Option<OccId>, args: Vec<Tri>) -> Result<Tri, DslError> {
        let per_channel = |lw: &mut Self, name: &str| -> Tri {
            let at = |ch: usize| ap(name, args.iter().map(|a| a[ch].scalar().clone()).collect());
            let t = lw.share(at(T));
            [Atom::S(t), Atom::S(at(R)), Atom::S(at(Y))]
        };
        Ok(match p {
            Prim::Add => per_channel(self, "add"),
            Prim::Sub => per_channel(self, "sub"),
            Prim::Max => per_channel(self, "max"),
            Prim::Min => per_channel(self, "min"),
            Prim::Le => per_channel(self, "le"),
            Prim::Eq => per_channel(self, "eq"),
            Prim::Ge => per_channel(self, "ge"),
            Prim::CondLe | Prim::CondGe => {
                let cmp = if p == Prim::CondLe { "le" } else { "ge" };
                let a = self.share(args[0][T].scalar().clone());
                let b = self.share(args[1][T].scalar().clone());
                let score = ap(
                    "coalesce",
                    vec![ap("absdiff", vec![a.clone(), b.clone()]), Expr::real(f64::NEG_INFINITY)],
                );
                let raw = ap(cmp, vec![args[0][R].scalar().clone(), args[1][R].scalar().clone()]);
                let truth = ap(cmp, vec![args[0][Y].scalar().clone(), args[1][Y].scalar().clone()]);
                let q = ap("ne", vec![raw.clone(), truth.clone()]);
                let spec = self.spec(occ, score, q)?;
                let test = self.share(ap("gate", vec![spec, ap(cmp, vec![a, b])]));
                [Atom::S(test), Atom::S(raw), Atom::S(truth)]
            }
            Prim::PredictInt | Prim::PredictFloat => {
                let x = &args[0];
                let score = ap(
                    "abstain_score",
                    vec![x[T].field("status").clone(), x[T].field("conf").clone()],
                );
                let (raw, test_value, truth, q) = if p == Prim::PredictInt {
                    let raw = ap("round", vec![x[R].field("pred").clone()]);
                    let q = ap("ne", vec![raw.clone(), x[R].field("truth_int").clone()]);
                    let test_value = ap("round", vec![x[T].field("pred").clone()]);
                    (raw, test_value, x[Y].field("truth_int").clone(), q)
                } else {
                    let e = self.lookup(self.errs, occ.expect("annotated"), DslError::MissingErr)?;
                    let raw = x[R].field("pred").clone();
                    let dev = ap("absdiff", vec![raw.clone(), x[R].field("truth_float").clone()]);
                    let q = ap("not", vec![ap("le", vec![dev, Expr::real(e)])]);
                    (raw, x[T].field("pred").clone(), x[Y].field("truth_float").clone(), q)
                };
                let spec = self.spec(occ, score, q)?;
                let test = self.share(ap("gate", vec![spec, test_value]));
                [Atom::S(test), Atom::S(raw), Atom::S(truth)]
            }
            Prim::CondFlip => {
                let x = &args[0];
                let score = ap(
                    "abstain_score",
                    vec![x[T].field("status").clone(), x[T].field("flip_conf").clone()],
                );
                let q = ap(
                    "ne",
                    vec![x[R].field("flip_pred").clone(), x[R].field("truth_flipped").clone()],
                );
                let spec = self.spec(occ, score, q)?;
                let status = self.share(ap("gate", vec![spec, x[T].field("flip_pred").clone()]));
                let test = x[T].map_key(|_| status);
                [test, x[R].clone(), x[Y].clone()]
            }
        })
    }
}

fn gate_slot(present: &Expr, item: &Tri) -> Tri {
    let mut out = item.clone();
    out[T] = item[T].map_key(|v| ap("gate", vec![ap("not", vec![present.clone()]), v]));
    out
}

fn run<'a>(
    p: &'a DslProgram,
    n: usize,
    eps: &'a BTreeMap<OccId, f64>,
    errs: &'a BTreeMap<OccId, f64>,
    counting: bool,
) -> Result<(Expr, BTreeMap<OccId, usize>), DslError> {
    let mut lw = Lowerer {
        n,
        types: p.input_types(),
        eps,
        errs,
        counting,
        bindings: Vec::new(),
        counts: BTreeMap::new(),
    };
    let body = match lw.lower(p.node())? {
        Lv::Val(t) => t[T].key().clone(),
        Lv::List { pres, items } => {
            let mut args = pres[T].clone();
            args.extend(items.iter().map(|it| it[T].key().clone()));
            ap("list", args)
        }
        Lv::Fun { .. } => panic!("typed programs denote values"),
    };
    let expr = if lw.bindings.is_empty() {
        body
    } else {
        Expr::Let {
            bindings: lw.bindings,
            body: Box::new(body),
        }
    };
    Ok((expr, lw.counts))
}

/// Unrolls `p` with `n` slots per list into a sketch whose only holes are
/// the thresholds, one label `fK` per syntactic occurrence.
pub fn lower_to_sketch_ir(
    p: &DslProgram,
    n: usize,
    eps: &BTreeMap<OccId, f64>,
    errs: &BTreeMap<OccId, f64>,
) -> Result<Expr, DslError> {
    if n == 0 {
        return Err(DslError::ZeroBound);
    }
    Ok(run(p, n, eps, errs, false)?.0)
}

/// Number of specification nodes each occurrence turns into when lists
/// have `n` slots.
pub fn unroll_occurrences(p: &DslProgram, n: usize) -> Result<Vec<(OccId, usize)>, DslError> {
    let empty = BTreeMap::new();
    let (_, counts) = run(p, n, &empty, &empty, true)?;
    Ok(p.occurrences()
        .iter()
        .map(|(o, _)| (*o, counts.get(o).copied().unwrap_or(0)))
        .collect())
}

fn image_entries(base: &str, img: Option<&ImageVal>, val: &mut Valuation) {
    let put_in = |val: &mut Valuation, f: &str, c: Const| {
        val.inputs.insert(format!("{base}.{f}"), c);
    };
    let put_truth = |val: &mut Valuation, f: &str, c: Const| {
        val.ground_truth.insert(format!("{base}.{f}"), c);
    };
    match img {
        Some(img) => {
            let r = &img.record;
            put_in(val, "flipped", Const::Bool(img.flipped));
            put_in(val, "pred", Const::Real(r.pred.value));
            put_in(val, "conf", Const::Real(r.pred.confidence));
            put_in(val, "flip_pred", Const::Bool(r.flip_pred.value));
            put_in(val, "flip_conf", Const::Real(r.flip_pred.confidence));
            put_truth(val, "truth_int", Const::Int(r.truth_int()));
            put_truth(val, "truth_float", Const::Real(r.truth_float()));
            put_truth(val, "truth_flipped", Const::Bool(r.truth_flipped));
        }
        None => {
            put_in(val, "flipped", Const::Bool(false));
            for f in ["pred", "conf", "flip_conf"] {
                put_in(val, f, Const::Real(0.0));
            }
            put_in(val, "flip_pred", Const::Bool(false));
            put_truth(val, "truth_int", Const::Int(0));
            put_truth(val, "truth_float", Const::Real(0.0));
            put_truth(val, "truth_flipped", Const::Bool(false));
        }
    }
}

fn leaf_entries(base: &str, ty: &DslType, v: Option<&DslValue>, val: &mut Valuation) -> Result<(), DslError> {
    match (ty, v) {
        (DslType::Image, Some(DslValue::Bot)) => {
            image_entries(base, None, val);
            val.inputs.insert(format!("{base}.flipped"), Const::Bot);
        }
        (DslType::Image, Some(DslValue::Image(img))) => image_entries(base, Some(img), val),
        (DslType::Image, None) => image_entries(base, None, val),
        (DslType::Bool | DslType::Int | DslType::Float, v) => {
            let c = match v {
                None => match ty {
                    DslType::Bool => Const::Bool(false),
                    DslType::Int => Const::Int(0),
                    _ => Const::Real(0.0),
                },
                Some(DslValue::Bot) => Const::Bot,
                Some(DslValue::Bool(b)) => Const::Bool(*b),
                Some(DslValue::Int(i)) if *ty == DslType::Float => Const::Real(*i as f64),
                Some(DslValue::Int(i)) => Const::Int(*i),
                Some(DslValue::Float(x)) => Const::Real(*x),
                Some(_) => return Err(DslError::InputType { index: 0, ty: ty.clone() }),
            };
            val.inputs.insert(base.to_string(), c);
        }
        _ => return Err(DslError::Unsupported(format!("inputs of type {ty}"))),
    }
    Ok(())
}

/// Flattens one example into the variables read by the lowered program.
/// Lists longer than `n` are truncated to their first `n` elements.
pub fn flatten_example(types: &[DslType], values: &[DslValue], n: usize) -> Result<Valuation, DslError> {
    if types.len() != values.len() {
        return Err(DslError::InputCount {
            expected: types.len(),
            got: values.len(),
        });
    }
    let mut val = Valuation::new();
    for (i, (ty, v)) in types.iter().zip(values).enumerate() {
        let base = format!("x{}", i + 1);
        match ty {
            DslType::List(elem) => {
                let items: Option<&[DslValue]> = match v {
                    DslValue::List(items) => Some(items),
                    DslValue::Bot => None,
                    _ => return Err(DslError::InputType { index: i + 1, ty: ty.clone() }),
                };
                let len = match items {
                    Some(items) => Const::Int(items.len().min(n) as i64),
                    None => Const::Bot,
                };
                val.inputs.insert(format!("{base}.len"), len);
                for j in 0..n {
                    let item = items.and_then(|it| it.get(j));
                    leaf_entries(&format!("{base}[{j}]"), elem, item, &mut val)
                        .map_err(|e| relabel(e, i + 1))?;
                }
            }
            _ => leaf_entries(&base, ty, Some(v), &mut val).map_err(|e| relabel(e, i + 1))?,
        }
    }
    Ok(val)
}

fn relabel(e: DslError, index: usize) -> DslError {
    match e {
        DslError::InputType { ty, .. } => DslError::InputType { index, ty },
        e => e,
    }
}

/// Bound on list lengths fed to the lowering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthBound {
    Finite(usize),
    /// Too little data for any finite bound at the requested confidence.
    Unbounded,
}

fn max_len(v: &DslValue) -> usize {
    match v {
        DslValue::List(items) => items.iter().map(max_len).max().unwrap_or(0).max(items.len()),
        _ => 0,
    }
}

/// Smallest `N` such that, with probability `1 - delta_share`, at most an
/// `eps_half` fraction of executions see a list longer than `N`.
pub fn length_bound(examples: &[DslExample], eps_half: f64, delta_share: f64) -> Result<LengthBound, DslError> {
    if examples.is_empty() {
        return Err(DslError::NoData);
    }
    let lens: Vec<f64> = examples
        .iter()
        .map(|ex| ex.iter().map(max_len).max().unwrap_or(0) as f64)
        .collect();
    let cfg = EstimatorConfig::new(eps_half, delta_share)?.with_gamma_policy(GammaPolicy::Minimal);
    let t = threshold_estimate(&ScoreSample::new(lens)?, &cfg);
    Ok(if t.is_finite() {
        LengthBound::Finite((t.floor() as usize).max(1))
    } else {
        LengthBound::Unbounded
    })
}
