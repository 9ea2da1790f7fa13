//! Bottom-up enumeration of list programs by depth.
//!
//! Terms are built in depth order and pruned by observational equivalence:
//! a term whose type and train-semantics values on the io examples match an
//! earlier term is dropped. Function-valued terms are partial applications,
//! represented by the values captured so far.

use crate::listdsl::{apply_train, coerce, dsl_output_error, DslExample, DslExpr, DslType, DslValue, Prim, Ty};
use std::collections::{HashMap, HashSet};
use std::fmt::Write;
use std::sync::Arc;

#[derive(Debug, Clone)]
enum Sv {
    V(DslValue),
    F(Vec<DslValue>),
}

struct Term {
    expr: Arc<DslExpr>,
    ty: Ty,
    depth: usize,
    sig: Vec<Sv>,
    /// Id of the first captured argument, for partial applications of a
    /// primitive to exactly one argument.
    first_arg: Option<usize>,
}

pub(super) struct Enumerator<'a> {
    inputs: &'a [DslType],
    examples: &'a [(DslExample, DslValue)],
    target: DslType,
    allow_bool: bool,
    terms: Vec<Term>,
    seen: HashSet<String>,
    found: Vec<Arc<DslExpr>>,
}

fn render(v: &DslValue, out: &mut String) {
    match v {
        DslValue::Bool(b) => out.push(if *b { 'T' } else { 'F' }),
        DslValue::Int(i) => {
            let _ = write!(out, "i{i}");
        }
        DslValue::Float(x) => {
            let _ = write!(out, "f{:x}", x.to_bits());
        }
        DslValue::Image(img) => {
            let _ = write!(out, "m{}{}", img.record.id, if img.flipped { "'" } else { "" });
        }
        DslValue::List(items) => {
            out.push('[');
            for it in items {
                render(it, out);
                out.push(',');
            }
            out.push(']');
        }
        DslValue::Bot => out.push('_'),
    }
}

fn key(ty: &Ty, sig: &[Sv]) -> String {
    let mut out = format!("{ty:?}|");
    for s in sig {
        match s {
            Sv::V(v) => render(v, &mut out),
            Sv::F(vs) => {
                out.push('<');
                for v in vs {
                    render(v, &mut out);
                    out.push(',');
                }
                out.push('>');
            }
        }
        out.push(';');
    }
    out
}

fn size(e: &DslExpr) -> usize {
    1 + e.children().iter().map(|c| size(c)).sum::<usize>()
}

fn prim_of(ty: &Ty) -> Prim {
    match ty {
        Ty::Fun(p, _) => *p,
        Ty::Val(_) => unreachable!("function term expected"),
    }
}

fn apply_sv(p: Prim, f: &Sv, arg: &DslValue) -> Sv {
    let Sv::F(captured) = f else {
        unreachable!("function value expected")
    };
    let mut args = captured.clone();
    args.push(arg.clone());
    if args.len() == p.arity() {
        Sv::V(apply_train(p, &args))
    } else {
        Sv::F(args)
    }
}

fn val(s: &Sv) -> &DslValue {
    match s {
        Sv::V(v) => v,
        Sv::F(_) => unreachable!("value expected"),
    }
}

fn items(v: &DslValue) -> &[DslValue] {
    match v {
        DslValue::List(items) => items,
        other => unreachable!("list expected, got {other}"),
    }
}

fn int(v: &DslValue) -> i64 {
    match v {
        DslValue::Int(i) => *i,
        other => unreachable!("int expected, got {other}"),
    }
}

fn list_elem(ty: &Ty) -> Option<&DslType> {
    match ty {
        Ty::Val(DslType::List(e)) => Some(e),
        _ => None,
    }
}

fn value_ty(t: Result<Ty, crate::listdsl::TypeError>) -> Option<DslType> {
    match t {
        Ok(Ty::Val(v)) => Some(v),
        _ => None,
    }
}

fn fold_ty(ft: &Ty, elem: &DslType, base: &DslType) -> Option<DslType> {
    let step = |acc: &DslType| value_ty(ft.apply(&Ty::Val(elem.clone())).and_then(|g| g.apply(&Ty::Val(acc.clone()))));
    let t1 = step(base)?;
    let t2 = step(&t1)?;
    (t1 == t2 && base.is_subtype_of(&t1)).then_some(t1)
}

/// A production: the expression, its type and its child ids.
enum Shape {
    App(usize, usize),
    Fold(usize, usize, usize),
    Map(usize, usize),
    Filter(usize, usize),
    Slice(usize, usize, usize),
    Length(usize),
}

impl<'a> Enumerator<'a> {
    pub(super) fn new(inputs: &'a [DslType], examples: &'a [(DslExample, DslValue)], target: DslType) -> Self {
        Self {
            inputs,
            examples,
            allow_bool: target.contains_bool(),
            target,
            terms: Vec::new(),
            seen: HashSet::new(),
            found: Vec::new(),
        }
    }

    fn matches(&self, ty: &Ty, sig: &[Sv]) -> bool {
        *ty == Ty::Val(self.target.clone())
            && sig
                .iter()
                .zip(self.examples)
                .all(|(s, (_, want))| matches!(s, Sv::V(v) if dsl_output_error(v, want) == Ok(0.0)))
    }

    fn admissible(&self, ty: &Ty) -> bool {
        match ty {
            Ty::Val(t) => self.allow_bool || !t.contains_bool(),
            Ty::Fun(..) => true,
        }
    }

    /// Records a term unless it is equivalent to an earlier one, and
    /// remembers it when it solves the task.
    fn offer(&mut self, term: Term, store: bool) {
        if !self.admissible(&term.ty) {
            return;
        }
        if self.matches(&term.ty, &term.sig) {
            self.found.push(term.expr);
            return;
        }
        if store && self.seen.insert(key(&term.ty, &term.sig)) {
            self.terms.push(term);
        }
    }

    /// The smallest solution found so far, first in enumeration order
    /// among equals.
    fn best(&self) -> Option<Arc<DslExpr>> {
        let mut best: Option<(usize, &Arc<DslExpr>)> = None;
        for e in &self.found {
            let s = size(e);
            if best.map_or(true, |(b, _)| s < b) {
                best = Some((s, e));
            }
        }
        best.map(|(_, e)| e.clone())
    }

    fn leaves(&self) -> Vec<Term> {
        let n = self.examples.len();
        let mut out = Vec::new();
        for (i, t) in self.inputs.iter().enumerate() {
            out.push(Term {
                expr: Arc::new(DslExpr::Input(i)),
                ty: Ty::Val(t.clone()),
                depth: 1,
                sig: self.examples.iter().map(|(ex, _)| Sv::V(coerce(ex[i].clone(), t))).collect(),
                first_arg: None,
            });
        }
        out.push(Term {
            expr: Arc::new(DslExpr::Lit(0)),
            ty: Ty::Val(DslType::Int),
            depth: 1,
            sig: vec![Sv::V(DslValue::Int(0)); n],
            first_arg: None,
        });
        for p in Prim::ALL {
            out.push(Term {
                expr: Arc::new(DslExpr::Prim(p)),
                ty: Ty::Fun(p, Vec::new()),
                depth: 1,
                sig: vec![Sv::F(Vec::new()); n],
                first_arg: None,
            });
        }
        out
    }

    fn build(&self, shape: &Shape, ty: Ty, depth: usize) -> Term {
        let t = |i: usize| &self.terms[i];
        let n = self.examples.len();
        let (expr, sig, first_arg): (DslExpr, Vec<Sv>, Option<usize>) = match *shape {
            Shape::App(f, a) => {
                let p = prim_of(&t(f).ty);
                let sig = (0..n).map(|k| apply_sv(p, &t(f).sig[k], val(&t(a).sig[k]))).collect();
                let first = matches!(&t(f).ty, Ty::Fun(_, c) if c.is_empty()).then_some(a);
                (DslExpr::App(t(f).expr.clone(), t(a).expr.clone()), sig, first)
            }
            Shape::Fold(f, l, b) => {
                let p = prim_of(&t(f).ty);
                let sig = (0..n)
                    .map(|k| {
                        let mut acc = val(&t(b).sig[k]).clone();
                        for it in items(val(&t(l).sig[k])) {
                            acc = val(&apply_sv(p, &apply_sv(p, &t(f).sig[k], it), &acc)).clone();
                        }
                        Sv::V(acc)
                    })
                    .collect();
                (DslExpr::Fold(t(f).expr.clone(), t(l).expr.clone(), t(b).expr.clone()), sig, None)
            }
            Shape::Map(f, l) => {
                let p = prim_of(&t(f).ty);
                let sig = (0..n)
                    .map(|k| {
                        let out = items(val(&t(l).sig[k]))
                            .iter()
                            .map(|it| val(&apply_sv(p, &t(f).sig[k], it)).clone())
                            .collect();
                        Sv::V(DslValue::List(out))
                    })
                    .collect();
                (DslExpr::Map(t(f).expr.clone(), t(l).expr.clone()), sig, None)
            }
            Shape::Filter(f, l) => {
                let p = prim_of(&t(f).ty);
                let sig = (0..n)
                    .map(|k| {
                        let out = items(val(&t(l).sig[k]))
                            .iter()
                            .filter(|it| matches!(apply_sv(p, &t(f).sig[k], it), Sv::V(DslValue::Bool(true))))
                            .cloned()
                            .collect();
                        Sv::V(DslValue::List(out))
                    })
                    .collect();
                (DslExpr::Filter(t(f).expr.clone(), t(l).expr.clone()), sig, None)
            }
            Shape::Slice(l, i, j) => {
                let sig = (0..n)
                    .map(|k| {
                        let xs = items(val(&t(l).sig[k]));
                        let len = xs.len() as i64;
                        let start = int(val(&t(i).sig[k])).clamp(0, len);
                        let end = int(val(&t(j).sig[k])).clamp(start, len);
                        Sv::V(DslValue::List(xs[start as usize..end as usize].to_vec()))
                    })
                    .collect();
                (
                    DslExpr::Slice(t(l).expr.clone(), t(i).expr.clone(), t(j).expr.clone()),
                    sig,
                    None,
                )
            }
            Shape::Length(l) => {
                let sig = (0..n)
                    .map(|k| Sv::V(DslValue::Int(items(val(&t(l).sig[k])).len() as i64)))
                    .collect();
                (DslExpr::Length(t(l).expr.clone()), sig, None)
            }
        };
        let sig = match &ty {
            Ty::Val(vt) => sig
                .into_iter()
                .map(|s| match s {
                    Sv::V(v) => Sv::V(coerce(v, vt)),
                    f => f,
                })
                .collect(),
            Ty::Fun(..) => sig,
        };
        Term {
            expr: Arc::new(expr),
            ty,
            depth,
            sig,
            first_arg,
        }
    }

    /// Smallest-depth program of the target type agreeing with every
    /// example, or `None` when there is none within `limit`. Among
    /// solutions of that depth the one with fewest nodes wins.
    pub(super) fn run(mut self, limit: usize) -> Option<Arc<DslExpr>> {
        if limit == 0 {
            return None;
        }
        for t in self.leaves() {
            self.offer(t, true);
        }
        for d in 2..=limit {
            if !self.found.is_empty() {
                break;
            }
            self.level(d, d == limit);
        }
        self.best()
    }

    /// Ids below depth `d` grouped by value type, each group in creation
    /// order.
    fn by_type(&self, below: usize) -> HashMap<DslType, Vec<usize>> {
        let mut m: HashMap<DslType, Vec<usize>> = HashMap::new();
        for (i, t) in self.terms[..below].iter().enumerate() {
            if let Ty::Val(v) = &t.ty {
                m.entry(v.clone()).or_default().push(i);
            }
        }
        m
    }

    /// Ids of `groups` whose type satisfies `ok`, in creation order.
    fn accepted(groups: &HashMap<DslType, Vec<usize>>, ok: impl Fn(&DslType) -> bool) -> Vec<usize> {
        let mut ids: Vec<usize> = groups.iter().filter(|(t, _)| ok(t)).flat_map(|(_, v)| v.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }

    fn level(&mut self, d: usize, last: bool) {
        let below = self.terms.len();
        let groups = self.by_type(below);
        let funs: Vec<usize> = (0..below).filter(|&i| matches!(self.terms[i].ty, Ty::Fun(..))).collect();
        let lists: Vec<usize> = (0..below).filter(|&i| list_elem(&self.terms[i].ty).is_some()).collect();
        let ints = groups.get(&DslType::Int).cloned().unwrap_or_default();
        let target = Ty::Val(self.target.clone());
        let fresh = |ids: &[usize], terms: &[Term]| ids.iter().any(|&i| terms[i].depth == d - 1);

        let emit = |this: &mut Self, shape: Shape, ty: Ty| {
            if (last && ty != target) || !this.admissible(&ty) {
                return;
            }
            let term = this.build(&shape, ty, d);
            this.offer(term, !last);
        };

        let mut arg_cache: HashMap<Ty, Vec<usize>> = HashMap::new();
        for &f in &funs {
            let fty = self.terms[f].ty.clone();
            let args = arg_cache
                .entry(fty.clone())
                .or_insert_with(|| Self::accepted(&groups, |t| fty.apply(&Ty::Val(t.clone())).is_ok()))
                .clone();
            for a in args {
                if !fresh(&[f, a], &self.terms) {
                    continue;
                }
                if let Some(x) = self.terms[f].first_arg {
                    if prim_of(&fty).is_commutative() && a < x {
                        continue;
                    }
                }
                let ty = fty.apply(&self.terms[a].ty).expect("argument type was checked");
                emit(self, Shape::App(f, a), ty);
            }
        }

        for &f in &funs {
            let fty = self.terms[f].ty.clone();
            if let Ty::Fun(p, c) = &fty {
                if c.len() + 2 != p.arity() {
                    continue;
                }
            }
            for &l in &lists {
                let elem = list_elem(&self.terms[l].ty).expect("list term").clone();
                let bases = Self::accepted(&groups, |b| fold_ty(&fty, &elem, b).is_some());
                for b in bases {
                    if !fresh(&[f, l, b], &self.terms) {
                        continue;
                    }
                    let Ty::Val(bt) = &self.terms[b].ty else { continue };
                    let out = fold_ty(&fty, &elem, bt).expect("base type was checked");
                    emit(self, Shape::Fold(f, l, b), Ty::Val(out));
                }
            }
        }

        for filter in [false, true] {
            for &f in &funs {
                for &l in &lists {
                    if !fresh(&[f, l], &self.terms) {
                        continue;
                    }
                    let elem = list_elem(&self.terms[l].ty).expect("list term").clone();
                    let Some(out) = value_ty(self.terms[f].ty.apply(&Ty::Val(elem.clone()))) else {
                        continue;
                    };
                    let (shape, ty) = if filter {
                        if out != DslType::Bool {
                            continue;
                        }
                        (Shape::Filter(f, l), Ty::Val(DslType::list(elem)))
                    } else {
                        (Shape::Map(f, l), Ty::Val(DslType::list(out)))
                    };
                    emit(self, shape, ty);
                }
            }
        }

        for &l in &lists {
            for &i in &ints {
                for &j in &ints {
                    if !fresh(&[l, i, j], &self.terms) {
                        continue;
                    }
                    let ty = self.terms[l].ty.clone();
                    emit(self, Shape::Slice(l, i, j), ty);
                }
            }
        }

        for &l in &lists {
            if !fresh(&[l], &self.terms) {
                continue;
            }
            emit(self, Shape::Length(l), Ty::Val(DslType::Int));
        }
    }
}
