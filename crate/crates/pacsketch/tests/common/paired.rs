//! A second interpreter for the list language that runs the ground-truth
//! and a perturbed execution side by side. Each `predict_float` occurrence
//! `f` returns its truth plus noise of size at most `e_f`; every other
//! component is exact, so all component specifications hold. The output
//! deviation must then stay within the static error bound.

use super::{programs, property_types};
use pacsketch::allocator::error_bound;
use pacsketch::listdsl::{generate_examples, dsl_eval, DslExpr, DslValue, EvalMode, HoleAssignment, OccId, Prim};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

enum T {
    Input(usize),
    Lit(i64),
    Prim(Prim, u32),
    App(Box<T>, Box<T>),
    Fold(Box<T>, Box<T>, Box<T>),
    Map(Box<T>, Box<T>),
    Filter(Box<T>, Box<T>),
    Slice(Box<T>, Box<T>, Box<T>),
    Length(Box<T>),
}

/// Numbers annotated primitives in pre-order, left to right.
fn number(e: &DslExpr, next: &mut u32) -> T {
    let mut b = |c: &DslExpr| Box::new(number(c, next));
    match e {
        DslExpr::Input(i) => T::Input(*i),
        DslExpr::Lit(v) => T::Lit(*v),
        DslExpr::Prim(p) => {
            let id = if p.is_annotated() {
                *next += 1;
                *next
            } else {
                0
            };
            T::Prim(*p, id)
        }
        DslExpr::App(f, a) => {
            let f = b(f);
            T::App(f, b(a))
        }
        DslExpr::Fold(f, l, z) => {
            let f = b(f);
            let l = b(l);
            T::Fold(f, l, b(z))
        }
        DslExpr::Map(f, l) => {
            let f = b(f);
            T::Map(f, b(l))
        }
        DslExpr::Filter(f, l) => {
            let f = b(f);
            T::Filter(f, b(l))
        }
        DslExpr::Slice(l, i, j) => {
            let l = b(l);
            let i = b(i);
            T::Slice(l, i, b(j))
        }
        DslExpr::Length(l) => T::Length(b(l)),
    }
}

#[derive(Debug, Clone)]
enum Pv {
    Int(i64),
    /// (truth, perturbed)
    Float(f64, f64),
    Bool(bool),
    Image(f64, i64),
    List(Vec<Pv>),
    Fun(Prim, u32, Vec<Pv>),
}

impl Pv {
    fn from_value(v: &DslValue) -> Pv {
        match v {
            DslValue::Bool(b) => Pv::Bool(*b),
            DslValue::Int(i) => Pv::Int(*i),
            DslValue::Float(x) => Pv::Float(*x, *x),
            DslValue::Image(img) => Pv::Image(img.record.truth_float(), img.record.truth_int()),
            DslValue::List(items) => Pv::List(items.iter().map(Pv::from_value).collect()),
            DslValue::Bot => panic!("inputs never abstain here"),
        }
    }

    fn pair(&self) -> (f64, f64) {
        match self {
            Pv::Int(i) => (*i as f64, *i as f64),
            Pv::Float(t, p) => (*t, *p),
            other => panic!("numeric value expected, got {other:?}"),
        }
    }

    fn deviation(&self) -> f64 {
        match self {
            Pv::Float(t, p) => (t - p).abs(),
            Pv::List(items) => items.iter().map(Pv::deviation).fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    /// Whether the truth side equals a train-semantics value.
    fn truth_matches(&self, v: &DslValue) -> bool {
        match (self, v) {
            (Pv::Int(a), DslValue::Int(b)) => a == b,
            (Pv::Float(t, _), DslValue::Float(b)) => t == b,
            (Pv::Int(a), DslValue::Float(b)) => *a as f64 == *b,
            (Pv::Bool(a), DslValue::Bool(b)) => a == b,
            (Pv::Image(t, _), DslValue::Image(img)) => *t == img.record.truth_float(),
            (Pv::List(a), DslValue::List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.truth_matches(y)),
            _ => false,
        }
    }
}

struct Run<'a, R: Rng> {
    inputs: &'a [Pv],
    errs: &'a BTreeMap<OccId, f64>,
    rng: &'a mut R,
}

impl<R: Rng> Run<'_, R> {
    fn prim(&mut self, p: Prim, occ: u32, a: &[Pv]) -> Pv {
        let arith = |fi: fn(i64, i64) -> i64, ff: fn(f64, f64) -> f64| match (&a[0], &a[1]) {
            (Pv::Int(x), Pv::Int(y)) => Pv::Int(fi(*x, *y)),
            (x, y) => {
                let ((tx, px), (ty, py)) = (x.pair(), y.pair());
                Pv::Float(ff(tx, ty), ff(px, py))
            }
        };
        let ints = || match (&a[0], &a[1]) {
            (Pv::Int(x), Pv::Int(y)) => (*x, *y),
            other => panic!("ints expected, got {other:?}"),
        };
        match p {
            Prim::Add => arith(i64::saturating_add, |x, y| x + y),
            Prim::Sub => arith(i64::saturating_sub, |x, y| x - y),
            Prim::Max => arith(i64::max, f64::max),
            Prim::Min => arith(i64::min, f64::min),
            Prim::Le => Pv::Bool(ints().0 <= ints().1),
            Prim::Eq => Pv::Bool(ints().0 == ints().1),
            Prim::Ge => Pv::Bool(ints().0 >= ints().1),
            Prim::CondLe => Pv::Bool(a[0].pair().0 <= a[1].pair().0),
            Prim::CondGe => Pv::Bool(a[0].pair().0 >= a[1].pair().0),
            Prim::PredictInt => match a[0] {
                Pv::Image(_, d) => Pv::Int(d),
                ref other => panic!("image expected, got {other:?}"),
            },
            Prim::PredictFloat => match a[0] {
                Pv::Image(t, _) => {
                    let e = self.errs[&OccId(occ)];
                    Pv::Float(t, t + self.rng.gen_range(-1.0..=1.0) * e)
                }
                ref other => panic!("image expected, got {other:?}"),
            },
            Prim::CondFlip => a[0].clone(),
        }
    }

    fn apply(&mut self, f: &Pv, arg: Pv) -> Pv {
        let Pv::Fun(p, occ, captured) = f else {
            panic!("function expected, got {f:?}");
        };
        let mut args = captured.clone();
        args.push(arg);
        if args.len() == p.arity() {
            self.prim(*p, *occ, &args)
        } else {
            Pv::Fun(*p, *occ, args)
        }
    }

    fn list(&mut self, t: &T) -> Vec<Pv> {
        match self.eval(t) {
            Pv::List(items) => items,
            other => panic!("list expected, got {other:?}"),
        }
    }

    fn int(&mut self, t: &T) -> i64 {
        match self.eval(t) {
            Pv::Int(i) => i,
            other => panic!("int expected, got {other:?}"),
        }
    }

    fn eval(&mut self, t: &T) -> Pv {
        match t {
            T::Input(i) => self.inputs[*i].clone(),
            T::Lit(v) => Pv::Int(*v),
            T::Prim(p, occ) => Pv::Fun(*p, *occ, Vec::new()),
            T::App(f, a) => {
                let f = self.eval(f);
                let a = self.eval(a);
                self.apply(&f, a)
            }
            T::Map(f, l) => {
                let f = self.eval(f);
                let items = self.list(l);
                Pv::List(items.into_iter().map(|x| self.apply(&f, x)).collect())
            }
            T::Filter(f, l) => {
                let f = self.eval(f);
                let items = self.list(l);
                let mut out = Vec::new();
                for x in items {
                    match self.apply(&f, x.clone()) {
                        Pv::Bool(true) => out.push(x),
                        Pv::Bool(false) => {}
                        other => panic!("bool expected, got {other:?}"),
                    }
                }
                Pv::List(out)
            }
            T::Fold(f, l, z) => {
                let f = self.eval(f);
                let items = self.list(l);
                let mut acc = self.eval(z);
                for x in items {
                    let g = self.apply(&f, x);
                    acc = self.apply(&g, acc);
                }
                acc
            }
            T::Slice(l, i, j) => {
                let items = self.list(l);
                let (i, j) = (self.int(i), self.int(j));
                let len = items.len() as i64;
                let start = i.clamp(0, len);
                let end = j.clamp(start, len);
                Pv::List(items[start as usize..end as usize].to_vec())
            }
            T::Length(l) => Pv::Int(self.list(l).len() as i64),
        }
    }
}

/// Runs `cases` (program, example, budget) triples with lists of at most
/// `n` elements. Returns the number of cases checked and the largest
/// observed ratio of deviation to bound.
pub fn check_error_bound_soundness(cases: usize, n: usize, seed: u64) -> Result<(usize, f64), String> {
    let types = property_types();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut tightest: f64 = 0.0;
    let mut round = 0;
    while done < cases {
        round += 1;
        for p in programs(&types, 50, 4, seed.wrapping_add(round)) {
            if done == cases {
                break;
            }
            let bound = error_bound::<f64>(&p, n);
            let errs: BTreeMap<OccId, f64> = p.occurrences().iter().map(|(o, _)| (*o, rng.gen_range(0.0..2.0))).collect();
            let limit = bound.eval(&errs);
            let tree = number(p.expr(), &mut 0);
            let ex = generate_examples(&types, 1, n, &super::perfect_predictor(), rng.gen()).remove(0);
            let inputs: Vec<Pv> = ex.iter().map(Pv::from_value).collect();
            let out = Run {
                inputs: &inputs,
                errs: &errs,
                rng: &mut rng,
            }
            .eval(&tree);
            let train = dsl_eval(&p, &ex, EvalMode::Train, &HoleAssignment::default()).map_err(|e| e.to_string())?;
            if !out.truth_matches(&train) {
                return Err(format!("{p}: paired truth {out:?} disagrees with train {train:?} on {ex:?}"));
            }
            let dev = out.deviation();
            if dev > limit + 1e-9 * (1.0 + limit) {
                return Err(format!("{p}: deviation {dev} exceeds bound {bound} = {limit}"));
            }
            if limit > 0.0 {
                tightest = tightest.max(dev / limit);
            }
            done += 1;
        }
    }
    Ok((done, tightest))
}
