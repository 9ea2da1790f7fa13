//! Train and test semantics.
//!
//! Under test semantics a component answers only when its score strictly
//! exceeds its threshold: `predict_*` and `cond-flip` compare confidence,
//! `cond-≤`/`cond-≥` compare `|y1 - y2|`. A threshold of `-inf` therefore
//! never abstains and `+inf` always does.

use super::{value_has_type, DslError, DslProgram, DslValue, HoleAssignment, ImageVal, Node, OccId, Prim};
use crate::listdsl::DslType;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Train,
    Test,
}

#[derive(Debug, Clone)]
enum V {
    D(DslValue),
    F(Prim, Option<OccId>, Vec<DslValue>),
}

struct Ctx<'a> {
    mode: EvalMode,
    fill: &'a HoleAssignment,
}

impl Ctx<'_> {
    fn threshold(&self, occ: Option<OccId>) -> Result<f64, DslError> {
        let occ = occ.expect("annotated primitives carry an occurrence");
        self.fill.thresholds.get(&occ).copied().ok_or(DslError::MissingThreshold(occ))
    }
}

fn num(v: &DslValue) -> f64 {
    v.as_f64().expect("type-checked numeric value")
}

fn arith(a: &DslValue, b: &DslValue, fi: fn(i64, i64) -> i64, ff: fn(f64, f64) -> f64) -> DslValue {
    match (a, b) {
        (DslValue::Int(x), DslValue::Int(y)) => DslValue::Int(fi(*x, *y)),
        _ => DslValue::Float(ff(num(a), num(b))),
    }
}

fn image(v: &DslValue) -> &ImageVal {
    match v {
        DslValue::Image(img) => img,
        other => panic!("type-checked image expected, got {other}"),
    }
}

fn apply_prim(p: Prim, occ: Option<OccId>, args: &[DslValue], cx: &Ctx<'_>) -> Result<DslValue, DslError> {
    if args.iter().any(DslValue::is_bot) {
        return Ok(DslValue::Bot);
    }
    let test = cx.mode == EvalMode::Test;
    Ok(match p {
        Prim::Add => arith(&args[0], &args[1], i64::saturating_add, |x, y| x + y),
        Prim::Sub => arith(&args[0], &args[1], i64::saturating_sub, |x, y| x - y),
        Prim::Max => arith(&args[0], &args[1], i64::max, f64::max),
        Prim::Min => arith(&args[0], &args[1], i64::min, f64::min),
        Prim::Le => DslValue::Bool(num(&args[0]) <= num(&args[1])),
        Prim::Eq => DslValue::Bool(num(&args[0]) == num(&args[1])),
        Prim::Ge => DslValue::Bool(num(&args[0]) >= num(&args[1])),
        Prim::CondLe | Prim::CondGe => {
            let (x, y) = (num(&args[0]), num(&args[1]));
            let out = DslValue::Bool(if p == Prim::CondLe { x <= y } else { x >= y });
            if test && (x - y).abs() <= cx.threshold(occ)? {
                DslValue::Bot
            } else {
                out
            }
        }
        Prim::PredictInt | Prim::PredictFloat => {
            let r = &image(&args[0]).record;
            if !test {
                if p == Prim::PredictInt {
                    DslValue::Int(r.truth_int())
                } else {
                    DslValue::Float(r.truth_float())
                }
            } else if r.pred.confidence > cx.threshold(occ)? {
                if p == Prim::PredictInt {
                    DslValue::Int(r.pred.value.round() as i64)
                } else {
                    DslValue::Float(r.pred.value)
                }
            } else {
                DslValue::Bot
            }
        }
        Prim::CondFlip => {
            let img = image(&args[0]);
            let r = &img.record;
            if !test {
                DslValue::Image(ImageVal {
                    record: img.record.clone(),
                    flipped: r.truth_flipped,
                })
            } else if r.flip_pred.confidence > cx.threshold(occ)? {
                DslValue::Image(ImageVal {
                    record: img.record.clone(),
                    flipped: r.flip_pred.value,
                })
            } else {
                DslValue::Bot
            }
        }
    })
}

/// Train-semantics application of a saturated primitive.
pub(crate) fn apply_train(p: Prim, args: &[DslValue]) -> DslValue {
    let fill = HoleAssignment::default();
    let cx = Ctx {
        mode: EvalMode::Train,
        fill: &fill,
    };
    apply_prim(p, None, args, &cx).expect("train semantics needs no thresholds")
}

fn apply(f: &V, arg: DslValue, cx: &Ctx<'_>) -> Result<V, DslError> {
    let V::F(p, occ, captured) = f else {
        panic!("type-checked function expected");
    };
    let mut args = captured.clone();
    args.push(arg);
    if args.len() == p.arity() {
        Ok(V::D(apply_prim(*p, *occ, &args, cx)?))
    } else {
        Ok(V::F(*p, *occ, args))
    }
}

fn value(v: V) -> DslValue {
    match v {
        V::D(d) => d,
        V::F(..) => panic!("type-checked value expected"),
    }
}

fn list(v: DslValue) -> Option<Vec<DslValue>> {
    match v {
        DslValue::List(items) if !items.iter().any(DslValue::is_bot) => Some(items),
        DslValue::List(_) | DslValue::Bot => None,
        other => panic!("type-checked list expected, got {other}"),
    }
}

fn int(v: &DslValue) -> i64 {
    match v {
        DslValue::Int(i) => *i,
        other => panic!("type-checked int expected, got {other}"),
    }
}

fn eval(n: &Node, inputs: &[DslValue], cx: &Ctx<'_>) -> Result<V, DslError> {
    Ok(match n {
        Node::Input(i) => V::D(inputs[*i].clone()),
        Node::Lit(v) => V::D(DslValue::Int(*v)),
        Node::Prim(p, occ) => V::F(*p, *occ, Vec::new()),
        Node::App(f, a) => {
            let f = eval(f, inputs, cx)?;
            let a = value(eval(a, inputs, cx)?);
            apply(&f, a, cx)?
        }
        Node::Map(f, l) => {
            let f = eval(f, inputs, cx)?;
            let Some(items) = list(value(eval(l, inputs, cx)?)) else {
                return Ok(V::D(DslValue::Bot));
            };
            let mut out = Vec::with_capacity(items.len());
            for it in items {
                let r = value(apply(&f, it, cx)?);
                if r.is_bot() {
                    return Ok(V::D(DslValue::Bot));
                }
                out.push(r);
            }
            V::D(DslValue::List(out))
        }
        Node::Filter(f, l) => {
            let f = eval(f, inputs, cx)?;
            let Some(items) = list(value(eval(l, inputs, cx)?)) else {
                return Ok(V::D(DslValue::Bot));
            };
            let mut out = Vec::new();
            for it in items {
                match value(apply(&f, it.clone(), cx)?) {
                    DslValue::Bool(true) => out.push(it),
                    DslValue::Bool(false) => {}
                    _ => return Ok(V::D(DslValue::Bot)),
                }
            }
            V::D(DslValue::List(out))
        }
        Node::Fold(f, l, z) => {
            let f = eval(f, inputs, cx)?;
            let items = list(value(eval(l, inputs, cx)?));
            let mut acc = value(eval(z, inputs, cx)?);
            let Some(items) = items else {
                return Ok(V::D(DslValue::Bot));
            };
            for it in items {
                if acc.is_bot() {
                    break;
                }
                acc = value(apply(&apply(&f, it, cx)?, acc, cx)?);
            }
            V::D(acc)
        }
        Node::Slice(l, i, j) => {
            let items = list(value(eval(l, inputs, cx)?));
            let i = value(eval(i, inputs, cx)?);
            let j = value(eval(j, inputs, cx)?);
            match items {
                Some(items) if !i.is_bot() && !j.is_bot() => {
                    let len = items.len() as i64;
                    let start = int(&i).clamp(0, len);
                    let end = int(&j).clamp(start, len);
                    V::D(DslValue::List(items[start as usize..end as usize].to_vec()))
                }
                _ => V::D(DslValue::Bot),
            }
        }
        Node::Length(l) => match list(value(eval(l, inputs, cx)?)) {
            Some(items) => V::D(DslValue::Int(items.len() as i64)),
            None => V::D(DslValue::Bot),
        },
    })
}

pub(crate) fn coerce(v: DslValue, t: &DslType) -> DslValue {
    match (v, t) {
        (DslValue::Int(i), DslType::Float) => DslValue::Float(i as f64),
        (DslValue::List(items), DslType::List(e)) => DslValue::List(items.into_iter().map(|x| coerce(x, e)).collect()),
        (v, _) => v,
    }
}

/// Evaluates `p` on `inputs`. Train mode ignores `fill`; test mode needs a
/// threshold for every occurrence it reaches.
pub fn dsl_eval(p: &DslProgram, inputs: &[DslValue], mode: EvalMode, fill: &HoleAssignment) -> Result<DslValue, DslError> {
    if inputs.len() != p.input_types().len() {
        return Err(DslError::InputCount {
            expected: p.input_types().len(),
            got: inputs.len(),
        });
    }
    for (i, (v, t)) in inputs.iter().zip(p.input_types()).enumerate() {
        if !value_has_type(v, t) {
            return Err(DslError::InputType {
                index: i + 1,
                ty: t.clone(),
            });
        }
    }
    let inputs: Vec<DslValue> = inputs.iter().zip(p.input_types()).map(|(v, t)| coerce(v.clone(), t)).collect();
    let cx = Ctx { mode, fill };
    Ok(absorb(coerce(value(eval(p.node(), &inputs, &cx)?), p.output_type())))
}

/// A list holding ∅ anywhere is itself ∅.
fn absorb(v: DslValue) -> DslValue {
    match v {
        DslValue::List(items) => {
            let items: Vec<DslValue> = items.into_iter().map(absorb).collect();
            if items.iter().any(DslValue::is_bot) {
                DslValue::Bot
            } else {
                DslValue::List(items)
            }
        }
        v => v,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OutputError {
    #[error("cannot measure the error of ∅")]
    Bot,
    #[error("lists of lengths {0} and {1} are incomparable")]
    LengthMismatch(usize, usize),
    #[error("values of different types")]
    TypeMismatch,
}

/// L-infinity distance: absolute difference for numbers, elementwise max
/// for equal-length lists, 0 or `+inf` for booleans and images.
pub fn dsl_output_error(a: &DslValue, b: &DslValue) -> Result<f64, OutputError> {
    match (a, b) {
        (DslValue::Bot, _) | (_, DslValue::Bot) => Err(OutputError::Bot),
        (DslValue::Bool(x), DslValue::Bool(y)) => Ok(if x == y { 0.0 } else { f64::INFINITY }),
        (DslValue::Image(x), DslValue::Image(y)) => Ok(if x.record.id == y.record.id && x.flipped == y.flipped {
            0.0
        } else {
            f64::INFINITY
        }),
        (DslValue::List(xs), DslValue::List(ys)) => {
            if xs.len() != ys.len() {
                return Err(OutputError::LengthMismatch(xs.len(), ys.len()));
            }
            xs.iter()
                .zip(ys)
                .try_fold(0.0f64, |m, (x, y)| Ok(m.max(dsl_output_error(x, y)?)))
        }
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => Ok((x - y).abs()),
            _ => Err(OutputError::TypeMismatch),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::listdsl::{
        generate_examples, random_program, DslExpr, ImageRecord, PredictorConfig,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn images(truths: &[f64], confs: &[f64]) -> DslValue {
        DslValue::List(
            truths
                .iter()
                .zip(confs)
                .enumerate()
                .map(|(i, (&t, &c))| {
                    let mut r = ImageRecord::perfect(i as u64, t.round() as i64);
                    r.truth_float = Some(t);
                    r.pred.value = t;
                    r.pred.confidence = c;
                    DslValue::image(r)
                })
                .collect(),
        )
    }

    fn sum() -> DslProgram {
        DslProgram::parse("(fold + (map predict_float input1) 0)", vec![DslType::list(DslType::Image)]).unwrap()
    }

    #[test]
    fn train_sum_of_truths() {
        let v = dsl_eval(&sum(), &[images(&[1.5, 2.5], &[0.9, 0.9])], EvalMode::Train, &HoleAssignment::default()).unwrap();
        assert_eq!(v, DslValue::Float(4.0));
    }

    #[test]
    fn one_low_confidence_abstains_everything() {
        let p = sum();
        let mut fill = HoleAssignment::default();
        fill.thresholds.insert(OccId(1), 0.5);
        let v = dsl_eval(&p, &[images(&[1.0, 2.0], &[0.9, 0.4])], EvalMode::Test, &fill).unwrap();
        assert_eq!(v, DslValue::Bot);
        let v = dsl_eval(&p, &[images(&[1.0, 2.0], &[0.9, 0.6])], EvalMode::Test, &fill).unwrap();
        assert_eq!(v, DslValue::Float(3.0));
        let train = dsl_eval(&p, &[images(&[1.0, 2.0], &[0.9, 0.6])], EvalMode::Train, &fill).unwrap();
        assert_eq!(v, train);
    }

    #[test]
    fn missing_threshold_is_an_error() {
        let e = dsl_eval(&sum(), &[images(&[1.0], &[0.9])], EvalMode::Test, &HoleAssignment::default());
        assert_eq!(e, Err(DslError::MissingThreshold(OccId(1))));
    }

    #[test]
    fn output_error_examples() {
        assert_eq!(dsl_output_error(&DslValue::Float(3.0), &DslValue::Float(3.5)).unwrap(), 0.5);
        let a = DslValue::List(vec![DslValue::Float(1.0), DslValue::Float(2.0)]);
        let b = DslValue::List(vec![DslValue::Float(1.2), DslValue::Float(1.7)]);
        assert!((dsl_output_error(&a, &b).unwrap() - 0.3).abs() < 1e-12);
        let c = DslValue::List(vec![DslValue::Float(1.0); 3]);
        assert_eq!(dsl_output_error(&a, &c), Err(OutputError::LengthMismatch(2, 3)));
        assert_eq!(dsl_output_error(&DslValue::Bot, &a), Err(OutputError::Bot));
        assert_eq!(
            dsl_output_error(&DslValue::Bool(true), &DslValue::Bool(false)).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn slice_clamps() {
        let p = DslProgram::parse("(length (slice input1 -2 9))", vec![DslType::list(DslType::Image)]).unwrap();
        let v = dsl_eval(&p, &[images(&[1.0, 2.0, 3.0], &[1.0; 3])], EvalMode::Train, &HoleAssignment::default());
        assert_eq!(v.unwrap(), DslValue::Int(3));
        let p = DslProgram::parse("(length (slice input1 2 1))", vec![DslType::list(DslType::Image)]).unwrap();
        let v = dsl_eval(&p, &[images(&[1.0, 2.0, 3.0], &[1.0; 3])], EvalMode::Train, &HoleAssignment::default());
        assert_eq!(v.unwrap(), DslValue::Int(0));
    }

    #[test]
    fn cond_le_abstains_on_close_values() {
        let p = DslProgram::parse(
            "(cond-≤ (predict_float input1) (predict_float input2))",
            vec![DslType::Image, DslType::Image],
        )
        .unwrap();
        let img = |t: f64| {
            let mut r = ImageRecord::perfect(0, 0);
            r.pred.value = t;
            r.truth_float = Some(t);
            DslValue::image(r)
        };
        let mut fill = HoleAssignment::permissive(&p);
        fill.thresholds.insert(OccId(1), 0.5);
        let near = dsl_eval(&p, &[img(1.0), img(1.3)], EvalMode::Test, &fill).unwrap();
        assert_eq!(near, DslValue::Bot);
        let far = dsl_eval(&p, &[img(1.0), img(2.0)], EvalMode::Test, &fill).unwrap();
        assert_eq!(far, DslValue::Bool(true));
    }

    #[test]
    fn bot_absorbs_every_primitive() {
        let fill = HoleAssignment {
            thresholds: [(OccId(1), 0.0)].into_iter().collect(),
            ..Default::default()
        };
        let samples = |t: &DslType| -> Vec<DslValue> {
            match t {
                DslType::Int => vec![DslValue::Int(0), DslValue::Int(-3), DslValue::Bot],
                DslType::Float => vec![DslValue::Float(0.5), DslValue::Int(2), DslValue::Bot],
                DslType::Image => vec![DslValue::image(ImageRecord::perfect(0, 4)), DslValue::Bot],
                _ => unreachable!(),
            }
        };
        for p in Prim::ALL {
            let param = match p {
                Prim::Le | Prim::Eq | Prim::Ge => DslType::Int,
                Prim::PredictInt | Prim::PredictFloat | Prim::CondFlip => DslType::Image,
                _ => DslType::Float,
            };
            let pools: Vec<Vec<DslValue>> = (0..p.arity()).map(|_| samples(&param)).collect();
            let mut idx = vec![0; p.arity()];
            loop {
                let args: Vec<DslValue> = idx.iter().zip(&pools).map(|(&i, pool)| pool[i].clone()).collect();
                for mode in [EvalMode::Train, EvalMode::Test] {
                    let cx = Ctx { mode, fill: &fill };
                    let out = apply_prim(p, Some(OccId(1)), &args, &cx).unwrap();
                    if args.iter().any(DslValue::is_bot) {
                        assert_eq!(out, DslValue::Bot, "{p} {args:?}");
                    }
                }
                let mut k = 0;
                while k < idx.len() {
                    idx[k] += 1;
                    if idx[k] < pools[k].len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == idx.len() {
                    break;
                }
            }
        }
    }

    #[test]
    fn list_ops_collapse_on_bot() {
        let p = DslProgram::parse("(length (map predict_int input1))", vec![DslType::list(DslType::Image)]).unwrap();
        let mut fill = HoleAssignment::permissive(&p);
        fill.thresholds.insert(OccId(1), 0.5);
        let v = dsl_eval(&p, &[images(&[1.0, 2.0], &[0.9, 0.1])], EvalMode::Test, &fill).unwrap();
        assert_eq!(v, DslValue::Bot);
        let bot_in = DslValue::List(vec![DslValue::Bot]);
        let q = DslProgram::parse("(length input1)", vec![DslType::list(DslType::Image)]).unwrap();
        assert_eq!(dsl_eval(&q, &[bot_in], EvalMode::Test, &fill).unwrap(), DslValue::Bot);
    }

    fn perfect_cfg() -> PredictorConfig {
        PredictorConfig {
            accuracy: 1.0,
            flip_accuracy: 1.0,
            ..PredictorConfig::default()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn perfect_predictors_agree_with_train(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let types = vec![DslType::Image, DslType::list(DslType::Image)];
            let Some(p) = random_program(&types, 4, &mut rng) else { return Ok(()) };
            let examples = generate_examples(&types, 8, 3, &perfect_cfg(), seed);
            let fill = HoleAssignment::permissive(&p);
            for ex in &examples {
                let train = dsl_eval(&p, ex, EvalMode::Train, &fill).unwrap();
                let test = dsl_eval(&p, ex, EvalMode::Test, &fill).unwrap();
                prop_assert_eq!(&test, &train, "{}", p);
            }
        }

        #[test]
        fn filter_keeps_length_when_conditions_are_right(seed in any::<u64>(), c in 0.0..2.0f64) {
            // Comparisons either abstain or agree with the truth, since the
            // predictor is exact; whenever the output exists it matches.
            let p = DslProgram::parse(
                "(length (filter (cond-≤ (predict_float input1)) (map predict_float input2)))",
                vec![DslType::Image, DslType::list(DslType::Image)],
            ).unwrap();
            let mut fill = HoleAssignment::permissive(&p);
            fill.thresholds.insert(OccId(1), c);
            for ex in generate_examples(p.input_types(), 16, 3, &perfect_cfg(), seed) {
                let test = dsl_eval(&p, &ex, EvalMode::Test, &fill).unwrap();
                if !test.is_bot() {
                    prop_assert_eq!(test, dsl_eval(&p, &ex, EvalMode::Train, &fill).unwrap());
                }
            }
        }
    }

    #[test]
    fn expression_accessors() {
        let e = DslExpr::Length(Arc::new(DslExpr::Input(0)));
        assert_eq!(e.depth(), 2);
    }
}
