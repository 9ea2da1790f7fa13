//! Shared oracles and property checks for the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

pub mod paired;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use pacsketch::allocator::count_all;
use pacsketch::listdsl::{
    dsl_eval, generate_examples, random_program, unroll_occurrences, DslExample, DslProgram, DslType, DslValue,
    EvalMode, HoleAssignment, PredictorConfig,
};
use pacsketch::sketch_ir::{ComponentRegistry, Const};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact mistake budget for rational `eps = en/ed`, `delta = dn/dd`: the
/// largest `h < n` with `sum_{i<=h} C(n,i) eps^i (1-eps)^(n-i) <= delta`.
pub fn exact_k(n: u64, (en, ed): (u64, u64), (dn, dd): (u64, u64)) -> Option<u64> {
    let n_us = n as usize;
    let mut binom = BigUint::one();
    let mut tail = BigUint::zero();
    let mut best = None;
    let scale = BigUint::from(ed).pow(n as u32) * BigUint::from(dn);
    for h in 0..n_us {
        if h > 0 {
            binom = binom * BigUint::from((n_us - h + 1) as u64) / BigUint::from(h as u64);
        }
        tail += &binom * BigUint::from(en).pow(h as u32) * BigUint::from(ed - en).pow((n_us - h) as u32);
        if tail.clone() * BigUint::from(dd) <= scale {
            best = Some(h as u64);
        } else {
            break;
        }
    }
    best
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `2 atanh(1/q)` to about 60 digits.
fn two_atanh_inv(q: i64) -> BigRational {
    let x = rat(1, q);
    let x2 = &x * &x;
    let mut term = x.clone();
    let mut sum = BigRational::zero();
    for k in 0..60 {
        sum += &term / BigRational::from_integer(BigInt::from(2 * k + 1));
        term *= &x2;
    }
    sum * rat(2, 1)
}

fn ln_rational_20() -> BigRational {
    // ln 2 = 2 atanh(1/3); ln 5/4 = 2 atanh(1/9); ln 20 = 4 ln 2 + ln 5/4.
    two_atanh_inv(3) * rat(4, 1) + two_atanh_inv(9)
}

fn sqrt_rational(v: &BigRational) -> BigRational {
    let mut x = BigRational::from_float(v.to_f64().unwrap().sqrt()).unwrap();
    for _ in 0..6 {
        x = (&x + v / &x) / rat(2, 1);
        // Keep denominators bounded.
        let scale = BigInt::from(10u32).pow(80);
        x = BigRational::new((&x * BigRational::from_integer(scale.clone())).round().to_integer(), scale);
    }
    x
}

/// Hoeffding lower bound `ones/n - sqrt(ln(1/delta) / 2n)` at `delta = 1/20`,
/// computed in exact rationals.
pub fn hoeffding_oracle_delta_005(ones: i64, n: i64) -> f64 {
    let radius = sqrt_rational(&(ln_rational_20() / rat(2 * n, 1)));
    (rat(ones, n) - radius).to_f64().unwrap()
}

/// Random well-typed programs over `types`, skipping failed draws.
pub fn programs(types: &[DslType], count: usize, depth: usize, seed: u64) -> Vec<DslProgram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if let Some(p) = random_program(types, depth, &mut rng) {
            out.push(p);
        }
    }
    out
}

pub fn property_types() -> Vec<DslType> {
    vec![DslType::Image, DslType::list(DslType::Image), DslType::Int]
}

pub fn perfect_predictor() -> PredictorConfig {
    PredictorConfig {
        accuracy: 1.0,
        flip_accuracy: 1.0,
        ..Default::default()
    }
}

/// With exact predictors and never-abstaining thresholds, test and train
/// semantics agree on every example.
pub fn check_perfect_agreement(count: usize, seed: u64) -> Result<usize, String> {
    let types = property_types();
    for (i, p) in programs(&types, count, 4, seed).iter().enumerate() {
        let fill = HoleAssignment::permissive(p);
        for ex in generate_examples(&types, 4, 3, &perfect_predictor(), seed + i as u64) {
            let train = dsl_eval(p, &ex, EvalMode::Train, &fill).map_err(|e| e.to_string())?;
            let test = dsl_eval(p, &ex, EvalMode::Test, &fill).map_err(|e| e.to_string())?;
            if train != test {
                return Err(format!("{p}: train {train} vs test {test}"));
            }
        }
    }
    Ok(count)
}

/// Static occurrence counts equal the number of specification nodes the
/// lowering creates, for every program the lowering accepts.
pub fn check_count_unroll(count: usize, seed: u64) -> Result<usize, String> {
    let mut checked = 0;
    for p in programs(&property_types(), count, 4, seed) {
        for n in 1..=4 {
            let Ok(unrolled) = unroll_occurrences(&p, n) else { continue };
            let counted: Vec<(_, usize)> = count_all(&p, n).into_iter().collect();
            if unrolled != counted {
                return Err(format!("{p} at N = {n}: unrolled {unrolled:?}, counted {counted:?}"));
            }
            checked += 1;
        }
    }
    if checked == 0 {
        return Err("no program could be lowered".into());
    }
    Ok(checked)
}

fn bot_variants(ex: &DslExample) -> Vec<DslExample> {
    let mut out = Vec::new();
    for i in 0..ex.len() {
        let mut whole = ex.clone();
        whole[i] = DslValue::Bot;
        out.push(whole);
        if let DslValue::List(items) = &ex[i] {
            for j in 0..items.len() {
                let mut v = ex.clone();
                let mut l = items.clone();
                l[j] = DslValue::Bot;
                v[i] = DslValue::List(l);
                out.push(v);
            }
        }
    }
    out
}

/// Replacing any input or list element with the abstention value leaves the
/// output unchanged or turns it into the abstention value, under both
/// semantics and several thresholds.
pub fn check_bot_absorption(count: usize, seed: u64) -> Result<usize, String> {
    let types = property_types();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PredictorConfig {
        accuracy: 0.7,
        ..Default::default()
    };
    let levels = [f64::NEG_INFINITY, 0.3, 0.7, f64::INFINITY];
    let mut cases = 0;
    for (i, p) in programs(&types, count, 4, seed).iter().enumerate() {
        let fill = HoleAssignment {
            thresholds: p.occurrences().iter().map(|(o, _)| (*o, levels[rng.gen_range(0..levels.len())])).collect(),
            ..Default::default()
        };
        for ex in generate_examples(&types, 3, 3, &cfg, seed ^ i as u64) {
            for mode in [EvalMode::Train, EvalMode::Test] {
                let base = dsl_eval(p, &ex, mode, &fill).map_err(|e| e.to_string())?;
                for v in bot_variants(&ex) {
                    let out = dsl_eval(p, &v, mode, &fill).map_err(|e| e.to_string())?;
                    if !out.is_bot() && out != base {
                        return Err(format!("{p}: {out} after inserting ∅, {base} before"));
                    }
                    cases += 1;
                }
            }
        }
    }
    cases += check_component_strictness()?;
    Ok(cases)
}

/// Core-language components that are strict in every argument.
pub const STRICT_COMPONENTS: [&str; 21] = [
    "add", "sub", "max", "min", "mul", "neg", "abs", "absdiff", "one_minus", "round", "ind", "le", "lt", "ge", "gt",
    "eq", "ne", "not", "and", "or", "implies",
];

/// Every strict component returns the abstention value whenever any
/// argument is the abstention value, over all argument combinations from
/// a small pool.
pub fn check_component_strictness() -> Result<usize, String> {
    let reg = ComponentRegistry::standard();
    let pool = [Const::Bot, Const::Bool(true), Const::Int(2), Const::Real(-0.5)];
    let mut cases = 0;
    for name in STRICT_COMPONENTS {
        let c = reg.get(name).ok_or_else(|| format!("missing component {name}"))?;
        for arity in 1..=2usize {
            if !c.arity.accepts(arity) {
                continue;
            }
            let combos = pool.len().pow(arity as u32);
            for code in 0..combos {
                let args: Vec<Const> = (0..arity).map(|k| pool[(code / pool.len().pow(k as u32)) % pool.len()].clone()).collect();
                if !args.iter().any(Const::is_bot) {
                    continue;
                }
                match (c.func)(&args) {
                    Ok(Const::Bot) => cases += 1,
                    other => return Err(format!("{name}({args:?}) = {other:?}")),
                }
            }
        }
    }
    Ok(cases)
}
