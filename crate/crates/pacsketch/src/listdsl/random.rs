//! Random well-typed programs for property tests.

use super::{DslExpr, DslProgram, DslType, Prim};
use rand::seq::SliceRandom;
use rand::Rng;
use std::sync::Arc;

struct Gen<'a, R> {
    inputs: &'a [DslType],
    rng: &'a mut R,
}

fn app(p: Prim, args: Vec<DslExpr>) -> DslExpr {
    args.into_iter().fold(DslExpr::Prim(p), DslExpr::app)
}

impl<R: Rng> Gen<'_, R> {
    fn leaf(&mut self, ty: &DslType) -> Option<DslExpr> {
        let mut options: Vec<DslExpr> = self
            .inputs
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == ty)
            .map(|(i, _)| DslExpr::Input(i))
            .collect();
        if *ty == DslType::Int {
            options.push(DslExpr::Lit(self.rng.gen_range(-2..6)));
        }
        options.choose(self.rng).cloned()
    }

    fn num(&mut self) -> DslType {
        if self.rng.gen() {
            DslType::Int
        } else {
            DslType::Float
        }
    }

    fn expr(&mut self, ty: &DslType, depth: usize) -> Option<DslExpr> {
        if depth <= 1 || self.rng.gen_bool(0.2) {
            if let Some(l) = self.leaf(ty) {
                return Some(l);
            }
            if depth <= 1 {
                return None;
            }
        }
        let d = depth - 1;
        let img_list = DslType::list(DslType::Image);
        for _ in 0..4 {
            let choice = self.rng.gen_range(0..4);
            let e = match ty {
                DslType::Int => match choice {
                    0 => Some(app(Prim::PredictInt, vec![self.expr(&DslType::Image, d)?])),
                    1 => {
                        let l = self.list_of_any();
                        Some(DslExpr::Length(Arc::new(self.expr(&l, d)?)))
                    }
                    2 => self.fold(&DslType::Int, d),
                    _ => self.arith(DslType::Int, DslType::Int, d),
                },
                DslType::Float => match choice {
                    0 => Some(app(Prim::PredictFloat, vec![self.expr(&DslType::Image, d)?])),
                    1 => self.fold(&DslType::Float, d),
                    _ => {
                        let other = self.num();
                        self.arith(DslType::Float, other, d)
                    }
                },
                DslType::Bool => {
                    let (p, t) = match choice {
                        0 => (Prim::CondLe, self.num()),
                        1 => (Prim::CondGe, self.num()),
                        2 => (Prim::Le, DslType::Int),
                        _ => ([Prim::Eq, Prim::Ge][self.rng.gen_range(0..2)], DslType::Int),
                    };
                    let t2 = if t == DslType::Int { DslType::Int } else { self.num() };
                    Some(app(p, vec![self.expr(&t, d)?, self.expr(&t2, d)?]))
                }
                DslType::Image => Some(app(Prim::CondFlip, vec![self.expr(&DslType::Image, d)?])),
                DslType::List(elem) => match choice {
                    0 => self.map(elem, d),
                    1 => self.filter(elem, d),
                    2 => Some(DslExpr::Slice(
                        Arc::new(self.expr(ty, d)?),
                        Arc::new(self.expr(&DslType::Int, d)?),
                        Arc::new(self.expr(&DslType::Int, d)?),
                    )),
                    _ => self.leaf(ty),
                },
                DslType::Arrow(..) => None,
            };
            if let Some(e) = e {
                return Some(e);
            }
            if *ty == img_list {
                if let Some(l) = self.leaf(ty) {
                    return Some(l);
                }
            }
        }
        self.leaf(ty)
    }

    fn list_of_any(&mut self) -> DslType {
        let elems = [DslType::Image, DslType::Int, DslType::Float];
        DslType::list(elems.choose(self.rng).cloned().expect("non-empty"))
    }

    fn arith(&mut self, a: DslType, b: DslType, d: usize) -> Option<DslExpr> {
        let p = *[Prim::Add, Prim::Sub, Prim::Max, Prim::Min].choose(self.rng)?;
        let (a, b) = if self.rng.gen() { (a, b) } else { (b, a) };
        Some(app(p, vec![self.expr(&a, d)?, self.expr(&b, d)?]))
    }

    fn fold(&mut self, out: &DslType, d: usize) -> Option<DslExpr> {
        let p = *[Prim::Add, Prim::Sub, Prim::Max, Prim::Min].choose(self.rng)?;
        let elem = if *out == DslType::Int { DslType::Int } else { self.num() };
        let base = if *out == DslType::Int || elem == DslType::Float {
            self.num().min(out.clone())
        } else {
            DslType::Float
        };
        Some(DslExpr::Fold(
            Arc::new(DslExpr::Prim(p)),
            Arc::new(self.expr(&DslType::list(elem), d)?),
            Arc::new(self.expr(&base, d)?),
        ))
    }

    /// A unary function from `from` to `to`, possibly a partial application.
    fn function(&mut self, from: &DslType, to: &DslType, d: usize) -> Option<DslExpr> {
        match (from, to) {
            (DslType::Image, DslType::Int) => Some(DslExpr::Prim(Prim::PredictInt)),
            (DslType::Image, DslType::Float) => Some(DslExpr::Prim(Prim::PredictFloat)),
            (DslType::Image, DslType::Image) => Some(DslExpr::Prim(Prim::CondFlip)),
            (DslType::Int | DslType::Float, DslType::Bool) => {
                let p = if *from == DslType::Int && self.rng.gen_bool(0.3) {
                    Prim::Le
                } else if self.rng.gen() {
                    Prim::CondLe
                } else {
                    Prim::CondGe
                };
                let t = if p == Prim::Le { DslType::Int } else { self.num() };
                Some(app(p, vec![self.expr(&t, d)?]))
            }
            (DslType::Int, DslType::Int) | (DslType::Float, DslType::Float) | (DslType::Int, DslType::Float) => {
                let p = *[Prim::Add, Prim::Sub, Prim::Max, Prim::Min].choose(self.rng)?;
                let t = if *to == DslType::Int { DslType::Int } else { DslType::Float };
                Some(app(p, vec![self.expr(&t, d)?]))
            }
            _ => None,
        }
    }

    fn map(&mut self, elem: &DslType, d: usize) -> Option<DslExpr> {
        let from = [DslType::Image, DslType::Int, DslType::Float].choose(self.rng)?.clone();
        let f = self.function(&from, elem, d)?;
        let l = self.expr(&DslType::list(from), d)?;
        Some(DslExpr::Map(Arc::new(f), Arc::new(l)))
    }

    fn filter(&mut self, elem: &DslType, d: usize) -> Option<DslExpr> {
        let f = self.function(elem, &DslType::Bool, d)?;
        let l = self.expr(&DslType::list(elem.clone()), d)?;
        Some(DslExpr::Filter(Arc::new(f), Arc::new(l)))
    }
}

/// A random program over `inputs` with at most `depth` nested productions
/// (an application counts once however many arguments it takes), or
/// `None` when the draw did not produce a well-typed one.
pub fn random_program<R: Rng>(inputs: &[DslType], depth: usize, rng: &mut R) -> Option<DslProgram> {
    let outputs = [
        DslType::Int,
        DslType::Float,
        DslType::Bool,
        DslType::Image,
        DslType::list(DslType::Float),
        DslType::list(DslType::Image),
    ];
    let ty = outputs.choose(rng)?.clone();
    let mut g = Gen { inputs, rng };
    let e = g.expr(&ty, depth)?;
    DslProgram::new(e, inputs.to_vec()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn draws_are_mostly_well_typed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let types = vec![DslType::Image, DslType::list(DslType::Image), DslType::Int];
        let progs: Vec<_> = (0..300).filter_map(|_| random_program(&types, 5, &mut rng)).collect();
        assert!(progs.len() > 100, "{}", progs.len());
        assert!(progs.iter().any(|p| !p.occurrences().is_empty()));
    }
}
