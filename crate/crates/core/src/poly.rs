//! Expansion of expression trees into sums of monomials.
//!
//! Subexpressions that are not polynomial (a quotient by a non-constant,
//! `exp`, fractional powers) are kept as opaque factors attached to a
//! monomial. A [`Poly`] without opaque factors is an ordinary polynomial and
//! admits exact sign reasoning on the nonnegative orthant.

use std::collections::BTreeMap;

use crate::expr::Expr;

/// Exponent vector plus the (sorted) rendered keys of opaque factors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub opaque: Vec<String>,
}

impl Monomial {
    pub fn one(arity: usize) -> Self {
        Monomial { exponents: vec![0; arity], opaque: Vec::new() }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_pure(&self) -> bool {
        self.opaque.is_empty()
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let exponents = self.exponents.iter().zip(&other.exponents).map(|(a, b)| a + b).collect();
        let mut opaque: Vec<String> = self.opaque.iter().chain(&other.opaque).cloned().collect();
        opaque.sort();
        Monomial { exponents, opaque }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub arity: usize,
    pub terms: BTreeMap<Monomial, f64>,
    /// Opaque factor key -> expression.
    pub factors: BTreeMap<String, Expr>,
}

/// Integer powers above this are left opaque to bound expansion size.
const MAX_EXPANDED_POWER: i32 = 16;

impl Poly {
    pub fn zero(arity: usize) -> Self {
        Poly { arity, terms: BTreeMap::new(), factors: BTreeMap::new() }
    }

    pub fn constant(arity: usize, c: f64) -> Self {
        let mut p = Poly::zero(arity);
        p.add_term(Monomial::one(arity), c);
        p
    }

    pub fn variable(arity: usize, i: usize) -> Self {
        let mut m = Monomial::one(arity);
        m.exponents[i] = 1;
        let mut p = Poly::zero(arity);
        p.add_term(m, 1.0);
        p
    }

    fn opaque(arity: usize, expr: &Expr) -> Self {
        let key = expr.to_string();
        let mut p = Poly::zero(arity);
        p.factors.insert(key.clone(), expr.clone());
        let mut m = Monomial::one(arity);
        m.opaque.push(key);
        p.add_term(m, 1.0);
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        let sum = self.terms.get(&m).copied().unwrap_or(0.0) + c;
        if sum == 0.0 {
            // exact cancellation
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, sum);
        }
    }

    pub fn expand(expr: &Expr, arity: usize) -> Poly {
        match expr {
            Expr::Const(c) => Poly::constant(arity, *c),
            Expr::Var(i) => Poly::variable(arity, *i),
            Expr::Neg(e) => Poly::expand(e, arity).scale(-1.0),
            Expr::Add(a, b) => Poly::expand(a, arity).plus(&Poly::expand(b, arity)),
            Expr::Sub(a, b) => Poly::expand(a, arity).plus(&Poly::expand(b, arity).scale(-1.0)),
            Expr::Mul(a, b) => Poly::expand(a, arity).times(&Poly::expand(b, arity)),
            Expr::Div(a, b) => match **b {
                Expr::Const(c) if c != 0.0 => Poly::expand(a, arity).scale(1.0 / c),
                _ => {
                    if b.max_var().is_none() {
                        // constant denominator written as an expression
                        if let Ok(c) = b.eval(&[]) {
                            if c != 0.0 && c.is_finite() {
                                return Poly::expand(a, arity).scale(1.0 / c);
                            }
                        }
                    }
                    Poly::opaque(arity, expr)
                }
            },
            Expr::Pow(base, exponent) => match exponent.as_small_integer() {
                Some(k) if (0..=MAX_EXPANDED_POWER).contains(&k) => {
                    let b = Poly::expand(base, arity);
                    let mut acc = Poly::constant(arity, 1.0);
                    for _ in 0..k {
                        acc = acc.times(&b);
                    }
                    acc
                }
                _ => Poly::opaque(arity, expr),
            },
            Expr::Call(..) => {
                if expr.max_var().is_none() {
                    if let Ok(c) = expr.eval(&[]) {
                        return Poly::constant(arity, c);
                    }
                }
                Poly::opaque(arity, expr)
            }
        }
    }

    pub fn scale(mut self, s: f64) -> Poly {
        for v in self.terms.values_mut() {
            *v *= s;
        }
        self.terms.retain(|_, v| *v != 0.0);
        self
    }

    pub fn plus(mut self, other: &Poly) -> Poly {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
        for (k, e) in &other.factors {
            self.factors.entry(k.clone()).or_insert_with(|| e.clone());
        }
        self
    }

    pub fn times(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.arity);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.times(mb), ca * cb);
            }
        }
        out.factors = self.factors.clone();
        for (k, e) in &other.factors {
            out.factors.entry(k.clone()).or_insert_with(|| e.clone());
        }
        out
    }

    /// True if no term carries an opaque factor.
    pub fn is_polynomial(&self) -> bool {
        self.terms.keys().all(Monomial::is_pure)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Set variable `i` to zero. Terms whose opaque factors mention `i`
    /// cannot be simplified; `None` is returned in that case.
    pub fn restrict_zero(&self, i: usize) -> Option<Poly> {
        let mut out = Poly::zero(self.arity);
        for (m, c) in &self.terms {
            if m.opaque.iter().any(|k| self.factors[k].mentions(i)) {
                return None;
            }
            if m.exponents[i] == 0 {
                out.add_term(m.clone(), *c);
            }
        }
        out.factors = self.factors.clone();
        Some(out)
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Constant term and linear coefficients of the pure part.
    pub fn affine_part(&self) -> (f64, Vec<f64>) {
        let mut c0 = 0.0;
        let mut lin = vec![0.0; self.arity];
        for (m, c) in &self.terms {
            if !m.is_pure() {
                continue;
            }
            match m.degree() {
                0 => c0 += c,
                1 => {
                    let j = m.exponents.iter().position(|&e| e == 1).expect("degree-one monomial");
                    lin[j] += c;
                }
                _ => {}
            }
        }
        (c0, lin)
    }

    /// Sum of absolute coefficients over all terms.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn eval(&self, a: &[f64]) -> f64 {
        let mut cache: BTreeMap<&str, f64> = BTreeMap::new();
        let mut total = 0.0;
        for (m, c) in &self.terms {
            let mut v = *c;
            for (x, &e) in a.iter().zip(&m.exponents) {
                if e > 0 {
                    v *= x.powi(e as i32);
                }
            }
            for key in &m.opaque {
                let f = *cache
                    .entry(key.as_str())
                    .or_insert_with(|| self.factors[key].eval(a).unwrap_or(f64::NAN));
                v *= f;
            }
            total += v;
        }
        total
    }
}
