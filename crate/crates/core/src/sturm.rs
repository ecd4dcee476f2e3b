//! Real-root counting by Sturm sequences in exact rational arithmetic.
//!
//! Coefficients are given in ascending order of power, `c[0] + c[1] x + …`.
//! Every `f64` converts exactly to a rational, so the count is exact for the
//! polynomial the floats represent.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SturmError {
    #[error("polynomial is not square-free (gcd with its derivative has degree {0})")]
    NotSquareFree(usize),
    #[error("the zero polynomial has no finite root count")]
    ZeroPolynomial,
    #[error("non-finite value {0} cannot be converted to a rational")]
    NonFinite(f64),
    #[error("empty interval ({lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
}

type Poly = Vec<BigRational>;

fn to_rational(x: f64) -> Result<BigRational, SturmError> {
    BigRational::from_float(x).ok_or(SturmError::NonFinite(x))
}

fn trim(mut p: Poly) -> Poly {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

fn degree(p: &Poly) -> usize {
    p.len().saturating_sub(1)
}

fn derivative(p: &Poly) -> Poly {
    trim(
        p.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * BigRational::from_integer(BigInt::from(i)))
            .collect(),
    )
}

fn remainder(num: &Poly, den: &Poly) -> Poly {
    let mut r = num.clone();
    let lead = den.last().expect("nonzero divisor").clone();
    let dd = degree(den);
    while !r.is_empty() && degree(&r) >= dd {
        let shift = degree(&r) - dd;
        let factor = r.last().unwrap() / &lead;
        for (i, c) in den.iter().enumerate() {
            r[i + shift] -= &factor * c;
        }
        r.pop();
        r = trim(r);
    }
    r
}

fn gcd(a: &Poly, b: &Poly) -> Poly {
    let (mut x, mut y) = (a.clone(), b.clone());
    while !y.is_empty() {
        let r = remainder(&x, &y);
        x = y;
        y = r;
    }
    x
}

fn eval(p: &Poly, x: &BigRational) -> BigRational {
    p.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
}

fn sign_changes(chain: &[Poly], x: &BigRational) -> usize {
    let mut changes = 0;
    let mut prev: Option<bool> = None;
    for p in chain {
        let v = eval(p, x);
        if v.is_zero() {
            continue;
        }
        let pos = v.is_positive();
        if let Some(s) = prev {
            if s != pos {
                changes += 1;
            }
        }
        prev = Some(pos);
    }
    changes
}

fn sturm_chain(p: Poly) -> Vec<Poly> {
    let mut chain = vec![p.clone(), derivative(&p)];
    loop {
        let n = chain.len();
        if chain[n - 1].is_empty() {
            chain.pop();
            break;
        }
        let r: Poly = remainder(&chain[n - 2], &chain[n - 1]).into_iter().map(|c| -c).collect();
        if r.is_empty() {
            break;
        }
        chain.push(r);
    }
    chain
}

/// Number of distinct real roots in `(lo, hi]`.
pub fn sturm_root_count(coeffs: &[f64], lo: f64, hi: f64) -> Result<usize, SturmError> {
    if !(lo < hi) {
        return Err(SturmError::EmptyInterval { lo, hi });
    }
    let p = trim(coeffs.iter().map(|&c| to_rational(c)).collect::<Result<Vec<_>, _>>()?);
    if p.is_empty() {
        return Err(SturmError::ZeroPolynomial);
    }
    if degree(&p) == 0 {
        return Ok(0);
    }
    let g = gcd(&p, &derivative(&p));
    if degree(&g) > 0 {
        return Err(SturmError::NotSquareFree(degree(&g)));
    }
    let chain = sturm_chain(p);
    let (a, b) = (to_rational(lo)?, to_rational(hi)?);
    Ok(sign_changes(&chain, &a) - sign_changes(&chain, &b))
}
