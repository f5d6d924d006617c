//! Exact scalar rings: rationals, dense polynomials, normalized rational
//! functions and truncated Laurent series in one variable.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qbig(n: BigInt) -> Q {
    Q::from_integer(n)
}

/// "p/q", or just "p" for integers.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Invalid(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: BigInt = a.trim().parse().map_err(|_| bad())?;
            let b: BigInt = b.trim().parse().map_err(|_| bad())?;
            if b.is_zero() {
                return Err(Error::DivisionByZero);
            }
            Ok(Q::new(a, b))
        }
        None => Ok(qbig(s.parse().map_err(|_| bad())?)),
    }
}

pub fn qpow(x: &Q, e: i64) -> Q {
    if e >= 0 {
        num_traits::pow(x.clone(), e as usize)
    } else {
        num_traits::pow(x.recip(), (-e) as usize)
    }
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// n!! with 0!! = (-1)!! = 1.
pub fn double_factorial(n: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= BigInt::from(k);
        k -= 2;
    }
    acc
}

/// Elementary symmetric polynomials e_0..e_n of the given values.
pub fn elementary_symmetric(values: &[Q]) -> Vec<Q> {
    let mut e = vec![Q::one()];
    for v in values {
        e.push(Q::zero());
        for k in (1..e.len()).rev() {
            let t = &e[k - 1] * v;
            e[k] += t;
        }
    }
    e
}

/// Commutative Q-algebra with an explicit "shape" carried by each value,
/// so zero and one of nested truncated series can be produced from any element.
pub trait Ring: Clone + PartialEq + fmt::Debug {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn negate(&self) -> Self;
    fn scale(&self, c: &Q) -> Self;

    fn from_q_like(&self, c: &Q) -> Self {
        self.one_like().scale(c)
    }

    fn pow_u(&self, e: usize) -> Self {
        let mut acc = self.one_like();
        for _ in 0..e {
            acc = acc.times(self);
        }
        acc
    }
}

pub trait Field: Ring {
    fn inv(&self) -> Result<Self>;
}

impl Ring for Q {
    fn zero_like(&self) -> Self {
        Q::zero()
    }
    fn one_like(&self) -> Self {
        Q::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn negate(&self) -> Self {
        -self
    }
    fn scale(&self, c: &Q) -> Self {
        self * c
    }
}

impl Field for Q {
    fn inv(&self) -> Result<Self> {
        if Zero::is_zero(self) {
            Err(Error::DivisionByZero)
        } else {
            Ok(self.recip())
        }
    }
}

/// Dense univariate polynomial; `c[k]` is the coefficient of X^k.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    c: Vec<Q>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .c
            .iter()
            .enumerate()
            .filter(|(_, v)| !Zero::is_zero(*v))
            .map(|(k, v)| format!("({})X^{k}", fmt_q(v)))
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Poly {
    pub fn from_coeffs(mut c: Vec<Q>) -> Self {
        while c.last().map_or(false, Zero::is_zero) {
            c.pop();
        }
        Poly { c }
    }

    pub fn zero() -> Self {
        Poly { c: vec![] }
    }

    pub fn one() -> Self {
        Poly { c: vec![Q::one()] }
    }

    pub fn constant(v: Q) -> Self {
        Poly::from_coeffs(vec![v])
    }

    pub fn x() -> Self {
        Poly { c: vec![Q::zero(), Q::one()] }
    }

    pub fn monomial(v: Q, k: usize) -> Self {
        let mut c = vec![Q::zero(); k + 1];
        c[k] = v;
        Poly::from_coeffs(c)
    }

    /// a + b X
    pub fn linear(a: Q, b: Q) -> Self {
        Poly::from_coeffs(vec![a, b])
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> Q {
        self.c.get(k).cloned().unwrap_or_else(Q::zero)
    }

    pub fn degree(&self) -> Option<usize> {
        if self.c.is_empty() {
            None
        } else {
            Some(self.c.len() - 1)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn lead(&self) -> Q {
        self.c.last().cloned().unwrap_or_else(Q::zero)
    }

    /// Lowest exponent with a nonzero coefficient.
    pub fn valuation(&self) -> Option<usize> {
        self.c.iter().position(|v| !Zero::is_zero(v))
    }

    pub fn eval(&self, x: &Q) -> Q {
        let mut acc = Q::zero();
        for v in self.c.iter().rev() {
            acc = acc * x + v;
        }
        acc
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.c.len().max(o.c.len());
        let c = (0..n).map(|k| self.coeff(k) + o.coeff(k)).collect();
        Poly::from_coeffs(c)
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        let n = self.c.len().max(o.c.len());
        let c = (0..n).map(|k| self.coeff(k) - o.coeff(k)).collect();
        Poly::from_coeffs(c)
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![Q::zero(); self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            if Zero::is_zero(a) {
                continue;
            }
            for (j, b) in o.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::from_coeffs(c)
    }

    pub fn scale(&self, v: &Q) -> Poly {
        Poly::from_coeffs(self.c.iter().map(|a| a * v).collect())
    }

    pub fn neg(&self) -> Poly {
        Poly { c: self.c.iter().map(|a| -a).collect() }
    }

    pub fn pow(&self, e: usize) -> Poly {
        let mut acc = Poly::one();
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let l = self.lead().recip();
        self.scale(&l)
    }

    pub fn divrem(&self, d: &Poly) -> Result<(Poly, Poly)> {
        let dd = d.degree().ok_or(Error::DivisionByZero)?;
        let mut r = self.c.clone();
        if r.len() <= dd {
            return Ok((Poly::zero(), self.clone()));
        }
        let lead_inv = d.lead().recip();
        let mut quo = vec![Q::zero(); r.len() - dd];
        for k in (0..quo.len()).rev() {
            let f = &r[k + dd] * &lead_inv;
            if Zero::is_zero(&f) {
                continue;
            }
            for (j, b) in d.c.iter().enumerate() {
                r[k + j] -= &f * b;
            }
            quo[k] = f;
        }
        r.truncate(dd);
        Ok((Poly::from_coeffs(quo), Poly::from_coeffs(r)))
    }

    /// Exact division; errors if the remainder is nonzero.
    pub fn div_exact(&self, d: &Poly) -> Result<Poly> {
        let (quo, rem) = self.divrem(d)?;
        if !rem.is_zero() {
            return Err(Error::Check("inexact polynomial division".into()));
        }
        Ok(quo)
    }

    /// Monic gcd (zero only if both inputs are zero).
    pub fn gcd(&self, o: &Poly) -> Poly {
        let mut a = self.monic();
        let mut b = o.monic();
        while !b.is_zero() {
            let (_, r) = a.divrem(&b).expect("nonzero divisor");
            a = b;
            b = r.monic();
        }
        a
    }

    pub fn derivative(&self) -> Poly {
        Poly::from_coeffs(
            self.c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, v)| v * q(k as i64))
                .collect(),
        )
    }

    /// p(X + a)
    pub fn taylor_shift(&self, a: &Q) -> Poly {
        let mut c = self.c.clone();
        let n = c.len();
        for i in 0..n {
            for k in (i..n.saturating_sub(1)).rev() {
                let t = &c[k + 1] * a;
                c[k] += t;
            }
        }
        Poly::from_coeffs(c)
    }

    /// p(s X)
    pub fn rescale_var(&self, s: &Q) -> Poly {
        let mut p = Q::one();
        let mut c = Vec::with_capacity(self.c.len());
        for v in &self.c {
            c.push(v * &p);
            p *= s;
        }
        Poly::from_coeffs(c)
    }

    /// Π (X - r)
    pub fn from_roots(roots: &[Q]) -> Poly {
        roots
            .iter()
            .fold(Poly::one(), |acc, r| acc.mul(&Poly::linear(-r.clone(), Q::one())))
    }
}

impl Ring for Poly {
    fn zero_like(&self) -> Self {
        Poly::zero()
    }
    fn one_like(&self) -> Self {
        Poly::one()
    }
    fn is_zero(&self) -> bool {
        self.c.is_empty()
    }
    fn plus(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn minus(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn times(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn negate(&self) -> Self {
        self.neg()
    }
    fn scale(&self, c: &Q) -> Self {
        Poly::scale(self, c)
    }
}

/// Power-series quotient a/b modulo X^n, b(0) != 0.
fn series_div(a: &Poly, b: &Poly, n: usize) -> Result<Vec<Q>> {
    let b0 = b.coeff(0);
    if Zero::is_zero(&b0) {
        return Err(Error::DivisionByZero);
    }
    let b0i = b0.recip();
    let mut out: Vec<Q> = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = a.coeff(k);
        for j in 1..=k.min(b.c.len().saturating_sub(1)) {
            acc -= &b.c[j] * &out[k - j];
        }
        out.push(acc * &b0i);
    }
    Ok(out)
}

/// Normalized rational function: monic denominator coprime to the numerator.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatFunc {
    num: Poly,
    den: Poly,
}

impl fmt::Debug for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] / [{:?}]", self.num, self.den)
    }
}

impl RatFunc {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalize(num, den))
    }

    fn normalize(num: Poly, den: Poly) -> Self {
        if num.is_zero() {
            return RatFunc { num, den: Poly::one() };
        }
        if den.degree() == Some(0) {
            let l = den.lead().recip();
            return RatFunc { num: num.scale(&l), den: Poly::one() };
        }
        // cheap removal of common powers of X before the general gcd
        let v = num.valuation().unwrap_or(0).min(den.valuation().unwrap_or(0));
        let (num, den) = if v > 0 {
            (
                Poly::from_coeffs(num.c[v..].to_vec()),
                Poly::from_coeffs(den.c[v..].to_vec()),
            )
        } else {
            (num, den)
        };
        let g = num.gcd(&den);
        let (num, den) = if g.degree().unwrap_or(0) > 0 {
            (num.div_exact(&g).unwrap(), den.div_exact(&g).unwrap())
        } else {
            (num, den)
        };
        let l = den.lead().recip();
        RatFunc { num: num.scale(&l), den: den.scale(&l) }
    }

    pub fn from_poly(p: Poly) -> Self {
        RatFunc { num: p, den: Poly::one() }
    }

    pub fn constant(v: Q) -> Self {
        Self::from_poly(Poly::constant(v))
    }

    pub fn x() -> Self {
        Self::from_poly(Poly::x())
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.degree() == Some(0)
    }

    /// True when the denominator is a pure power of X.
    pub fn is_laurent_polynomial(&self) -> bool {
        let d = self.den.degree().unwrap();
        self.den.c[..d].iter().all(Zero::is_zero)
    }

    pub fn add(&self, o: &RatFunc) -> RatFunc {
        if self.den == o.den {
            return Self::normalize(self.num.add(&o.num), self.den.clone());
        }
        Self::normalize(
            self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            self.den.mul(&o.den),
        )
    }

    pub fn sub(&self, o: &RatFunc) -> RatFunc {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &RatFunc) -> RatFunc {
        if self.is_polynomial() && o.is_polynomial() {
            return RatFunc::from_poly(self.num.mul(&o.num));
        }
        Self::normalize(self.num.mul(&o.num), self.den.mul(&o.den))
    }

    pub fn neg(&self) -> RatFunc {
        RatFunc { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn scale(&self, v: &Q) -> RatFunc {
        if Zero::is_zero(v) {
            return RatFunc::constant(Q::zero());
        }
        RatFunc { num: self.num.scale(v), den: self.den.clone() }
    }

    pub fn inv(&self) -> Result<RatFunc> {
        RatFunc::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, o: &RatFunc) -> Result<RatFunc> {
        Ok(self.mul(&o.inv()?))
    }

    pub fn eval(&self, x: &Q) -> Result<Q> {
        let d = self.den.eval(x);
        if Zero::is_zero(&d) {
            return Err(Error::DivisionByZero);
        }
        Ok(self.num.eval(x) / d)
    }

    /// f(-X)
    pub fn reflect(&self) -> RatFunc {
        Self::normalize(self.num.rescale_var(&q(-1)), self.den.rescale_var(&q(-1)))
    }

    /// Order of the pole at `p` (0 when `p` is not a pole).
    pub fn pole_order_at(&self, p: &Q) -> i64 {
        self.den.taylor_shift(p).valuation().unwrap_or(0) as i64
    }

    /// Laurent coefficients of f around `p`, for (X-p)^lo ..= (X-p)^hi.
    pub fn laurent_at(&self, p: &Q, lo: i64, hi: i64) -> Result<Vec<Q>> {
        if hi < lo {
            return Err(Error::Invalid(format!("empty window [{lo}, {hi}]")));
        }
        let num = self.num.taylor_shift(p);
        let den = self.den.taylor_shift(p);
        let m = den.valuation().unwrap() as i64;
        if m > -lo {
            return Err(Error::PoleOrder { lo, actual: m });
        }
        let dred = Poly::from_coeffs(den.c[m as usize..].to_vec());
        // f = X^{-m} num/dred; need exponents up to hi + m of num/dred
        let need = hi + m;
        let s = if need >= 0 {
            series_div(&num, &dred, (need + 1) as usize)?
        } else {
            vec![]
        };
        Ok((lo..=hi)
            .map(|e| {
                let k = e + m;
                if k < 0 {
                    Q::zero()
                } else {
                    s[k as usize].clone()
                }
            })
            .collect())
    }

    pub fn laurent_at_zero(&self, lo: i64, hi: i64) -> Result<Vec<Q>> {
        self.laurent_at(&Q::zero(), lo, hi)
    }

    pub fn residue_at(&self, p: &Q) -> Q {
        let m = self.pole_order_at(p);
        if m == 0 {
            return Q::zero();
        }
        self.laurent_at(p, -m, -1).unwrap()[(m - 1) as usize].clone()
    }

    /// Minus the coefficient of X^{-1} in the expansion at infinity.
    pub fn residue_at_infinity(&self) -> Q {
        if self.num.is_zero() {
            return Q::zero();
        }
        let a = self.num.degree().unwrap() as i64;
        let b = self.den.degree().unwrap() as i64;
        // f = u^{b-a} N^(u)/D^(u) with u = 1/X and reversed coefficient lists
        let k = 1 - b + a;
        if k < 0 {
            return Q::zero();
        }
        let nr = Poly::from_coeffs(self.num.c.iter().rev().cloned().collect());
        let dr = Poly::from_coeffs(self.den.c.iter().rev().cloned().collect());
        let s = series_div(&nr, &dr, (k + 1) as usize).unwrap();
        -s[k as usize].clone()
    }

    /// Coefficients of X^e for e = hi, hi - 1, ..., lo in the expansion at infinity.
    pub fn expand_at_infinity(&self, hi: i64, lo: i64) -> Result<Vec<Q>> {
        quotient_at_infinity(&self.num, &self.den, hi, lo)
    }

    /// Distinct rational roots of the denominator, by the rational root test
    /// applied to its split linear factors; non-split remainders are ignored.
    pub fn rational_poles(&self) -> Vec<Q> {
        rational_roots(&self.den)
    }
}

/// Rational roots of a polynomial with rational coefficients.
pub fn rational_roots(p: &Poly) -> Vec<Q> {
    use num_integer::Integer;
    let mut out = vec![];
    if p.degree().unwrap_or(0) == 0 {
        return out;
    }
    let mut p = p.clone();
    if let Some(v) = p.valuation() {
        if v > 0 {
            out.push(Q::zero());
            p = Poly::from_coeffs(p.c[v..].to_vec());
        }
    }
    if p.degree().unwrap_or(0) == 0 {
        return out;
    }
    // clear denominators
    let l = p.c.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let ints: Vec<BigInt> = p.c.iter().map(|v| (v * qbig(l.clone())).to_integer()).collect();
    let a0 = ints[0].abs();
    let an = ints.last().unwrap().abs();
    let divs = |n: &BigInt| -> Vec<BigInt> {
        let mut d = vec![];
        let mut k = BigInt::one();
        while &k * &k <= *n {
            if (n % &k).is_zero() {
                d.push(k.clone());
                if &k * &k != *n {
                    d.push(n / &k);
                }
            }
            k += 1;
        }
        d
    };
    let mut seen = BTreeMap::new();
    for num in divs(&a0) {
        for den in divs(&an) {
            for s in [1i64, -1] {
                let r = Q::new(&num * BigInt::from(s), den.clone());
                if seen.contains_key(&r) {
                    continue;
                }
                if Zero::is_zero(&p.eval(&r)) {
                    out.push(r.clone());
                }
                seen.insert(r, ());
            }
        }
    }
    out
}

impl Ring for RatFunc {
    fn zero_like(&self) -> Self {
        RatFunc::constant(Q::zero())
    }
    fn one_like(&self) -> Self {
        RatFunc::constant(Q::one())
    }
    fn is_zero(&self) -> bool {
        self.num.is_zero()
    }
    fn plus(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn minus(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn times(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn negate(&self) -> Self {
        self.neg()
    }
    fn scale(&self, c: &Q) -> Self {
        RatFunc::scale(self, c)
    }
}

impl Field for RatFunc {
    fn inv(&self) -> Result<Self> {
        RatFunc::inv(self)
    }
}

/// Coefficients of X^e, e = hi down to lo, of a/b expanded at infinity.
fn quotient_at_infinity(a: &Poly, b: &Poly, hi: i64, lo: i64) -> Result<Vec<Q>> {
    if hi < lo {
        return Err(Error::Invalid(format!("empty window [{lo}, {hi}]")));
    }
    if b.is_zero() {
        return Err(Error::DivisionByZero);
    }
    if a.is_zero() {
        return Ok(vec![Q::zero(); (hi - lo + 1) as usize]);
    }
    let top = a.degree().unwrap() as i64 - b.degree().unwrap() as i64;
    let need = top - lo;
    let s = if need >= 0 {
        let ar = Poly::from_coeffs(a.c.iter().rev().cloned().collect());
        let br = Poly::from_coeffs(b.c.iter().rev().cloned().collect());
        series_div(&ar, &br, (need + 1) as usize)?
    } else {
        vec![]
    };
    Ok((lo..=hi)
        .rev()
        .map(|e| {
            let k = top - e;
            if k < 0 || k > need {
                Q::zero()
            } else {
                s[k as usize].clone()
            }
        })
        .collect())
}

/// Rational function whose denominator splits into rational linear
/// factors, num / Π (X - p)^m, reduced so that num(p) != 0 at every pole.
/// Sums and products never need a polynomial gcd.
#[derive(Clone, PartialEq, Eq)]
pub struct SplitFrac {
    num: Poly,
    poles: BTreeMap<Q, u32>,
}

impl fmt::Debug for SplitFrac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}]", self.num)?;
        for (p, m) in &self.poles {
            write!(f, " / (X - {p})^{m}")?;
        }
        Ok(())
    }
}

/// a / (X - p), exact.
fn deflate(a: &Poly, p: &Q) -> Poly {
    let n = a.c.len();
    let mut out = vec![Q::zero(); n - 1];
    let mut carry = Q::zero();
    for k in (1..n).rev() {
        carry = &a.c[k] + &carry * p;
        out[k - 1] = carry.clone();
    }
    Poly::from_coeffs(out)
}

fn linear_power(p: &Q, m: u32) -> Poly {
    Poly::linear(-p.clone(), Q::one()).pow(m as usize)
}

impl SplitFrac {
    fn reduce(mut num: Poly, poles: BTreeMap<Q, u32>) -> Self {
        if num.is_zero() {
            return SplitFrac { num, poles: BTreeMap::new() };
        }
        let mut kept = BTreeMap::new();
        for (p, mut m) in poles {
            while m > 0 && Zero::is_zero(&num.eval(&p)) {
                num = deflate(&num, &p);
                m -= 1;
            }
            if m > 0 {
                kept.insert(p, m);
            }
        }
        SplitFrac { num, poles: kept }
    }

    pub fn from_poly(p: Poly) -> Self {
        SplitFrac { num: p, poles: BTreeMap::new() }
    }

    pub fn constant(v: Q) -> Self {
        Self::from_poly(Poly::constant(v))
    }

    pub fn x() -> Self {
        Self::from_poly(Poly::x())
    }

    /// c / (X - p)^m
    pub fn pole(c: Q, p: Q, m: u32) -> Self {
        Self::reduce(Poly::constant(c), BTreeMap::from([(p, m)]))
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> Poly {
        self.poles.iter().fold(Poly::one(), |acc, (p, m)| acc.mul(&linear_power(p, *m)))
    }

    pub fn poles(&self) -> impl Iterator<Item = (&Q, &u32)> {
        self.poles.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn is_laurent_polynomial(&self) -> bool {
        self.poles.keys().all(Zero::is_zero)
    }

    /// deg num - deg den; None for zero.
    pub fn degree(&self) -> Option<i64> {
        let d: u32 = self.poles.values().sum();
        self.num.degree().map(|a| a as i64 - d as i64)
    }

    pub fn add(&self, o: &SplitFrac) -> SplitFrac {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        if self.poles == o.poles {
            return Self::reduce(self.num.add(&o.num), self.poles.clone());
        }
        let mut all = self.poles.clone();
        for (p, m) in &o.poles {
            let e = all.entry(p.clone()).or_insert(0);
            *e = (*e).max(*m);
        }
        let lift = |f: &SplitFrac| {
            let mut n = f.num.clone();
            for (p, m) in &all {
                let have = f.poles.get(p).copied().unwrap_or(0);
                if *m > have {
                    n = n.mul(&linear_power(p, m - have));
                }
            }
            n
        };
        let num = lift(self).add(&lift(o));
        Self::reduce(num, all)
    }

    pub fn sub(&self, o: &SplitFrac) -> SplitFrac {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &SplitFrac) -> SplitFrac {
        if self.is_zero() || o.is_zero() {
            return SplitFrac::constant(Q::zero());
        }
        let mut poles = self.poles.clone();
        for (p, m) in &o.poles {
            *poles.entry(p.clone()).or_insert(0) += m;
        }
        let num = self.num.mul(&o.num);
        if poles.is_empty() {
            return SplitFrac { num, poles };
        }
        Self::reduce(num, poles)
    }

    pub fn neg(&self) -> SplitFrac {
        SplitFrac { num: self.num.neg(), poles: self.poles.clone() }
    }

    pub fn scale(&self, v: &Q) -> SplitFrac {
        if Zero::is_zero(v) {
            return SplitFrac::constant(Q::zero());
        }
        SplitFrac { num: self.num.scale(v), poles: self.poles.clone() }
    }

    /// Inverse; the numerator must be c X^v (X - p)^e with e <= 1.
    pub fn inv(&self) -> Result<SplitFrac> {
        if self.num.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let v = self.num.valuation().unwrap();
        let rest = Poly::from_coeffs(self.num.c[v..].to_vec());
        let mut poles = BTreeMap::new();
        if v > 0 {
            poles.insert(Q::zero(), v as u32);
        }
        let lead = match rest.degree().unwrap() {
            0 => rest.lead(),
            1 => {
                let root = -rest.coeff(0) / rest.coeff(1);
                *poles.entry(root).or_insert(0) += 1;
                rest.coeff(1)
            }
            _ => return Err(Error::Invalid("inverse of a numerator without a split form".into())),
        };
        let num = self.den().scale(&lead.recip());
        Ok(SplitFrac { num, poles })
    }

    pub fn div(&self, o: &SplitFrac) -> Result<SplitFrac> {
        Ok(self.mul(&o.inv()?))
    }

    pub fn eval(&self, x: &Q) -> Result<Q> {
        let mut d = Q::one();
        for (p, m) in &self.poles {
            let f = x - p;
            if Zero::is_zero(&f) {
                return Err(Error::DivisionByZero);
            }
            d *= num_traits::pow(f, *m as usize);
        }
        Ok(self.num.eval(x) / d)
    }

    /// f(-X)
    pub fn reflect(&self) -> SplitFrac {
        let total: u32 = self.poles.values().sum();
        let mut num = self.num.rescale_var(&q(-1));
        if total % 2 == 1 {
            num = num.neg();
        }
        SplitFrac { num, poles: self.poles.iter().map(|(p, m)| (-p.clone(), *m)).collect() }
    }

    pub fn to_ratfunc(&self) -> RatFunc {
        RatFunc::new(self.num.clone(), self.den()).expect("nonzero denominator")
    }

    /// Coefficients of X^e for e = hi, hi - 1, ..., lo in the expansion at infinity.
    pub fn expand_at_infinity(&self, hi: i64, lo: i64) -> Result<Vec<Q>> {
        quotient_at_infinity(&self.num, &self.den(), hi, lo)
    }

    /// Laurent coefficients around `p`, for (X-p)^lo ..= (X-p)^hi.
    pub fn laurent_at(&self, p: &Q, lo: i64, hi: i64) -> Result<Vec<Q>> {
        self.to_ratfunc().laurent_at(p, lo, hi)
    }

    /// Order of the pole at `p`, 0 when `p` is not a pole.
    pub fn pole_order(&self, p: &Q) -> u32 {
        self.poles.get(p).copied().unwrap_or(0)
    }

    /// Coefficients of (X-p)^{-m}, ..., (X-p)^{-1}, m the pole order at `p`.
    pub fn principal_part(&self, p: &Q) -> Vec<Q> {
        let m = self.pole_order(p) as usize;
        if m == 0 {
            return vec![];
        }
        // Taylor coefficients at p of the numerator and of the other factors
        let mut top = Vec::with_capacity(m);
        let mut rest = self.num.clone();
        for _ in 0..m {
            if rest.is_zero() {
                top.push(Q::zero());
                continue;
            }
            top.push(rest.eval(p));
            rest = deflate(&rest, p);
        }
        let mut bottom = vec![Q::zero(); m];
        bottom[0] = Q::one();
        for (r, k) in &self.poles {
            if r == p {
                continue;
            }
            let shift = p - r;
            for _ in 0..*k {
                for i in (0..m).rev() {
                    let lower = if i > 0 { bottom[i - 1].clone() } else { Q::zero() };
                    bottom[i] = &bottom[i] * &shift + lower;
                }
            }
        }
        series_div(&Poly::from_coeffs(top), &Poly::from_coeffs(bottom), m).expect("nonzero constant term")
    }
}

impl Ring for SplitFrac {
    fn zero_like(&self) -> Self {
        SplitFrac::constant(Q::zero())
    }
    fn one_like(&self) -> Self {
        SplitFrac::constant(Q::one())
    }
    fn is_zero(&self) -> bool {
        self.num.is_zero()
    }
    fn plus(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn minus(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn times(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn negate(&self) -> Self {
        self.neg()
    }
    fn scale(&self, c: &Q) -> Self {
        SplitFrac::scale(self, c)
    }
}

impl Field for SplitFrac {
    fn inv(&self) -> Result<Self> {
        SplitFrac::inv(self)
    }
}

/// Truncated Laurent series Σ c[k] e^{lo+k} + O(e^{lo + c.len()}).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Laurent {
    lo: i64,
    c: Vec<Q>,
}

impl fmt::Debug for Laurent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .c
            .iter()
            .enumerate()
            .filter(|(_, v)| !Zero::is_zero(*v))
            .map(|(k, v)| format!("({})e^{}", fmt_q(v), self.lo + k as i64))
            .collect();
        write!(f, "{} + O(e^{})", terms.join(" + "), self.hi())
    }
}

impl Laurent {
    /// Coefficients for exponents lo..hi-1, precision hi (exclusive).
    pub fn new(lo: i64, c: Vec<Q>) -> Self {
        Laurent { lo, c }
    }

    pub fn constant(v: Q, hi: i64) -> Self {
        if hi <= 0 {
            return Laurent { lo: hi, c: vec![] };
        }
        let mut c = vec![Q::zero(); hi as usize];
        c[0] = v;
        Laurent { lo: 0, c }
    }

    /// The local variable e itself.
    pub fn var(hi: i64) -> Self {
        Self::monomial(Q::one(), 1, hi)
    }

    pub fn monomial(v: Q, e: i64, hi: i64) -> Self {
        if e >= hi {
            return Laurent { lo: hi, c: vec![] };
        }
        let mut c = vec![Q::zero(); (hi - e) as usize];
        c[0] = v;
        Laurent { lo: e, c }
    }

    /// X expanded around the point p, to the given precision.
    pub fn point(p: &Q, hi: i64) -> Self {
        Laurent::constant(p.clone(), hi).plus(&Laurent::var(hi))
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Exclusive precision bound.
    pub fn hi(&self) -> i64 {
        self.lo + self.c.len() as i64
    }

    pub fn coeff(&self, e: i64) -> Result<Q> {
        if e >= self.hi() {
            return Err(Error::Invalid(format!(
                "coefficient e^{e} beyond precision e^{}",
                self.hi()
            )));
        }
        if e < self.lo {
            return Ok(Q::zero());
        }
        Ok(self.c[(e - self.lo) as usize].clone())
    }

    pub fn valuation(&self) -> Option<i64> {
        self.c.iter().position(|v| !Zero::is_zero(v)).map(|k| self.lo + k as i64)
    }

    pub fn truncate(&self, hi: i64) -> Laurent {
        if hi >= self.hi() {
            return self.clone();
        }
        if hi <= self.lo {
            return Laurent { lo: hi, c: vec![] };
        }
        Laurent { lo: self.lo, c: self.c[..(hi - self.lo) as usize].to_vec() }
    }

    fn trimmed(mut self) -> Laurent {
        let k = self.c.iter().position(|v| !Zero::is_zero(v)).unwrap_or(self.c.len());
        if k > 0 {
            self.c.drain(..k);
            self.lo += k as i64;
        }
        self
    }

    fn add_impl(&self, o: &Laurent, sign: bool) -> Laurent {
        let lo = self.lo.min(o.lo);
        let hi = self.hi().min(o.hi());
        if hi <= lo {
            return Laurent { lo: hi, c: vec![] };
        }
        let c = (lo..hi)
            .map(|e| {
                let a = self.coeff(e).unwrap();
                let b = o.coeff(e).unwrap();
                if sign {
                    a + b
                } else {
                    a - b
                }
            })
            .collect();
        Laurent { lo, c }.trimmed()
    }

    pub fn mul(&self, o: &Laurent) -> Laurent {
        let a = self.clone().trimmed();
        let b = o.clone().trimmed();
        let lo = a.lo + b.lo;
        let hi = (a.hi() + b.lo).min(b.hi() + a.lo);
        if hi <= lo {
            return Laurent { lo: hi, c: vec![] };
        }
        let n = (hi - lo) as usize;
        let mut c = vec![Q::zero(); n];
        for (i, x) in a.c.iter().enumerate().take(n) {
            if Zero::is_zero(x) {
                continue;
            }
            for (j, y) in b.c.iter().enumerate().take(n - i) {
                c[i + j] += x * y;
            }
        }
        Laurent { lo, c }
    }

    pub fn inv(&self) -> Result<Laurent> {
        let a = self.clone().trimmed();
        if a.c.is_empty() {
            return Err(Error::Invalid("inverting a Laurent series with no significant terms".into()));
        }
        let n = a.c.len();
        let a0i = a.c[0].recip();
        let mut out: Vec<Q> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = if k == 0 { Q::one() } else { Q::zero() };
            for j in 1..=k {
                acc -= &a.c[j] * &out[k - j];
            }
            out.push(acc * &a0i);
        }
        Ok(Laurent { lo: -a.lo, c: out })
    }

    /// Coefficient of e^{-1}.
    pub fn residue(&self) -> Result<Q> {
        self.coeff(-1)
    }
}

impl Ring for Laurent {
    fn zero_like(&self) -> Self {
        Laurent { lo: self.hi(), c: vec![] }
    }
    fn one_like(&self) -> Self {
        Laurent::constant(Q::one(), (self.hi() - self.lo.min(0)).max(1))
    }
    fn is_zero(&self) -> bool {
        self.c.iter().all(Zero::is_zero)
    }
    fn plus(&self, o: &Self) -> Self {
        self.add_impl(o, true)
    }
    fn minus(&self, o: &Self) -> Self {
        self.add_impl(o, false)
    }
    fn times(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn negate(&self) -> Self {
        Laurent { lo: self.lo, c: self.c.iter().map(|v| -v).collect() }
    }
    fn scale(&self, v: &Q) -> Self {
        Laurent { lo: self.lo, c: self.c.iter().map(|x| x * v).collect() }.trimmed()
    }
}

impl Field for Laurent {
    fn inv(&self) -> Result<Self> {
        Laurent::inv(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[i64]) -> Poly {
        Poly::from_coeffs(v.iter().map(|&x| q(x)).collect())
    }

    #[test]
    fn laurent_window_examples() {
        let f = RatFunc::new(Poly::one(), Poly::x()).unwrap();
        assert_eq!(f.laurent_at_zero(-1, 0).unwrap(), vec![q(1), q(0)]);

        let g = RatFunc::new(Poly::one(), p(&[-2, 1])).unwrap();
        assert_eq!(
            g.laurent_at_zero(-1, 2).unwrap(),
            vec![q(0), qr(-1, 2), qr(-1, 4), qr(-1, 8)]
        );

        // (3X+1)/(X^2 (X+1)) = X^{-2} (1+3X)(1 - X + X^2 - ...) = X^{-2} + 2 X^{-1} + ...
        let h = RatFunc::new(p(&[1, 3]), p(&[0, 0, 1, 1])).unwrap();
        assert_eq!(h.laurent_at_zero(-2, -1).unwrap(), vec![q(1), q(2)]);
    }

    #[test]
    fn pole_too_deep_is_reported() {
        let f = RatFunc::new(Poly::one(), Poly::monomial(q(1), 3)).unwrap();
        assert_eq!(
            f.laurent_at_zero(-2, 0),
            Err(Error::PoleOrder { lo: -2, actual: 3 })
        );
    }

    #[test]
    fn residues() {
        let f = RatFunc::new(Poly::one(), p(&[-3, 1])).unwrap();
        assert_eq!(f.residue_at(&q(3)), q(1));
        let g = RatFunc::new(Poly::one(), p(&[0, 0, 1])).unwrap();
        assert_eq!(g.residue_at(&q(0)), q(0));
        let h = RatFunc::new(Poly::x(), p(&[2, -3, 1])).unwrap();
        assert_eq!(h.residue_at(&q(2)), q(2));
        assert_eq!(h.residue_at(&q(1)), q(-1));
        assert_eq!(h.residue_at_infinity(), q(-1));
        assert_eq!(h.residue_at(&q(5)), q(0));
    }

    #[test]
    fn normalization_is_canonical() {
        // (X^2-1)/(2X-2) = (X+1)/2
        let f = RatFunc::new(p(&[-1, 0, 1]), p(&[-2, 2])).unwrap();
        assert!(f.is_polynomial());
        assert_eq!(f.num(), &Poly::from_coeffs(vec![qr(1, 2), qr(1, 2)]));
        let g = RatFunc::new(f.num().clone(), f.den().clone()).unwrap();
        assert_eq!(f, g);
        assert!(RatFunc::new(p(&[1]), Poly::zero()).is_err());
    }

    #[test]
    fn taylor_shift_and_roots() {
        let f = p(&[1, 2, 1]); // (X+1)^2
        assert_eq!(f.taylor_shift(&q(-1)), p(&[0, 0, 1]));
        let mut r = rational_roots(&Poly::from_roots(&[qr(1, 2), q(-3), q(0)]));
        r.sort();
        assert_eq!(r, vec![q(-3), q(0), qr(1, 2)]);
    }

    #[test]
    fn split_principal_parts() {
        // (X + 5) / ((X - 1)^2 (X + 2))
        let f = SplitFrac::pole(q(1), q(1), 2)
            .mul(&SplitFrac::pole(q(1), q(-2), 1))
            .mul(&SplitFrac::from_poly(p(&[5, 1])));
        let g = f.to_ratfunc();
        assert_eq!(f.principal_part(&q(1)), g.laurent_at(&q(1), -2, -1).unwrap());
        assert_eq!(f.principal_part(&q(-2)), vec![g.residue_at(&q(-2))]);
        assert!(f.principal_part(&q(3)).is_empty());
        assert_eq!(f.pole_order(&q(1)), 2);
    }

    #[test]
    fn laurent_ring() {
        // 1/(e (1 - e)) = e^-1 + 1 + e + ...
        let e = Laurent::var(4);
        let one = Laurent::constant(q(1), 4);
        let f = e.times(&one.minus(&e)).inv().unwrap();
        assert_eq!(f.lo(), -1);
        assert_eq!(f.coeff(-1).unwrap(), q(1));
        assert_eq!(f.coeff(1).unwrap(), q(1));
        assert!(f.coeff(2).is_err());
    }

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial(5), BigInt::from(15));
        assert_eq!(double_factorial(0), BigInt::from(1));
        assert_eq!(double_factorial(-1), BigInt::from(1));
        assert_eq!(double_factorial(15), BigInt::from(2027025));
    }

    #[test]
    fn esym() {
        let e = elementary_symmetric(&[q(1), q(2), q(3)]);
        assert_eq!(e, vec![q(1), q(6), q(11), q(6)]);
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_q(&qr(-6, 4)), "-3/2");
        assert_eq!(fmt_q(&q(7)), "7");
        assert_eq!(parse_q("-3/2").unwrap(), qr(-3, 2));
    }
}
