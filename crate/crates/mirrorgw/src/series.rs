//! Truncated power series in one grading variable over any [`Ring`].
//!
//! Coefficients are stored for exponents `0..=order`. Binary operations on
//! series of different orders truncate to the smaller order. A series may be
//! half-graded: exponent `k` then stands for `q^{k/2}`, and only the
//! derivation `q d/dq` sees the difference.

use num_traits::One;

use crate::arith::{q, Field, Ring, Q};
use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Debug)]
pub struct Series<R> {
    c: Vec<R>,
    half: bool,
}

impl<R: Ring> Series<R> {
    pub fn new(c: Vec<R>) -> Self {
        assert!(!c.is_empty(), "a series needs at least its constant term");
        Series { c, half: false }
    }

    pub fn half_graded(mut self) -> Self {
        self.half = true;
        self
    }

    pub fn with_grading(mut self, half: bool) -> Self {
        self.half = half;
        self
    }

    pub fn is_half(&self) -> bool {
        self.half
    }

    pub fn zero(template: &R, order: usize) -> Self {
        Series::new(vec![template.zero_like(); order + 1])
    }

    pub fn constant(v: R, order: usize) -> Self {
        let mut c = vec![v.zero_like(); order + 1];
        c[0] = v;
        Series::new(c)
    }

    /// The grading variable itself.
    pub fn var(template: &R, order: usize) -> Self {
        let mut s = Series::zero(template, order);
        if order >= 1 {
            s.c[1] = template.one_like();
        }
        s
    }

    pub fn from_fn(order: usize, f: impl FnMut(usize) -> R) -> Self {
        Series::new((0..=order).map(f).collect())
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeff(&self, k: usize) -> &R {
        &self.c[k]
    }

    pub fn coeffs(&self) -> &[R] {
        &self.c
    }

    pub fn set(&mut self, k: usize, v: R) {
        self.c[k] = v;
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order());
        Series { c: self.c[..=order].to_vec(), half: self.half }
    }

    pub fn map<S: Ring>(&self, f: impl FnMut(&R) -> S) -> Series<S> {
        Series { c: self.c.iter().map(f).collect(), half: self.half }
    }

    pub fn valuation(&self) -> Option<usize> {
        self.c.iter().position(|v| !v.is_zero())
    }

    fn zip(&self, o: &Self, f: impl Fn(&R, &R) -> R) -> Self {
        let n = self.c.len().min(o.c.len());
        Series {
            c: (0..n).map(|k| f(&self.c[k], &o.c[k])).collect(),
            half: self.half,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.plus(b))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.minus(b))
    }

    pub fn neg(&self) -> Self {
        self.map(|a| a.negate())
    }

    pub fn scale(&self, v: &Q) -> Self {
        self.map(|a| a.scale(v))
    }

    /// Multiply every coefficient by a ring element.
    pub fn mul_coeff(&self, v: &R) -> Self {
        self.map(|a| a.times(v))
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.c.len().min(o.c.len());
        let mut c: Vec<R> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc: Option<R> = None;
            for j in 0..=k {
                if self.c[j].is_zero() || o.c[k - j].is_zero() {
                    continue;
                }
                let t = self.c[j].times(&o.c[k - j]);
                acc = Some(match acc {
                    None => t,
                    Some(a) => a.plus(&t),
                });
            }
            c.push(acc.unwrap_or_else(|| self.c[0].zero_like()));
        }
        Series { c, half: self.half }
    }

    /// Multiply by a series with scalar coefficients.
    pub fn mul_scalar_series(&self, o: &Series<Q>) -> Self {
        let n = self.c.len().min(o.c.len());
        let mut c: Vec<R> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.c[0].zero_like();
            for j in 0..=k {
                if o.c[k - j].is_zero() || self.c[j].is_zero() {
                    continue;
                }
                acc = acc.plus(&self.c[j].scale(&o.c[k - j]));
            }
            c.push(acc);
        }
        Series { c, half: self.half }
    }

    /// q d/dq.
    pub fn d(&self) -> Self {
        let unit = if self.half { Q::new(1.into(), 2.into()) } else { Q::one() };
        Series {
            c: self
                .c
                .iter()
                .enumerate()
                .map(|(k, a)| a.scale(&(q(k as i64) * &unit)))
                .collect(),
            half: self.half,
        }
    }

    /// Inverse of [`Series::d`] on series without constant term; the result
    /// has constant term zero.
    pub fn d_inverse(&self) -> Result<Self> {
        if !self.c[0].is_zero() {
            return Err(Error::ConstantTerm("antiderivative of a series with constant term".into()));
        }
        let unit = if self.half { q(2) } else { Q::one() };
        Ok(Series {
            c: self
                .c
                .iter()
                .enumerate()
                .map(|(k, a)| if k == 0 { a.clone() } else { a.scale(&(&unit / q(k as i64))) })
                .collect(),
            half: self.half,
        })
    }

    /// Multiply by the grading variable to the power `k`.
    pub fn shift(&self, k: usize) -> Self {
        let z = self.c[0].zero_like();
        let n = self.c.len();
        let c = (0..n).map(|i| if i < k { z.clone() } else { self.c[i - k].clone() }).collect();
        Series { c, half: self.half }
    }

    /// Inverse of a series whose constant term is one.
    pub fn inv_unit(&self) -> Result<Self> {
        if self.c[0] != self.c[0].one_like() {
            return Err(Error::ConstantTerm("inverse requires constant term 1".into()));
        }
        let n = self.c.len();
        let mut b: Vec<R> = Vec::with_capacity(n);
        b.push(self.c[0].one_like());
        for k in 1..n {
            let mut acc = self.c[0].zero_like();
            for j in 1..=k {
                if self.c[j].is_zero() {
                    continue;
                }
                acc = acc.minus(&self.c[j].times(&b[k - j]));
            }
            b.push(acc);
        }
        Ok(Series { c: b, half: self.half })
    }

    pub fn exp(&self) -> Result<Self> {
        if !self.c[0].is_zero() {
            return Err(Error::ConstantTerm("exp requires zero constant term".into()));
        }
        let n = self.c.len();
        let mut e: Vec<R> = Vec::with_capacity(n);
        e.push(self.c[0].one_like());
        for k in 1..n {
            let mut acc = self.c[0].zero_like();
            for j in 1..=k {
                if self.c[j].is_zero() {
                    continue;
                }
                acc = acc.plus(&self.c[j].times(&e[k - j]).scale(&q(j as i64)));
            }
            e.push(acc.scale(&Q::new(1.into(), (k as i64).into())));
        }
        Ok(Series { c: e, half: self.half })
    }

    pub fn log(&self) -> Result<Self> {
        if self.c[0] != self.c[0].one_like() {
            return Err(Error::ConstantTerm("log requires constant term 1".into()));
        }
        let inv = self.inv_unit()?;
        // index-derivative of f times 1/f, then divide coefficient k by k
        let df = Series {
            c: self.c.iter().enumerate().map(|(k, a)| a.scale(&q(k as i64))).collect(),
            half: self.half,
        };
        let g = df.mul(&inv);
        let mut c: Vec<R> = Vec::with_capacity(g.c.len());
        c.push(self.c[0].zero_like());
        for (k, a) in g.c.iter().enumerate().skip(1) {
            c.push(a.scale(&Q::new(1.into(), (k as i64).into())));
        }
        Ok(Series { c, half: self.half })
    }

    /// f^e for rational e; non-integer or negative exponents need f(0) = 1.
    pub fn pow(&self, e: &Q) -> Result<Self> {
        if e.is_integer() && *e >= <Q as num_traits::Zero>::zero() {
            let k: usize = e.to_integer().try_into().map_err(|_| Error::Invalid("exponent too large".into()))?;
            let mut acc = Series::constant(self.c[0].one_like(), self.order()).with_grading(self.half);
            for _ in 0..k {
                acc = acc.mul(self);
            }
            return Ok(acc);
        }
        if self.c[0] != self.c[0].one_like() {
            return Err(Error::ConstantTerm("rational power requires constant term 1".into()));
        }
        self.log()?.scale(e).exp()
    }

    /// f(g) for a scalar series g without constant term.
    pub fn compose(&self, g: &Series<Q>) -> Result<Self> {
        if !g.c[0].is_zero() {
            return Err(Error::ConstantTerm("inner series of a composition must vanish at 0".into()));
        }
        let n = self.c.len().min(g.c.len());
        let z = self.c[0].zero_like();
        let mut out = vec![z; n];
        let mut gp = Series::constant(Q::one(), n - 1).with_grading(g.half);
        for k in 0..n {
            if !self.c[k].is_zero() {
                for (j, gj) in gp.c.iter().enumerate() {
                    if !gj.is_zero() {
                        out[j] = out[j].plus(&self.c[k].scale(gj));
                    }
                }
            }
            gp = gp.mul(&g.truncate(n - 1));
        }
        Ok(Series { c: out, half: g.half })
    }
}

impl<R: Field> Series<R> {
    pub fn inv(&self) -> Result<Self> {
        let c0 = self.c[0].inv()?;
        let unit = self.mul_coeff(&c0);
        Ok(unit.inv_unit()?.mul_coeff(&c0))
    }

    pub fn div(&self, o: &Self) -> Result<Self> {
        Ok(self.mul(&o.inv()?))
    }
}

impl Series<Q> {
    pub fn from_qs(v: &[Q]) -> Self {
        Series::new(v.to_vec())
    }

    pub fn one(order: usize) -> Self {
        Series::constant(Q::one(), order)
    }

    /// Compositional inverse of g = c q + O(q^2), c != 0.
    pub fn revert(&self) -> Result<Self> {
        if !self.c[0].is_zero() {
            return Err(Error::ConstantTerm("reversion requires g(0) = 0".into()));
        }
        let n = self.order();
        if n == 0 {
            return Ok(self.clone());
        }
        let lin = self.c[1].clone();
        if lin.is_zero() {
            return Err(Error::ConstantTerm("reversion requires a nonzero linear term".into()));
        }
        // normalize to a unit linear coefficient: g = lin * g1, g^{-1}(Q) = g1^{-1}(Q/lin)
        let g1 = self.scale(&lin.recip());
        // Lagrange: [Q^k] h = (1/k) [q^{k-1}] (q/g1)^k
        let ratio = Series::new(g1.c[1..].to_vec()).inv_unit()?;
        let mut h = vec![<Q as num_traits::Zero>::zero(); n + 1];
        let mut pw = Series::one(n - 1);
        for k in 1..=n {
            pw = pw.mul(&ratio.truncate(n - 1));
            h[k] = &pw.c[k - 1] / q(k as i64);
        }
        let h1 = Series::new(h).with_grading(self.half);
        let scaled = Series::from_fn(n, |k| if k == 1 { lin.recip() } else { <Q as num_traits::Zero>::zero() })
            .with_grading(self.half);
        h1.compose(&scaled)
    }

    pub fn eval_is_zero(&self) -> bool {
        self.c.iter().all(|v| Ring::is_zero(v))
    }
}

impl<R: Ring> Ring for Series<R> {
    fn zero_like(&self) -> Self {
        Series { c: vec![self.c[0].zero_like(); self.c.len()], half: self.half }
    }
    fn one_like(&self) -> Self {
        let mut z = self.zero_like();
        z.c[0] = self.c[0].one_like();
        z
    }
    fn is_zero(&self) -> bool {
        self.c.iter().all(|a| a.is_zero())
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
        Series::scale(self, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::qr;

    fn s(v: &[i64]) -> Series<Q> {
        Series::new(v.iter().map(|&x| q(x)).collect())
    }

    #[test]
    fn derivation_examples() {
        assert_eq!(s(&[1, 1, 0]).d(), s(&[0, 1, 0]));
        assert_eq!(s(&[1, 770]).d(), s(&[0, 770]));
        assert_eq!(s(&[0, 0, 1]).d(), s(&[0, 0, 2]));
        assert_eq!(s(&[0, 0, 1]).half_graded().d(), s(&[0, 0, 1]).half_graded());
    }

    #[test]
    fn exp_log_pow() {
        assert_eq!(s(&[0, 0, 0]).exp().unwrap(), s(&[1, 0, 0]));
        assert_eq!(s(&[1, 0, 0]).log().unwrap(), s(&[0, 0, 0]));
        let half = s(&[1, 1, 0, 0]).pow(&qr(1, 2)).unwrap();
        assert_eq!(half.coeffs()[..3], [q(1), qr(1, 2), qr(-1, 8)]);
        assert_eq!(half.coeff(3), &qr(1, 16));
        let f = s(&[1, 3, 5, 0, 0]);
        assert_eq!(f.log().unwrap().exp().unwrap(), f);
        assert!(s(&[1, 1]).exp().is_err());
        assert!(s(&[2, 1]).log().is_err());
    }

    #[test]
    fn composition_and_reversion() {
        assert_eq!(s(&[0, 1, 0, 0]).revert().unwrap(), s(&[0, 1, 0, 0]));
        // q e^{770 q} = q + 770 q^2 + ...
        let g = Series::new(vec![q(0), q(1), q(770), qr(770 * 770, 2)]);
        let h = g.revert().unwrap();
        assert_eq!(h.coeff(1), &q(1));
        assert_eq!(h.coeff(2), &q(-770));
        let geo = s(&[1, 1, 1, 1, 1]);
        assert_eq!(geo.compose(&s(&[0, 0, 1, 0, 0])).unwrap(), s(&[1, 0, 1, 0, 1]));
    }

    #[test]
    fn reversion_with_nonunit_linear_term() {
        let g = s(&[0, 2, 3, 1]);
        let h = g.revert().unwrap();
        assert_eq!(g.compose(&h).unwrap(), s(&[0, 1, 0, 0]));
        assert_eq!(h.compose(&g).unwrap(), s(&[0, 1, 0, 0]));
    }

    #[test]
    fn nested_coefficients() {
        let inner = s(&[1, 2, 0]);
        let outer = Series::new(vec![inner.clone(), inner.clone(), inner.zero_like()]);
        let sq = outer.mul(&outer);
        assert_eq!(sq.coeff(1), &inner.mul(&inner).scale(&q(2)));
        let e = Series::new(vec![inner.zero_like(), inner.clone(), inner.zero_like()]).exp().unwrap();
        assert_eq!(e.coeff(2), &inner.mul(&inner).scale(&qr(1, 2)));
    }

    #[test]
    fn mixed_orders_truncate() {
        assert_eq!(s(&[1, 1, 1]).add(&s(&[1, 1])).order(), 1);
        assert_eq!(s(&[1, 1, 1]).mul(&s(&[1])).order(), 0);
    }

    #[test]
    fn field_inverse() {
        let f = s(&[2, 1, 0]);
        let g = f.inv().unwrap();
        assert_eq!(f.mul(&g), s(&[1, 0, 0]));
    }
}
