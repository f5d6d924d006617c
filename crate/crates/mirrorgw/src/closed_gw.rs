//! Two-point genus zero invariants of complete intersections: the mirror side
//! generating functions, exact division by ħ1 + ħ2, extraction of descendant
//! and primary invariants, and BPS numbers.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::arith::{q, Q};
use crate::coeffs::CoeffTable;
use crate::error::{Error, Result};
use crate::hypergeom::{i_series, invert_mirror, j_series, m_powers, ModelSpec, QW};
use crate::series::Series;

/// Constant in the exponential prefactor used when ν = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nu1Prefactor {
    /// e^{-a! Q/ħ}
    Factorial,
    /// e^{-a^a Q/ħ}
    SelfPower,
}

impl Nu1Prefactor {
    fn constant(self, m: &ModelSpec) -> Q {
        match self {
            Nu1Prefactor::Factorial => m.fact(),
            Nu1Prefactor::SelfPower => m.self_pow(),
        }
    }
}

/// Monomials Q^d H^e ħ^{-k}, keyed by (d, e, k).
pub type Terms = BTreeMap<(usize, usize, usize), Q>;

fn push(terms: &mut Terms, key: (usize, usize, usize), v: Q) {
    if v.is_zero() {
        return;
    }
    let e = terms.entry(key).or_insert_with(Q::zero);
    *e += v;
    if e.is_zero() {
        terms.remove(&key);
    }
}

/// e^{-J w} as a q-series of w-series.
fn exp_minus_jw(j: &Series<Q>, w_order: usize) -> QW {
    let order = j.order();
    let mut powers = vec![Series::one(order)];
    for k in 1..=w_order {
        let next = powers[k - 1].mul(j).scale(&-q(k as i64).recip());
        powers.push(next);
    }
    Series::from_fn(order, |d| Series::from_fn(w_order, |k| powers[k].coeff(d).clone()))
}

/// H^p e^{-JH/ħ} M^p F(H/ħ, q)/I_p, re-expanded in Q, modulo H^{n-l}.
fn cy_terms(m: &ModelSpec, d_max: usize) -> Result<Vec<Terms>> {
    let top = m.top();
    let is = i_series(m, top, d_max)?;
    let mp = m_powers(m, top, d_max, top)?;
    let j = j_series(m, d_max)?;
    let q_of_big_q = invert_mirror(m, d_max)?;
    let mut out = Vec::with_capacity(top + 1);
    for p in 0..=top {
        let wo = top - p;
        let f = exp_minus_jw(&j, wo).mul(&mp[p]).mul_scalar_series(&is[p].inv_unit()?);
        let mut terms = Terms::new();
        for k in 0..=wo {
            let s = Series::from_fn(d_max, |d| f.coeff(d).coeff(k).clone());
            let s = s.compose(&q_of_big_q)?;
            for d in 0..=d_max {
                push(&mut terms, (d, p + k, k), s.coeff(d).clone());
            }
        }
        out.push(terms);
    }
    Ok(out)
}

/// H^p (prefactor) F_p(H/ħ, Q/H^ν) modulo H^{n-l} for a Fano model.
fn fano_terms(m: &ModelSpec, d_max: usize, pref: Nu1Prefactor) -> Result<Vec<Terms>> {
    let top = m.top();
    let nu = m.nu() as usize;
    let table = CoeffTable::build(m, top, top, d_max)?;
    let mut out = Vec::with_capacity(top + 1);
    for p in 0..=top {
        let mut terms = Terms::new();
        for d in 0..=d_max {
            for t in 0..=top {
                let e = table.convolved(p, t, d)?;
                let k = (nu * d + t) as i64 - p as i64;
                if k < 0 || (k == 0 && d > 0) {
                    let want = if d == 0 && t == p { Q::one() } else { Q::zero() };
                    if e != want {
                        return Err(Error::Regularity(format!("F_{p} has a pole term at q^{d} H^{t}")));
                    }
                }
                if k >= 0 {
                    push(&mut terms, (d, t, k as usize), e);
                }
            }
        }
        if nu == 1 {
            let c = pref.constant(m);
            let mut with = Terms::new();
            for (&(d, e, k), v) in &terms {
                let mut coef = v.clone();
                for jj in 0..=(d_max - d) {
                    push(&mut with, (d + jj, e, k + jj), coef.clone());
                    coef = coef * -&c / q(jj as i64 + 1);
                }
            }
            terms = with;
        }
        out.push(terms);
    }
    Ok(out)
}

/// Mirror-side terms T_p = H^p · (Z_p / H^{l+p}) for p = 0..=n-1-l.
pub fn z_terms(m: &ModelSpec, d_max: usize, pref: Nu1Prefactor) -> Result<Vec<Terms>> {
    if m.is_cy() {
        cy_terms(m, d_max)
    } else {
        fano_terms(m, d_max, pref)
    }
}

/// Genus zero two-point invariants ⟨τ_{j1} H^{b1}, τ_{j2} H^{b2}⟩_d for 1 <= d <= d_max.
#[derive(Clone, Debug)]
pub struct TwoPointSeries {
    pub model: ModelSpec,
    pub d_max: usize,
    values: BTreeMap<(usize, usize, usize, usize, usize), Q>,
}

/// Σ_{p1+p2=n-1-l} T_{p1}(H1, ħ1) T_{p2}(H2, ħ2) without its degree zero part,
/// keyed by (d, e1, e2) with values keyed by (k1, k2).
pub type Bracket = BTreeMap<(usize, usize, usize), BTreeMap<(usize, usize), Q>>;

pub fn bracket(m: &ModelSpec, d_max: usize, pref: Nu1Prefactor) -> Result<Bracket> {
    let top = m.top();
    let ts = z_terms(m, d_max, pref)?;
    let mut out = Bracket::new();
    for p1 in 0..=top {
        let p2 = top - p1;
        for (&(d1, e1, k1), v1) in &ts[p1] {
            for (&(d2, e2, k2), v2) in &ts[p2] {
                let d = d1 + d2;
                if d == 0 {
                    if (e1, e2, k1, k2) != (p1, p2, 0, 0) || *v1 != Q::one() || *v2 != Q::one() {
                        return Err(Error::Check("degree zero part is not H1^p1 H2^p2".into()));
                    }
                    continue;
                }
                if d > d_max {
                    continue;
                }
                let slot = out.entry((d, e1, e2)).or_default();
                let c = slot.entry((k1, k2)).or_insert_with(Q::zero);
                *c += v1 * v2;
            }
        }
    }
    Ok(out)
}

/// Evaluates each bracket coefficient at ħ2 = -ħ1; all must vanish.
pub fn check_divisibility(b: &Bracket) -> Result<()> {
    for (&(d, e1, e2), poly) in b {
        let mut at = BTreeMap::<usize, Q>::new();
        for (&(k1, k2), v) in poly {
            let s = if k2 % 2 == 0 { v.clone() } else { -v.clone() };
            *at.entry(k1 + k2).or_insert_with(Q::zero) += s;
        }
        if let Some((k, v)) = at.iter().find(|(_, v)| !v.is_zero()) {
            return Err(Error::Check(format!(
                "bracket not divisible by ħ1+ħ2 at Q^{d} H1^{e1} H2^{e2}, total ħ-degree {k}: {v}"
            )));
        }
    }
    Ok(())
}

impl TwoPointSeries {
    pub fn build(m: &ModelSpec, d_max: usize) -> Result<Self> {
        Self::build_with(m, d_max, Nu1Prefactor::Factorial)
    }

    pub fn build_with(m: &ModelSpec, d_max: usize, pref: Nu1Prefactor) -> Result<Self> {
        let top = m.top();
        let b = bracket(m, d_max, pref)?;
        check_divisibility(&b)?;
        let scale = m.prod();
        let mut values = BTreeMap::new();
        for (&(d, e1, e2), poly) in &b {
            let degs: Vec<usize> = poly.keys().map(|(a, b)| a + b).collect();
            let kk = degs[0];
            if degs.iter().any(|&x| x != kk) {
                return Err(Error::Check(format!("inhomogeneous ħ-degree at Q^{d} H1^{e1} H2^{e2}")));
            }
            if kk == 0 {
                continue;
            }
            let coef = |i: usize| poly.get(&(i, kk - i)).cloned().unwrap_or_else(Q::zero);
            // P(x,y) / (x+y) with x = 1/ħ1, y = 1/ħ2
            let mut prev = Q::zero();
            for i in 0..kk {
                let r = coef(i) - &prev;
                if !r.is_zero() {
                    values.insert((d, i, top - e1, kk - 1 - i, top - e2), &r * &scale);
                }
                prev = r;
            }
        }
        Ok(TwoPointSeries { model: m.clone(), d_max, values })
    }

    /// ⟨τ_{j1} H^{b1}, τ_{j2} H^{b2}⟩_d.
    pub fn descendant(&self, d: usize, j1: usize, b1: usize, j2: usize, b2: usize) -> Result<Q> {
        let top = self.model.top();
        if d == 0 || d > self.d_max || b1 > top || b2 > top {
            return Err(Error::Invalid(format!("invariant index out of range: d={d}, b=({b1},{b2})")));
        }
        Ok(self.values.get(&(d, j1, b1, j2, b2)).cloned().unwrap_or_else(Q::zero))
    }

    /// ⟨H^{b1}, H^{b2}⟩_d.
    pub fn primary(&self, d: usize, b1: usize, b2: usize) -> Result<Q> {
        self.descendant(d, 0, b1, 0, b2)
    }

    /// Fundamental class axiom: ⟨1, H^b⟩_d = 0 for every d >= 1.
    pub fn check_unit_axiom(&self) -> Result<()> {
        for (&(d, j1, b1, j2, b2), v) in &self.values {
            if j1 == 0 && j2 == 0 && (b1 == 0 || b2 == 0) {
                return Err(Error::Check(format!("⟨H^{b1}, H^{b2}⟩_{d} = {v} but must vanish")));
            }
        }
        Ok(())
    }

    /// All nonzero invariants as ((d, j1, b1, j2, b2), value).
    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize, usize, usize, usize), &Q)> {
        self.values.iter()
    }
}

/// ⟨H^{b1}, H^{b2}⟩_d for d = 1..=d_max through the closed formula
/// ⟨a⟩ + Σ d ⟨H^{b1},H^{b2}⟩_d Q^d = ⟨a⟩ I_{b1+1}/I_1.
pub fn primary_via_mirror(m: &ModelSpec, b1: usize, b2: usize, d_max: usize) -> Result<Vec<Q>> {
    if !m.is_cy() {
        return Err(Error::Invalid("closed two-point formula needs a Calabi-Yau model".into()));
    }
    if b1 + b2 + 2 != m.n - m.l() {
        return Err(Error::Invalid(format!("insertions must satisfy b1 + b2 = {}", m.n - m.l() - 2)));
    }
    let is = i_series(m, b1 + 1, d_max)?;
    let ratio = is[b1 + 1].mul(&is[1].inv_unit()?).scale(&m.prod());
    let in_q = ratio.compose(&invert_mirror(m, d_max)?)?;
    Ok((1..=d_max).map(|d| in_q.coeff(d) / q(d as i64)).collect())
}

/// ⟨H^{n-l-3}⟩_d for d = 1..=d_max through ⟨a⟩ + Σ d^2 ⟨H^{n-l-3}⟩_d Q^d = ⟨a⟩ I_2/I_1.
pub fn one_point_via_mirror(m: &ModelSpec, d_max: usize) -> Result<Vec<Q>> {
    if m.n < m.l() + 3 {
        return Err(Error::Invalid("one-point formula needs n - l >= 3".into()));
    }
    let two = primary_via_mirror(m, 1, m.n - m.l() - 3, d_max)?;
    Ok(two.into_iter().enumerate().map(|(i, v)| v / q(i as i64 + 1)).collect())
}

/// BPS numbers from two-point invariants: GW_d = Σ_{k|d} k^{-1} n_{d/k}.
pub fn bps_from_gw(gw: &[Q]) -> Vec<Q> {
    let mut n: Vec<Q> = Vec::with_capacity(gw.len());
    for d in 1..=gw.len() {
        let mut v = gw[d - 1].clone();
        for k in 2..=d {
            if d % k == 0 {
                v -= &n[d / k - 1] / q(k as i64);
            }
        }
        n.push(v);
    }
    n
}

/// BPS numbers for the insertion pair (H^{b1}, H^{b2}) of a Calabi-Yau model.
pub fn bps_two_point(m: &ModelSpec, b1: usize, b2: usize, d_max: usize) -> Result<Vec<Q>> {
    Ok(bps_from_gw(&primary_via_mirror(m, b1, b2, d_max)?))
}
