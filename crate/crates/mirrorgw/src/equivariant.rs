//! Torus-equivariant hypergeometric series on P^{n-1}.
//!
//! Structure coefficients are extracted from an expansion in u = 1/ħ whose
//! coefficients are polynomials in x and in a scaling parameter t of the
//! weights (α = t α₀), so homogeneity in the weights is visible directly.
//! Values at the fixed points x = α_i are computed over any field that
//! contains ħ: rational functions in ħ, truncated Laurent series, or
//! rational points.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arith::{elementary_symmetric, qpow, q, Field, Poly, SplitFrac, Ring, Q};
use crate::coeffs::CoeffTable;
use crate::error::{Error, Result};
use crate::hypergeom::{build_f, c1_series, i_series, invert_mirror, j_series, ModelSpec};
use crate::report::Outcome;
use crate::series::Series;

const HEIGHT: i64 = 97;

/// Torus weights α_1, ..., α_n.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    alphas: Vec<Q>,
}

impl Weights {
    pub fn new(alphas: Vec<Q>) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::Invalid("at least two weights are needed".into()));
        }
        for i in 0..alphas.len() {
            for j in i + 1..alphas.len() {
                if alphas[i] == alphas[j] {
                    return Err(Error::Degenerate(format!("weights {} and {} coincide", i + 1, j + 1)));
                }
            }
        }
        Ok(Weights { alphas })
    }

    /// 1, -2, 3, -5, 8, -13, ...
    pub fn generic(n: usize) -> Self {
        let (mut a, mut b) = (1i64, 2i64);
        let mut v = Vec::with_capacity(n);
        for k in 0..n {
            v.push(q(if k % 2 == 0 { a } else { -a }));
            let c = a + b;
            a = b;
            b = c;
        }
        Weights { alphas: v }
    }

    /// λ_1, -λ_1, λ_2, -λ_2, ..., followed by 0 when n is odd.
    pub fn subtorus(n: usize, lambdas: &[Q]) -> Result<Self> {
        if lambdas.len() != n / 2 {
            return Err(Error::Invalid(format!("{} values needed for n = {n}", n / 2)));
        }
        let mut v = Vec::with_capacity(n);
        for l in lambdas {
            v.push(l.clone());
            v.push(-l.clone());
        }
        if n % 2 == 1 {
            v.push(Q::zero());
        }
        Weights::new(v)
    }

    /// The generic weights when their edge factors are finite up to degree
    /// `d_max`, otherwise the first seeded random draw for which they are.
    pub fn default_for(m: &ModelSpec, d_max: usize, seed: u64) -> Self {
        let g = Weights::generic(m.n);
        if g.check_edges(m, d_max).is_ok() {
            return g;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let w = Weights::random(m.n, &mut rng);
            if w.check_edges(m, d_max).is_ok() {
                return w;
            }
        }
    }

    /// λ_k = 1/k.
    pub fn default_subtorus(n: usize) -> Self {
        let lambdas: Vec<Q> = (1..=n / 2).map(|k| q(k as i64).recip()).collect();
        Weights::subtorus(n, &lambdas).expect("distinct by construction")
    }

    fn random_q(rng: &mut impl Rng, positive: bool) -> Q {
        let num = rng.gen_range(1..=HEIGHT);
        let den = rng.gen_range(1..=HEIGHT);
        let sign = if positive || rng.gen_bool(0.5) { 1 } else { -1 };
        Q::new((sign * num).into(), den.into())
    }

    /// Nonzero weights of height at most 97.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        loop {
            let v = (0..n).map(|_| Self::random_q(rng, false)).collect();
            if let Ok(w) = Weights::new(v) {
                return w;
            }
        }
    }

    pub fn random_subtorus(n: usize, rng: &mut impl Rng) -> Self {
        loop {
            let l: Vec<Q> = (0..n / 2).map(|_| Self::random_q(rng, true)).collect();
            if let Ok(w) = Weights::subtorus(n, &l) {
                return w;
            }
        }
    }

    pub fn alphas(&self) -> &[Q] {
        &self.alphas
    }

    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    /// σ_0, ..., σ_n.
    pub fn sigma(&self) -> Vec<Q> {
        elementary_symmetric(&self.alphas)
    }

    /// The index carrying the opposite weight, if any.
    pub fn conjugate(&self, i: usize) -> Option<usize> {
        let target = -self.alphas[i].clone();
        self.alphas.iter().position(|a| *a == target)
    }

    pub fn is_subtorus(&self) -> bool {
        (0..self.n()).all(|i| self.conjugate(i).is_some())
    }

    /// Edge factor attached to a degree d cover of the line between the
    /// fixed points i and j.
    pub fn edge_factor(&self, m: &ModelSpec, i: usize, j: usize, d: usize) -> Result<Q> {
        let a = &self.alphas;
        let step = (&a[j] - &a[i]) / q(d as i64);
        let mut num = Q::one();
        for &ak in &m.a {
            let ak = ak as i64;
            for r in 0..ak * d as i64 {
                num *= q(ak) * &a[i] + q(r) * &step;
            }
        }
        let mut den = q(d as i64);
        for r in 1..=d {
            for k in 0..self.n() {
                if r == d && k == j {
                    continue;
                }
                let f = &a[i] - &a[k] + q(r as i64) * &step;
                if Ring::is_zero(&f) {
                    return Err(Error::Degenerate(format!(
                        "edge ({}, {}) of degree {d} meets weight {}",
                        i + 1,
                        j + 1,
                        k + 1
                    )));
                }
                den *= f;
            }
        }
        Ok(num / den)
    }

    /// Every edge factor up to degree `d_max` is finite.
    pub fn check_edges(&self, m: &ModelSpec, d_max: usize) -> Result<()> {
        for i in 0..self.n() {
            for j in 0..self.n() {
                if i != j {
                    for d in 1..=d_max {
                        self.edge_factor(m, i, j, d)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Polynomial in x and t, stored sparsely as x^i t^j -> coefficient.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct BiPoly(BTreeMap<(usize, usize), Q>);

impl BiPoly {
    pub fn monomial(c: Q, i: usize, j: usize) -> Self {
        let mut m = BTreeMap::new();
        if !Ring::is_zero(&c) {
            m.insert((i, j), c);
        }
        BiPoly(m)
    }

    pub fn constant(c: Q) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn get(&self, i: usize, j: usize) -> Q {
        self.0.get(&(i, j)).cloned().unwrap_or_else(Q::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(usize, usize), &Q)> {
        self.0.iter()
    }

    pub fn eval(&self, x: &Q, t: &Q) -> Q {
        self.0
            .iter()
            .map(|(&(i, j), c)| c * qpow(x, i as i64) * qpow(t, j as i64))
            .sum()
    }

    fn from_t(p: &Poly) -> Self {
        let mut m = BTreeMap::new();
        for (j, c) in p.coeffs().iter().enumerate() {
            if !Ring::is_zero(c) {
                m.insert((0, j), c.clone());
            }
        }
        BiPoly(m)
    }

    fn add_term(m: &mut BTreeMap<(usize, usize), Q>, k: (usize, usize), v: Q) {
        let e = m.entry(k).or_insert_with(Q::zero);
        *e += v;
        if Ring::is_zero(e) {
            m.remove(&k);
        }
    }
}

impl Ring for BiPoly {
    fn zero_like(&self) -> Self {
        BiPoly::default()
    }
    fn one_like(&self) -> Self {
        BiPoly::constant(Q::one())
    }
    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }
    fn plus(&self, o: &Self) -> Self {
        let mut m = self.0.clone();
        for (k, v) in &o.0 {
            BiPoly::add_term(&mut m, *k, v.clone());
        }
        BiPoly(m)
    }
    fn minus(&self, o: &Self) -> Self {
        self.plus(&o.negate())
    }
    fn times(&self, o: &Self) -> Self {
        let mut m = BTreeMap::new();
        for (&(i1, j1), a) in &self.0 {
            for (&(i2, j2), b) in &o.0 {
                BiPoly::add_term(&mut m, (i1 + i2, j1 + j2), a * b);
            }
        }
        BiPoly(m)
    }
    fn negate(&self) -> Self {
        BiPoly(self.0.iter().map(|(k, v)| (*k, -v.clone())).collect())
    }
    fn scale(&self, c: &Q) -> Self {
        if Ring::is_zero(c) {
            return BiPoly::default();
        }
        BiPoly(self.0.iter().map(|(k, v)| (*k, v * c)).collect())
    }
}

type USeries = Series<BiPoly>;
type QUSeries = Series<USeries>;

/// q-series of polynomials in t, keyed by (p, s, r).
pub type TCoeffs = BTreeMap<(usize, usize, usize), Series<Poly>>;

fn linear_u(c0: BiPoly, c1: BiPoly, order: usize) -> USeries {
    let z = BiPoly::default();
    Series::from_fn(order, |k| match k {
        0 => c0.clone(),
        1 => c1.clone(),
        _ => z.clone(),
    })
}

fn t_monomial_coeffs(
    s: &Series<Poly>,
    nu: i64,
    r: usize,
    what: &str,
) -> Result<()> {
    for (d, p) in s.coeffs().iter().enumerate() {
        let e = r as i64 - nu * d as i64;
        for (j, c) in p.coeffs().iter().enumerate() {
            if !Ring::is_zero(c) && j as i64 != e {
                return Err(Error::Check(format!("{what}: q^{d} coefficient is not homogeneous of degree {e}")));
            }
        }
    }
    Ok(())
}

/// Structure coefficients of the derivative family, with their inverses and
/// the first-order correction terms, as q-series of polynomials in t.
#[derive(Clone, Debug)]
pub struct Structure {
    nu: i64,
    p_max: usize,
    order: usize,
    c: TCoeffs,
    ctilde: TCoeffs,
    b1: BTreeMap<(usize, usize), Series<Poly>>,
    b1_minus_one: Series<Poly>,
    is: Vec<Series<Q>>,
    sigma: Vec<Q>,
    n: usize,
    l: usize,
}

impl Structure {
    pub fn build(m: &ModelSpec, w: &Weights, p_max: usize, order: usize) -> Result<Self> {
        if w.n() != m.n {
            return Err(Error::Invalid(format!("{} weights for n = {}", w.n(), m.n)));
        }
        let u_order = p_max + 1;
        let nu = m.nu();
        let zero = BiPoly::default();
        let one = BiPoly::constant(Q::one());
        let x = BiPoly::monomial(Q::one(), 1, 0);

        let mut ycoef = Vec::with_capacity(order + 1);
        for d in 0..=order {
            let shift = nu as usize * d;
            if shift > u_order {
                ycoef.push(Series::zero(&zero, u_order));
                continue;
            }
            let mut s = Series::constant(one.clone(), u_order);
            for &ak in &m.a {
                for r in 1..=(ak as usize * d) {
                    s = s.mul(&linear_u(BiPoly::constant(q(r as i64)), x.scale(&q(ak as i64)), u_order));
                }
            }
            for r in 1..=d {
                let rinv = q(r as i64).recip();
                for a in w.alphas() {
                    let lin = x.plus(&BiPoly::monomial(-a.clone(), 0, 1)).scale(&rinv);
                    let inv = linear_u(one.clone(), lin, u_order).inv_unit()?;
                    s = s.mul(&inv).scale(&rinv);
                }
            }
            ycoef.push(s.shift(shift));
        }
        let y = Series::new(ycoef);
        let is = i_series(m, p_max.max(m.n), order)?;
        let mut wl: Vec<QUSeries> = vec![y.mul_scalar_series(&is[0].inv_unit()?)];
        for p in 1..=p_max {
            let prev = &wl[p - 1];
            let xu = prev.map(|us| us.shift(1).mul_coeff(&x));
            wl.push(xu.add(&prev.d()).mul_scalar_series(&is[p].inv_unit()?));
        }

        let mut c = TCoeffs::new();
        for (p, wp) in wl.iter().enumerate() {
            for s in 0..=u_order {
                let mut per_r = vec![vec![Q::zero(); order + 1]; s + 1];
                for d in 0..=order {
                    let deg = s as i64 - nu * d as i64;
                    for (&(i, j), v) in wp.coeff(d).coeff(s).terms() {
                        if (i + j) as i64 != deg {
                            return Err(Error::Check(format!(
                                "derivative {p}: u^{s} q^{d} term x^{i} t^{j} is not of degree {deg}"
                            )));
                        }
                        per_r[s - i][d] = v.clone();
                    }
                }
                for (r, vals) in per_r.into_iter().enumerate() {
                    let ser = Series::from_fn(order, |d| {
                        let e = r as i64 - nu * d as i64;
                        if e < 0 {
                            Poly::zero()
                        } else {
                            Poly::monomial(vals[d].clone(), e as usize)
                        }
                    });
                    c.insert((p, s, r), ser);
                }
            }
        }
        for p in 0..=p_max {
            for s in 0..=p {
                let want = if s == p { Series::constant(Poly::one(), order) } else { Series::zero(&Poly::zero(), order) };
                if c[&(p, s, 0)] != want {
                    return Err(Error::Check(format!("leading structure coefficient ({p}, {s}) is not triangular")));
                }
            }
        }

        let zt = Series::zero(&Poly::zero(), order);
        let mut ctilde = TCoeffs::new();
        for p in 0..=p_max {
            for r in 0..=p {
                for s1 in 0..=(p - r) {
                    let s = s1 + r;
                    let mut acc = if r == 0 && s == p { Series::constant(Poly::one(), order) } else { zt.clone() };
                    for t in 0..s1 {
                        acc = acc.sub(&ctilde[&(p, t, r)].mul(&c[&(t, s1, 0)]));
                    }
                    for r1 in 0..r {
                        for t in 0..=(p - r1) {
                            acc = acc.sub(&ctilde[&(p, t, r1)].mul(&c[&(t, s - r1, r - r1)]));
                        }
                    }
                    t_monomial_coeffs(&acc, nu, r, &format!("inverse coefficient ({p}, {s1}, {r})"))?;
                    ctilde.insert((p, s1, r), acc);
                }
            }
            for s in 0..=p {
                let want = if s == p { Series::constant(Poly::one(), order) } else { zt.clone() };
                if ctilde[&(p, s, 0)] != want {
                    return Err(Error::Check(format!("inverse coefficient ({p}, {s}, 0) is not a delta")));
                }
            }
        }

        let mut b1 = BTreeMap::new();
        let uz = Series::zero(&zero, u_order);
        for p in 0..=p_max {
            let mut v: QUSeries = Series::zero(&uz, order);
            for r in 0..=p {
                for s in 0..=(p - r) {
                    let coef: QUSeries =
                        ctilde[&(p, s, r)].map(|tp| Series::constant(BiPoly::from_t(tp), u_order).shift(r));
                    v = v.add(&coef.mul(&wl[s]));
                }
            }
            for d in 0..=order {
                for k in 0..=p {
                    let got = v.coeff(d).coeff(k);
                    let ok = if d == 0 && k == p { *got == BiPoly::monomial(Q::one(), p, 0) } else { got.is_zero() };
                    if !ok {
                        return Err(Error::Check(format!(
                            "family member {p} is not x^(l+{p}) modulo 1/ħ (q^{d}, ħ^{})",
                            p as i64 - k as i64
                        )));
                    }
                }
            }
            let s = p + 1;
            let mut per_r = vec![vec![Q::zero(); order + 1]; s + 1];
            for d in 0..=order {
                let deg = s as i64 - nu * d as i64;
                for (&(i, j), val) in v.coeff(d).coeff(s).terms() {
                    if (i + j) as i64 != deg || i > s {
                        return Err(Error::Check(format!("correction term {p}: q^{d} not homogeneous")));
                    }
                    per_r[s - i][d] = val.clone();
                }
            }
            for (r, vals) in per_r.into_iter().enumerate() {
                let ser = Series::from_fn(order, |d| {
                    let e = r as i64 - nu * d as i64;
                    if e < 0 {
                        Poly::zero()
                    } else {
                        Poly::monomial(vals[d].clone(), e as usize)
                    }
                });
                b1.insert((p, r), ser);
            }
        }

        // member -1 is x^{l-1} + ⟨a⟩ x^l Σ_{d>=1} q^d (x + dħ)^{l-1} Π_k Π_{r=1}^{a_k d-1}(a_k x + rħ)/...,
        // whose 1/ħ coefficient is weight free and present only when ν = 0
        let b1_minus_one = Series::from_fn(order, |d| {
            if d == 0 || nu != 0 {
                return Poly::zero();
            }
            let mut v = Q::one();
            for &ak in &m.a {
                for r in 1..=(ak as usize * d) {
                    v *= q(r as i64);
                }
            }
            for r in 1..=d {
                v /= num_traits::pow(q(r as i64), m.n);
            }
            Poly::constant(v / q(d as i64))
        });

        Ok(Structure {
            nu,
            p_max,
            order,
            c,
            ctilde,
            b1,
            b1_minus_one,
            is,
            sigma: w.sigma(),
            n: m.n,
            l: m.l(),
        })
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Expansion coefficient of the p-th derivative along the s-th power of 1/ħ.
    pub fn c(&self, p: usize, s: usize, r: usize) -> Result<&Series<Poly>> {
        self.c
            .get(&(p, s, r))
            .ok_or_else(|| Error::Invalid(format!("structure coefficient ({p}, {s}, {r}) out of range")))
    }

    pub fn ctilde(&self, p: usize, s: usize, r: usize) -> Result<&Series<Poly>> {
        self.ctilde
            .get(&(p, s, r))
            .ok_or_else(|| Error::Invalid(format!("inverse coefficient ({p}, {s}, {r}) out of range")))
    }

    /// Zero outside r + s <= p.
    fn ct(&self, p: i64, s: i64, r: usize) -> Series<Poly> {
        if p < 0 || s < 0 {
            return Series::zero(&Poly::zero(), self.order);
        }
        self.ctilde
            .get(&(p as usize, s as usize, r))
            .cloned()
            .unwrap_or_else(|| Series::zero(&Poly::zero(), self.order))
    }

    /// Coefficient of x^{l+p+1-r} ħ^{-1} in the p-th family member.
    pub fn b1(&self, p: usize, r: usize) -> Result<&Series<Poly>> {
        self.b1
            .get(&(p, r))
            .ok_or_else(|| Error::Invalid(format!("correction term ({p}, {r}) out of range")))
    }

    fn b(&self, p: usize, r: usize) -> Series<Poly> {
        self.b1.get(&(p, r)).cloned().unwrap_or_else(|| Series::zero(&Poly::zero(), self.order))
    }

    /// As [`Structure::b1`], also for p = -1, and zero out of range.
    pub fn correction(&self, p: i64, r: usize) -> Series<Poly> {
        match p {
            -1 if r == 0 => self.b1_minus_one.clone(),
            p if p >= 0 => self.b(p as usize, r),
            _ => Series::zero(&Poly::zero(), self.order),
        }
    }

    /// At zero weights the p-th normalized derivative is u^p x^p G_p(xu, q/x^ν)
    /// with G_0 = F/I_0 and G_p = (1 + w^{-1} q d/dq) G_{p-1} / I_p, a Laurent
    /// series in w.
    pub fn check_zero_weight_limit(&self, m: &ModelSpec) -> Result<usize> {
        let u_order = self.p_max + 1;
        let f = build_f(m, self.order, u_order);
        // per q-degree: w-exponent -> coefficient
        let mut g: Vec<BTreeMap<i64, Q>> = f
            .coeffs()
            .iter()
            .map(|s| s.coeffs().iter().enumerate().map(|(k, v)| (k as i64, v.clone())).collect())
            .collect();
        let normalize = |h: Vec<BTreeMap<i64, Q>>, inv: &Series<Q>| -> Vec<BTreeMap<i64, Q>> {
            (0..h.len())
                .map(|d| {
                    let mut acc: BTreeMap<i64, Q> = BTreeMap::new();
                    for d1 in 0..=d {
                        let c = inv.coeff(d - d1);
                        for (k, v) in &h[d1] {
                            *acc.entry(*k).or_insert_with(Q::zero) += c * v;
                        }
                    }
                    acc
                })
                .collect()
        };
        g = normalize(g, &self.is[0].inv_unit()?);
        let mut count = 0;
        for p in 0..=self.p_max {
            if p > 0 {
                let mut next = g.clone();
                for (d, gd) in g.iter().enumerate() {
                    for (k, v) in gd {
                        *next[d].entry(k - 1).or_insert_with(Q::zero) += q(d as i64) * v;
                    }
                }
                g = normalize(next, &self.is[p].inv_unit()?);
            }
            for (d, gd) in g.iter().enumerate() {
                let r = self.nu as usize * d;
                for (k, v) in gd {
                    if p as i64 + k < 0 && !Ring::is_zero(v) {
                        return Err(Error::Check(format!("derivative {p} at zero weights has a positive power of ħ")));
                    }
                }
                for s in 0..=u_order {
                    let k = s as i64 - p as i64;
                    let want = gd.get(&k).cloned().unwrap_or_else(Q::zero);
                    let got = if r <= s { self.c(p, s, r)?.coeff(d).coeff(0) } else { Q::zero() };
                    if got != want {
                        return Err(Error::Check(format!("zero-weight limit of derivative {p} at q^{d}, 1/ħ^{s}")));
                    }
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// Σ_r (-1)^r σ_r B^{(p-r)}_{p-1-r+p1,1} is symmetric in (p1, p2),
    /// p = n - l - p1 - p2.
    pub fn check_correction_symmetry(&self) -> Result<usize> {
        let top = self.n - self.l;
        let side = |p: usize, p1: usize| {
            let mut acc = Series::zero(&Poly::zero(), self.order);
            for r in 0..=p {
                let term = self.correction(p as i64 - 1 - r as i64 + p1 as i64, p - r).mul_coeff(&self.sigma_t(r));
                acc = if r % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        };
        let mut count = 0;
        for p1 in 0..=top {
            for p2 in 0..=(top - p1) {
                let p = top - p1 - p2;
                if side(p, p1) != side(p, p2) {
                    return Err(Error::Check(format!("correction symmetry fails at ({p1}, {p2})")));
                }
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn ctilde_at_one(&self, p: usize, s: usize, r: usize) -> Result<Series<Q>> {
        Ok(at_one(self.ctilde(p, s, r)?))
    }

    pub fn b1_at_one(&self, p: usize, r: usize) -> Result<Series<Q>> {
        Ok(at_one(self.b1(p, r)?))
    }

    pub fn i(&self, p: usize) -> &Series<Q> {
        &self.is[p]
    }

    fn i_t(&self, p: usize) -> Series<Poly> {
        self.is[p].map(|c| Poly::constant(c.clone()))
    }

    fn sigma_t(&self, r: usize) -> Poly {
        Poly::monomial(self.sigma[r].clone(), r)
    }

    /// The weight-independent part of the inverse coefficients equals the
    /// non-equivariant table.
    pub fn check_limit(&self, table: &CoeffTable) -> Result<usize> {
        let mut count = 0;
        for d in 1..=self.order {
            let r = self.nu as usize * d;
            for p in r..=self.p_max {
                for s in 0..=(p - r) {
                    let got = self.ctilde(p, s, r)?.coeff(d).coeff(0);
                    let want = table.ctilde(p, s, d)?;
                    if &got != want {
                        return Err(Error::Check(format!("limit of ({p}, {s}) at q^{d}: {got} vs {want}")));
                    }
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// On a subtorus with σ_1 = 0 every part linear in the weights vanishes.
    pub fn check_linear_part_vanishes(&self) -> Result<()> {
        if !Ring::is_zero(&self.sigma[1]) {
            return Err(Error::Invalid("σ_1 is nonzero".into()));
        }
        for (&(p, s, r), ser) in &self.ctilde {
            for d in 0..=self.order {
                if r as i64 - self.nu * d as i64 == 1 && !ser.coeff(d).is_zero() {
                    return Err(Error::Check(format!("linear part of ({p}, {s}, {r}) at q^{d}")));
                }
            }
        }
        Ok(())
    }

    fn require_cy(&self) -> Result<()> {
        if self.nu != 0 {
            return Err(Error::Invalid("identity stated for Calabi-Yau models".into()));
        }
        Ok(())
    }

    /// Σ_r (-1)^r σ_r C̃^{(p-r)}_{n-l-r,n-l-p} = (-1)^p σ_p Π_{s<=n-l-p} I_s.
    pub fn check_sigma_sum_rule(&self) -> Result<()> {
        self.require_cy()?;
        let top = self.n - self.l;
        if top > self.p_max {
            return Err(Error::Invalid("structure built below the top derivative".into()));
        }
        for p in 1..=top {
            let mut lhs = Series::zero(&Poly::zero(), self.order);
            for r in 0..=p {
                let term = self.ct((top - r) as i64, (top - p) as i64, p - r).mul_coeff(&self.sigma_t(r));
                lhs = if r % 2 == 0 { lhs.add(&term) } else { lhs.sub(&term) };
            }
            let mut prod = Series::one(self.order);
            for s in 0..=(top - p) {
                prod = prod.mul(&self.is[s]);
            }
            let mut sp = self.sigma_t(p);
            if p % 2 == 1 {
                sp = sp.neg();
            }
            let rhs = prod.map(|c| sp.scale(c));
            if lhs != rhs {
                return Err(Error::Check(format!("sigma sum rule fails at p = {p}")));
            }
        }
        Ok(())
    }

    /// I_{p+1} = 1 + D B^{(0)}_{p,1}.
    pub fn check_i_from_correction(&self) -> Result<()> {
        for p in 0..self.p_max {
            let lhs = self.i_t(p + 1);
            let rhs = Series::constant(Poly::one(), self.order).add(&self.b(p, 0).d());
            if lhs != rhs {
                return Err(Error::Check(format!("I_{} from the first correction term", p + 1)));
            }
        }
        Ok(())
    }

    /// Recursion in p for the inverse coefficients.
    pub fn check_recursion(&self) -> Result<usize> {
        let mut count = 0;
        for p in 1..=self.p_max {
            for r in 0..=p {
                for s in 0..=(p - r) {
                    let lhs = self.ct(p as i64, s as i64, r).mul_scalar_series(&self.is[p]);
                    let mut rhs = self.ct(p as i64 - 1, s as i64, r).d();
                    if s >= 1 && r + s <= p {
                        rhs = rhs.add(&self.ct(p as i64 - 1, s as i64 - 1, r).mul_scalar_series(&self.is[s]));
                    }
                    for r1 in 1..=p.min(r) {
                        rhs = rhs.sub(&self.b(p - 1, r1).d().mul(&self.ct((p - r1) as i64, s as i64, r - r1)));
                    }
                    if lhs != rhs {
                        return Err(Error::Check(format!("recursion fails at ({p}, {s}, {r})")));
                    }
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// Sum of the two extreme inverse coefficients of weight degree p.
    pub fn check_extremes(&self) -> Result<()> {
        self.require_cy()?;
        let top = self.n - self.l;
        let big_n = top - 1;
        let one = Series::constant(Poly::one(), self.order);
        for p in 1..=top {
            let lhs = self.ct(p as i64, 0, p).add(&self.ct(big_n as i64, big_n as i64 - p as i64, p));
            let mut prod = self.is[0].clone();
            for s in 0..=(big_n as i64 - p as i64).max(-1) {
                prod = prod.mul(&self.is[s as usize]);
            }
            let mut sp = self.sigma_t(p);
            if p % 2 == 1 {
                sp = sp.neg();
            }
            let mut rhs = prod.map(|c| Poly::constant(c.clone())).sub(&one).mul_coeff(&sp);
            let ip_inv = self.is[p].inv_unit()?;
            let mut tail = Series::zero(&Poly::zero(), self.order);
            for r in 1..p {
                tail = tail.sub(&self.b(p - 1, r).d().mul(&self.ct((p - r) as i64, 0, p - r)));
                tail = tail.add(&self.b(big_n, r).d().mul(&self.ct((top - r) as i64, (top - p) as i64, p - r)));
                let mut inner = self.b(p - 1 - r, p - r).d().sub(&self.b(big_n - r, p - r).d());
                inner = inner.sub(&self.ct((top - r) as i64, (top - p) as i64, p - r).mul_scalar_series(&self.is[0]));
                let mut sr = self.sigma_t(r);
                if r % 2 == 1 {
                    sr = sr.neg();
                }
                tail = tail.add(&inner.mul_coeff(&sr));
            }
            rhs = rhs.add(&tail.mul_scalar_series(&ip_inv));
            if lhs != rhs {
                return Err(Error::Check(format!("extreme coefficient relation fails at p = {p}")));
            }
        }
        Ok(())
    }

    /// C̃^{(2)}_{2,0} + C̃^{(2)}_{3,1} + σ_2 = I_0^2 I_1 σ_2 for Calabi-Yau
    /// threefolds on a subtorus.
    pub fn check_threefold_relation(&self) -> Result<()> {
        self.require_cy()?;
        if self.n - self.l != 4 || !Ring::is_zero(&self.sigma[1]) {
            return Err(Error::Invalid("needs a Calabi-Yau threefold and σ_1 = 0".into()));
        }
        let lhs = at_one(&self.ct(2, 0, 2)).add(&at_one(&self.ct(3, 1, 2))).add(&Series::constant(self.sigma[2].clone(), self.order));
        let rhs = self.is[0].mul(&self.is[0]).mul(&self.is[1]).scale(&self.sigma[2]);
        if lhs != rhs {
            return Err(Error::Check("threefold relation".into()));
        }
        Ok(())
    }
}

fn at_one(s: &Series<Poly>) -> Series<Q> {
    s.map(|p| p.eval(&Q::one()))
}

/// Principal part at `p` of X^k f, from that of f (coefficients of (X-p)^{-m..-1}).
fn times_power(pp: &[Q], p: &Q, k: usize) -> Vec<Q> {
    let m = pp.len();
    let mut out = vec![Q::zero(); m];
    let mut binom = Q::one();
    for j in 0..=k {
        // C(k, j) p^{k-j} (X-p)^j moves (X-p)^{-s} to (X-p)^{j-s}
        let c = &binom * qpow(p, (k - j) as i64);
        if !Zero::is_zero(&c) {
            for s in (j + 1)..=m {
                out[m - (s - j)] += &c * &pp[m - s];
            }
        }
        binom = binom * q((k - j) as i64) / q(j as i64 + 1);
    }
    out
}

/// Fixed-point evaluations of the equivariant families.
#[derive(Clone, Debug)]
pub struct Equivariant {
    model: ModelSpec,
    weights: Weights,
    order: usize,
    structure: Structure,
    i_inv: Vec<Series<Q>>,
    sigma: Vec<Q>,
    mirror: Option<(Series<Q>, Series<Q>, Series<Q>)>,
}

impl Equivariant {
    pub fn new(m: &ModelSpec, w: &Weights, order: usize) -> Result<Self> {
        let structure = Structure::build(m, w, m.n - 1, order)?;
        let i_inv = structure.is.iter().map(|s| s.inv_unit()).collect::<Result<Vec<_>>>()?;
        let mirror = if m.is_cy() {
            Some((j_series(m, order)?, c1_series(m, order)?, invert_mirror(m, order)?))
        } else {
            None
        };
        Ok(Equivariant {
            model: m.clone(),
            weights: w.clone(),
            order,
            structure,
            i_inv,
            sigma: w.sigma(),
            mirror,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn alpha(&self, i: usize) -> &Q {
        &self.weights.alphas()[i]
    }

    fn hyper<E: Field>(&self, x: &Q, h: &E, start: usize) -> Result<Series<E>> {
        let one = h.one_like();
        let mut acc = one.clone();
        let mut out = vec![acc.clone()];
        for d in 1..=self.order {
            for &ak in &self.model.a {
                let ak = ak as usize;
                for r in ak * (d - 1)..ak * d {
                    let r = r + start;
                    acc = acc.times(&h.scale(&q(r as i64)).plus(&one.scale(&(q(ak as i64) * x))));
                }
            }
            for a in self.weights.alphas() {
                let f = h.scale(&q(d as i64)).plus(&one.scale(&(x - a)));
                acc = acc.times(&f.inv()?);
            }
            out.push(acc.clone());
        }
        Ok(Series::new(out))
    }

    /// Σ_d q^d Π_k Π_{r=1}^{a_k d}(a_k x + rħ) / Π_k Π_{r=1}^d (x - α_k + rħ).
    pub fn y<E: Field>(&self, x: &Q, h: &E) -> Result<Series<E>> {
        self.hyper(x, h, 1)
    }

    /// As [`Equivariant::y`] with the numerator products running over r = 0..a_k d - 1.
    pub fn y_minus_l<E: Field>(&self, x: &Q, h: &E) -> Result<Series<E>> {
        self.hyper(x, h, 0)
    }

    /// x^l y / I_0 and its normalized derivatives, for s = 0..=p_max.
    pub fn derivatives<E: Field>(&self, x: &Q, h: &E, p_max: usize) -> Result<Vec<Series<E>>> {
        let xl = qpow(x, self.model.l() as i64);
        let mut out = vec![self.y(x, h)?.mul_scalar_series(&self.i_inv[0]).scale(&xl)];
        for p in 1..=p_max {
            let prev = &out[p - 1];
            let next = prev.scale(x).add(&prev.d().mul_coeff(h)).mul_scalar_series(&self.i_inv[p]);
            out.push(next);
        }
        Ok(out)
    }

    /// Members p = -l, ..., p_max of the family, indexed by p + l.
    pub fn family<E: Field>(&self, x: &Q, h: &E, p_max: usize) -> Result<Vec<Series<E>>> {
        if p_max > self.structure.p_max {
            return Err(Error::Invalid(format!("family built up to {}", self.structure.p_max)));
        }
        let l = self.model.l();
        let mut out = Vec::with_capacity(l + p_max + 1);
        let base = self.y_minus_l(x, h)?;
        let xe = h.from_q_like(x);
        for e in 0..l {
            let c: Vec<E> = base
                .coeffs()
                .iter()
                .enumerate()
                .map(|(d, v)| v.times(&h.scale(&q(d as i64)).plus(&xe).pow_u(e)))
                .collect();
            out.push(Series::new(c));
        }
        let der = self.derivatives(x, h, p_max)?;
        for p in 0..=p_max {
            let mut acc = der[p].clone();
            for r in 1..=p {
                for s in 0..=(p - r) {
                    let c = self.structure.ctilde_at_one(p, s, r)?;
                    if c.eval_is_zero() {
                        continue;
                    }
                    acc = acc.add(&der[s].mul_scalar_series(&c).mul_coeff(&h.pow_u(p - r - s)));
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Exponential prefactor and, for Calabi-Yau models, the mirror change of variable.
    pub fn to_mirror<E: Field>(&self, s: &Series<E>, x: &Q, h: &E) -> Result<Series<E>> {
        let nu = self.model.nu();
        if nu >= 2 {
            return Ok(s.clone());
        }
        let hinv = h.inv()?;
        let g = match &self.mirror {
            Some((j, c1, _)) => j.scale(x).add(&c1.scale(&self.sigma[1])).neg(),
            None => Series::var(&Q::zero(), self.order).scale(&-self.model.fact()),
        };
        let out = s.mul(&g.map(|c| hinv.scale(c)).exp()?);
        match &self.mirror {
            Some((_, _, qq)) => out.compose(qq),
            None => Ok(out),
        }
    }

    /// Mirror-side family, indexed by p + l.
    pub fn z_family<E: Field>(&self, x: &Q, h: &E, p_max: usize) -> Result<Vec<Series<E>>> {
        self.family(x, h, p_max)?.iter().map(|s| self.to_mirror(s, x, h)).collect()
    }

    /// One-point mirror series y / I_0 with its prefactor.
    pub fn z_plain<E: Field>(&self, x: &Q, h: &E) -> Result<Series<E>> {
        let y = self.y(x, h)?.mul_scalar_series(&self.i_inv[0]);
        self.to_mirror(&y, x, h)
    }

    /// Σ_{p1+p2+r=n-1} (-1)^r σ_r Z_{p1}(α_i, ħ1) Z_{p2-l}(α_j, ħ2); the
    /// two-point series is ⟨a⟩ times this over ħ1 + ħ2.
    pub fn two_point_numerator<E: Field>(&self, i: usize, j: usize, h1: &E, h2: &E) -> Result<Series<E>> {
        let n = self.model.n;
        let l = self.model.l();
        let zi = self.z_family(self.alpha(i), h1, n - 1)?;
        let zj = self.z_family(self.alpha(j), h2, n - 1)?;
        self.pair_sum(&zi, &zj, l)
    }

    /// Σ_{p1+p2+r=n-1} (-1)^r σ_r a[p1 + l] b[p2], for families indexed by p + l.
    pub fn pair_sum<E: Ring>(&self, a: &[Series<E>], b: &[Series<E>], l: usize) -> Result<Series<E>> {
        let n = self.model.n;
        let mut acc: Option<Series<E>> = None;
        for p1 in 0..n {
            for r in 0..(n - p1) {
                let p2 = n - 1 - p1 - r;
                let mut sr = self.sigma[r].clone();
                if r % 2 == 1 {
                    sr = -sr;
                }
                let t = a[p1 + l].mul(&b[p2]).scale(&sr);
                acc = Some(match acc {
                    None => t,
                    Some(x) => x.add(&t),
                });
            }
        }
        acc.ok_or_else(|| Error::Invalid("empty pairing".into()))
    }

    /// Rational-function values of every family at every fixed point.
    pub fn fixed_point_data(&self) -> Result<FixedPointData> {
        let n = self.model.n;
        let h = SplitFrac::x();
        let mut data = FixedPointData { family: vec![], mirror_family: vec![], y: vec![], z: vec![] };
        for i in 0..n {
            let x = self.alpha(i);
            let fam = self.family(x, &h, n - 1)?;
            data.mirror_family.push(fam.iter().map(|s| self.to_mirror(s, x, &h)).collect::<Result<Vec<_>>>()?);
            data.family.push(fam);
            data.y.push(self.y(x, &h)?);
            data.z.push(self.z_plain(x, &h)?);
        }
        Ok(data)
    }

    /// The closed form of the members p = -l..-1 agrees with repeated
    /// application of x + ħD to the first one.
    pub fn check_negative_members(&self, data: &FixedPointData) -> Result<()> {
        let h = SplitFrac::x();
        for (i, fam) in data.family.iter().enumerate() {
            let x = self.alpha(i);
            for e in 1..self.model.l() {
                let prev = &fam[e - 1];
                let next = prev.scale(x).add(&prev.d().mul_coeff(&h));
                if next != fam[e] {
                    return Err(Error::Check(format!("member {} at fixed point {}", e as i64 - self.model.l() as i64, i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Every mirror family member is x^{l+p} modulo 1/ħ.
    pub fn check_leading_terms(&self, data: &FixedPointData) -> Result<()> {
        let l = self.model.l() as i64;
        for (i, fam) in data.mirror_family.iter().enumerate() {
            let x = self.alpha(i);
            for (idx, s) in fam.iter().enumerate() {
                let p = idx as i64 - l;
                for (d, f) in s.coeffs().iter().enumerate() {
                    let top = f.degree().unwrap_or(0).max(0);
                    let got = f.expand_at_infinity(top, 0)?;
                    for (k, g) in got.iter().enumerate() {
                        let e = top - k as i64;
                        let want = if d == 0 && e == 0 { qpow(x, l + p) } else { Q::zero() };
                        if *g != want {
                            return Err(Error::Check(format!(
                                "member {p} at fixed point {}: Q^{d} ħ^{e} coefficient {g}",
                                i + 1
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Σ_{r=0}^n (-1)^r σ_r Z_{p-r} = 0 at every fixed point, n - l <= p <= n - 1.
    pub fn check_annihilation(&self, data: &FixedPointData) -> Result<()> {
        let n = self.model.n;
        let l = self.model.l();
        for (i, z) in data.mirror_family.iter().enumerate() {
            for p in (n - l)..n {
                let mut acc = Series::zero(&SplitFrac::constant(Q::zero()), self.order);
                for r in 0..=n {
                    let mut sr = self.sigma[r].clone();
                    if r % 2 == 1 {
                        sr = -sr;
                    }
                    acc = acc.add(&z[p + l - r].scale(&sr));
                }
                if !acc.is_zero() {
                    return Err(Error::Check(format!("annihilation fails at fixed point {} for p = {p}", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// The two-point numerator vanishes on ħ1 + ħ2 = 0, apart from the
    /// diagonal degree-zero term, and its degree-zero part is the classical one.
    ///
    /// Each numerator times the product of all denominators is a polynomial
    /// of bounded degree, so it is compared exactly at more rational points
    /// than that degree.
    pub fn check_two_point_divisibility(&self, data: &FixedPointData) -> Result<()> {
        let n = self.model.n;
        let l = self.model.l();
        let mut pole_degree = 0u32;
        let mut top_degree = i64::MIN;
        let mut poles = std::collections::BTreeSet::new();
        for fam in &data.mirror_family {
            let mut worst = BTreeMap::<Q, u32>::new();
            for s in fam {
                for c in s.coeffs() {
                    for (p, m) in c.poles() {
                        let e = worst.entry(p.clone()).or_insert(0);
                        *e = (*e).max(*m);
                    }
                    if let Some(deg) = c.degree() {
                        top_degree = top_degree.max(deg);
                    }
                }
            }
            pole_degree = pole_degree.max(worst.values().sum());
            poles.extend(worst.into_keys());
        }
        // numerator degree of (pair sum - constant) over the common denominator
        let bound = 2 * pole_degree as i64 + (2 * top_degree).max(0);
        let mut points = vec![];
        let mut k = 1i64;
        while points.len() as i64 <= bound {
            let x = q(k);
            if !poles.contains(&x) && !poles.contains(&-x.clone()) {
                points.push(x);
            }
            k += 1;
        }
        let at = |fam: &[Series<SplitFrac>], x: &Q| -> Result<Vec<Series<Q>>> {
            fam.iter().map(|s| Ok(Series::new(s.coeffs().iter().map(|c| c.eval(x)).collect::<Result<_>>()?))).collect()
        };
        for x in &points {
            let plus = data.mirror_family.iter().map(|f| at(f, x)).collect::<Result<Vec<_>>>()?;
            let minus = data.mirror_family.iter().map(|f| at(f, &-x.clone())).collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in 0..n {
                    let s = self.pair_sum(&plus[i], &minus[j], l)?;
                    for (d, v) in s.coeffs().iter().enumerate() {
                        let want = if i == j && d == 0 {
                            let ai = self.alpha(i);
                            let mut w = qpow(ai, l as i64);
                            for k in 0..n {
                                if k != i {
                                    w *= ai - self.alpha(k);
                                }
                            }
                            w
                        } else {
                            Q::zero()
                        };
                        if *v != want {
                            return Err(Error::Check(format!(
                                "two-point numerator at ({}, {}) not divisible at Q^{d}",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Z(α_i, α_j, ħ1, ħ2) = Z(α_j, α_i, ħ2, ħ1) at the given points.
    pub fn check_two_point_symmetry(&self, h1: &Q, h2: &Q) -> Result<()> {
        let n = self.model.n;
        let l = self.model.l();
        let at1 = (0..n).map(|i| self.z_family(self.alpha(i), h1, n - 1)).collect::<Result<Vec<_>>>()?;
        let at2 = (0..n).map(|i| self.z_family(self.alpha(i), h2, n - 1)).collect::<Result<Vec<_>>>()?;
        for i in 0..n {
            for j in 0..n {
                let a = self.pair_sum(&at1[i], &at2[j], l)?;
                let b = self.pair_sum(&at2[j], &at1[i], l)?;
                if a != b {
                    return Err(Error::Check(format!("two-point symmetry at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    /// (α_i + ħD) Y_p = Y_{p+1} + Σ_r D B^{(r)}_{p,1} Y_{p+1-r}, for p >= -1.
    pub fn check_shift_relation(&self, data: &FixedPointData) -> Result<()> {
        let n = self.model.n;
        let l = self.model.l();
        let h = SplitFrac::x();
        for (i, fam) in data.family.iter().enumerate() {
            let x = self.alpha(i);
            for p in -1..(n as i64 - 1) {
                if p + (l as i64) < 0 {
                    continue;
                }
                let cur = &fam[(p + l as i64) as usize];
                let lhs = cur.scale(x).add(&cur.d().mul_coeff(&h));
                let mut rhs = fam[(p + 1) as usize + l].clone();
                for r in 0..=(p + 1) as usize {
                    let db = at_one(&self.structure.correction(p, r)).d();
                    rhs = rhs.add(&fam[(p + 1) as usize + l - r].mul_scalar_series(&db));
                }
                if lhs != rhs {
                    return Err(Error::Check(format!("shift relation at fixed point {} for p = {p}", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Each Q^d coefficient minus its principal parts at ħ = (α_j - α_i)/d,
    /// prescribed by lower degrees, is a Laurent polynomial in ħ.
    pub fn check_recursive(&self, values: &[Series<SplitFrac>], label: &str) -> Result<()> {
        let n = self.model.n;
        let order = values.iter().map(|s| s.order()).min().unwrap_or(0);
        for i in 0..n {
            for dstar in 1..=order {
                // prescribed residues; several (j, d) may share a point
                let mut want = BTreeMap::<Q, Q>::new();
                for d in 1..=dstar {
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let pt = (self.alpha(j) - self.alpha(i)) / q(d as i64);
                        let lower = values[j].coeff(dstar - d).eval(&pt).map_err(|_| {
                            Error::Degenerate(format!("{label}: lower degree value has a pole at {pt}"))
                        })?;
                        let c = self.weights.edge_factor(&self.model, i, j, d)? * lower;
                        *want.entry(pt).or_insert_with(Q::zero) += c;
                    }
                }
                let value = values[i].coeff(dstar);
                let mut bad = vec![];
                for (p, _) in value.poles() {
                    if Ring::is_zero(p) {
                        continue;
                    }
                    let expected = want.remove(p).unwrap_or_else(Q::zero);
                    if value.principal_part(p) != [expected] {
                        bad.push(p.to_string());
                    }
                }
                bad.extend(want.iter().filter(|(_, c)| !Zero::is_zero(*c)).map(|(p, _)| p.to_string()));
                if !bad.is_empty() {
                    return Err(Error::Check(format!(
                        "{label}: not recursive at fixed point {} degree {dstar}, poles at ħ = {}",
                        i + 1,
                        bad.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    /// Σ_i e^{α_i z}/Π_{k≠i}(α_i - α_k) Y(α_i, ħ, Q e^{ħz}) Z(α_i, -ħ, Q) has
    /// polynomial coefficients in ħ through z^z_order.
    pub fn check_mpc(&self, y: &[Series<SplitFrac>], z: &[Series<SplitFrac>], z_order: usize, label: &str) -> Result<()> {
        let n = self.model.n;
        let order = y[0].order().min(z[0].order());
        let mut fact = vec![Q::one()];
        for k in 1..=z_order {
            let f = &fact[k - 1] * q(k as i64);
            fact.push(f);
        }
        // principal parts of the sum, per (Q-degree, z-degree) and pole
        let mut total = vec![vec![BTreeMap::<Q, Vec<Q>>::new(); z_order + 1]; order + 1];
        for i in 0..n {
            let ai = self.alpha(i);
            let mut wi = Q::one();
            for k in 0..n {
                if k != i {
                    wi *= ai - self.alpha(k);
                }
            }
            let wi = wi.recip();
            let zm: Vec<SplitFrac> = z[i].coeffs().iter().map(|f| f.reflect()).collect();
            for big_d in 0..=order {
                for d1 in 0..=big_d {
                    // ħ^{k2} d1^{k2} y_{d1}(ħ) z_{d2}(-ħ) contributes to z^{k1+k2}
                    let pr = y[i].coeff(d1).mul(&zm[big_d - d1]);
                    for (p, _) in pr.poles() {
                        let pp = pr.principal_part(p);
                        for k2 in 0..=z_order {
                            let w = qpow(&q(d1 as i64), k2 as i64) * &wi / &fact[k2];
                            if Zero::is_zero(&w) {
                                continue;
                            }
                            let shifted = times_power(&pp, p, k2);
                            for k1 in 0..=(z_order - k2) {
                                let c = &w * qpow(ai, k1 as i64) / &fact[k1];
                                let acc = total[big_d][k1 + k2].entry(p.clone()).or_default();
                                if acc.len() < shifted.len() {
                                    let pad = shifted.len() - acc.len();
                                    acc.splice(0..0, std::iter::repeat(Q::zero()).take(pad));
                                }
                                let off = acc.len() - shifted.len();
                                for (slot, v) in acc[off..].iter_mut().zip(&shifted) {
                                    *slot += &c * v;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (d, row) in total.iter().enumerate() {
            for (k, parts) in row.iter().enumerate() {
                if let Some((p, _)) = parts.iter().find(|(_, v)| v.iter().any(|c| !Zero::is_zero(c))) {
                    return Err(Error::Check(format!(
                        "{label}: Q^{d} z^{k} coefficient is not polynomial in ħ, pole at {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The normalized derivatives at a fixed point agree with the 1/ħ
    /// expansion evaluated at x = α_i, t = 1.
    pub fn check_expansions_agree(&self) -> Result<()> {
        let m = &self.model;
        let h = SplitFrac::x();
        let p_max = self.structure.p_max;
        for i in 0..m.n {
            let x = self.alpha(i);
            let xl = qpow(x, m.l() as i64);
            let der = self.derivatives(x, &h, p_max)?;
            for p in 0..=p_max {
                for d in 0..=self.order {
                    let lo = p as i64 - (p_max as i64 + 1);
                    let got = der[p].coeff(d).expand_at_infinity(p as i64, lo)?;
                    for (k, g) in got.iter().enumerate() {
                        // coefficient of ħ^{p-k} is α_i^l [u^k] of the expansion
                        let mut want = Q::zero();
                        for r in 0..=k {
                            want += self.structure.c(p, k, r)?.coeff(d).eval(&Q::one()) * qpow(x, (k - r) as i64);
                        }
                        want *= &xl;
                        if *g != want {
                            return Err(Error::Check(format!(
                                "expansions differ at fixed point {}, derivative {p}, q^{d}, ħ^{}",
                                i + 1,
                                p as i64 - k as i64
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Recursivity of the members p = -l..n-1, and polynomiality of y
    /// paired with each member and of the mirror series paired with each
    /// mirror member, up to z^z_order.
    pub fn check_fixed_point_properties(&self, data: &FixedPointData, z_order: usize) -> Result<usize> {
        let n = self.model.n;
        let l = self.model.l();
        self.weights.check_edges(&self.model, self.order)?;
        let y0: Vec<Series<SplitFrac>> = data.family.iter().map(|f| f[l].clone()).collect();
        self.check_recursive(&y0, "normalized y")?;
        let mut count = 1;
        for idx in 0..(l + n) {
            let p = idx as i64 - l as i64;
            let member: Vec<Series<SplitFrac>> = data.family.iter().map(|f| f[idx].clone()).collect();
            self.check_recursive(&member, &format!("family member {p}"))?;
            self.check_mpc(&data.y, &member, z_order, &format!("y with family member {p}"))?;
            let zmember: Vec<Series<SplitFrac>> = data.mirror_family.iter().map(|f| f[idx].clone()).collect();
            self.check_mpc(&data.z, &zmember, z_order, &format!("mirror series with member {p}"))?;
            count += 3;
        }
        Ok(count)
    }

    /// Runs every identity available for this model and weight system.
    pub fn suite(&self, z_order: usize) -> Vec<Outcome> {
        let s = &self.structure;
        let tag = format!(
            "{}, weights ({})",
            self.model.spec_string(),
            self.weights.alphas().iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
        );
        let mut out = vec![];
        let mut push = |name: &str, f: &mut dyn FnMut() -> Result<String>| {
            out.push(Outcome::run(format!("{name} [{tag}]"), f));
        };
        let ok = |r: Result<()>| r.map(|_| "ok".to_string());
        push("t-homogeneity and triangularity", &mut || Ok("asserted during extraction".into()));
        push("zero-weight limit", &mut || Ok(format!("{} coefficients", s.check_zero_weight_limit(&self.model)?)));
        if !self.model.is_cy() {
            push("zero-weight limit matches the coefficient table", &mut || {
                let table = CoeffTable::build(&self.model, s.p_max, s.p_max, s.order)?;
                Ok(format!("{} coefficients", s.check_limit(&table)?))
            });
        }
        push("I from the first correction", &mut || ok(s.check_i_from_correction()));
        push("inverse coefficient recursion", &mut || Ok(format!("{} cases", s.check_recursion()?)));
        push("correction term symmetry", &mut || Ok(format!("{} cases", s.check_correction_symmetry()?)));
        if self.model.is_cy() {
            push("sigma sum rule", &mut || ok(s.check_sigma_sum_rule()));
            push("extreme coefficients", &mut || ok(s.check_extremes()));
        }
        if self.weights.is_subtorus() {
            push("linear part vanishes on the subtorus", &mut || ok(s.check_linear_part_vanishes()));
            if self.model.is_cy() && self.model.n - self.model.l() == 4 {
                push("threefold relation", &mut || ok(s.check_threefold_relation()));
            }
        }
        push("expansions agree", &mut || ok(self.check_expansions_agree()));
        let data = self.fixed_point_data();
        match &data {
            Err(e) => push("fixed point values", &mut || Err(e.clone())),
            Ok(data) => {
                push("closed form of the negative members", &mut || ok(self.check_negative_members(data)));
                push("leading terms", &mut || ok(self.check_leading_terms(data)));
                push("annihilation", &mut || ok(self.check_annihilation(data)));
                push("two-point divisibility", &mut || ok(self.check_two_point_divisibility(data)));
                push("shift relation", &mut || ok(self.check_shift_relation(data)));
                push("recursivity and polynomiality", &mut || {
                    Ok(format!("{} checks", self.check_fixed_point_properties(data, z_order)?))
                });
            }
        }
        push("two-point symmetry", &mut || {
            ok(self.check_two_point_symmetry(&Q::new(3.into(), 7.into()), &Q::new((-5).into(), 11.into())))
        });
        out
    }
}

/// Values of the families at the fixed points, as rational functions of ħ.
#[derive(Clone, Debug)]
pub struct FixedPointData {
    /// Per fixed point, members p = -l..n-1 indexed by p + l.
    pub family: Vec<Vec<Series<SplitFrac>>>,
    /// The same after the exponential prefactor and mirror change of variable.
    pub mirror_family: Vec<Vec<Series<SplitFrac>>>,
    pub y: Vec<Series<SplitFrac>>,
    pub z: Vec<Series<SplitFrac>>,
}

/// The structure data of two weight systems agree at t = 0.
pub fn check_weight_independence(a: &Structure, b: &Structure) -> Result<usize> {
    let limit = |s: &Series<Poly>| s.map(|p| p.coeff(0));
    let mut count = 0;
    for (k, v) in &a.c {
        let w = b.c.get(k).ok_or_else(|| Error::Invalid("structures of different shapes".into()))?;
        if limit(v) != limit(w) {
            return Err(Error::Check(format!("structure coefficient {k:?} depends on the weights at t = 0")));
        }
        count += 1;
    }
    for (k, v) in &a.ctilde {
        if limit(v) != limit(&b.ctilde[k]) {
            return Err(Error::Check(format!("inverse coefficient {k:?} depends on the weights at t = 0")));
        }
        count += 1;
    }
    for (k, v) in &a.b1 {
        if limit(v) != limit(&b.b1[k]) {
            return Err(Error::Check(format!("correction term {k:?} depends on the weights at t = 0")));
        }
        count += 1;
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quintic() -> ModelSpec {
        ModelSpec::cy(&[5])
    }

    #[test]
    fn weight_systems() {
        let g = Weights::generic(6);
        assert_eq!(g.alphas(), &[q(1), q(-2), q(3), q(-5), q(8), q(-13)]);
        let s = Weights::default_subtorus(5);
        assert!(s.is_subtorus());
        assert_eq!(s.sigma()[1], q(0));
        assert_eq!(s.conjugate(4), Some(4));
        assert!(Weights::new(vec![q(1), q(1)]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(Weights::random_subtorus(6, &mut rng).is_subtorus());
        assert_eq!(Weights::random(5, &mut rng).n(), 5);
    }

    #[test]
    fn default_weights_are_redrawn_when_edges_collide() {
        let m = quintic();
        // 1 - (-5) over 2 equals 1 - (-2): two edges share a pole
        assert!(Weights::generic(5).check_edges(&m, 2).is_err());
        let w = Weights::default_for(&m, 2, 11);
        w.check_edges(&m, 2).unwrap();
        assert_eq!(Weights::default_for(&m, 1, 11), Weights::generic(5));
    }

    #[test]
    fn structure_on_quintic() {
        let m = quintic();
        let s = Structure::build(&m, &Weights::generic(5), 4, 2).unwrap();
        s.check_sigma_sum_rule().unwrap();
        s.check_i_from_correction().unwrap();
        s.check_recursion().unwrap();
        s.check_extremes().unwrap();
        s.check_correction_symmetry().unwrap();
        assert!(s.check_zero_weight_limit(&m).unwrap() > 0);
        for r in 1..=4 {
            for j in 0..=(4 - r) {
                assert!(s.ctilde(4, j, r).unwrap().coeff(0).is_zero());
            }
        }
        // D B^{(0)}_{0,1} = I_1 - 1 = 770 q + ...
        assert_eq!(s.b1(0, 0).unwrap().d().coeff(1), &Poly::constant(q(770)));
    }

    #[test]
    fn subtorus_threefold() {
        let s = Structure::build(&quintic(), &Weights::default_subtorus(5), 4, 2).unwrap();
        s.check_linear_part_vanishes().unwrap();
        s.check_threefold_relation().unwrap();
    }

    #[test]
    fn fano_limit_and_weight_independence() {
        let m = ModelSpec::new(5, vec![3]).unwrap();
        let s = Structure::build(&m, &Weights::generic(5), 4, 3).unwrap();
        let table = CoeffTable::build(&m, 4, 4, 3).unwrap();
        assert!(s.check_limit(&table).unwrap() > 0);
        s.check_recursion().unwrap();
        s.check_i_from_correction().unwrap();
        s.check_zero_weight_limit(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let other = Structure::build(&m, &Weights::random(5, &mut rng), 4, 3).unwrap();
        assert!(check_weight_independence(&s, &other).unwrap() > 0);
    }

    #[test]
    fn fixed_point_checks_quintic() {
        let m = quintic();
        let e = Equivariant::new(&m, &Weights::default_for(&m, 2, 1), 2).unwrap();
        let data = e.fixed_point_data().unwrap();
        e.check_expansions_agree().unwrap();
        e.check_negative_members(&data).unwrap();
        e.check_leading_terms(&data).unwrap();
        e.check_annihilation(&data).unwrap();
        e.check_two_point_divisibility(&data).unwrap();
        e.check_two_point_symmetry(&Q::new(3.into(), 7.into()), &Q::new((-5).into(), 11.into())).unwrap();
        e.check_shift_relation(&data).unwrap();
        e.check_fixed_point_properties(&data, 2).unwrap();
    }

    #[test]
    fn fixed_point_checks_reject_perturbations() {
        let m = quintic();
        let e = Equivariant::new(&m, &Weights::default_for(&m, 2, 1), 2).unwrap();
        let data = e.fixed_point_data().unwrap();
        let stray = SplitFrac::pole(q(1), Q::new(1.into(), 3.into()), 1);
        let bump = |s: &Series<SplitFrac>, k: usize| {
            let mut t = s.clone();
            t.set(k, s.coeff(k).add(&stray));
            t
        };

        let mut bad = data.clone();
        bad.mirror_family[0][1] = bump(&bad.mirror_family[0][1], 1);
        assert!(e.check_two_point_divisibility(&bad).is_err());

        let member: Vec<Series<SplitFrac>> = data.family.iter().map(|f| f[1].clone()).collect();
        let mut y = data.y.clone();
        y[0] = bump(&y[0], 1);
        e.check_mpc(&data.y, &member, 2, "unchanged").unwrap();
        assert!(e.check_mpc(&y, &member, 2, "perturbed").is_err());
        assert!(e.check_recursive(&y, "perturbed").is_err());

        // a prescribed pole with the wrong residue
        let mut w = data.y.clone();
        let c = w[0].coeff(1).clone();
        w[0].set(1, c.scale(&q(2)));
        assert!(e.check_recursive(&w, "scaled").is_err());
    }
}
