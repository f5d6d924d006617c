//! Hypergeometric series of a complete intersection, the operators D and M,
//! the normalizing series I_p, the mirror map, and the algebraic series
//! L, xi, eta, Phi_0, Psi attached to a weight system.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::arith::{factorial, q, qbig, qr, Q};
use crate::error::{Error, Result};
use crate::series::Series;

/// Series in q whose coefficients are truncated series in w.
pub type QW = Series<Series<Q>>;

/// Complete intersection of multidegree `a` in P^{n-1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub n: usize,
    pub a: Vec<u32>,
}

impl ModelSpec {
    pub fn new(n: usize, a: Vec<u32>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("n must be positive".into()));
        }
        if a.iter().any(|&k| k == 0) {
            return Err(Error::Invalid("degrees must be positive".into()));
        }
        let m = ModelSpec { n, a };
        if m.nu() < 0 {
            return Err(Error::Invalid(format!(
                "|a| = {} exceeds n = {}: only Fano and Calabi-Yau cases are supported",
                m.abs(),
                n
            )));
        }
        Ok(m)
    }

    /// Parses "n=7;a=7", "n=6;a=3,3" or "n=3;a=".
    pub fn parse(s: &str) -> Result<Self> {
        let mut n = None;
        let mut a = None;
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("bad model field {part:?}")))?;
            match k.trim() {
                "n" => {
                    n = Some(v.trim().parse::<usize>().map_err(|_| Error::Invalid(format!("bad n {v:?}")))?)
                }
                "a" => {
                    let mut out = vec![];
                    for x in v.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                        out.push(x.parse::<u32>().map_err(|_| Error::Invalid(format!("bad degree {x:?}")))?);
                    }
                    a = Some(out);
                }
                other => return Err(Error::Invalid(format!("unknown model field {other:?}"))),
            }
        }
        let n = n.ok_or_else(|| Error::Invalid("model needs n".into()))?;
        ModelSpec::new(n, a.unwrap_or_default())
    }

    /// Calabi-Yau hypersurface or complete intersection named by its degrees, n = |a|.
    pub fn cy(a: &[u32]) -> Self {
        ModelSpec::new(a.iter().sum::<u32>() as usize, a.to_vec()).expect("valid model")
    }

    pub fn l(&self) -> usize {
        self.a.len()
    }

    pub fn abs(&self) -> usize {
        self.a.iter().map(|&k| k as usize).sum()
    }

    pub fn nu(&self) -> i64 {
        self.n as i64 - self.abs() as i64
    }

    pub fn is_cy(&self) -> bool {
        self.nu() == 0
    }

    /// ⟨a⟩ = Π a_k
    pub fn prod(&self) -> Q {
        self.a.iter().fold(Q::one(), |acc, &k| acc * q(k as i64))
    }

    /// a! = Π a_k!
    pub fn fact(&self) -> Q {
        qbig(self.a.iter().fold(BigInt::one(), |acc, &k| acc * factorial(k as u64)))
    }

    /// a^a = Π a_k^{a_k}
    pub fn self_pow(&self) -> Q {
        self.a.iter().fold(Q::one(), |acc, &k| acc * num_traits::pow(q(k as i64), k as usize))
    }

    /// n - 1 - l, the top power of H on the complete intersection.
    pub fn top(&self) -> usize {
        self.n - 1 - self.l()
    }

    pub fn without_ones(&self) -> ModelSpec {
        ModelSpec { n: self.n, a: self.a.iter().copied().filter(|&k| k != 1).collect() }
    }

    pub fn spec_string(&self) -> String {
        let a: Vec<String> = self.a.iter().map(|k| k.to_string()).collect();
        format!("n={};a={}", self.n, a.join(","))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a: Vec<String> = self.a.iter().map(|k| k.to_string()).collect();
        write!(f, "X_({}) in P^{}", a.join(","), self.n - 1)
    }
}

/// 1/(r + c w) expanded to the given w-order.
fn inv_linear(r: &Q, c: &Q, order: usize) -> Series<Q> {
    let ri = r.recip();
    let ratio = -(c * &ri);
    let mut acc = ri;
    Series::from_fn(order, |_| {
        let v = acc.clone();
        acc *= &ratio;
        v
    })
}

fn linear(r: &Q, c: &Q, order: usize) -> Series<Q> {
    Series::from_fn(order, |k| match k {
        0 => r.clone(),
        1 => c.clone(),
        _ => Q::zero(),
    })
}

/// Hypergeometric series: coefficient of q^d is
/// w^{νd} Π_k Π_{r=start}^{a_k d - 1 + start} (a_k w + r) / Π_{r=1}^d (w+r)^n.
fn build_hyper(m: &ModelSpec, q_order: usize, w_order: usize, start: i64) -> QW {
    let nu = m.nu() as usize;
    let mut coeffs = Vec::with_capacity(q_order + 1);
    // running ratio without the w^{νd} shift
    let mut run = Series::one(w_order);
    coeffs.push(run.clone());
    for d in 1..=q_order {
        for &ak in &m.a {
            let akq = q(ak as i64);
            let lo = ak as i64 * (d as i64 - 1) + start;
            let hi = ak as i64 * d as i64 - 1 + start;
            for r in lo..=hi {
                run = run.mul(&linear(&q(r), &akq, w_order));
            }
        }
        let inv = inv_linear(&q(d as i64), &Q::one(), w_order);
        for _ in 0..m.n {
            run = run.mul(&inv);
        }
        coeffs.push(run.shift(nu * d));
    }
    Series::new(coeffs)
}

/// F(w, q).
pub fn build_f(m: &ModelSpec, q_order: usize, w_order: usize) -> QW {
    build_hyper(m, q_order, w_order, 1)
}

/// F_{-l}(w, q), the variant with numerator factors r = 0..a_k d - 1.
pub fn build_f_minus_l(m: &ModelSpec, q_order: usize, w_order: usize) -> QW {
    build_hyper(m, q_order, w_order, 0)
}

/// Divide a w-series without constant term by w.
fn div_w(s: &Series<Q>, what: &str) -> Result<Series<Q>> {
    if !s.coeff(0).is_zero() {
        return Err(Error::Regularity(format!("{what}: nonzero w^-1 term {}", s.coeff(0))));
    }
    if s.order() == 0 {
        return Err(Error::Regularity(format!("{what}: w-order exhausted")));
    }
    Ok(Series::new(s.coeffs()[1..].to_vec()))
}

/// D H = H + (q/w) dH/dq, asserting the result stays regular at w = 0.
pub fn op_d(h: &QW) -> Result<QW> {
    let mut out = Vec::with_capacity(h.order() + 1);
    for (d, hd) in h.coeffs().iter().enumerate() {
        if d == 0 {
            out.push(hd.truncate(hd.order().saturating_sub(1)));
            continue;
        }
        let shifted = div_w(&hd.scale(&q(d as i64)), "D")?;
        out.push(hd.add(&shifted));
    }
    Ok(Series::new(out))
}

/// The w^0 part H(0, q).
pub fn at_w0(h: &QW) -> Series<Q> {
    Series::from_fn(h.order(), |d| h.coeff(d).coeff(0).clone())
}

/// M H = D(H / H(0, q)).
pub fn op_m(h: &QW) -> Result<QW> {
    let h0 = at_w0(h);
    if h0.coeff(0) != &Q::one() {
        return Err(Error::ConstantTerm("M needs H(0,0) = 1".into()));
    }
    let g = h.mul_scalar_series(&h0.inv_unit()?);
    op_d(&g)
}

/// M^p F for p = 0..=pmax; the w-order of M^p F is `w_order - p`.
pub fn m_powers(m: &ModelSpec, pmax: usize, q_order: usize, w_order: usize) -> Result<Vec<QW>> {
    if w_order < pmax {
        return Err(Error::Invalid("w-order must be at least the number of M applications".into()));
    }
    let mut out = vec![build_f(m, q_order, w_order)];
    for p in 1..=pmax {
        let next = op_m(&out[p - 1])?;
        out.push(next);
    }
    Ok(out)
}

/// I_0, ..., I_pmax. For Fano models every I_p is the constant 1.
pub fn i_series(m: &ModelSpec, pmax: usize, order: usize) -> Result<Vec<Series<Q>>> {
    if !m.is_cy() {
        return Ok(vec![Series::one(order); pmax + 1]);
    }
    Ok(m_powers(m, pmax, order, pmax)?.iter().map(at_w0).collect())
}

/// Σ_d q^d Π(a_k d)!/(d!)^n · weight(d).
fn weighted_i0(m: &ModelSpec, order: usize, weight: impl Fn(usize) -> Q) -> Series<Q> {
    let mut ratio = Q::one();
    Series::from_fn(order, |d| {
        if d > 0 {
            for &ak in &m.a {
                for r in (ak as usize * (d - 1) + 1)..=(ak as usize * d) {
                    ratio *= q(r as i64);
                }
            }
            ratio /= num_traits::pow(q(d as i64), m.n);
        }
        &ratio * weight(d)
    })
}

fn require_cy(m: &ModelSpec, what: &str) -> Result<()> {
    if !m.is_cy() {
        return Err(Error::Invalid(format!("{what} is defined only for Calabi-Yau models")));
    }
    Ok(())
}

/// Mirror map exponent J(q).
pub fn j_series(m: &ModelSpec, order: usize) -> Result<Series<Q>> {
    require_cy(m, "J")?;
    let i0 = weighted_i0(m, order, |_| Q::one());
    let num = weighted_i0(m, order, |d| {
        let mut s = Q::zero();
        for &ak in &m.a {
            for r in (d + 1)..=(ak as usize * d) {
                s += qr(ak as i64, r as i64);
            }
        }
        s
    });
    Ok(num.mul(&i0.inv_unit()?))
}

/// Q(q) = q e^{J(q)}.
pub fn mirror_q(m: &ModelSpec, order: usize) -> Result<Series<Q>> {
    let e = j_series(m, order)?.exp()?;
    Ok(e.shift(1))
}

/// q(Q), the inverse of the mirror map.
pub fn invert_mirror(m: &ModelSpec, order: usize) -> Result<Series<Q>> {
    mirror_q(m, order)?.revert()
}

/// C_1(q) = (1/I_0) Σ q^d Π(a_k d)!/(d!)^n H_d with harmonic numbers H_d.
pub fn c1_series(m: &ModelSpec, order: usize) -> Result<Series<Q>> {
    require_cy(m, "C_1")?;
    let i0 = weighted_i0(m, order, |_| Q::one());
    let num = weighted_i0(m, order, |d| (1..=d).map(|r| qr(1, r as i64)).sum());
    Ok(num.mul(&i0.inv_unit()?))
}

/// Elementary symmetric functions of the given series.
pub fn esym_series(values: &[Series<Q>], order: usize) -> Vec<Series<Q>> {
    let mut e = vec![Series::one(order)];
    for v in values {
        e.push(Series::zero(&Q::zero(), order));
        for k in (1..e.len()).rev() {
            let t = e[k - 1].mul(v);
            e[k] = e[k].add(&t);
        }
    }
    e
}

/// σ_r(z) for r = 0..=n: elementary symmetric functions of {z - α_k}.
pub fn sigma_at(alphas: &[Q], z: &Series<Q>) -> Vec<Series<Q>> {
    let order = z.order();
    let shifted: Vec<Series<Q>> = alphas
        .iter()
        .map(|a| z.sub(&Series::constant(a.clone(), order)))
        .collect();
    esym_series(&shifted, order)
}

/// The algebraic series attached to a point x and weights α.
#[derive(Clone, Debug)]
pub struct Algebraic {
    pub x: Q,
    pub l_series: Series<Q>,
    pub xi: Series<Q>,
    pub eta: Option<Series<Q>>,
    pub phi0: Series<Q>,
    pub psi: Series<Q>,
    pub psi_dot: Series<Q>,
}

/// Solves σ_n(L) - q a^a L^n = σ_n(x) by Newton iteration and derives ξ, η, Φ_0, Ψ, Ψ̇.
pub fn algebraic(m: &ModelSpec, alphas: &[Q], x: &Q, order: usize) -> Result<Algebraic> {
    let n = m.n;
    if alphas.len() != n {
        return Err(Error::Invalid("need one weight per homogeneous coordinate".into()));
    }
    let xs = Series::constant(x.clone(), order);
    let sig_x = sigma_at(alphas, &xs);
    if sig_x[n - 1].coeff(0).is_zero() {
        return Err(Error::Degenerate(format!("σ_(n-1)(x) vanishes at x = {x}")));
    }
    if x.is_zero() {
        return Err(Error::Degenerate("x = 0".into()));
    }
    let a_pow = m.self_pow();
    let qvar = Series::var(&Q::zero(), order);
    let qa = qvar.scale(&a_pow);
    let target = sig_x[n].clone();
    let mut l = xs.clone();
    for _ in 0..=(order + 2) {
        let sig = sigma_at(alphas, &l);
        let ln = l.pow(&q(n as i64))?;
        let f = sig[n].sub(&qa.mul(&ln)).sub(&target);
        if f.eval_is_zero() {
            break;
        }
        let ln1 = l.pow(&q(n as i64 - 1))?;
        let fp = sig[n - 1].sub(&qa.mul(&ln1).scale(&q(n as i64)));
        l = l.sub(&f.div(&fp)?);
    }
    let sig = sigma_at(alphas, &l);
    let residual = sig[n].sub(&qa.mul(&l.pow(&q(n as i64))?)).sub(&target);
    if !residual.eval_is_zero() {
        return Err(Error::Check("Newton iteration for L did not converge".into()));
    }
    let xi = l.sub(&xs).d_inverse()?;
    let eta = if m.is_cy() {
        Some(xi.sub(&j_series(m, order)?.scale(x)))
    } else {
        None
    };
    let nq = q(n as i64);
    let psi = l.mul(&sig[n - 1]).sub(&sig[n].sub(&target).scale(&nq));
    let sig_nm2 = if n >= 2 { sig[n - 2].clone() } else { Series::zero(&Q::zero(), order) };
    let psi_dot = l
        .mul(&l)
        .mul(&sig_nm2)
        .scale(&q(2))
        .sub(&l.mul(&sig[n - 1]).scale(&q(n as i64 - 1)));
    let x_sig = x * sig_x[n - 1].coeff(0);
    let ratio = psi.inv()?.scale(&x_sig);
    let lx = l.scale(&x.recip());
    let phi0 = ratio
        .pow(&qr(1, 2))?
        .mul(&lx.pow(&qr(m.l() as i64 + 1, 2))?);
    Ok(Algebraic { x: x.clone(), l_series: l, xi, eta, phi0, psi, psi_dot })
}

fn first_mismatch(a: &Series<Q>, b: &Series<Q>) -> Option<usize> {
    let n = a.order().min(b.order());
    (0..=n).find(|&k| a.coeff(k) != b.coeff(k))
}

/// {D/I_{n-l}} ... {D/I_1}(1/I_0) = -a! q.
pub fn check_iterated_derivative(m: &ModelSpec, order: usize) -> Result<()> {
    require_cy(m, "the iterated derivative identity")?;
    let top = m.n - m.l();
    let is = i_series(m, top, order)?;
    let mut f = is[0].inv_unit()?;
    for i in is.iter().take(top + 1).skip(1) {
        f = f.d().mul(&i.inv_unit()?);
    }
    let want = Series::var(&Q::zero(), order).scale(&-m.fact());
    match first_mismatch(&f, &want) {
        None => Ok(()),
        Some(k) => Err(Error::Check(format!(
            "iterated derivative identity fails at q^{k}: {} vs {}",
            f.coeff(k),
            want.coeff(k)
        ))),
    }
}

/// I_{b+1} = I_{n-1-l-b} for 0 <= b <= n-l-2.
pub fn check_i_symmetry(m: &ModelSpec, order: usize) -> Result<()> {
    require_cy(m, "the I_p symmetry")?;
    let top = m.n - m.l();
    let is = i_series(m, top, order)?;
    for b in 0..=top.saturating_sub(2) {
        if let Some(k) = first_mismatch(&is[b + 1], &is[top - 1 - b]) {
            return Err(Error::Check(format!("I_{} != I_{} at q^{k}", b + 1, top - 1 - b)));
        }
    }
    Ok(())
}

/// 1 + q dJ/dq = I_1.
pub fn check_j_derivative(m: &ModelSpec, order: usize) -> Result<()> {
    let j = j_series(m, order)?;
    let lhs = j.d().add(&Series::one(order));
    let i1 = &i_series(m, 1, order)?[1];
    match first_mismatch(&lhs, i1) {
        None => Ok(()),
        Some(k) => Err(Error::Check(format!("1 + DJ != I_1 at q^{k}"))),
    }
}
