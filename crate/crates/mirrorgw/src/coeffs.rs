//! Structure coefficients c and c̃ for Fano complete intersections, the
//! series F_p built from them, and the reflection identities they satisfy.

use num_traits::{One, Zero};

use crate::arith::{q, Q};
use crate::error::{Error, Result};
use crate::hypergeom::{ModelSpec, QW};
use crate::series::Series;

/// Π_k Π_{r=1}^{a_k d}(a_k w + r) / Π_{r=1}^d (w+r)^n as a w-series.
fn degree_factor(m: &ModelSpec, d: usize, order: usize) -> Series<Q> {
    let mut num = vec![Q::zero(); order + 1];
    num[0] = Q::one();
    let mul_linear = |c: &mut Vec<Q>, r: Q, s: Q| {
        for k in (0..c.len()).rev() {
            let lower = if k > 0 { &c[k - 1] * &s } else { Q::zero() };
            c[k] = &c[k] * &r + lower;
        }
    };
    for &ak in &m.a {
        for r in 1..=(ak as usize * d) {
            mul_linear(&mut num, q(r as i64), q(ak as i64));
        }
    }
    let mut out = Series::new(num);
    for r in 1..=d {
        // 1/(w+r)^n
        let ri = q(r as i64).recip();
        let geo = Series::from_fn(order, |k| {
            let v = num_traits::pow(ri.clone(), k + 1);
            if k % 2 == 0 { v } else { -v }
        });
        out = out.mul(&geo.pow(&q(m.n as i64)).expect("integer power"));
    }
    out
}

/// Tables of c(p, s, d) and c̃(p, s, d).
#[derive(Clone, Debug)]
pub struct CoeffTable {
    pub model: ModelSpec,
    p_max: usize,
    s_max: usize,
    d_max: usize,
    // c[d][p][s]
    c: Vec<Vec<Vec<Q>>>,
    // ct[d][p][s] for s <= p - νd
    ct: Vec<Vec<Vec<Q>>>,
}

impl CoeffTable {
    /// Builds c for p <= p_max, s <= s_max, d <= d_max and c̃ for p <= p_max.
    pub fn build(m: &ModelSpec, p_max: usize, s_max: usize, d_max: usize) -> Result<Self> {
        if m.nu() <= 0 {
            return Err(Error::Invalid("structure coefficient tables need a Fano model".into()));
        }
        let s_max = s_max.max(p_max);
        let nu = m.nu() as usize;
        let mut c = Vec::with_capacity(d_max + 1);
        for d in 0..=d_max {
            let base = degree_factor(m, d, s_max);
            let shift = Series::new(vec![q(d as i64), Q::one()]);
            let mut cur = base;
            let mut rows = Vec::with_capacity(p_max + 1);
            for _ in 0..=p_max {
                rows.push(cur.coeffs().to_vec());
                cur = cur.mul(&shift.clone().with_order(s_max));
            }
            c.push(rows);
        }
        let mut ct: Vec<Vec<Vec<Q>>> = Vec::with_capacity(d_max + 1);
        for d in 0..=d_max {
            let mut rows = Vec::with_capacity(p_max + 1);
            for p in 0..=p_max {
                let top = p as i64 - (nu * d) as i64;
                let mut row = Vec::new();
                for s in 0..=top.max(-1) {
                    let s = s as usize;
                    if d == 0 {
                        row.push(if s == p { Q::one() } else { Q::zero() });
                        continue;
                    }
                    let mut acc = Q::zero();
                    for d1 in 0..d {
                        let r_top = p as i64 - (nu * d1) as i64;
                        for r in 0..=r_top.max(-1) {
                            let r = r as usize;
                            let lhs: &Q = &ct[d1][p][r];
                            if !lhs.is_zero() {
                                acc += lhs * &c[d - d1][r][s];
                            }
                        }
                    }
                    row.push(-acc);
                }
                rows.push(row);
            }
            ct.push(rows);
        }
        Ok(CoeffTable { model: m.clone(), p_max, s_max, d_max, c, ct })
    }

    pub fn c(&self, p: usize, s: usize, d: usize) -> Result<&Q> {
        if p > self.p_max || s > self.s_max || d > self.d_max {
            return Err(Error::Invalid(format!("c({p},{s},{d}) outside the table")));
        }
        Ok(&self.c[d][p][s])
    }

    pub fn ctilde(&self, p: usize, s: usize, d: usize) -> Result<&Q> {
        let row = self
            .ct
            .get(d)
            .and_then(|r| r.get(p))
            .ok_or_else(|| Error::Invalid(format!("c̃({p},{s},{d}) outside the table")))?;
        row.get(s)
            .ok_or_else(|| Error::Invalid(format!("c̃({p},{s},{d}) requires s <= p - νd")))
    }

    /// e(p, t, d) = Σ_{d1+d2=d} Σ_s c̃(p,s,d1) c(s,t,d2).
    pub fn convolved(&self, p: usize, t: usize, d: usize) -> Result<Q> {
        let nu = self.model.nu() as usize;
        let mut acc = Q::zero();
        for d1 in 0..=d {
            let s_top = p as i64 - (nu * d1) as i64;
            for s in 0..=s_top.max(-1) {
                let s = s as usize;
                acc += self.ctilde(p, s, d1)? * self.c(s, t, d - d1)?;
            }
        }
        Ok(acc)
    }
}

impl Series<Q> {
    fn with_order(self, order: usize) -> Series<Q> {
        let mut c = self.coeffs().to_vec();
        c.resize(order + 1, Q::zero());
        Series::new(c)
    }
}

/// F_p for a Fano model: the q^d coefficient is Σ_t e(p,t,d) w^{νd-p+t}.
/// Terms with νd - p + t < 0 must vanish; this is asserted.
pub fn build_fp_fano(m: &ModelSpec, p: usize, q_order: usize, w_order: usize) -> Result<QW> {
    let nu = m.nu();
    if nu <= 0 {
        return Err(Error::Invalid("F_p via c̃ needs a Fano model".into()));
    }
    let t_max = w_order + p;
    let table = CoeffTable::build(m, p, t_max, q_order)?;
    fp_from_table(&table, p, q_order, w_order)
}

/// Same as [`build_fp_fano`] with a prebuilt table.
pub fn fp_from_table(table: &CoeffTable, p: usize, q_order: usize, w_order: usize) -> Result<QW> {
    let nu = table.model.nu();
    let mut out = Vec::with_capacity(q_order + 1);
    for d in 0..=q_order {
        let shift = nu * d as i64 - p as i64;
        let mut coeffs = vec![Q::zero(); w_order + 1];
        let t_hi = w_order as i64 - shift;
        for t in 0..=t_hi.max(-1) {
            let e = table.convolved(p, t as usize, d)?;
            let pow = shift + t;
            if pow < 0 || (pow == 0 && d > 0) {
                let want = if d == 0 && t as usize == p { Q::one() } else { Q::zero() };
                if e != want {
                    return Err(Error::Regularity(format!(
                        "F_{p}: coefficient of q^{d} w^{pow} is {e}, expected {want}"
                    )));
                }
            }
            if pow >= 0 {
                coeffs[pow as usize] += e;
            }
        }
        out.push(Series::new(coeffs));
    }
    Ok(Series::new(out))
}

/// Checks the d = 1 characterization of c̃(p, ·, 1) for p <= p_max.
pub fn check_ctilde_d1(table: &CoeffTable, p_max: usize) -> Result<()> {
    let m = &table.model;
    let nu = m.nu();
    for p in 0..=p_max {
        let top = p as i64 - nu;
        if top < 0 {
            continue;
        }
        let order = top as usize;
        let mut g = Series::constant(m.prod(), order);
        for &ak in &m.a {
            for r in 1..ak {
                g = g.mul(&Series::new(vec![q(r as i64), q(ak as i64)]).with_order(order));
            }
        }
        let e = m.n as i64 - m.l() as i64 - p as i64;
        let base = Series::new(vec![Q::one(), Q::one()]).with_order(order);
        let pw = if e >= 0 { base.pow(&q(e))?.inv_unit()? } else { base.pow(&q(-e))? };
        g = g.mul(&pw);
        for s in 0..=order {
            let sum = table.ctilde(p, s, 1)? + g.coeff(s);
            if !sum.is_zero() {
                return Err(Error::Check(format!("c̃({p},{s},1) characterization fails: residual {sum}")));
            }
        }
    }
    Ok(())
}

/// Convolution identity: 1 for d = 0, -a^a for d = 1, 0 for d >= 2,
/// for every ν d <= p <= n-1-l. Returns the number of index sets checked.
pub fn check_convolution(m: &ModelSpec, d_max: usize) -> Result<usize> {
    let nu = m.nu();
    if nu <= 0 {
        return Err(Error::Invalid("convolution identity needs a Fano model".into()));
    }
    let nu = nu as usize;
    let top = m.top();
    let table = CoeffTable::build(m, top + nu * d_max, top + nu * d_max, d_max)?;
    let mut checked = 0;
    for d in 0..=d_max {
        for p in (nu * d)..=top {
            let mut acc = Q::zero();
            for d2 in 0..=d {
                let d1 = d - d2;
                acc += table.ctilde(p - nu * d2, p - nu * d, d1)?
                    * table.ctilde(top - p + nu * d2, top - p, d2)?;
            }
            let want = match d {
                0 => Q::one(),
                1 => -m.self_pow(),
                _ => Q::zero(),
            };
            if acc != want {
                return Err(Error::Check(format!("convolution identity at d={d}, p={p}: {acc} != {want}")));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Reflection identity among the c(p, s, d) for p, s <= n-1-l, p - s <= ν d.
/// Returns the number of index sets checked.
pub fn check_reflection(m: &ModelSpec, d_max: usize) -> Result<usize> {
    let nu = m.nu();
    if nu <= 0 {
        return Err(Error::Invalid("reflection identity needs a Fano model".into()));
    }
    let top = m.top();
    let table = CoeffTable::build(m, top, top, d_max)?;
    let a_pow = m.self_pow();
    let sign = |e: i64| if e.rem_euclid(2) == 0 { Q::one() } else { -Q::one() };
    let mut checked = 0;
    for d in 1..=d_max {
        for p in 0..=top {
            for s in 0..=top {
                if p as i64 - s as i64 > nu * d as i64 {
                    continue;
                }
                let mut rhs = if p as i64 - s as i64 == nu * d as i64 {
                    num_traits::pow(a_pow.clone(), d)
                } else {
                    Q::zero()
                };
                let (ph, sh) = (top - p, top - s);
                rhs -= sign(nu * d as i64 + (p + s) as i64) * table.c(sh, ph, d)?;
                for d1 in 1..d {
                    let d2 = d - d1;
                    for t in 0..=top {
                        rhs -= sign(nu * d2 as i64 + (s + t) as i64)
                            * table.c(p, t, d1)?
                            * table.c(sh, top - t, d2)?;
                    }
                }
                let lhs = table.c(p, s, d)?;
                if *lhs != rhs {
                    return Err(Error::Check(format!("reflection identity at d={d}, p={p}, s={s}: {lhs} != {rhs}")));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergeom::{build_f, op_d};

    fn cubic3() -> ModelSpec {
        ModelSpec::new(5, vec![3]).unwrap()
    }

    #[test]
    fn small_entries() {
        let t = CoeffTable::build(&cubic3(), 3, 3, 2).unwrap();
        assert_eq!(t.c(0, 0, 1).unwrap(), &q(6));
        for p in 0..=3 {
            for s in 0..=3 {
                let delta = if p == s { q(1) } else { q(0) };
                assert_eq!(t.c(p, s, 0).unwrap(), &delta);
            }
            assert_eq!(t.ctilde(p, p, 0).unwrap(), &q(1));
        }
        assert_eq!(t.ctilde(2, 0, 1).unwrap(), &q(-6));
        assert_eq!(t.ctilde(3, 0, 1).unwrap(), &q(-6));
        assert_eq!(t.ctilde(3, 1, 1).unwrap(), &q(-21));
        assert!(t.ctilde(3, 2, 1).is_err());
        assert!(t.c(4, 0, 0).is_err());
        check_ctilde_d1(&t, 3).unwrap();
    }

    #[test]
    fn fp_matches_explicit_cubic_threefold() {
        let m = cubic3();
        let (qo, wo) = (3, 6);
        let f = build_f(&m, qo, wo + 4);
        // F_0 = F, F_1 = D F
        assert_eq!(build_fp_fano(&m, 0, qo, wo).unwrap(), trim(&f, wo));
        // D F loses one order in w in op_d; compare on the common range
        let df = op_d(&f).unwrap();
        assert_eq!(build_fp_fano(&m, 1, qo, wo).unwrap(), trim(&df, wo));

        // F_2 = 1 + 3q Σ q^d w^{2d}(w+d)(7w+7d+5) R_d/(w+d+1)^2
        // F_3 = 1 + 6q Σ q^d w^{2d-1}(w+d)^2 R_d/(w+d+1)
        let f2 = build_fp_fano(&m, 2, qo, wo).unwrap();
        let f3 = build_fp_fano(&m, 3, qo, wo).unwrap();
        for d in 0..qo {
            let r = degree_factor(&m, d, wo + 2);
            let lin = |a: i64| Series::new(vec![q(a), q(1)]).with_order(wo + 2);
            let two = r
                .mul(&lin(d as i64))
                .mul(&Series::new(vec![q(7 * d as i64 + 5), q(7)]).with_order(wo + 2))
                .mul(&lin(d as i64 + 1).pow(&q(2)).unwrap().inv().unwrap())
                .scale(&q(3))
                .shift(2 * d);
            let three = r
                .mul(&lin(d as i64).pow(&q(2)).unwrap())
                .mul(&lin(d as i64 + 1).inv().unwrap())
                .scale(&q(6));
            // w^{2d-1}: for d = 0 the factor d^2 w^{-1} (w+d)^2 is w, so shift safely
            let three = if d == 0 { three.shift(0) } else { three.shift(2 * d - 1) };
            let three = if d == 0 {
                Series::new(three.coeffs()[1..].to_vec()).with_order(wo)
            } else {
                three
            };
            for k in 0..=wo {
                assert_eq!(f2.coeff(d + 1).coeff(k), two.coeff(k), "F_2 q^{} w^{k}", d + 1);
                assert_eq!(f3.coeff(d + 1).coeff(k), three.coeff(k), "F_3 q^{} w^{k}", d + 1);
            }
        }
    }

    fn trim(f: &QW, wo: usize) -> QW {
        Series::new(f.coeffs().iter().map(|s| s.truncate(wo)).collect())
    }

    #[test]
    fn leading_negative_power_terms() {
        // F_1, F_2, F_3 modulo w^2 after q -> Q/H^2, w -> H/ħ
        let t = CoeffTable::build(&cubic3(), 3, 8, 2).unwrap();
        assert_eq!(t.convolved(1, 0, 1).unwrap(), q(6));
        assert_eq!(t.convolved(2, 1, 1).unwrap(), q(15));
        assert_eq!(t.convolved(3, 2, 1).unwrap(), q(6));
        assert_eq!(t.convolved(3, 0, 2).unwrap(), q(18));
    }

    #[test]
    fn convolution_and_reflection() {
        assert_eq!(check_convolution(&cubic3(), 0).unwrap(), 4);
        check_convolution(&cubic3(), 3).unwrap();
        check_convolution(&ModelSpec::new(7, vec![2, 3]).unwrap(), 4).unwrap();
        check_reflection(&cubic3(), 4).unwrap();
        check_reflection(&ModelSpec::new(6, vec![2, 2]).unwrap(), 3).unwrap();
    }
}
