//! Disk, annulus and one-point Klein bottle invariants of a real Calabi-Yau
//! complete intersection threefold, computed both from torus fixed-point
//! sums and from their mirror formulas.
//!
//! Everything is carried out at concrete subtorus weights. Half-integer
//! powers of q only occur in the disk sector; there a series G stands for
//! q^{1/2} G(q).

use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arith::{double_factorial, factorial, q, qbig, qpow, qr, Laurent, Poly, RatFunc, Ring, SplitFrac, Q};
use crate::equivariant::{Equivariant, Weights};
use crate::error::{Error, Result};
use crate::hypergeom::{algebraic, i_series, invert_mirror, j_series, Algebraic, ModelSpec};
use crate::report::Outcome;
use crate::series::Series;

/// A Calabi-Yau threefold X_a ⊂ P^{n-1} with n = l + 4, at subtorus weights.
pub struct OpenModel {
    model: ModelSpec,
    weights: Weights,
    order: usize,
    eq: Equivariant,
    all_odd: bool,
    is: Vec<Series<Q>>,
    j: Series<Q>,
    q_of_big_q: Series<Q>,
}

/// True when no ratio of two distinct λ's is a quotient of odd integers.
/// Such ratios make ħ_1 + ħ_2 vanish off the conjugate pairs or collide a disk
/// evaluation point with a pole.
pub fn open_weights_ok(w: &Weights) -> bool {
    let lambdas: Vec<&Q> = w.alphas().iter().step_by(2).filter(|a| !Zero::is_zero(*a)).collect();
    let two = num_bigint::BigInt::from(2);
    for (i, x) in lambdas.iter().enumerate() {
        for y in &lambdas[i + 1..] {
            let r = *y / *x;
            if !(r.numer() % &two).is_zero() && !(r.denom() % &two).is_zero() {
                return false;
            }
        }
    }
    true
}

/// Subtorus weights for the open sector: the default λ_k = 1/k when usable,
/// otherwise the first usable seeded random draw. With `seed = Some(s)` the
/// draw is always random.
pub fn open_weights(n: usize, seed: Option<u64>) -> Weights {
    if seed.is_none() {
        let w = Weights::default_subtorus(n);
        if open_weights_ok(&w) {
            return w;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    loop {
        let w = Weights::random_subtorus(n, &mut rng);
        if open_weights_ok(&w) {
            return w;
        }
    }
}

/// Π_k (a_k d)!! / (d!!)^n
fn disk_ratio(m: &ModelSpec, d: usize) -> Q {
    let num = m.a.iter().fold(num_bigint::BigInt::one(), |acc, &k| acc * double_factorial((k as usize * d) as i64));
    let den = num_traits::pow(double_factorial(d as i64), m.n);
    Q::new(num, den)
}

fn coeffs_of(s: &Series<Laurent>, e: i64) -> Result<Series<Q>> {
    let c = s.coeffs().iter().map(|l| l.coeff(e)).collect::<Result<Vec<_>>>()?;
    Ok(Series::new(c))
}

/// Laurent expansions at ħ = 0, with exclusive precision `hi`.
fn at_zero(s: &Series<SplitFrac>, hi: i64) -> Result<Series<Laurent>> {
    let c = s
        .coeffs()
        .iter()
        .map(|f| {
            let m = f.poles().find(|(p, _)| Zero::is_zero(*p)).map(|(_, m)| *m as i64).unwrap_or(0);
            Ok(Laurent::new(-m, f.laurent_at(&Q::zero(), -m, hi - 1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Series::new(c))
}

/// e^{-ξ(q)/ħ} as a q-series of Laurent polynomials in ħ.
fn exp_over_h(xi: &Series<Q>, hi: i64) -> Result<Series<Laurent>> {
    xi.map(|c| Laurent::monomial(-c.clone(), -1, hi)).exp()
}

/// log(1 + g) for g without constant term.
fn log1p<R: Ring>(g: &Series<R>) -> Series<R> {
    let mut acc = g.clone();
    let mut pow = g.clone();
    for k in 2..=g.order() {
        pow = pow.mul(g);
        let t = pow.scale(&Q::new(if k % 2 == 0 { -1 } else { 1 }.into(), (k as i64).into()));
        acc = acc.add(&t);
    }
    acc
}

fn first_mismatch(a: &Series<Q>, b: &Series<Q>) -> Option<usize> {
    let n = a.order().min(b.order());
    (0..=n).find(|&k| a.coeff(k) != b.coeff(k))
}

fn expect_equal(a: &Series<Q>, b: &Series<Q>, what: &str) -> Result<()> {
    match first_mismatch(a, b) {
        None => Ok(()),
        Some(k) => Err(Error::Check(format!("{what} at degree {k}: {} vs {}", a.coeff(k), b.coeff(k)))),
    }
}

fn join(s: &Series<Q>) -> String {
    s.coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

impl OpenModel {
    pub fn new(m: &ModelSpec, w: &Weights, order: usize) -> Result<Self> {
        if !m.is_cy() || m.n != m.l() + 4 {
            return Err(Error::Invalid(format!("{} is not a Calabi-Yau threefold complete intersection", m.spec_string())));
        }
        if !w.is_subtorus() || w.n() != m.n {
            return Err(Error::Invalid("open invariants need subtorus weights".into()));
        }
        if !open_weights_ok(w) {
            return Err(Error::Degenerate("a ratio of weights is a quotient of odd integers".into()));
        }
        let eq = Equivariant::new(m, w, order)?;
        Ok(OpenModel {
            model: m.clone(),
            weights: w.clone(),
            order,
            eq,
            all_odd: m.a.iter().all(|k| k % 2 == 1),
            is: i_series(m, m.n - 1, order + 1)?,
            j: j_series(m, order + 1)?,
            q_of_big_q: invert_mirror(m, order + 1)?,
        })
    }

    /// Builds the model with [`open_weights`].
    pub fn with_seed(m: &ModelSpec, order: usize, seed: Option<u64>) -> Result<Self> {
        OpenModel::new(m, &open_weights(m.n, seed), order)
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

    pub fn all_odd(&self) -> bool {
        self.all_odd
    }

    fn alpha(&self, i: usize) -> &Q {
        &self.weights.alphas()[i]
    }

    /// Indices of the nonzero weights.
    fn points(&self) -> std::ops::Range<usize> {
        0..2 * (self.model.n / 2)
    }

    fn bar(&self, i: usize) -> usize {
        i ^ 1
    }

    fn tr(&self, s: &Series<Q>) -> Series<Q> {
        s.truncate(self.order)
    }

    /// Contribution of the degree γ half-edge disk at the fixed point i.
    pub fn disk_factor(&self, i: usize, gamma: usize) -> Result<Q> {
        self.check_disk_args(i, gamma)?;
        if !self.all_odd {
            return Ok(Q::zero());
        }
        let m = &self.model;
        let x = self.alpha(i);
        let g = q(gamma as i64);
        let mut den = g.clone();
        for (k, ak) in self.weights.alphas().iter().enumerate() {
            for s in (1..=gamma).step_by(2) {
                if k == i && s == gamma {
                    continue;
                }
                den *= q(s as i64) / &g * x - ak;
            }
        }
        if Zero::is_zero(&den) {
            return Err(Error::Degenerate(format!("disk factor at point {} and degree {gamma}", i + 1)));
        }
        let e = (m.n * gamma + m.l() + 2) / 2;
        let num = m.a.iter().fold(num_bigint::BigInt::one(), |acc, &k| acc * double_factorial((k as usize * gamma) as i64));
        Ok(q(2) * qbig(num) / den * qpow(&(x / &g), e as i64))
    }

    /// The same contribution through its signed product form.
    pub fn disk_factor_signed(&self, i: usize, gamma: usize) -> Result<Q> {
        self.check_disk_args(i, gamma)?;
        if !self.all_odd {
            return Ok(Q::zero());
        }
        let m = &self.model;
        let (n, l) = (m.n, m.l());
        let x = self.alpha(i);
        let g = q(gamma as i64);
        let bar = self.bar(i);
        let mut den = qbig(num_traits::pow(num_bigint::BigInt::from(2), gamma - 1) * factorial(gamma as u64));
        den *= qpow(&g, (((n - 2) * gamma + l + 4) / 2) as i64);
        for (k, ak) in self.weights.alphas().iter().enumerate() {
            if k == i || k == bar {
                continue;
            }
            for s in 0..=(gamma - 1) / 2 {
                den *= q((gamma - 2 * s) as i64) / &g * x - ak;
            }
        }
        if Zero::is_zero(&den) {
            return Err(Error::Degenerate(format!("disk factor at point {} and degree {gamma}", i + 1)));
        }
        let num = m.a.iter().fold(num_bigint::BigInt::one(), |acc, &k| acc * double_factorial((k as usize * gamma) as i64));
        let sign = if (gamma - 1) / 2 % 2 == 0 { Q::one() } else { -Q::one() };
        Ok(sign * qbig(num) / den * qpow(x, (((n - 2) * gamma + l + 2) / 2) as i64))
    }

    fn check_disk_args(&self, i: usize, gamma: usize) -> Result<()> {
        if i >= self.points().end {
            return Err(Error::Invalid(format!("point {} carries weight zero", i + 1)));
        }
        if gamma % 2 == 0 {
            return Err(Error::Invalid(format!("disk degree {gamma} is even")));
        }
        Ok(())
    }

    /// Both forms of the disk factor agree for γ ≤ `gamma_max`.
    pub fn check_disk_factor_forms(&self, gamma_max: usize) -> Result<usize> {
        let mut count = 0;
        for i in self.points() {
            for g in (1..=gamma_max).step_by(2) {
                let (a, b) = (self.disk_factor(i, g)?, self.disk_factor_signed(i, g)?);
                if a != b {
                    return Err(Error::Check(format!("disk factor forms differ at point {}, degree {g}: {a} vs {b}", i + 1)));
                }
                count += 1;
            }
        }
        Ok(count)
    }

    fn h_at(&self, i: usize, gamma: usize) -> Q {
        q(2) * self.alpha(i) / q(gamma as i64)
    }

    /// Σ_{i,γ} ħ^{-b} (D_{i,γ}/α_i^l) q^{(γ-1)/2} S(α_i, ħ, q) at ħ = 2α_i/γ for the
    /// family member selected by `pick`, as a series in q standing for q^{1/2}·(...).
    fn weighted_disk_sum<F>(&self, b: i64, mut pick: F) -> Result<Series<Q>>
    where
        F: FnMut(&Q, &Q) -> Result<Series<Q>>,
    {
        let l = self.model.l() as i64;
        let mut acc = Series::zero(&Q::zero(), self.order);
        for i in self.points() {
            let x = self.alpha(i);
            for g in (1..=2 * self.order + 1).step_by(2) {
                let dfac = self.disk_factor(i, g)?;
                if Zero::is_zero(&dfac) {
                    continue;
                }
                let h = self.h_at(i, g);
                let c = dfac / qpow(x, l) * qpow(&h, -b);
                let s = pick(x, &h)?;
                acc = acc.add(&s.scale(&c).shift((g - 1) / 2));
            }
        }
        Ok(acc)
    }

    /// Disk sum of the fixed-point route, in q, before the mirror map.
    pub fn disk_graph_sum_q(&self) -> Result<Series<Q>> {
        self.weighted_disk_sum(0, |x, h| Ok(self.eq.derivatives(x, h, 0)?.swap_remove(0)))
    }

    /// (2/I_0) Σ_{d odd} q^{(d-1)/2} Π(a_k d)!!/(d!!)^n, zero unless every a_k is odd.
    pub fn disk_closed_q(&self) -> Result<Series<Q>> {
        if !self.all_odd {
            return Ok(Series::zero(&Q::zero(), self.order));
        }
        let s = Series::from_fn(self.order, |k| disk_ratio(&self.model, 2 * k + 1));
        Ok(s.mul(&self.tr(&self.is[0]).inv_unit()?).scale(&q(2)))
    }

    /// Converts q^{1/2} G(q) into Q^{1/2} G̃(Q) and returns G̃.
    fn half_to_mirror(&self, g: &Series<Q>) -> Result<Series<Q>> {
        let e = self.tr(&self.j).scale(&Q::new((-1).into(), 2.into())).exp()?;
        g.mul(&e).compose(&self.tr(&self.q_of_big_q))
    }

    /// Z_disk(Q) as a half-graded series: coefficient k belongs to Q^{k/2}.
    pub fn disk_potential(&self, graph_sum: bool) -> Result<Series<Q>> {
        let g = if graph_sum { self.disk_graph_sum_q()? } else { self.disk_closed_q()? };
        let gq = self.half_to_mirror(&g)?;
        let mut c = vec![Q::zero(); 2 * self.order + 2];
        for k in 0..=self.order {
            c[2 * k + 1] = gq.coeff(k).clone();
        }
        Ok(Series::new(c).half_graded())
    }

    /// Fixed-point sum of the disk factors against ħ^{-b} times the p-th
    /// derivative (or family member when `full`), and its predicted value.
    pub fn lemma_sums(&self, b: i64, p: i64, full: bool) -> Result<(Series<Q>, Series<Q>)> {
        let (n, l) = (self.model.n as i64, self.model.l() as i64);
        if p < -l || p > n - 1 {
            return Err(Error::Invalid(format!("no family member {p}")));
        }
        let lhs = self.weighted_disk_sum(b, |x, h| {
            if p < 0 || full {
                Ok(self.eq.family(x, h, p.max(0) as usize)?.swap_remove((p + l) as usize))
            } else {
                Ok(self.eq.derivatives(x, h, p as usize)?.swap_remove(p as usize))
            }
        })?;
        let rhs = if p < b || !self.all_odd {
            Series::zero(&Q::zero(), self.order)
        } else {
            let s = Series::from_fn(self.order, |k| {
                let d = 2 * k as i64 + 1;
                qpow(&q(d), p) * disk_ratio(&self.model, d as usize)
            });
            let ip = if p < 0 { Series::one(self.order) } else { self.tr(&self.is[p as usize]) };
            s.mul(&ip.inv_unit()?).scale(&qpow(&q(2), 1 - b))
        };
        Ok((lhs, rhs))
    }

    /// The vanishing and evaluation statements for the disk-weighted sums of
    /// the derivatives, and their extension to the full family members.
    pub fn check_disk_lemmas(&self) -> Result<usize> {
        let l = self.model.l() as i64;
        let top = self.model.n as i64 - 1;
        let mut count = 0;
        for b in -l..=l + 2 {
            for p in -l..=(b + 1).min(top) {
                if b - p > l + 2 {
                    continue;
                }
                let lemma = p <= b.min(0);
                let (lhs, rhs) = self.lemma_sums(b, p, false)?;
                if lemma || p < b {
                    expect_equal(&lhs, &rhs, &format!("disk-weighted derivative sum (b, p) = ({b}, {p})"))?;
                    count += 1;
                }
                if b <= l + 2 {
                    let (full, _) = self.lemma_sums(b, p, true)?;
                    expect_equal(&full, &lhs, &format!("disk-weighted member sum (b, p) = ({b}, {p})"))?;
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// Σ_d Q^d A_{2d} from the fixed-point sum over pairs of disks.
    pub fn annulus_graph_sum(&self) -> Result<Series<Q>> {
        let (n, l) = (self.model.n, self.model.l());
        let ord = self.order;
        let max_g = 2 * ord - 1;
        let lq = l as i64;
        let mut fam_q: Vec<Vec<Option<Vec<Series<Q>>>>> = vec![];
        let mut fam_x: Vec<Vec<Series<SplitFrac>>> = vec![];
        let hx = SplitFrac::x();
        for i in self.points() {
            let mut row = vec![None; max_g + 1];
            for g in (1..=max_g).step_by(2) {
                row[g] = Some(self.eq.family(self.alpha(i), &self.h_at(i, g), n - 1)?);
            }
            fam_q.push(row);
            fam_x.push(self.eq.family(self.alpha(i), &hx, n - 1)?);
        }
        let mut acc = Series::zero(&Q::zero(), ord);
        for i in self.points() {
            for j in self.points() {
                for g in (1..=max_g).step_by(2) {
                    for dl in (1..=max_g).step_by(2) {
                        let shift = (g + dl) / 2;
                        if shift > ord {
                            continue;
                        }
                        let (di, dj) = (self.disk_factor(i, g)?, self.disk_factor(j, dl)?);
                        if Zero::is_zero(&di) || Zero::is_zero(&dj) {
                            continue;
                        }
                        let (h1, h2) = (self.h_at(i, g), self.h_at(j, dl));
                        let a = fam_q[i][g].as_ref().unwrap();
                        let sum = &h1 + &h2;
                        let pair = if !Zero::is_zero(&sum) {
                            let b = fam_q[j][dl].as_ref().unwrap();
                            self.eq.pair_sum(a, b, l)?.scale(&sum.recip())
                        } else {
                            let lifted: Vec<Series<SplitFrac>> =
                                a.iter().map(|s| s.map(|c| SplitFrac::constant(c.clone()))).collect();
                            let p = self.eq.pair_sum(&lifted, &fam_x[j], l)?;
                            let lin = Poly::linear(-h2.clone(), Q::one());
                            let c = p
                                .coeffs()
                                .iter()
                                .map(|f| {
                                    let num = f.num().div_exact(&lin).map_err(|_| {
                                        Error::Check(format!(
                                            "two-point series at points {}, {} not divisible by ħ1 + ħ2",
                                            i + 1,
                                            j + 1
                                        ))
                                    })?;
                                    RatFunc::new(num, f.den())?.eval(&h2)
                                })
                                .collect::<Result<Vec<_>>>()?;
                            Series::new(c)
                        };
                        let c = -(di * dj) / (q(2) * self.model.prod() * qpow(self.alpha(i), lq) * qpow(self.alpha(j), lq) * &h1 * &h2);
                        acc = acc.add(&pair.scale(&c).shift(shift));
                    }
                }
            }
        }
        acc.compose(&self.tr(&self.q_of_big_q))
    }

    /// Σ_d Q^d A_{2d} from Q d/dQ [Σ Q^d A_{2d}] = -(1/2⟨a⟩)(I_1/I_2)[(Q d/dQ)^2 Z_disk]^2.
    pub fn annulus_mirror(&self) -> Result<Series<Q>> {
        let ord = self.order;
        let g = self.half_to_mirror(&self.disk_closed_q()?)?;
        // (Q d/dQ)^2 (Q^{1/2} G) = Q^{1/2} (G/4 + θG + θ^2 G)
        let h = g.scale(&Q::new(1.into(), 4.into())).add(&g.d()).add(&g.d().d());
        let ratio = self.tr(&self.is[1]).mul(&self.tr(&self.is[2]).inv_unit()?).compose(&self.tr(&self.q_of_big_q))?;
        let rhs = ratio.mul(&h.mul(&h)).shift(1).scale(&-(q(2) * self.model.prod()).recip());
        Ok(Series::from_fn(ord, |d| if d == 0 { Q::zero() } else { rhs.coeff(d) / q(d as i64) }))
    }

    /// -Q d/dQ ln((1 - a^a q)^{1/4} I_1(q)) under the mirror map.
    pub fn klein_mirror(&self) -> Result<Series<Q>> {
        let ord = self.order;
        let i1 = self.tr(&self.is[1]);
        let aq = Series::var(&Q::zero(), ord).scale(&self.model.self_pow());
        let one = Series::one(ord);
        let dlog = aq
            .mul(&one.sub(&aq).inv_unit()?)
            .scale(&Q::new((-1).into(), 4.into()))
            .add(&i1.d().mul(&i1.inv_unit()?));
        dlog.mul(&i1.inv_unit()?).neg().compose(&self.tr(&self.q_of_big_q))
    }

    fn algebraic_at(&self, i: usize) -> Result<Algebraic> {
        algebraic(&self.model, self.weights.alphas(), self.alpha(i), self.order)
    }

    fn precision(&self) -> i64 {
        3 * self.order as i64 + 4
    }

    /// e^{-ξ(α_i, q)/ħ} times each family member, expanded at ħ = 0.
    fn twisted_family(&self, i: usize, alg: &Algebraic) -> Result<Vec<Series<Laurent>>> {
        let hi = self.precision();
        let e = exp_over_h(&alg.xi, hi)?;
        let fam = self.eq.family(self.alpha(i), &SplitFrac::x(), self.model.n - 1)?;
        fam.iter().map(|s| Ok(e.mul(&at_zero(s, hi)?))).collect()
    }

    /// ⟨a⟩ Σ (-1)^r σ_r Σ_k (-1)^k [ħ^{s1+k}]A_{p1} [ħ^{s2-k}]B_{p2-l}: the iterated
    /// residue at ħ_1 = ħ_2 = 0 of A(ħ_1)B(ħ_2) ħ_1^{-s1-1} ħ_2^{-s2-1} / (ħ_1 + ħ_2), inner one in ħ_2.
    fn double_residue(&self, a: &[Series<Laurent>], b: &[Series<Laurent>], s1: i64, s2: i64) -> Result<Series<Q>> {
        let n = self.model.n;
        let l = self.model.l();
        let sigma = self.weights.sigma();
        let lowest = b
            .iter()
            .flat_map(|s| s.coeffs().iter().filter_map(|c| c.valuation()))
            .min()
            .unwrap_or(0);
        let mut acc = Series::zero(&Q::zero(), self.order);
        for p1 in 0..n {
            for r in 0..(n - p1) {
                let p2 = n - 1 - p1 - r;
                if Zero::is_zero(&sigma[r]) {
                    continue;
                }
                let sr = if r % 2 == 1 { -sigma[r].clone() } else { sigma[r].clone() };
                let mut k = 0i64;
                while s2 - k >= lowest {
                    let x = coeffs_of(&a[p1 + l], s1 + k)?;
                    let y = coeffs_of(&b[p2], s2 - k)?;
                    let t = x.mul(&y).scale(&sr);
                    acc = if k % 2 == 0 { acc.add(&t) } else { acc.sub(&t) };
                    k += 1;
                }
            }
        }
        Ok(acc.scale(&self.model.prod()))
    }

    fn sigma_top_minus_one(&self, i: usize) -> Q {
        let x = self.alpha(i);
        self.weights
            .alphas()
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .fold(Q::one(), |acc, (_, a)| acc * (x - a))
    }

    /// Σ_d Q^d K̃_{2d} from the fixed-point sum in collapsed form.
    pub fn klein_collapsed(&self) -> Result<Series<Q>> {
        let l = self.model.l();
        let ord = self.order;
        let mut acc = Series::zero(&Q::zero(), ord);
        for i in self.points() {
            let ib = self.bar(i);
            let (ai, ab) = (self.algebraic_at(i)?, self.algebraic_at(ib)?);
            let (fi, fb) = (self.twisted_family(i, &ai)?, self.twisted_family(ib, &ab)?);
            let r1 = coeffs_of(&fi[l + 1], 0)?;
            let r2 = self.double_residue(&fi, &fb, 1, 0)?;
            let x = self.alpha(i);
            let pre = self.tr(&self.is[0]).mul(&ai.phi0.inv_unit()?);
            let c = (qpow(x, 2 * l as i64) * self.sigma_top_minus_one(i)).recip();
            acc = acc.add(&pre.mul(&r1).mul(&r2).scale(&c));
        }
        let sign = if l % 2 == 1 { Q::one() } else { -Q::one() };
        acc.scale(&(sign / self.model.prod())).compose(&self.tr(&self.q_of_big_q))
    }

    /// Σ_d Q^d K̃_{2d} from the uncollapsed fixed-point sum over the number B
    /// of extra nodes; B ≤ order suffices since each extra factor is O(Q).
    pub fn klein_raw(&self) -> Result<Series<Q>> {
        let (n, l) = (self.model.n, self.model.l());
        let ord = self.order;
        let hi = self.precision();
        let hx = SplitFrac::x();
        let fact = |k: usize| qbig(factorial(k as u64));
        let mut acc = Series::zero(&Q::zero(), ord);
        for i in self.points() {
            let ib = self.bar(i);
            let zi = self.eq.z_family(self.alpha(i), &hx, n - 1)?;
            let zb = self.eq.z_family(self.alpha(ib), &hx, n - 1)?;
            let zi: Vec<Series<Laurent>> = zi.iter().map(|s| at_zero(s, hi)).collect::<Result<_>>()?;
            let zb: Vec<Series<Laurent>> = zb.iter().map(|s| at_zero(s, hi)).collect::<Result<_>>()?;
            let zstar = at_zero(&self.eq.z_plain(self.alpha(i), &hx)?, hi)?;
            let sgn = |k: usize| if k % 2 == 0 { Q::one() } else { -Q::one() };
            let t = |p1: usize, p2: usize| -> Result<Series<Q>> {
                let s = self.double_residue(&zi, &zb, p1 as i64 + 1, p2 as i64)?;
                Ok(s.scale(&(sgn(p1) / (fact(p1) * fact(p2)))))
            };
            let bfac = |p3: usize| -> Result<Series<Q>> {
                Ok(coeffs_of(&zi[l + 1], p3 as i64)?.scale(&(sgn(p3) / fact(p3))))
            };
            let cfac: Vec<Series<Q>> = (0..=ord)
                .map(|p| {
                    let mut s = coeffs_of(&zstar, p as i64 - 1)?;
                    if p == 1 {
                        s.set(0, s.coeff(0) - Q::one());
                    }
                    Ok(s.scale(&(sgn(p) / fact(p))))
                })
                .collect::<Result<_>>()?;
            if let Some(c) = cfac.iter().find(|c| !Zero::is_zero(c.coeff(0))) {
                return Err(Error::Check(format!("extra node factor has constant term {}", c.coeff(0))));
            }
            // conv[s] = Σ_{p_4 + ... + p_{B+3} = s} Π cfac[p_b], updated with B
            let zero = Series::zero(&Q::zero(), ord);
            let mut conv: Vec<Series<Q>> = (0..=ord).map(|s| if s == 0 { Series::one(ord) } else { zero.clone() }).collect();
            let mut local = zero.clone();
            for big_b in 0..=ord {
                if big_b > 0 {
                    conv = (0..=ord)
                        .map(|s| {
                            (0..=s).fold(zero.clone(), |a, k| a.add(&conv[s - k].mul(&cfac[k])))
                        })
                        .collect();
                }
                for p1 in 0..=big_b {
                    for p2 in 0..=(big_b - p1) {
                        let tp = t(p1, p2)?;
                        for p3 in 0..=(big_b - p1 - p2) {
                            let rest = big_b - p1 - p2 - p3;
                            local = local.add(&tp.mul(&bfac(p3)?).mul(&conv[rest]));
                        }
                    }
                }
            }
            let c = (qpow(self.alpha(i), 2 * l as i64) * self.sigma_top_minus_one(i)).recip();
            acc = acc.add(&local.scale(&c));
        }
        let sign = if l % 2 == 1 { Q::one() } else { -Q::one() };
        Ok(acc.scale(&(sign / self.model.prod())))
    }

    /// The regular parts of e^{-ξ/ħ} times the family members at ħ = 0 in
    /// terms of L, Φ_0, Φ_1, the normalizing series and the structure coefficients.
    pub fn check_twisted_residues(&self) -> Result<usize> {
        let (n, l) = (self.model.n as i64, self.model.l() as i64);
        let ord = self.order;
        let st = self.eq.structure();
        let is: Vec<Series<Q>> = self.is.iter().map(|s| self.tr(s)).collect();
        let iinv: Vec<Series<Q>> = is.iter().map(|s| s.inv_unit()).collect::<Result<_>>()?;
        let dlog_i: Vec<Series<Q>> = is.iter().zip(&iinv).map(|(s, v)| s.d().mul(v)).collect();
        let prod_inv = |top: i64| -> Series<Q> {
            (0..=top).fold(Series::one(ord), |acc, s| acc.mul(&iinv[s as usize]))
        };
        let ct = |p: i64, s: i64, r: i64| -> Result<Series<Q>> {
            if p < 0 || s < 0 {
                let v = if p == s && r == 0 { Q::one() } else { Q::zero() };
                return Ok(Series::constant(v, ord));
            }
            Ok(self.tr(&st.ctilde_at_one(p as usize, s as usize, r as usize)?))
        };
        let mut count = 0;
        for i in self.points() {
            let x = self.alpha(i);
            let alg = self.algebraic_at(i)?;
            let hi = self.precision();
            let e = exp_over_h(&alg.xi, hi)?;
            let fam = self.twisted_family(i, &alg)?;
            let plain = e.mul(&at_zero(&self.eq.y(x, &SplitFrac::x())?, hi)?);
            let phi0 = coeffs_of(&plain, 0)?;
            expect_equal(&phi0, &alg.phi0, &format!("Φ_0 at point {}", i + 1))?;
            let phi1 = coeffs_of(&plain, 1)?;
            let lser = &alg.l_series;
            let linv = lser.inv()?;
            let lpow = |k: i64| -> Result<Series<Q>> {
                let base = if k >= 0 { lser.clone() } else { linv.clone() };
                base.pow(&q(k.abs()))
            };
            let phi0_inv = alg.phi0.inv_unit()?;
            let dphi = alg.phi0.d().mul(&phi0_inv);
            let dl = lser.d().mul(&linv);
            let a_of = |p: i64| -> Series<Q> {
                let mut s = dphi.scale(&q(p)).add(&dl.scale(&Q::new((p * (p - 1)).into(), 2.into())));
                for k in 0..=p {
                    s = s.sub(&dlog_i[k as usize].scale(&q(p - k)));
                }
                s.mul(&linv)
            };
            let xl = qpow(x, l);
            for p in -l..n {
                let lead = alg.phi0.mul(&lpow(p)?).scale(&xl);
                let mut r0 = Series::zero(&Q::zero(), ord);
                let mut r1 = Series::zero(&Q::zero(), ord);
                for r in 0..=p.abs() {
                    let c = ct(p, p - r, r)?;
                    let base = c.mul(&lpow(-r)?).mul(&prod_inv(p - r));
                    r0 = r0.add(&base);
                    r1 = r1.add(&base.mul(&phi1.mul(&phi0_inv).add(&a_of(p - r))));
                }
                for r in 2..p {
                    let c = ct(p, p - r - 1, r)?;
                    r1 = r1.add(&c.mul(&lpow(-(r + 1))?).mul(&prod_inv(p - r - 1)));
                }
                let member = &fam[(p + l) as usize];
                expect_equal(&coeffs_of(member, 0)?, &lead.mul(&r0), &format!("regular part of member {p} at point {}", i + 1))?;
                expect_equal(&coeffs_of(member, 1)?, &lead.mul(&r1), &format!("linear part of member {p} at point {}", i + 1))?;
                count += 2;
            }
        }
        Ok(count)
    }

    /// Edge factor of a degree d cover of the line from P_i to P_j.
    pub fn frak_c_tilde(&self, i: usize, j: usize, d: usize) -> Result<Q> {
        frak_c_tilde(&self.model, &self.weights, i, j, d)
    }

    /// Every identity of the open sector at these weights.
    pub fn suite(&self) -> Vec<Outcome> {
        let tag = format!(
            "{}, weights ({})",
            self.model.spec_string(),
            self.weights.alphas().iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
        );
        let mut out = vec![];
        let mut push = |name: &str, f: &mut dyn FnMut() -> Result<String>| {
            out.push(Outcome::run(format!("{name} [{tag}]"), f));
        };
        push("disk factor forms", &mut || Ok(format!("{} cases", self.check_disk_factor_forms(2 * self.order + 1)?)));
        push("disk potential", &mut || {
            let a = self.disk_potential(true)?;
            let b = self.disk_potential(false)?;
            expect_equal(&a, &b, "fixed-point and closed disk potentials")?;
            Ok(join(&a))
        });
        push("disk-weighted sums", &mut || Ok(format!("{} cases", self.check_disk_lemmas()?)));
        push("annulus", &mut || {
            let a = self.annulus_graph_sum()?;
            let b = self.annulus_mirror()?;
            expect_equal(&a, &b, "fixed-point and mirror annulus series")?;
            Ok(join(&a))
        });
        push("twisted residues", &mut || Ok(format!("{} cases", self.check_twisted_residues()?)));
        push("Klein bottle", &mut || {
            let a = self.klein_collapsed()?;
            let b = self.klein_raw()?;
            expect_equal(&a, &b, "collapsed and uncollapsed Klein bottle sums")?;
            let c = self.klein_mirror()?;
            expect_equal(&a, &c, "fixed-point and mirror Klein bottle series")?;
            Ok(join(&a))
        });
        push("residue recursion at generic weights", &mut || {
            let w = Weights::default_for(&self.model, self.order, 1);
            let eq = Equivariant::new(&self.model, &w, self.order)?;
            Ok(format!("{} cases", check_residue_recursion(&eq, -1..=2)?))
        });
        push("log expansion", &mut || {
            let mut cases = 0;
            for x in [self.alpha(0).clone(), qr(3, 7)] {
                check_log_expansion(&self.model, self.weights.alphas(), &x, self.order + 1)?;
                cases += 1;
            }
            Ok(format!("{cases} points"))
        });
        out
    }
}

/// The edge factor C̃_i^j(d). When n is odd, j is the conjugate of i and d is
/// even, the vanishing factors are cancelled first.
pub fn frak_c_tilde(m: &ModelSpec, w: &Weights, i: usize, j: usize, d: usize) -> Result<Q> {
    let a = w.alphas();
    let n = m.n;
    if i == j || d == 0 {
        return Err(Error::Invalid("edge factor needs distinct points and positive degree".into()));
    }
    let step = (&a[j] - &a[i]) / q(d as i64);
    let mut num = Q::one();
    for &ak in &m.a {
        for r in 1..=(ak as usize * d) {
            num *= q(ak as i64) * &a[i] + q(r as i64) * &step;
        }
    }
    let mut den = q(d as i64);
    for r in 1..=d {
        for (k, ak) in a.iter().enumerate() {
            if r == d && k == j {
                continue;
            }
            den *= &a[i] - ak + q(r as i64) * &step;
        }
    }
    if !Zero::is_zero(&den) {
        return Ok(num / den);
    }
    let conj = w.conjugate(i) == Some(j) && Zero::is_zero(&a[n - 1]);
    if !(n % 2 == 1 && conj && d % 2 == 0) {
        return Err(Error::Degenerate(format!("edge factor from {} to {} in degree {d}", i + 1, j + 1)));
    }
    if m.l() != 1 {
        return Ok(Q::zero());
    }
    let half = d / 2;
    let hq = q(half as i64);
    let (x, xb) = (&a[i], &a[j]);
    let mut num = q(n as i64);
    for r in 1..n * half {
        num *= q(r as i64) * x / &hq;
    }
    for r in 1..=n * half {
        num *= q(r as i64) * xb / &hq;
    }
    let mut den = q(d as i64);
    for r in 1..half {
        for ak in a {
            den *= q(2 * r as i64) / q(d as i64) * x - ak;
        }
    }
    for ak in &a[..n - 1] {
        den *= -ak.clone();
    }
    for r in 1..=half {
        for (k, ak) in a.iter().enumerate() {
            if r == half && k == j {
                continue;
            }
            den *= q(2 * r as i64) / q(d as i64) * xb - ak;
        }
    }
    if Zero::is_zero(&den) {
        return Err(Error::Degenerate(format!("reduced edge factor from {} to {} in degree {d}", i + 1, j + 1)));
    }
    Ok(num / den)
}

/// Res_{ħ=c} ħ^{-p} Z(α_i, ħ, Q) equals Σ c^{-p} C̃_i^j(d) Q^d Z(α_j, c, Q)
/// over all (j, d) with (α_j - α_i)/d = c.
pub fn check_residue_recursion(eq: &Equivariant, p_range: std::ops::RangeInclusive<i64>) -> Result<usize> {
    let m = eq.model();
    let w = eq.weights();
    let a = w.alphas();
    let n = m.n;
    let ord = eq.order();
    let hx = SplitFrac::x();
    let z: Vec<Series<SplitFrac>> = (0..n).map(|i| eq.z_plain(&a[i], &hx)).collect::<Result<_>>()?;
    let mut count = 0;
    for i in 0..n {
        let mut groups: Vec<(Q, Vec<(usize, usize)>)> = vec![];
        for j in 0..n {
            if j == i {
                continue;
            }
            for d in 1..=ord {
                let c = (&a[j] - &a[i]) / q(d as i64);
                match groups.iter_mut().find(|(k, _)| *k == c) {
                    Some((_, v)) => v.push((j, d)),
                    None => groups.push((c, vec![(j, d)])),
                }
            }
        }
        for (c, members) in &groups {
            for p in p_range.clone() {
                for deg in 0..=ord {
                    let f = z[i].coeff(deg);
                    let shifted = if p >= 0 {
                        f.div(&hx.pow_u(p as usize))?
                    } else {
                        f.mul(&hx.pow_u((-p) as usize))
                    };
                    let lhs = shifted.to_ratfunc().residue_at(c);
                    let mut rhs = Q::zero();
                    for &(j, d) in members {
                        if d > deg {
                            continue;
                        }
                        let e = frak_c_tilde(m, w, i, j, d)?;
                        rhs += qpow(c, -p) * e * z[j].coeff(deg - d).eval(c)?;
                    }
                    if lhs != rhs {
                        return Err(Error::Check(format!(
                            "residue at ħ = {c} of ħ^{}·Z at point {}, Q^{deg}: {lhs} vs {rhs}",
                            -p,
                            i + 1
                        )));
                    }
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

/// Outcome of the expansion checks at one point x.
#[derive(Clone, Debug)]
pub struct ExpansionReport {
    pub x: Q,
    /// Lowest power of ħ in each q-coefficient of the logarithm.
    pub lowest_powers: Vec<i64>,
    pub xi: Series<Q>,
    pub phi0: Series<Q>,
}

/// Expands log Ỹ_{-l} and log Ỹ at ħ = 0 to the given q-order, checks that
/// the poles are at most simple, reads off ξ and Φ_0 and compares them with
/// the algebraic series.
pub fn check_log_expansion(m: &ModelSpec, alphas: &[Q], x: &Q, order: usize) -> Result<ExpansionReport> {
    let n = m.n;
    let alg = algebraic(m, alphas, x, order)?;
    let hi = 2 * order as i64 + 3;
    let sigma_x: Q = alphas.iter().fold(Q::one(), |acc, a| acc * (x - a));
    let build = |start: usize| -> Result<Series<Laurent>> {
        let mut num = Poly::one();
        let mut den = Poly::one();
        let mut out = vec![Laurent::constant(Q::one(), hi)];
        for d in 1..=order {
            for &ak in &m.a {
                let ak = ak as usize;
                for r in ak * (d - 1)..ak * d {
                    num = num.mul(&Poly::linear(q(ak as i64) * x, q((r + start) as i64)));
                }
            }
            let shifted = alphas
                .iter()
                .fold(Poly::one(), |acc, a| acc.mul(&Poly::linear(x - a, q(d as i64))));
            den = den.mul(&shifted.sub(&Poly::constant(sigma_x.clone())));
            let f = RatFunc::new(num.clone(), den.clone())?;
            let pole = f.pole_order_at(&Q::zero());
            out.push(Laurent::new(-pole, f.laurent_at(&Q::zero(), -pole, hi - 1)?));
        }
        Ok(Series::new(out))
    };
    let mut report = None;
    for start in [0usize, 1] {
        let y = build(start)?;
        let mut g = y.clone();
        g.set(0, Laurent::constant(Q::zero(), hi));
        let lg = log1p(&g);
        let mut lowest = vec![];
        for d in 1..=order {
            let v = lg.coeff(d).valuation().unwrap_or(0);
            if v < -1 {
                return Err(Error::Check(format!("log has a pole of order {} at ħ = 0 in degree {d}", -v)));
            }
            lowest.push(v);
        }
        let xi = coeffs_of(&lg, -1)?;
        let reg = coeffs_of(&lg, 0)?;
        expect_equal(&xi, &alg.xi, "ξ from the expansion and from L")?;
        if start == 1 {
            let phi0 = reg.exp()?;
            expect_equal(&phi0, &alg.phi0, "Φ_0 from the expansion and the closed form")?;
            report = Some(ExpansionReport { x: x.clone(), lowest_powers: lowest, xi, phi0 });
        }
    }
    let l = &alg.l_series;
    let sig = crate::hypergeom::sigma_at(alphas, l);
    let resid = sig[n]
        .sub(&l.pow(&q(n as i64))?.shift(1).scale(&m.self_pow()))
        .sub(&Series::constant(sigma_x, order));
    if !resid.eval_is_zero() {
        return Err(Error::Check("L does not solve its defining equation".into()));
    }
    if !(Zero::is_zero(alg.xi.coeff(0)) && alg.phi0.coeff(0).is_one()) {
        return Err(Error::Check("ξ and Φ_0 have the wrong constant terms".into()));
    }
    Ok(report.expect("second pass sets the report"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quintic(order: usize) -> OpenModel {
        let m = ModelSpec::cy(&[5]);
        let w = Weights::subtorus(5, &[Q::one(), qr(1, 2)]).unwrap();
        OpenModel::new(&m, &w, order).unwrap()
    }

    #[test]
    fn disk_factor_of_the_quintic() {
        let om = quintic(1);
        assert_eq!(om.disk_factor(0, 1).unwrap(), q(20));
        om.check_disk_factor_forms(7).unwrap();
    }

    #[test]
    fn even_degrees_kill_the_disk() {
        let m = ModelSpec::cy(&[4, 2]);
        let om = OpenModel::with_seed(&m, 1, None).unwrap();
        assert!(!om.all_odd());
        assert!(Zero::is_zero(&om.disk_factor(0, 1).unwrap()));
        assert!(om.disk_potential(true).unwrap().eval_is_zero());
        assert!(om.disk_potential(false).unwrap().eval_is_zero());
    }

    #[test]
    fn weight_ratios() {
        assert!(!open_weights_ok(&Weights::default_subtorus(6)));
        assert!(open_weights_ok(&open_weights(6, None)));
        assert!(open_weights_ok(&Weights::default_subtorus(5)));
    }

    #[test]
    fn edge_factor_in_degree_one() {
        let m = ModelSpec::cy(&[5]);
        let w = Weights::generic(5);
        let a = w.alphas();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let mut num = Q::one();
                for r in 1..=5 {
                    num *= q(5) * &a[i] + q(r) * (&a[j] - &a[i]);
                }
                let den = (0..5).filter(|&k| k != j).fold(Q::one(), |acc, k| acc * (&a[j] - &a[k]));
                assert_eq!(frak_c_tilde(&m, &w, i, j, 1).unwrap(), num / den);
            }
        }
    }

    #[test]
    fn reduced_edge_factor_needs_one_equation() {
        let m = ModelSpec::new(7, vec![3, 3, 1]).unwrap();
        let w = Weights::default_subtorus(7);
        assert!(Zero::is_zero(&frak_c_tilde(&m, &w, 0, 1, 2).unwrap()));
        let m5 = ModelSpec::cy(&[5]);
        let w5 = Weights::default_subtorus(5);
        assert!(!Zero::is_zero(&frak_c_tilde(&m5, &w5, 0, 1, 2).unwrap()));
    }

    #[test]
    fn quintic_low_degree_values() {
        let om = quintic(2);
        let disk = om.disk_potential(false).unwrap();
        assert!(disk.is_half());
        assert!(Zero::is_zero(disk.coeff(0)));
        assert_eq!(*disk.coeff(1), q(30));
        assert_eq!(*om.annulus_mirror().unwrap().coeff(1), qr(-45, 8));
        assert_eq!(*om.klein_mirror().unwrap().coeff(1), qr(45, 4));
    }

    #[test]
    fn quintic_sector_agrees() {
        let om = quintic(2);
        for o in om.suite() {
            assert!(o.passed, "{}", o.line());
        }
    }

    #[test]
    fn residue_recursion_on_the_quintic() {
        let m = ModelSpec::cy(&[5]);
        let eq = Equivariant::new(&m, &Weights::default_for(&m, 2, 1), 2).unwrap();
        assert!(check_residue_recursion(&eq, -1..=2).unwrap() > 0);
    }

    #[test]
    fn log_expansion_of_the_quintic() {
        let m = ModelSpec::cy(&[5]);
        let w = Weights::default_subtorus(5);
        let r = check_log_expansion(&m, w.alphas(), &w.alphas()[0], 4).unwrap();
        assert!(Zero::is_zero(r.xi.coeff(0)));
        assert!(r.phi0.coeff(0).is_one());
        assert!(r.lowest_powers.iter().all(|&v| v >= -1));
        check_log_expansion(&m, w.alphas(), &qr(3, 7), 4).unwrap();
    }
}
