use mirrorgw::arith::{elementary_symmetric, fmt_q, parse_q, q, qr, Poly, RatFunc, SplitFrac, Q};
use mirrorgw::closed_gw::bps_from_gw;
use mirrorgw::equivariant::Weights;
use mirrorgw::hypergeom::ModelSpec;
use mirrorgw::series::Series;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_q() -> impl Strategy<Value = Q> {
    (-12i64..=12, 1i64..=7).prop_map(|(a, b)| qr(a, b))
}

fn series(order: usize) -> impl Strategy<Value = Series<Q>> {
    proptest::collection::vec(small_q(), order + 1).prop_map(Series::new)
}

fn unit_series(order: usize) -> impl Strategy<Value = Series<Q>> {
    series(order).prop_map(|mut s| {
        s.set(0, Q::one());
        s
    })
}

fn poly() -> impl Strategy<Value = Poly> {
    proptest::collection::vec(small_q(), 1..6).prop_map(Poly::from_coeffs)
}

/// A split rational function together with its poles.
fn split_frac() -> impl Strategy<Value = SplitFrac> {
    (poly(), proptest::collection::btree_map(-5i64..=5, 1u32..=3, 0..4)).prop_map(|(num, poles)| {
        poles
            .into_iter()
            .fold(SplitFrac::from_poly(num), |acc, (p, m)| acc.mul(&SplitFrac::pole(Q::one(), qr(p, 3), m)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rationals_print_and_parse(x in small_q()) {
        prop_assert_eq!(parse_q(&fmt_q(&x)).unwrap(), x);
    }

    #[test]
    fn unit_inverse(f in unit_series(7)) {
        prop_assert_eq!(f.mul(&f.inv_unit().unwrap()), Series::one(7));
    }

    #[test]
    fn rational_powers_compose(f in unit_series(6)) {
        let root = f.pow(&qr(1, 2)).unwrap();
        prop_assert_eq!(root.mul(&root), f.clone());
        prop_assert_eq!(f.pow(&q(-1)).unwrap(), f.inv_unit().unwrap());
    }

    #[test]
    fn derivation_inverts(f in series(6)) {
        let mut g = f.clone();
        g.set(0, Q::zero());
        prop_assert_eq!(g.d().d_inverse().unwrap(), g);
    }

    #[test]
    fn composition_is_associative(f in series(5), g in series(5), h in series(5)) {
        let mut g = g;
        let mut h = h;
        g.set(0, Q::zero());
        h.set(0, Q::zero());
        prop_assert_eq!(f.compose(&g).unwrap().compose(&h).unwrap(), f.compose(&g.compose(&h).unwrap()).unwrap());
    }

    #[test]
    fn symmetric_functions_expand_the_product(v in proptest::collection::vec(small_q(), 0..6)) {
        // Π (1 + a_i t) = Σ σ_r t^r
        let mut prod = Poly::one();
        for a in &v {
            prod = prod.mul(&Poly::linear(Q::one(), a.clone()));
        }
        let sig = elementary_symmetric(&v);
        for (r, s) in sig.iter().enumerate() {
            prop_assert_eq!(&prod.coeff(r), s);
        }
    }

    #[test]
    fn gcd_divides(a in poly(), b in poly(), c in poly()) {
        prop_assume!(!a.is_zero() && !b.is_zero() && !c.is_zero());
        let (ac, bc) = (a.mul(&c), b.mul(&c));
        let g = ac.gcd(&bc);
        prop_assert!(g.divrem(&c).unwrap().1.is_zero());
        prop_assert!(ac.divrem(&g).unwrap().1.is_zero());
        prop_assert!(bc.divrem(&g).unwrap().1.is_zero());
    }

    #[test]
    fn split_fractions_match_reduced_ones(f in split_frac(), g in split_frac(), x in -40i64..=40) {
        let x = qr(x, 7);
        let (rf, rg) = (f.to_ratfunc(), g.to_ratfunc());
        prop_assert_eq!(f.add(&g).to_ratfunc(), rf.add(&rg));
        prop_assert_eq!(f.mul(&g).to_ratfunc(), rf.mul(&rg));
        if let (Ok(a), Ok(b)) = (f.eval(&x), f.reflect().eval(&-x.clone())) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn principal_parts_match_laurent_expansions(f in split_frac()) {
        let r = f.to_ratfunc();
        for (p, m) in f.poles() {
            prop_assert_eq!(f.principal_part(p), r.laurent_at(p, -(*m as i64), -1).unwrap());
        }
    }

    #[test]
    fn partial_fractions_rebuild_the_function(f in split_frac()) {
        // f minus its principal parts is a polynomial
        let mut rest = f.clone();
        for (p, _) in f.poles() {
            let pp = f.principal_part(p);
            let m = pp.len() as u32;
            for (k, c) in pp.iter().enumerate() {
                rest = rest.sub(&SplitFrac::pole(c.clone(), p.clone(), m - k as u32));
            }
        }
        prop_assert!(rest.is_polynomial());
        prop_assert_eq!(RatFunc::from_poly(rest.num().clone()).residue_at_infinity(), Q::zero());
    }

    #[test]
    fn multiple_cover_inversion(n in proptest::collection::vec(-50i64..=50, 1..12)) {
        // GW_d = Σ_{k | d} n_{d/k} / k
        let len = n.len();
        let gw: Vec<Q> = (1..=len)
            .map(|d| (1..=d).filter(|k| d % k == 0).map(|k| q(n[d / k - 1]) / q(k as i64)).sum())
            .collect();
        prop_assert_eq!(bps_from_gw(&gw), n.iter().map(|&v| q(v)).collect::<Vec<_>>());
    }

    #[test]
    fn subtorus_draws_kill_odd_symmetric_functions(n in 2usize..9, seed in any::<u64>()) {
        let w = Weights::random_subtorus(n, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(w.is_subtorus());
        for (r, s) in w.sigma().iter().enumerate() {
            if r % 2 == 1 {
                prop_assert!(s.is_zero());
            }
        }
    }

    #[test]
    fn model_strings_round_trip(a in proptest::collection::vec(1u32..=5, 0..4), extra in 0usize..4) {
        let n = a.iter().sum::<u32>() as usize + extra + 1;
        let m = ModelSpec::new(n, a).unwrap();
        prop_assert_eq!(ModelSpec::parse(&m.spec_string()).unwrap(), m);
    }
}
