use proptest::prelude::*;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use sumstat::fading::{mixture_to_series, AlphaMuMixtureModel};
use sumstat::specfun::{rel_diff, PrecisionContext, RealHP};
use sumstat::sumcore::*;

fn ctx(d: u32) -> PrecisionContext {
    PrecisionContext::new(d).unwrap()
}

fn rayleigh() -> LaplaceSeriesDescriptor {
    mixture_to_series(&AlphaMuMixtureModel::rayleigh(1.0).unwrap()).unwrap()
}

fn factorial(n: u32) -> Integer {
    Integer::from(Integer::factorial(n))
}

fn power_stream(a: f64) -> LaplaceSeriesDescriptor {
    LaplaceSeriesDescriptor::from_fn(1.0, 1.0, 1.0, move |i, c: &PrecisionContext| {
        Float::with_val(c.bits(), a).pow(i as u32)
    })
    .unwrap()
}

fn exp_stream(a: u32) -> LaplaceSeriesDescriptor {
    LaplaceSeriesDescriptor::from_fn(1.0, 1.0, 1.0, move |i, c: &PrecisionContext| {
        let num = Float::with_val(c.bits(), Integer::from(a).pow(i as u32));
        num / Float::with_val(c.bits(), factorial(i as u32))
    })
    .unwrap()
}

#[test]
fn phi_of_exponential_and_constant_streams() {
    let c = ctx(40);
    let phi = phi_coeffs(&exp_stream(2), 12, &c).unwrap();
    assert!((phi[0].to_f64() - 2.0).abs() < 1e-35);
    assert!(phi[1..].iter().all(|p| p.to_f64().abs() < 1e-35));
    let one = LaplaceSeriesDescriptor::from_fn(1.0, 1.0, 1.0, |i, c: &PrecisionContext| {
        if i == 0 {
            c.one()
        } else {
            c.zero()
        }
    })
    .unwrap();
    assert!(phi_coeffs(&one, 12, &c).unwrap().iter().all(|p| p.is_zero()));
}

#[test]
fn rayleigh_phi_matches_exact_long_division() {
    // λ_i = (-1)^i (2i+1)!/i! are integers, so d/dz log Σ λ_i z^i can be
    // divided out exactly in rationals
    let n = 40;
    let lam: Vec<Rational> = (0..=n + 1)
        .map(|i| {
            let v = Rational::from((factorial(2 * i + 1), factorial(i)));
            if i % 2 == 1 {
                -v
            } else {
                v
            }
        })
        .collect();
    let num: Vec<Rational> = (0..=n).map(|i| Rational::from(&lam[i as usize + 1] * (i + 1))).collect();
    let mut q: Vec<Rational> = Vec::new();
    for h in 0..=n as usize {
        let mut acc = num[h].clone();
        for t in 1..=h {
            acc -= Rational::from(&lam[t] * &q[h - t]);
        }
        q.push(acc / &lam[0]);
    }
    let c = ctx(60);
    let phi = phi_coeffs(&rayleigh(), n as usize, &c).unwrap();
    for (h, (got, want)) in phi.iter().zip(&q).enumerate() {
        let want = Float::with_val(c.bits() + 64, want);
        assert!(rel_diff(got, &want) < 1e-50, "phi_{h}: {}", rel_diff(got, &want));
    }
}

#[test]
fn single_summand_round_trip() {
    let c = ctx(60);
    let d = rayleigh();
    let delta = delta_coeffs(std::slice::from_ref(&d), 80, &c).unwrap();
    let eta = d.eta(81, &c).unwrap();
    for (a, b) in delta.iter().zip(&eta) {
        assert!(rel_diff(a, b) < 1e-50);
    }
    let iid = delta_coeffs_iid(&d, 1, 80, &c).unwrap();
    for (a, b) in iid.iter().zip(&eta) {
        assert!(rel_diff(a, b) < 1e-50);
    }
}

#[test]
fn two_geometric_streams_give_the_cauchy_product() {
    let c = ctx(50);
    let (a, b) = (0.5, -0.3);
    let delta = delta_coeffs(&[power_stream(a), power_stream(b)], 40, &c).unwrap();
    for (i, got) in delta.iter().enumerate() {
        let mut want = Float::new(c.bits() + 64);
        for k in 0..=i {
            let ak = Float::with_val(c.bits() + 64, a).pow(k as u32);
            let bk = Float::with_val(c.bits() + 64, b).pow((i - k) as u32);
            want += ak * bk;
        }
        let err = Float::with_val(c.bits(), got - &want).abs().to_f64();
        assert!(err < 1e-40, "delta_{i}: {err}");
    }
}

#[test]
fn iid_exponential_doubles_the_rate() {
    let c = ctx(40);
    let delta = delta_coeffs_iid(&exp_stream(1), 2, 20, &c).unwrap();
    assert!((delta[2].to_f64() - 2.0).abs() < 1e-30);
    assert!((delta[3].to_f64() - 4.0 / 3.0).abs() < 1e-30);
    for (i, d) in delta.iter().enumerate() {
        let want = Float::with_val(c.bits(), Integer::from(2).pow(i as u32)) / Float::with_val(c.bits(), factorial(i as u32));
        assert!(rel_diff(d, &want) < 1e-35);
    }
}

#[test]
fn iid_path_matches_general_path_for_rayleigh() {
    let c = ctx(60);
    let iid = delta_coeffs_iid(&rayleigh(), 4, 50, &c).unwrap();
    let general = delta_coeffs(&[rayleigh(), rayleigh(), rayleigh(), rayleigh()], 50, &c).unwrap();
    for (a, b) in iid.iter().zip(&general) {
        assert!(rel_diff(a, b) < 1e-50);
    }
}

#[test]
fn rayleigh_density_and_cdf_at_one() {
    let p = [Quantity::Pdf, Quantity::Cdf].map(|q| TruncationPolicy::new(1e-12, 1.0, q));
    let (s, t0) = plan(&[rayleigh()], &p, None).unwrap();
    let e = (-1.0f64).exp();
    assert!((s.sum_density(1.0, t0).unwrap() - 2.0 * e).abs() < 1e-12);
    assert!((s.sum_cdf(1.0, t0).unwrap().value - (1.0 - e)).abs() < 1e-12);
    assert!(s.sum_density(1e-6, t0).unwrap() < 1e-5);
    assert!(s.sum_cdf(1e-6, t0).unwrap().value < 1e-11);
    assert!(matches!(s.sum_cdf(0.0, t0), Err(SumError::Domain(_))));
    assert!(matches!(s.sum_density(-1.0, t0), Err(SumError::Domain(_))));
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn two_rayleigh_density_matches_convolution_quadrature() {
    let s = SumSeries::iid(&rayleigh(), 2, ctx(80)).unwrap();
    let f = |u: f64| 2.0 * u * (-u * u).exp();
    for x in [0.5, 1.0, 2.0] {
        let conv = simpson(|u| f(u) * f(x - u), 0.0, x, 2000);
        let got = s.sum_density(x, 120).unwrap();
        assert!((got - conv).abs() < 1e-10, "x={x}: {got} vs {conv}");
    }
}

#[test]
fn rayleigh_bound_dominates_the_measured_tail() {
    let lo = SumSeries::new(&[rayleigh()], ctx(200)).unwrap();
    let hi = SumSeries::new(&[rayleigh()], ctx(400)).unwrap();
    let tail = (hi.sum_cdf(1.0, 400).unwrap().raw - lo.sum_cdf(1.0, 20).unwrap().raw).abs();
    let bound = lo.truncation_bound(1.0, 20, Quantity::Cdf).unwrap();
    assert!(tail <= bound, "{tail} > {bound}");
    assert!(bound < 1e-15);
    // monotone in x and vanishing in t0
    let mut last = 0.0;
    for k in 1..=40 {
        let b = lo.truncation_bound(0.1 * k as f64, 30, Quantity::Pdf).unwrap();
        assert!(b >= last);
        last = b;
    }
    let mut last = f64::INFINITY;
    for t0 in [5, 10, 20, 40, 80, 160] {
        let b = lo.truncation_bound(2.0, t0, Quantity::Cdf).unwrap();
        assert!(b < last);
        last = b;
    }
    assert!(last < 1e-60);
    assert!(matches!(lo.truncation_bound(1.0, 2, Quantity::Cdf), Err(SumError::Policy(_))));
}

#[test]
fn term_count_matches_brute_force_scan() {
    let s = SumSeries::new(&[rayleigh()], ctx(120)).unwrap();
    let eps = 1e-8;
    let x = 2.0;
    let policy = TruncationPolicy::new(eps, x, Quantity::Cdf);
    let got = select_term_count(&s, &policy).unwrap();
    let terms = s.terms(&s.ctx().real(x), 200, Quantity::Cdf).unwrap();
    let small = |t: usize| terms[t - 5..t].iter().all(|v| v.to_f64().abs() < eps / 10.0);
    let scan = (5..200)
        .find(|&t| s.truncation_bound(x, t, Quantity::Cdf).unwrap() <= eps && small(t))
        .unwrap();
    assert_eq!(got, scan);
    let bound_only = (3..200)
        .find(|&t| s.truncation_bound(x, t, Quantity::Cdf).unwrap() <= eps)
        .unwrap();
    assert_eq!(bound_term_count(&s, &policy).unwrap(), bound_only);
}

#[test]
fn too_wide_domain_is_reported() {
    let s = SumSeries::new(&[rayleigh()], ctx(80)).unwrap();
    let policy = TruncationPolicy::new(1e-10, 9.0, Quantity::Cdf).with_cap(40);
    match select_term_count(&s, &policy) {
        Err(SumError::DomainTooWide { x_max, t_cap, .. }) => {
            assert_eq!(x_max, 9.0);
            assert_eq!(t_cap, 40);
        }
        other => panic!("expected DomainTooWide, got {other:?}"),
    }
    assert!(matches!(
        select_term_count(&s, &TruncationPolicy::new(0.0, 1.0, Quantity::Cdf)),
        Err(SumError::Policy(_))
    ));
}

#[test]
fn growth_diagnostic_cases() {
    let c = ctx(60);
    let r = growth_diagnostic(&rayleigh(), 2.0, 100, &c).unwrap();
    assert!(!r.diverging);
    assert!(r.log10_ratios.windows(2).all(|w| w[1] < w[0]));
    let fast = LaplaceSeriesDescriptor::from_fn(1.0, 1.0, 2.0, |i, c: &PrecisionContext| {
        Float::with_val(c.bits(), 2.0 * i as f64 + 4.0).gamma()
    })
    .unwrap();
    assert!(growth_diagnostic(&fast, 2.0, 100, &c).unwrap().diverging);
    assert!(!growth_diagnostic(&exp_stream(1), 1.0, 100, &c).unwrap().diverging);
    assert!(growth_diagnostic(&exp_stream(1), 1.0, 5, &c).is_err());
}

#[test]
fn construction_rejects_bad_inputs() {
    assert!(matches!(SumSeries::new(&[], ctx(40)), Err(SumError::Empty)));
    assert!(matches!(SumSeries::iid(&rayleigh(), 0, ctx(40)), Err(SumError::Empty)));
    let zero = LaplaceSeriesDescriptor::from_fn(1.0, 1.0, 2.0, |i, c: &PrecisionContext| c.real(i as f64));
    assert!(matches!(zero, Err(SumError::ZeroLeadingCoefficient)));
    let other_theta = power_stream(0.5);
    assert!(matches!(
        SumSeries::new(&[rayleigh(), other_theta], ctx(40)),
        Err(SumError::ThetaMismatch(..))
    ));
    assert!(LaplaceSeriesDescriptor::from_fn(-1.0, 1.0, 2.0, |_, c: &PrecisionContext| c.one()).is_err());
}

fn planned_pair(eps: f64, x: f64) -> (SumSeries, usize) {
    let p = [Quantity::Pdf, Quantity::Cdf].map(|q| TruncationPolicy::new(eps, x, q));
    plan(&[rayleigh(), rayleigh()], &p, None).unwrap()
}

#[test]
fn cdf_shape_on_certified_domain() {
    let eps = 1e-8;
    let (s, t0) = planned_pair(eps, 6.0);
    let mut last = 0.0;
    for k in 1..=60 {
        let x = 0.1 * k as f64;
        let e = s.evaluate(x, t0, eps).unwrap();
        assert!(e.certified, "x = {x}");
        assert!(e.cdf >= last - eps);
        last = e.cdf;
    }
    assert!(s.sum_cdf(1e-4, t0).unwrap().raw.abs() < 1e-14);
    // F(6) = ∫_0^6 f(r) (1 - e^-(6-r)²) dr, about 1 - 1.1e-7
    let conv = simpson(|r| 2.0 * r * (-r * r).exp() * (1.0 - (-(6.0 - r) * (6.0 - r)).exp()), 0.0, 6.0, 4000);
    assert!((last - conv).abs() <= eps, "{last} vs {conv}");
}

#[test]
fn density_is_the_derivative_of_the_cdf() {
    let (s, t0) = planned_pair(1e-12, 4.0);
    for x in [0.4, 1.0, 1.7, 2.5, 3.3] {
        let h = 1e-4 * x;
        let xh = |v: f64| s.ctx().real(v);
        let up = s.sum_cdf_hp(&xh(x + h), t0).unwrap();
        let dn = s.sum_cdf_hp(&xh(x - h), t0).unwrap();
        let fd = (Float::with_val(s.ctx().bits(), &up - &dn) / (2.0 * h)).to_f64();
        let f = s.sum_density(x, t0).unwrap();
        assert!(((fd - f) / f).abs() < 1e-6, "x = {x}: {fd} vs {f}");
    }
}

/// Gamma(k, 1) as a θ = 1 descriptor: (1+s)^(-k) = s^(-k) Σ C(-k, i) s^(-i).
fn gamma_stream(k: f64) -> LaplaceSeriesDescriptor {
    LaplaceSeriesDescriptor::from_fn(1.0, k, 1.0, move |i, c: &PrecisionContext| {
        let mut v = c.one();
        for j in 0..i {
            v *= -(k + j as f64);
            v /= (j + 1) as f64;
        }
        v
    })
    .unwrap()
}

#[test]
fn laplace_transform_of_the_sum_density() {
    // Gamma(1.5) + Gamma(1.5) = Gamma(3); compare ∫ e^(-sx) f dx with
    // (1+s)^-3 over the certified domain
    let members = [gamma_stream(1.5), gamma_stream(1.5)];
    let p = [TruncationPolicy::new(1e-14, 20.0, Quantity::Pdf)];
    let (s, t0) = plan(&members, &p, None).unwrap();
    for sv in [2.0, 5.0, 10.0] {
        let n = 4000;
        let h = 20.0 / n as f64;
        let vals: Vec<f64> = (0..=n)
            .map(|k| {
                let x = h * k as f64;
                if x == 0.0 {
                    0.0
                } else {
                    (-sv * x).exp() * s.sum_density(x, t0).unwrap()
                }
            })
            .collect();
        let lap = simpson(|x| vals[(x / h).round() as usize], 0.0, 20.0, n);
        let want = (1.0 + sv).powi(-3);
        assert!((lap - want).abs() < 1e-6, "s={sv}: {lap} vs {want}");
    }
}

#[test]
fn tables_extend_without_touching_the_prefix() {
    let s = SumSeries::iid(&rayleigh(), 3, ctx(60)).unwrap();
    let first: Vec<RealHP> = s.delta(30).unwrap();
    s.ensure(200).unwrap();
    let again = s.delta(30).unwrap();
    assert_eq!(first, again);
}

#[test]
fn concurrent_evaluation_is_deterministic() {
    let (s, t0) = planned_pair(1e-10, 3.0);
    let xs: Vec<f64> = (1..=24).map(|k| 0.125 * k as f64).collect();
    let seq: Vec<f64> = xs.iter().map(|&x| s.sum_cdf(x, t0).unwrap().raw).collect();
    let par: Vec<f64> = std::thread::scope(|sc| {
        let handles: Vec<_> = xs
            .iter()
            .map(|&x| {
                let s = &s;
                sc.spawn(move || s.sum_cdf(x, t0).unwrap().raw)
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(seq, par);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn looser_epsilon_never_needs_more_terms(exp in 2i32..14, x in 0.2f64..3.0) {
        let s = SumSeries::new(&[rayleigh()], ctx(150)).unwrap();
        let tight = TruncationPolicy::new(10f64.powi(-exp), x, Quantity::Cdf);
        let loose = TruncationPolicy::new(10f64.powi(-exp + 1), x, Quantity::Cdf);
        prop_assert!(select_term_count(&s, &loose).unwrap() <= select_term_count(&s, &tight).unwrap());
    }

    #[test]
    fn wider_domain_never_needs_fewer_terms(exp in 4i32..12, x in 0.2f64..1.5) {
        let s = SumSeries::new(&[rayleigh()], ctx(150)).unwrap();
        let eps = 10f64.powi(-exp);
        let near = TruncationPolicy::new(eps, x, Quantity::Pdf);
        let far = TruncationPolicy::new(eps, 2.0 * x, Quantity::Pdf);
        prop_assert!(bound_term_count(&s, &far).unwrap() >= bound_term_count(&s, &near).unwrap());
    }

    #[test]
    fn iid_equals_general_for_any_count(l in 1usize..=6) {
        let c = ctx(60);
        let iid = delta_coeffs_iid(&rayleigh(), l, 60, &c).unwrap();
        let copies: Vec<_> = (0..l).map(|_| rayleigh()).collect();
        let general = delta_coeffs(&copies, 60, &c).unwrap();
        for (a, b) in iid.iter().zip(&general) {
            prop_assert!(rel_diff(a, b) < 1e-50);
        }
    }

    #[test]
    fn exponential_closure_is_exact(l in 1usize..=5, a in 1u32..=4) {
        let n = 16;
        let eta: Vec<Rational> = (0..=n).map(|i| Rational::from((Integer::from(a).pow(i as u32), factorial(i as u32)))).collect();
        let mut delta = Vec::new();
        extend_delta_iid(&eta, l, &mut delta, n).unwrap();
        for (i, d) in delta.iter().enumerate() {
            let want = Rational::from((Integer::from(l as u32 * a).pow(i as u32), factorial(i as u32)));
            prop_assert_eq!(d, &want);
        }
    }
}
