use bulkvac::dists::{DiscretePmf, DEFAULT_TOL};
use bulkvac::gf::{arrivals_during, f_series, ETable, SeriesKind, SeriesSet};
use bulkvac::model::{self, ChiMatrix};
use bulkvac::solver::{analytic, roots};
use bulkvac::{ModelSpec, Policy};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = DiscretePmf> {
    prop_oneof![
        (1usize..5).prop_map(DiscretePmf::point),
        (0.3f64..0.95).prop_map(|q| DiscretePmf::geometric(q, DEFAULT_TOL).unwrap()),
        (1usize..4, 0.4f64..0.95).prop_map(|(r, q)| DiscretePmf::negative_binomial(
            r,
            q,
            DEFAULT_TOL
        )
        .unwrap()),
        prop::collection::vec(0.05f64..1.0, 1..5).prop_map(|m| {
            let t: f64 = m.iter().sum();
            DiscretePmf::explicit(1, m.iter().map(|x| x / t).collect()).unwrap()
        }),
    ]
}

fn group() -> impl Strategy<Value = DiscretePmf> {
    prop::collection::vec(0.05f64..1.0, 1..4).prop_map(|m| {
        let t: f64 = m.iter().sum();
        DiscretePmf::explicit(1, m.iter().map(|x| x / t).collect()).unwrap()
    })
}

prop_compose! {
    fn stable_spec()(a in 1usize..4, extra in 0usize..4)
        (a in Just(a), b in Just(a + extra),
         fes in prop::collection::vec(law(), extra + 1),
         sos in prop::collection::vec(law(), a + extra),
         vac in prop::collection::vec(law(), a),
         g in group(), p in 0.0f64..1.0, target in 0.05f64..0.95, single in any::<bool>())
        -> ModelSpec
    {
        let mut spec = ModelSpec {
            a, b, lambda: 0.5, g, p_sos: p, fes, sos, vacation: vac,
            policy: if single { Policy::Single } else { Policy::Multiple },
        };
        spec.lambda = (0.5 * target / model::rho(&spec)).min(0.99);
        spec
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_adds_means_and_keeps_mass(x in law(), y in law()) {
        let z = x.convolve(&y);
        prop_assert!((z.total() - x.total() * y.total()).abs() < 1e-12);
        let direct: f64 = (0..=z.support_end())
            .map(|n| n as f64 * (0..=n).map(|i| x.pmf(i) * y.pmf(n - i)).sum::<f64>())
            .sum();
        prop_assert!((z.mean() - direct).abs() < 1e-9 * direct.max(1.0));
        prop_assert!((z.mean() - x.mean() - y.mean()).abs() < 1e-6 * z.mean());
    }

    #[test]
    fn arrivals_during_satisfy_wald(d in law(), g in group(), lambda in 0.01f64..0.99) {
        let s = arrivals_during(SeriesKind::Fes(1), &d, lambda, &g);
        let mass: f64 = s.coeffs.iter().sum();
        prop_assert!((mass + s.tail_defect - 1.0).abs() < 1e-9);
        let wald = lambda * g.mean() * d.mean();
        prop_assert!((s.mean() - wald).abs() < 1e-7 * wald.max(1.0), "{} vs {}", s.mean(), wald);
    }

    #[test]
    fn rho_equals_characteristic_slope(spec in stable_spec()) {
        let d = analytic::characteristic(&spec).unwrap().d;
        let from_d = 1.0 - d.derivative().eval(1.0) / spec.b as f64;
        prop_assert!((model::rho(&spec) - from_d).abs() < 1e-8);
    }

    #[test]
    fn stable_specs_have_b_minus_one_interior_roots(spec in stable_spec()) {
        let d = analytic::characteristic(&spec).unwrap().d;
        match roots::find_roots(&d, spec.b, roots::DEFAULT_EPS) {
            Ok(rs) => prop_assert_eq!(rs.interior.len(), spec.b - 1),
            // a root grazing the circle is reported, never miscounted
            Err(bulkvac::Error::NearUnitRoot(..)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn chi_reflects_under_complement(p in 0.0f64..=1.0, b in 1usize..15) {
        let x = ChiMatrix::with_complement(1, b, p, 1.0 - p);
        let y = ChiMatrix::with_complement(1, b, 1.0 - p, p);
        for r in 1..=b {
            for j in 0..=r {
                prop_assert_eq!(x.get(r, j), y.get(r, r - j));
            }
            let s: f64 = x.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn f_series_value_and_slope_at_one() {
    let spec = ModelSpec {
        a: 2,
        b: 4,
        lambda: 0.3,
        g: DiscretePmf::explicit(1, vec![0.5, 0.5]).unwrap(),
        p_sos: 0.35,
        fes: vec![DiscretePmf::point(2); 3],
        sos: (1..=4).map(|y| DiscretePmf::point(y)).collect(),
        vacation: vec![DiscretePmf::point(1); 2],
        policy: Policy::Single,
    };
    let chi = spec.chi();
    let series = SeriesSet::new(&spec);
    for i in 1..=3 {
        let r = spec.a + i - 1;
        let f = f_series(i, &spec, &chi, &series, None).unwrap();
        assert!((f.eval(1.0) - (1.0 - chi.get(r, 0))).abs() < 1e-12);
        // E[arrivals during the SOS of a batch of r] = lambda gbar sum_y chi y
        let slope: f64 = (1..=r).map(|y| chi.get(r, y) * 0.3 * 1.5 * y as f64).sum();
        assert!((f.derivative().eval(1.0) - slope).abs() < 1e-12);
    }
    assert!(f_series(0, &spec, &chi, &series, None).is_err());
    assert!(f_series(4, &spec, &chi, &series, None).is_err());
}

#[test]
fn level_passage_probabilities() {
    let g = DiscretePmf::explicit(1, vec![0.2, 0.5, 0.3]).unwrap();
    let e = ETable::new(&g, 12);
    // forward: chance the partial-sum walk from i lands on n
    for i in 0..=12 {
        let mut hit = vec![0.0; 13];
        hit[i] = 1.0;
        for m in i + 1..=12 {
            hit[m] = (1..=3)
                .filter(|k| *k <= m - i)
                .map(|k| hit[m - k] * g.pmf(k))
                .sum();
        }
        for n in i..=12 {
            assert!((e.get(n, i) - hit[n]).abs() < 1e-14, "e[{n}][{i}]");
        }
    }
    // renewal density tends to 1 / gbar
    assert!((e.get(12, 0) - 1.0 / g.mean()).abs() < 1e-3);
}
