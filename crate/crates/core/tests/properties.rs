use floret::bkcheck::{event_expectation, ExactParams, QSqrt2, Scene, SceneEvent};
use floret::cardy::{cardy_f, halfplane_cross_ratio};
use floret::lattice::{build_domain, FloralArrangement, ShapeSpec};
use floret::loewner::{zipper_extract, HCurve};
use floret::measure::{enumerate_flower, iris_distribution, FlowerLaw, ModelParams};
use floret::pathstats::{box_dimension, dist_metric, frechet, CurvePair};
use floret::rng::replica_stream;
use floret::sampler::{sample_configuration, Configuration};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use std::cmp::Ordering;

fn polyline(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y)| [x, y]), 2..max)
}

fn admissible_s() -> impl Strategy<Value = f64> {
    0.0..(3.0 - 2.0 * 2f64.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frechet_is_a_symmetric_bound(a in polyline(12), b in polyline(12)) {
        let d = frechet(&a, &b);
        prop_assert_eq!(d, frechet(&b, &a));
        prop_assert_eq!(frechet(&a, &a), 0.0);
        let end = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        prop_assert!(d >= end(a[0], b[0]) - 1e-12);
        prop_assert!(d >= end(*a.last().unwrap(), *b.last().unwrap()) - 1e-12);
    }

    #[test]
    fn dist_metric_is_a_pseudometric(a in polyline(10), b in polyline(10), c in polyline(10), w in 0.0..1.0f64) {
        let weights = [w, 1.0 - w];
        let pair = |x: &Vec<[f64; 2]>, y: &Vec<[f64; 2]>| CurvePair {
            first: x.clone(), second: y.clone(), a: [-30.0, 0.0], c: [30.0, 0.0], radius: 4.0,
        };
        let ab = dist_metric(&pair(&a, &b), &weights).unwrap();
        let bc = dist_metric(&pair(&b, &c), &weights).unwrap();
        let ac = dist_metric(&pair(&a, &c), &weights).unwrap();
        prop_assert_eq!(dist_metric(&pair(&a, &a), &weights).unwrap(), 0.0);
        prop_assert!((ab - dist_metric(&pair(&b, &a), &weights).unwrap()).abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn box_counts_ignore_direction(path in polyline(30)) {
        let scales = [0.5, 1.0, 2.0, 4.0];
        let rev: Vec<[f64; 2]> = path.iter().rev().copied().collect();
        if let (Ok(f), Ok(r)) = (box_dimension(&path, &scales), box_dimension(&rev, &scales)) {
            prop_assert_eq!(f.counts, r.counts);
        }
    }

    #[test]
    fn cross_ratio_is_affine_invariant(
        mut xs in prop::collection::vec(-50.0..50.0f64, 4),
        shift in -10.0..10.0f64,
        scale in 0.1..10.0f64,
    ) {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assume!(xs.windows(2).all(|w| w[1] - w[0] > 1e-3));
        let x = halfplane_cross_ratio(xs[0], xs[1], xs[2], xs[3]).unwrap();
        prop_assert!(x > 0.0 && x < 1.0);
        let m = |v: f64| scale * v + shift;
        let y = halfplane_cross_ratio(m(xs[0]), m(xs[1]), m(xs[2]), m(xs[3])).unwrap();
        prop_assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn cardy_formula_is_monotone_and_symmetric(x in 0.001..0.999f64, dx in 1e-3..0.5f64) {
        let f = cardy_f(x).unwrap();
        prop_assert!((f + cardy_f(1.0 - x).unwrap() - 1.0).abs() < 1e-10);
        if x + dx < 1.0 {
            prop_assert!(cardy_f(x + dx).unwrap() > f);
        }
    }

    #[test]
    fn flower_law_is_a_distribution(s in admissible_s()) {
        let params = ModelParams::from_s(s).unwrap();
        let total: f64 = enumerate_flower(&params).iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for petals in 0..64u8 {
            let d = iris_distribution(&params, petals);
            prop_assert!(d.iter().all(|&p| p >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn configurations_round_trip_through_rle(seed in any::<u64>(), s in admissible_s()) {
        let shape = ShapeSpec::new("rectangle").with("width", 1.0).with("height", 1.0).build().unwrap();
        let d = build_domain(shape, 1.0 / 12.0, &FloralArrangement::periodic(3).unwrap()).unwrap();
        let law = FlowerLaw::new(ModelParams::from_s(s).unwrap());
        let cfg = sample_configuration(&d, &law, &mut replica_stream(seed, 0));
        let back = Configuration::from_rle(&d, &cfg.to_rle(&d)).unwrap();
        prop_assert_eq!(back.states, cfg.states);
    }

    #[test]
    fn vertical_slits_have_constant_driving(x0 in -5.0..5.0f64, h in 0.1..5.0f64, n in 2usize..200) {
        let d = zipper_extract(&HCurve::vertical_slit(x0, h, n).unwrap()).unwrap();
        prop_assert!(d.lambda.iter().all(|l| (l - x0).abs() < 1e-8));
        prop_assert!((d.final_time() - h * h / 4.0).abs() < 1e-8);
    }

    #[test]
    fn exact_signs_agree_with_floats(p in -1000i64..1000, q in 1i64..1000, r in -1000i64..1000, t in 1i64..1000) {
        let v = QSqrt2 {
            rat: BigRational::new(BigInt::from(p), BigInt::from(q)),
            irr: BigRational::new(BigInt::from(r), BigInt::from(t)),
        };
        let f = v.to_f64();
        if f.abs() > 1e-9 {
            prop_assert_eq!(v.signum(), if f > 0.0 { Ordering::Greater } else { Ordering::Less });
        }
        prop_assert_eq!((&v - &v).signum(), Ordering::Equal);
        prop_assert!(((&v * &v).to_f64() - f * f).abs() <= 1e-9 * (1.0 + f * f));
    }

    #[test]
    fn path_probabilities_lie_in_the_unit_interval(k in 0i64..=20, from in 1usize..=6, to in 1usize..=6, blue: bool) {
        prop_assume!(from != to);
        let params = ExactParams::from_s(BigRational::new(BigInt::from(k), BigInt::from(120))).unwrap();
        let ev = SceneEvent::path(blue, vec![Scene::petal(from)], vec![Scene::petal(to)]).unwrap();
        let p = event_expectation(&Scene::flower(), &[ev]).unwrap().eval(&params);
        prop_assert!(p.signum() != Ordering::Less);
        prop_assert!((&QSqrt2::int(1) - &p).signum() != Ordering::Less);
    }
}
