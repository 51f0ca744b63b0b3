use ellipsoid_cr::classify::{classify, classify_samples, SampleTable};
use ellipsoid_cr::curvature::{curvature_closed, curvature_numeric};
use ellipsoid_cr::frame::levi;
use ellipsoid_cr::maps::{cr_factor, parse_map, MapDescriptor};
use ellipsoid_cr::sample;
use ellipsoid_cr::{Map, Point, Signature};
use proptest::prelude::*;

const SIGNATURES: [&str; 5] = ["n=2", "m=2;n=2,1", "m=2,3;n=2,2,1", "m=2;n=2,0", "m=3,2;n=2,2,2"];

fn sig(i: usize) -> Signature {
    SIGNATURES[i].parse().unwrap()
}

fn distance(a: &Point, b: &Point) -> f64 {
    let scale = a.z.iter().fold(a.t.abs().max(1.0), |acc, x| acc.max(x.norm()));
    a.z.iter().zip(&b.z).fold((a.t - b.t).abs(), |acc, (x, y)| acc.max((x - y).norm())) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn word_then_inverse_is_identity(i in 0..SIGNATURES.len(), seed in any::<u64>()) {
        let s = sig(i);
        let mut rng = sample::rng(seed);
        let f: Map = sample::word(&s, &mut rng, 4);
        let p: Point = sample::point(&s, &mut rng);
        if let Ok(q) = f.apply(&p) {
            let back = f.inverse().apply(&q).unwrap();
            prop_assert!(distance(&p, &back) < 1e-9, "{f}");
        }
    }

    #[test]
    fn factor_cocycle(i in 0..SIGNATURES.len(), seed in any::<u64>()) {
        let s = sig(i);
        let mut rng = sample::rng(seed);
        let f: Map = sample::word(&s, &mut rng, 3);
        let g: Map = sample::word(&s, &mut rng, 3);
        let p: Point = sample::point(&s, &mut rng);
        if let (Ok(q), Ok(lfg)) = (g.apply(&p), cr_factor(&f.compose(&g), &p)) {
            let rhs = cr_factor(&f, &q).unwrap() * cr_factor(&g, &p).unwrap();
            prop_assert!((lfg - rhs).abs() <= 1e-9 * lfg.abs().max(1.0));
        }
    }

    #[test]
    fn levi_inverse_and_curvature_agree(i in 0..SIGNATURES.len(), seed in any::<u64>()) {
        let s = sig(i);
        let mut rng = sample::rng(seed);
        let p: Point = sample::point(&s, &mut rng);
        prop_assert!(levi(&s, &p).unwrap().inverse_defect() < 1e-10);
        let a = curvature_numeric(&s, &p).unwrap();
        let b = curvature_closed(&s, &p).unwrap();
        prop_assert!(a.riem.max_diff(&b.riem) <= 1e-8 * (1.0 + b.riem.max_abs()));
        prop_assert!((a.scalar - b.scalar).abs() <= 1e-8 * (1.0 + b.scalar.abs()));
    }

    #[test]
    fn generator_text_round_trip(i in 0..SIGNATURES.len(), seed in any::<u64>()) {
        let s = sig(i);
        let mut rng = sample::rng(seed);
        let f: Map = sample::word(&s, &mut rng, 4);
        let g: Map = parse_map(&f.to_string(), &s).unwrap();
        let p: Point = sample::point(&s, &mut rng);
        if let Ok(a) = f.apply(&p) {
            prop_assert!(distance(&a, &g.apply(&p).unwrap()) < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn normal_forms_are_recovered(i in 1..SIGNATURES.len(), seed in any::<u64>(), inversion in any::<bool>()) {
        let s = sig(i);
        let mut rng = sample::rng(seed);
        let f = sample::normal_form(&s, &mut rng, inversion);
        let p: Point = sample::point(&s, &mut rng);
        let c = classify(&f, &p, seed).unwrap();
        let rebuilt = c.word(&s);
        for _ in 0..10 {
            let q: Point = sample::point(&s, &mut rng);
            prop_assert!(distance(&f.apply(&q).unwrap(), &rebuilt.apply(&q).unwrap()) < 1e-7);
        }
    }
}

#[test]
fn sample_table_json_round_trip() {
    let s = sig(2);
    let mut rng = sample::rng(11);
    let f: Map = sample::normal_form(&s, &mut rng, true);
    let pts: Vec<Point> = (0..40).map(|_| sample::point(&s, &mut rng)).collect();
    let table = SampleTable::tabulate(&f, &pts).unwrap();
    let text = serde_json::to_string(&table).unwrap();
    let back: SampleTable<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(back.signature, s);
    let c = classify_samples(&back).unwrap();
    assert!(c.residual < 1e-7);
}

#[test]
fn single_precision_evaluates() {
    let s = sig(1);
    let p = ellipsoid_cr::model::SurfacePoint::<f32>::new(
        vec![num_complex::Complex32::new(1.0, 0.0), Default::default(), Default::default()],
        0.0,
    );
    let c = curvature_closed(&s, &p).unwrap();
    assert!((c.scalar + 0.5).abs() < 1e-5);
    let m: MapDescriptor<f32> = parse_map("dil(r=2)", &s).unwrap();
    assert!((cr_factor(&m, &p).unwrap() - 4.0).abs() < 1e-5);
}
