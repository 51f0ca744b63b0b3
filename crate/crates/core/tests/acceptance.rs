//! Acceptance gate: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use ellipsoid_cr::classify::{classify, JKind};
use ellipsoid_cr::cone::{block_routing, cone_preserved, Component, ConeProbe};
use ellipsoid_cr::curvature::{curvature_closed, curvature_numeric, sectional, sectional_closed, CurvatureData};
use ellipsoid_cr::frame::{frame_fields, lie_bracket, lie_bracket_closed, FrameField, TangentVector};
use ellipsoid_cr::lee::{check_chern_invariance, check_cr_function_identities, check_lee, CrAffine};
use ellipsoid_cr::maps::{cr_factor, verify_cr, FnOracle, Generator, MapDescriptor};
use ellipsoid_cr::sample::{self, SampleRng};
use ellipsoid_cr::{Complex, Point, Signature};
use rand::Rng;

const S1: &str = "n=2";
const S2: &str = "m=2;n=2,1";
const S3: &str = "m=2,3;n=2,2,1";
const S4: &str = "m=2;n=2,0";
const POINTS: usize = 100;

struct Worst {
    value: f64,
    tol: f64,
    failures: Vec<String>,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Self { value: 0.0, tol, failures: Vec::new() }
    }

    fn record(&mut self, what: impl FnOnce() -> String, residual: f64) {
        if residual.is_nan() || residual > self.value {
            self.value = residual;
        }
        let ok = residual <= self.tol;
        if !ok && self.failures.len() < 3 {
            self.failures.push(format!("{} = {residual:e}", what()));
        }
    }

    fn fail(&mut self, what: String) {
        self.value = f64::INFINITY;
        if self.failures.len() < 3 {
            self.failures.push(what);
        }
    }

    fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    fn summary(&self, label: &str) -> String {
        format!("{label} {:.2e} <= {:.0e}", self.value, self.tol)
    }
}

struct Outcome {
    parts: Vec<(String, Worst)>,
}

impl Outcome {
    fn new() -> Self {
        Self { parts: Vec::new() }
    }

    fn add(&mut self, label: &str, w: Worst) {
        self.parts.push((label.to_string(), w));
    }

    fn pass(&self) -> bool {
        self.parts.iter().all(|(_, w)| w.pass())
    }

    fn detail(&self) -> String {
        let mut s: Vec<String> = self.parts.iter().map(|(l, w)| w.summary(l)).collect();
        for (l, w) in &self.parts {
            for f in &w.failures {
                s.push(format!("{l}: {f}"));
            }
        }
        s.join("; ")
    }
}

fn sig(text: &str) -> Signature {
    text.parse().expect("reference signature")
}

fn points(s: &Signature, rng: &mut SampleRng, count: usize) -> Vec<Point> {
    (0..count).map(|_| sample::point(s, rng)).collect()
}

fn rel_diff(a: &CurvatureData<f64>, b: &CurvatureData<f64>) -> f64 {
    let riem = a.riem.max_diff(&b.riem) / (1.0 + b.riem.max_abs());
    let ricci = a.ricci.sub(&b.ricci).max_abs() / (1.0 + b.ricci.max_abs());
    let scalar = (a.scalar - b.scalar).abs() / (1.0 + b.scalar.abs());
    let chern = a.chern.max_diff(&b.chern) / (1.0 + b.chern.max_abs());
    riem.max(ricci).max(scalar).max(chern)
}

fn closed_form_curvature() -> Outcome {
    let mut out = Outcome::new();
    let mut w = Worst::new(1e-8);
    for (k, text) in [S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(100 + k as u64);
        for p in points(&s, &mut rng, POINTS) {
            match (curvature_numeric(&s, &p), curvature_closed(&s, &p)) {
                (Ok(a), Ok(b)) => w.record(|| format!("{text} at {p:?}"), rel_diff(&a, &b)),
                (a, b) => w.fail(format!("{text}: {:?} {:?}", a.err(), b.err())),
            }
        }
    }
    out.add("closed vs differentiated", w);
    let mut flat = Worst::new(1e-10);
    let s = sig(S1);
    let mut rng = sample::rng(99);
    for p in points(&s, &mut rng, POINTS) {
        for c in [curvature_numeric(&s, &p), curvature_closed(&s, &p)] {
            match c {
                Ok(c) => flat.record(
                    || format!("flat at {p:?}"),
                    c.riem.max_abs().max(c.chern.max_abs()).max(c.ricci.max_abs()).max(c.scalar.abs()),
                ),
                Err(e) => flat.fail(format!("{e}")),
            }
        }
    }
    out.add("flat", flat);
    out
}

fn torsion() -> Outcome {
    let mut w = Worst::new(1e-9);
    for (k, text) in [S1, S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(200 + k as u64);
        for p in points(&s, &mut rng, POINTS) {
            match curvature_numeric(&s, &p) {
                Ok(c) => w.record(|| text.to_string(), c.torsion.max_abs()),
                Err(e) => w.fail(format!("{e}")),
            }
        }
    }
    let mut out = Outcome::new();
    out.add("|A|", w);
    out
}

fn symmetries() -> Outcome {
    let mut sym = Worst::new(1e-9);
    let mut trace = Worst::new(1e-9);
    for (k, text) in [S1, S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(300 + k as u64);
        for p in points(&s, &mut rng, POINTS) {
            let (Ok(c), Ok(f)) = (curvature_numeric(&s, &p), frame_fields(&s, &p)) else {
                sym.fail(format!("{text}: evaluation failed"));
                continue;
            };
            let scale = 1.0 + c.riem.max_abs();
            sym.record(|| format!("{text} riem"), c.riem.symmetry_defect() / scale);
            sym.record(|| format!("{text} chern"), c.chern.symmetry_defect() / scale);
            trace.record(|| text.to_string(), c.chern.trace_first(&f.levi).max_abs() / scale);
        }
    }
    let mut out = Outcome::new();
    out.add("symmetry", sym);
    out.add("chern trace", trace);
    out
}

fn frame_properties() -> Outcome {
    let mut q = Worst::new(1e-10);
    let mut orth = Worst::new(1e-10);
    let mut brackets = Worst::new(1e-6);
    for (k, text) in [S1, S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let n = s.dim();
        let mut rng = sample::rng(400 + k as u64);
        for p in points(&s, &mut rng, POINTS) {
            let f = match frame_fields(&s, &p) {
                Ok(f) => f,
                Err(e) => {
                    q.fail(format!("{text}: {e}"));
                    continue;
                }
            };
            let levi = &f.levi;
            let basis: Vec<TangentVector<f64>> = (0..n).map(|a| TangentVector::basis(n, a)).collect();
            // Q♭(E, Z̄) = 0
            for e in &f.e_basis {
                for z in &basis {
                    q.record(|| format!("{text} Q1"), f.q_flat_coeffs(&e.hol, &z.hol).norm());
                }
            }
            // Q♭ = L on each 𝒲_j
            for wb in &f.w_bases {
                for v in wb {
                    for u in wb {
                        let d = f.q_flat_coeffs(&v.hol, &u.hol) - levi.pair(&v.hol, &u.hol);
                        q.record(|| format!("{text} Q2"), d.norm());
                    }
                }
            }
            // Q♭ ≥ 0, vanishing exactly on ℰ
            for _ in 0..5 {
                let z = sample::holomorphic_vector::<f64, _>(n, &mut rng);
                let value = f.q_flat_coeffs(&z.hol, &z.hol);
                q.record(|| format!("{text} Q3 sign"), (-value.re).max(0.0).max(value.im.abs()));
                let mut e = TangentVector::zero(n);
                for b in &f.e_basis {
                    e = e.add(&b.scale(sample::complex(&mut rng, 1.0)));
                }
                let mut wsum = TangentVector::zero(n);
                for wb in &f.w_bases {
                    for b in wb {
                        wsum = wsum.add(&b.scale(sample::complex(&mut rng, 1.0)));
                    }
                }
                let x = e.add(&wsum);
                let d = f.q_flat_coeffs(&x.hol, &x.hol) - Complex::new(levi.norm_sqr(&wsum.hol), 0.0);
                q.record(|| format!("{text} Q3 kernel"), d.norm() / (1.0 + levi.norm_sqr(&x.hol)));
            }
            // mutual Levi-orthogonality of 𝒲_1, …, 𝒲_s, ℰ
            let mut groups: Vec<&[TangentVector<f64>]> = f.w_bases.iter().map(Vec::as_slice).collect();
            groups.push(&f.e_basis);
            for (i, gi) in groups.iter().enumerate() {
                for gj in groups.iter().skip(i + 1) {
                    for u in gi.iter() {
                        for v in gj.iter() {
                            orth.record(|| text.to_string(), levi.pair(&u.hol, &v.hol).norm());
                        }
                    }
                }
            }
            let mut pairs = Vec::new();
            for a in 0..n {
                pairs.push((FrameField::T, FrameField::Z(a)));
                for b in 0..n {
                    pairs.push((FrameField::Z(a), FrameField::ZBar(b)));
                }
            }
            for &j in &f.e_blocks {
                for &l in &f.e_blocks {
                    pairs.push((FrameField::E(j), FrameField::EBar(l)));
                }
                if j != s.flat_block() {
                    for a in s.block_range(s.flat_block()) {
                        pairs.push((FrameField::E(j), FrameField::ZBar(a)));
                    }
                }
            }
            for (x, y) in pairs {
                match (lie_bracket(&s, &p, x, y), lie_bracket_closed(&s, &p, x, y)) {
                    (Ok(a), Ok(b)) => brackets.record(|| format!("{text} [{x:?},{y:?}]"), a.sub(&b).max_abs()),
                    (a, b) => brackets.fail(format!("{text} [{x:?},{y:?}]: {:?} {:?}", a.err(), b.err())),
                }
            }
        }
    }
    let mut out = Outcome::new();
    out.add("Q1-Q3", q);
    out.add("orthogonality", orth);
    out.add("brackets", brackets);
    out
}

fn cr_factors() -> Outcome {
    let mut gen = Worst::new(1e-9);
    let mut cocycle = Worst::new(1e-9);
    for (k, text) in [S1, S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(500 + k as u64);
        for p in points(&s, &mut rng, POINTS) {
            let r: f64 = rng.gen_range(0.5..2.0);
            let phi = MapDescriptor::single(s.clone(), sample::phi(&s, &mut rng)).unwrap();
            let dil = MapDescriptor::single(s.clone(), Generator::Dil { r }).unwrap();
            let inv = MapDescriptor::single(s.clone(), Generator::Inv).unwrap();
            let expect = [(phi, 1.0), (dil, r * r), (inv, p.w(&s).norm_sqr().recip())];
            for (m, want) in expect {
                match cr_factor(&m, &p) {
                    Ok(l) => gen.record(|| format!("{text} {m}"), (l - want).abs() / want.max(1.0)),
                    Err(e) => gen.fail(format!("{text} {m}: {e}")),
                }
            }
            // λ_{f∘g}(P) = λ_f(g(P)) λ_g(P)
            let f: MapDescriptor<f64> = sample::word(&s, &mut rng, 2);
            let g: MapDescriptor<f64> = sample::word(&s, &mut rng, 2);
            let fg = f.compose(&g);
            let res = (|| {
                let q = g.apply(&p)?;
                let lhs = cr_factor(&fg, &p)?;
                let rhs = cr_factor(&f, &q)? * cr_factor(&g, &p)?;
                Ok::<f64, ellipsoid_cr::CrError>((lhs - rhs).abs() / lhs.abs().max(1.0))
            })();
            match res {
                Ok(d) => cocycle.record(|| format!("{text} {fg}"), d),
                Err(ellipsoid_cr::CrError::MapDomainError(_)) => {}
                Err(e) => cocycle.fail(format!("{text} {fg}: {e}")),
            }
        }
    }
    let mut out = Outcome::new();
    out.add("generators", gen);
    out.add("cocycle", cocycle);
    out
}

fn cone() -> Outcome {
    let mut agree = Worst::new(0.0);
    let mut counts = Vec::new();
    let mut preserved = Worst::new(0.0);
    let mut routing = Worst::new(1e-8);
    for (k, text) in [S1, S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let n = s.dim();
        let mut rng = sample::rng(600 + k as u64);
        let mut tested = 0usize;
        for p in points(&s, &mut rng, 60) {
            let probe = ConeProbe::new(&s, &p).expect("probe");
            let comps = probe.all_components();
            for i in 0..25 {
                let u = match i % (comps.len() + 2) {
                    c if c < comps.len() => probe.sample_in(comps[c], &mut rng),
                    c if c == comps.len() => probe.sample_mixed(&mut rng),
                    _ => Some(sample::holomorphic_vector(n, &mut rng)),
                };
                let Some(u) = u else { continue };
                match (probe.definitional(&u), probe.structural(&u)) {
                    (Ok(a), Ok(b)) => {
                        tested += 1;
                        agree.record(|| format!("{text} u={:?}", u.hol), f64::from(u8::from(a.member != b.member)));
                    }
                    (a, b) => agree.fail(format!("{text}: {:?} {:?}", a.err(), b.err())),
                }
            }
        }
        counts.push(format!("{text}:{tested}"));
        if tested < 1000 {
            agree.fail(format!("{text}: only {tested} vectors"));
        }
        for p in points(&s, &mut rng, POINTS) {
            let mut maps: Vec<MapDescriptor<f64>> = vec![
                MapDescriptor::single(s.clone(), Generator::Inv).unwrap(),
                MapDescriptor::single(s.clone(), sample::dil(&mut rng)).unwrap(),
                MapDescriptor::single(s.clone(), sample::psi(&s, &mut rng)).unwrap(),
                MapDescriptor::single(s.clone(), sample::phi(&s, &mut rng)).unwrap(),
            ];
            maps.push(sample::normal_form(&s, &mut rng, true));
            for m in maps {
                match cone_preserved(&m, &p, 12, rng.gen()) {
                    Ok(r) => preserved.record(|| format!("{text} {m}"), r.mismatches as f64),
                    Err(e) => preserved.fail(format!("{text} {m}: {e}")),
                }
                match block_routing(&m, &p) {
                    Ok(r) => routing.record(|| format!("{text} {m}"), r.max_residual),
                    Err(e) => routing.fail(format!("{text} {m}: {e}")),
                }
            }
        }
    }
    let mut out = Outcome::new();
    out.add(&format!("disagreements ({})", counts.join(" ")), agree);
    out.add("preservation mismatches", preserved);
    out.add("routing", routing);
    out
}

fn lee_laws() -> Outcome {
    let mut laws = Worst::new(1e-6);
    let mut chern = Worst::new(1e-6);
    let mut words = 0;
    for (k, text) in [S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(700 + k as u64);
        let mut maps: Vec<MapDescriptor<f64>> = vec![
            MapDescriptor::identity(s.clone()),
            MapDescriptor::single(s.clone(), Generator::Inv).unwrap(),
        ];
        for _ in 0..3 {
            maps.push(MapDescriptor::single(s.clone(), sample::dil(&mut rng)).unwrap());
            maps.push(MapDescriptor::single(s.clone(), sample::psi(&s, &mut rng)).unwrap());
            maps.push(MapDescriptor::single(s.clone(), sample::phi(&s, &mut rng)).unwrap());
        }
        for _ in 0..10 {
            maps.push(sample::word(&s, &mut rng, 4));
        }
        for m in &maps {
            for p in points(&s, &mut rng, 10) {
                match check_lee(m, &p) {
                    Ok(checks) => {
                        for c in checks {
                            laws.record(|| format!("{text} {m} {}", c.name), c.max_residual);
                        }
                    }
                    Err(ellipsoid_cr::CrError::MapDomainError(_)) => continue,
                    Err(e) => laws.fail(format!("{text} {m}: {e}")),
                }
                match check_chern_invariance(m, &p, 5, rng.gen()) {
                    Ok(c) => chern.record(|| format!("{text} {m}"), c.max_residual),
                    Err(e) => chern.fail(format!("{text} {m}: {e}")),
                }
                words += 1;
            }
        }
    }
    let mut out = Outcome::new();
    out.add(&format!("laws over {words} (map, point) pairs"), laws);
    out.add("chern invariance", chern);
    out
}

fn cr_function_identities() -> Outcome {
    let mut w = Worst::new(1e-7);
    for (k, text) in [S2, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(800 + k as u64);
        for _ in 0..20 {
            let params = CrAffine {
                k: rng.gen_range(0.5..2.0),
                a: sample::complex_vec(&mut rng, s.flat_dim(), 1.0),
                t0: rng.gen_range(-1.0..1.0),
            };
            for p in points(&s, &mut rng, 5) {
                match check_cr_function_identities(&s, &p, &params) {
                    Ok(checks) => {
                        for c in checks {
                            w.record(|| format!("{text} {}", c.name), c.max_residual);
                        }
                    }
                    Err(e) => w.fail(format!("{text}: {e}")),
                }
            }
        }
    }
    let mut out = Outcome::new();
    out.add("identities", w);
    out
}

fn classifier() -> Outcome {
    let mut recon = Worst::new(1e-7);
    let mut kinds = Worst::new(0.0);
    let mut negative = Worst::new(0.0);
    for (k, text) in [S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let mut rng = sample::rng(900 + k as u64);
        for i in 0..25 {
            let inversion = i % 5 != 4;
            let word = sample::normal_form(&s, &mut rng, inversion);
            let p = sample::point(&s, &mut rng);
            match classify(&word, &p, rng.gen()) {
                Ok(c) => {
                    let held_out = points(&s, &mut rng, 20);
                    let rebuilt = c.word(&s);
                    for q in &held_out {
                        match (word.apply(q), rebuilt.apply(q)) {
                            (Ok(a), Ok(b)) => {
                                let scale = a.z.iter().fold(a.t.abs().max(1.0), |acc, x| acc.max(x.norm()));
                                let err = a.z.iter().zip(&b.z).fold((a.t - b.t).abs(), |acc, (x, y)| acc.max((x - y).norm()));
                                recon.record(|| format!("{text} {word}"), err / scale);
                            }
                            (Err(_), Err(_)) => {}
                            (a, b) => recon.fail(format!("{text} {word}: {:?} {:?}", a.err(), b.err())),
                        }
                    }
                    kinds.record(|| format!("{text} {word}"), f64::from(u8::from((c.j == JKind::Inversion) != inversion)));
                }
                Err(e) => recon.fail(format!("{text} {word}: {e}")),
            }
            // non-CR perturbation of the same word
            let eps = 1e-3 * (1.0 + i as f64);
            let perturbed = FnOracle {
                signature: s.clone(),
                f: |q: &Point| {
                    let mut img = word.apply(q)?;
                    img.t += eps * q.z[0].norm_sqr();
                    Ok(img)
                },
            };
            let samples = points(&s, &mut rng, 5);
            if let Ok(r) = verify_cr(&perturbed, &samples) { negative.record(|| format!("{text} perturbed {word} accepted"), f64::from(u8::from(r.pass))) }
        }
    }
    let mut out = Outcome::new();
    out.add("held-out reconstruction", recon);
    out.add("J misidentified", kinds);
    out.add("non-CR accepted", negative);
    out
}

fn sectional_curvature() -> Outcome {
    let mut agree = Worst::new(1e-8);
    let mut flat = Worst::new(1e-12);
    let mut nonzero = Worst::new(0.0);
    let mut min_w = f64::INFINITY;
    for (k, text) in [S1, S2, S3, S4].into_iter().enumerate() {
        let s = sig(text);
        let n = s.dim();
        let mut rng = sample::rng(1000 + k as u64);
        for p in points(&s, &mut rng, POINTS) {
            let probe = ConeProbe::new(&s, &p).expect("probe");
            let mut vs = vec![sample::holomorphic_vector::<f64, _>(n, &mut rng)];
            for c in probe.all_components() {
                if let Some(v) = probe.sample_in(c, &mut rng) {
                    vs.push(v);
                }
            }
            for v in vs {
                let (a, b) = match (sectional(&s, &p, &v), sectional_closed(&s, &p, &v)) {
                    (Ok(a), Ok(b)) => (a, b),
                    (a, b) => {
                        agree.fail(format!("{text}: {:?} {:?}", a.err(), b.err()));
                        continue;
                    }
                };
                agree.record(|| format!("{text} {:?}", v.hol), (a - b).abs() / (1.0 + b.abs()));
                match probe.component_of(&v, 1e-9) {
                    Ok(Some(Component::Radial)) => {
                        flat.record(|| format!("{text} radial closed"), b.abs());
                        flat.record(|| format!("{text} radial differentiated"), a.abs());
                    }
                    Ok(Some(Component::W(j))) => {
                        if p.block_norm_sqr(&s, j) <= 4.0 {
                            min_w = min_w.min(b.abs());
                            nonzero.record(|| format!("{text} W{} k={b:e}", j + 1), f64::from(u8::from(b.abs() <= 0.01)));
                        }
                    }
                    Ok(None) => {}
                    Err(e) => agree.fail(format!("{text}: {e}")),
                }
            }
        }
    }
    let mut out = Outcome::new();
    out.add("k vs definitional", agree);
    out.add("k on radial part", flat);
    out.add(&format!("k <= 0.01 on W_j (min |k| = {min_w:.3})"), nonzero);
    out
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("closed-form curvature", closed_form_curvature),
        ("vanishing torsion", torsion),
        ("tensor symmetries and Chern trace", symmetries),
        ("frame, Q-form and brackets", frame_properties),
        ("CR factors and cocycle", cr_factors),
        ("curvature cone", cone),
        ("Lee transformation laws", lee_laws),
        ("CR-affine function identities", cr_function_identities),
        ("classifier round trip", classifier),
        ("sectional curvature", sectional_curvature),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let pass = outcome.pass();
        failed += usize::from(!pass);
        println!(
            "[{}] {:>2}. {name} ({:.1}s): {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64(),
            outcome.detail()
        );
    }
    let total = start.elapsed().as_secs_f64();
    println!("{} of {} criteria passed in {total:.1}s", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
