//! Check suites behind the subcommands. Each returns named checks and a
//! JSON object of reported values.

use ellipsoid_cr::classify::{classify, Classification, JKind};
use ellipsoid_cr::cone::{block_routing, cone_preserved, ConeProbe};
use ellipsoid_cr::curvature::{curvature_closed, curvature_numeric, CurvatureData};
use ellipsoid_cr::frame::{frame_fields, TangentVector};
use ellipsoid_cr::lee::{check_chern_invariance, check_cr_function_identities, check_lee, CrAffine};
use ellipsoid_cr::maps::{cr_factor, verify_cr, Generator, MapOracle};
use ellipsoid_cr::report::{merge, Check};
use ellipsoid_cr::sample::{self, SampleRng};
use ellipsoid_cr::{CrError, Map, Point, Result, Signature};
use rand::Rng;
use serde_json::{json, Value};

/// Relative tolerance between closed-form and differentiated curvature.
pub const CURVATURE_TOL: f64 = 1e-8;
pub const STRUCTURAL_TOL: f64 = 1e-9;
pub const FRAME_TOL: f64 = 1e-10;
pub const FACTOR_TOL: f64 = 1e-9;
pub const RECONSTRUCTION_TOL: f64 = 1e-7;
pub const LAMBDA_FIT_TOL: f64 = 1e-8;
pub const UNITARY_TOL: f64 = 1e-10;
/// Vectors tested per point by the cone suite.
const CONE_VECTORS: usize = 12;

fn curvature_diff(a: &CurvatureData<f64>, b: &CurvatureData<f64>) -> f64 {
    let riem = a.riem.max_diff(&b.riem) / (1.0 + b.riem.max_abs());
    let ricci = a.ricci.sub(&b.ricci).max_abs() / (1.0 + b.ricci.max_abs());
    let scalar = (a.scalar - b.scalar).abs() / (1.0 + b.scalar.abs());
    let chern = a.chern.max_diff(&b.chern) / (1.0 + b.chern.max_abs());
    riem.max(ricci).max(scalar).max(chern)
}

/// Closed-form curvature against differentiation, torsion, symmetries,
/// Chern trace and the Levi inverse.
pub fn invariant_suite(sig: &Signature, points: &[Point]) -> Result<(Vec<Check>, Value)> {
    let mut checks = Vec::new();
    let mut scalars = Vec::with_capacity(points.len());
    let mut last = None;
    for p in points {
        let numeric = curvature_numeric(sig, p)?;
        let closed = curvature_closed(sig, p)?;
        let frame = frame_fields(sig, p)?;
        let scale = 1.0 + numeric.riem.max_abs();
        checks.push(Check::new("closed_vs_numeric", curvature_diff(&numeric, &closed), CURVATURE_TOL));
        checks.push(Check::new("torsion", numeric.torsion.max_abs(), STRUCTURAL_TOL));
        checks.push(Check::new("riemann_symmetry", numeric.riem.symmetry_defect() / scale, STRUCTURAL_TOL));
        checks.push(Check::new("chern_symmetry", numeric.chern.symmetry_defect() / scale, STRUCTURAL_TOL));
        checks.push(Check::new("chern_trace", numeric.chern.trace_first(&frame.levi).max_abs() / scale, STRUCTURAL_TOL));
        checks.push(Check::new("levi_inverse", frame.levi.inverse_defect(), FRAME_TOL));
        scalars.push(numeric.scalar);
        last = Some((numeric, frame.levi));
    }
    let values = match (points.len(), last) {
        (1, Some((c, levi))) => json!({
            "point": points[0],
            "scalar": c.scalar,
            "ricci": c.ricci.to_rows(),
            "levi": levi.h.to_rows(),
        }),
        _ => json!({
            "points": points.len(),
            "scalar_min": scalars.iter().copied().fold(f64::INFINITY, f64::min),
            "scalar_max": scalars.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }),
    };
    Ok((merge(checks), values))
}

/// Q-form identities and Levi-orthogonality of the decomposition.
pub fn frame_suite(sig: &Signature, points: &[Point], rng: &mut SampleRng) -> Result<Vec<Check>> {
    let n = sig.dim();
    let mut checks = Vec::new();
    for p in points {
        let f = frame_fields(sig, p)?;
        let levi = &f.levi;
        let mut q1: f64 = 0.0;
        for e in &f.e_basis {
            for a in 0..n {
                q1 = q1.max(f.q_flat_coeffs(&e.hol, &TangentVector::<f64>::basis(n, a).hol).norm());
            }
        }
        let mut q2: f64 = 0.0;
        for wb in &f.w_bases {
            for u in wb {
                for v in wb {
                    q2 = q2.max((f.q_flat_coeffs(&u.hol, &v.hol) - levi.pair(&u.hol, &v.hol)).norm());
                }
            }
        }
        let z = sample::holomorphic_vector::<f64, _>(n, rng);
        let q3 = f.q_flat_coeffs(&z.hol, &z.hol);
        let mut groups: Vec<&[TangentVector<f64>]> = f.w_bases.iter().map(Vec::as_slice).collect();
        groups.push(&f.e_basis);
        let mut orth: f64 = 0.0;
        for (i, gi) in groups.iter().enumerate() {
            for gj in &groups[i + 1..] {
                for u in gi.iter() {
                    for v in gj.iter() {
                        orth = orth.max(levi.pair(&u.hol, &v.hol).norm());
                    }
                }
            }
        }
        checks.push(Check::new("q_flat_radial_kernel", q1, FRAME_TOL));
        checks.push(Check::new("q_flat_on_w", q2, FRAME_TOL));
        checks.push(Check::new("q_flat_nonnegative", (-q3.re).max(0.0).max(q3.im.abs()), FRAME_TOL));
        checks.push(Check::new("decomposition_orthogonal", orth, FRAME_TOL));
    }
    Ok(merge(checks))
}

/// Definitional against structural cone membership on sampled vectors.
pub fn cone_suite(sig: &Signature, points: &[Point], seed: u64) -> Result<(Vec<Check>, Value)> {
    let n = sig.dim();
    let mut rng = sample::rng(seed ^ 0xc0e);
    let (mut tested, mut members, mut disagreements) = (0usize, 0usize, 0usize);
    let mut component_misses = 0usize;
    for p in points {
        let probe = ConeProbe::with_seed(sig, p, seed)?;
        let comps = probe.all_components();
        for i in 0..CONE_VECTORS {
            let slot = i % (comps.len() + 2);
            let from_component = slot < comps.len();
            let u = if from_component {
                probe.sample_in(comps[slot], &mut rng)
            } else if slot == comps.len() {
                probe.sample_mixed(&mut rng)
            } else {
                Some(sample::holomorphic_vector(n, &mut rng))
            };
            let Some(u) = u else { continue };
            let a = probe.definitional(&u)?.member;
            let b = probe.structural(&u)?.member;
            tested += 1;
            members += usize::from(a);
            disagreements += usize::from(a != b);
            component_misses += usize::from(from_component && !a);
        }
    }
    let checks = vec![
        Check::new("definitional_vs_structural", disagreements as f64, 0.0),
        Check::new("components_in_cone", component_misses as f64, 0.0),
    ];
    Ok((checks, json!({ "vectors": tested, "members": members })))
}

fn domain_ok<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CrError::MapDomainError(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// CR conditions, CR factor at every sample, cone preservation and block
/// routing.
pub fn verify_map_suite(map: &Map, points: &[Point], seed: u64) -> Result<(Vec<Check>, Value)> {
    let report = verify_cr(map, points)?;
    let tol = report.tolerance;
    let mut checks = vec![
        Check::new("theta_annihilates_push", report.max_theta, tol),
        Check::new("type_10_preserved", report.max_leakage, tol),
        Check::new("levi_conformal", report.max_pairing, tol),
        Check::flag("positive_factor", report.min_lambda > 0.0),
    ];
    let mut mismatches = 0usize;
    let mut routing: f64 = 0.0;
    let mut routing_ok = true;
    for (i, p) in points.iter().enumerate() {
        mismatches += cone_preserved(map, p, 6, seed.wrapping_add(i as u64))?.mismatches;
        match block_routing(map, p) {
            Ok(r) => {
                routing = routing.max(r.max_residual);
                routing_ok &= r.pass;
            }
            Err(_) => routing_ok = false,
        }
    }
    checks.push(Check::new("cone_preserved", mismatches as f64, 0.0));
    checks.push(Check::new("block_routing", routing, ellipsoid_cr::cone::ROUTING_TOL));
    checks.push(Check::flag("block_routing_case_a", routing_ok));
    let lambda: Vec<f64> = report.samples.iter().map(|s| s.lambda).collect();
    Ok((checks, json!({ "map": map.to_string(), "lambda": lambda })))
}

/// Transformation laws of Ricci, torsion and scalar curvature, the
/// relative invariance of the Chern tensor and the radial factor test.
pub fn lee_suite(map: &Map, points: &[Point], seed: u64) -> Result<(Vec<Check>, Value)> {
    let mut checks = Vec::new();
    let mut evaluated = 0usize;
    for (i, p) in points.iter().enumerate() {
        let Some(laws) = domain_ok(check_lee(map, p))? else { continue };
        checks.extend(laws);
        checks.push(check_chern_invariance(map, p, 5, seed.wrapping_add(i as u64))?);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(CrError::MapDomainError("no sample point lies in the domain of the map".into()));
    }
    Ok((merge(checks), json!({ "map": map.to_string(), "points": evaluated })))
}

/// `λ_φ = 1`, `λ_δ = r²`, `λ_I = |w|⁻²` and the cocycle law on random words.
pub fn factor_suite(sig: &Signature, points: &[Point], rng: &mut SampleRng) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for p in points {
        let r: f64 = rng.gen_range(0.5..2.0);
        let phi = Map::single(sig.clone(), sample::phi(sig, rng))?;
        let dil = Map::single(sig.clone(), Generator::Dil { r })?;
        let inv = Map::single(sig.clone(), Generator::Inv)?;
        let mut worst: f64 = 0.0;
        for (m, want) in [(phi, 1.0), (dil, r * r), (inv, p.w(sig).norm_sqr().recip())] {
            worst = worst.max((cr_factor(&m, p)? - want).abs() / want.max(1.0));
        }
        checks.push(Check::new("generator_factors", worst, FACTOR_TOL));
        let f: Map = sample::word(sig, rng, 2);
        let g: Map = sample::word(sig, rng, 2);
        let Some(q) = domain_ok(g.apply(p))? else { continue };
        let fg = f.compose(&g);
        let (Some(lhs), Some(lf)) = (domain_ok(cr_factor(&fg, p))?, domain_ok(cr_factor(&f, &q))?) else { continue };
        let rhs = lf * cr_factor(&g, p)?;
        checks.push(Check::new("factor_cocycle", (lhs - rhs).abs() / lhs.abs().max(1.0), FACTOR_TOL));
    }
    Ok(merge(checks))
}

/// Identities of the CR-affine functions `k(w + a^{n+1} + 2i z_s·ā_s)`.
pub fn cr_affine_suite(sig: &Signature, points: &[Point], rng: &mut SampleRng) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for p in points {
        let params = CrAffine {
            k: rng.gen_range(0.5..2.0),
            a: sample::complex_vec(rng, sig.flat_dim(), 1.0),
            t0: rng.gen_range(-1.0..1.0),
        };
        checks.extend(check_cr_function_identities(sig, p, &params)?);
    }
    Ok(merge(checks))
}

fn point_error(a: &Point, b: &Point) -> f64 {
    let scale = a.z.iter().fold(a.t.abs().max(1.0), |acc, x| acc.max(x.norm()));
    a.z.iter().zip(&b.z).fold((a.t - b.t).abs(), |acc, (x, y)| acc.max((x - y).norm())) / scale
}

/// Checks and reported values of a classification; `reference` adds a
/// held-out comparison against the original map.
pub fn classification_report(
    sig: &Signature,
    c: &Classification<f64>,
    reference: Option<(&dyn MapOracle<f64>, &[Point])>,
) -> (Vec<Check>, Value) {
    let mut checks = vec![
        Check::new("validation_residual", c.residual, RECONSTRUCTION_TOL),
        Check::new("lambda_fit", c.lambda_residual, LAMBDA_FIT_TOL),
    ];
    if let Generator::Psi { sigma, b_mats, .. } = &c.psi {
        let defect = b_mats.iter().map(|b| b.unitarity_defect()).fold(0.0, f64::max);
        checks.push(Check::new("psi_unitary", defect, UNITARY_TOL));
        let compatible = sigma.iter().enumerate().all(|(k, &j)| sig.blocks_compatible(k, j));
        checks.push(Check::flag("sigma_compatible", compatible));
    }
    let word = c.word(sig);
    if let Some((map, pts)) = reference {
        let mut worst: f64 = 0.0;
        let mut failed = false;
        for p in pts {
            match (map.apply(p), word.apply(p)) {
                (Ok(a), Ok(b)) => worst = worst.max(point_error(&a, &b)),
                (Err(_), Err(_)) => {}
                _ => failed = true,
            }
        }
        checks.push(Check::new("held_out_reconstruction", if failed { f64::INFINITY } else { worst }, RECONSTRUCTION_TOL));
    }
    let values = json!({
        "j": match c.j { JKind::Identity => "identity", JKind::Inversion => "inversion" },
        "r": c.r,
        "a": c.a,
        "a_t0": c.a_t0,
        "psi": c.psi,
        "word": word.to_string(),
        "gauge_note": c.gauge_note,
    });
    (checks, values)
}

fn prefixed(prefix: &str, checks: Vec<Check>) -> impl Iterator<Item = Check> + '_ {
    checks.into_iter().map(move |mut c| {
        c.name = format!("{prefix}.{}", c.name);
        c
    })
}

/// Every suite on one signature; maps are sampled from the seed.
pub fn selftest_suite(sig: &Signature, points: &[Point], seed: u64) -> Result<(Vec<Check>, Value)> {
    let mut rng = sample::rng(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let mut checks = Vec::new();
    let (c, _) = invariant_suite(sig, points)?;
    checks.extend(prefixed("invariants", c));
    checks.extend(prefixed("frame", frame_suite(sig, points, &mut rng)?));
    let (c, _) = cone_suite(sig, points, seed)?;
    checks.extend(prefixed("cone", c));
    checks.extend(prefixed("factors", factor_suite(sig, points, &mut rng)?));
    checks.extend(prefixed("cr_affine", cr_affine_suite(sig, points, &mut rng)?));

    let few = &points[..points.len().min(5)];
    let mut maps: Vec<Map> = vec![
        Map::single(sig.clone(), Generator::Inv)?,
        Map::single(sig.clone(), sample::dil(&mut rng))?,
        Map::single(sig.clone(), sample::psi(sig, &mut rng))?,
        Map::single(sig.clone(), sample::phi(sig, &mut rng))?,
    ];
    for _ in 0..3 {
        maps.push(sample::word(sig, &mut rng, 4));
    }
    let mut map_checks = Vec::new();
    let mut lee_checks = Vec::new();
    for m in &maps {
        map_checks.extend(verify_map_suite(m, few, seed)?.0);
        if let Some((c, _)) = domain_ok(lee_suite(m, few, seed))? {
            lee_checks.extend(c);
        }
    }
    checks.extend(prefixed("verify_map", merge(map_checks)));
    checks.extend(prefixed("lee", merge(lee_checks)));

    let mut class_checks = Vec::new();
    let mut words = Vec::new();
    for inversion in [true, false, true] {
        let word = sample::normal_form(sig, &mut rng, inversion);
        let p0 = sample::point(sig, &mut rng);
        let held_out: Vec<Point> = (0..10).map(|_| sample::point(sig, &mut rng)).collect();
        let c = classify(&word, &p0, rng.gen())?;
        class_checks.extend(classification_report(sig, &c, Some((&word, &held_out))).0);
        class_checks.push(Check::flag("inversion_detected", (c.j == JKind::Inversion) == inversion));
        words.push(word.to_string());
    }
    checks.extend(prefixed("classify", merge(class_checks)));
    Ok((checks, json!({ "points": points.len(), "maps": maps.iter().map(ToString::to_string).collect::<Vec<_>>(), "classified": words })))
}
