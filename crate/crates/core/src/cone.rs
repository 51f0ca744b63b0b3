//! The Chern-invariant cone `ℋ_P`: the definitional membership test, the
//! block decomposition test, preservation under maps and block routing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_closed_from, Tensor4};
use crate::error::{CrError, Result};
use crate::frame::{frame_fields, levi_gram_schmidt, FrameDecomposition, TangentVector};
use crate::linalg::CMatrix;
use crate::maps::{pushforward_with, MapOracle};
use crate::model::{jet, Signature, SurfacePoint};
use crate::sample;
use crate::scalar::{cr, cz, Real, C};

/// Relative threshold of the definitional test, scaled by `max(1, ‖R‖_∞)`.
pub const DEFINITIONAL_TOL: f64 = 1e-8;
/// Levi norm of the complementary projection tolerated by the structural test.
pub const STRUCTURAL_TOL: f64 = 1e-9;
/// Tolerance on the block projections of pushed-forward basis vectors.
pub const ROUTING_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 42;
/// Random `Z` probes added to the frame basis in the definitional test.
pub const RANDOM_PROBES: usize = 20;
const MIN_NORM: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Witness<T> {
    pub v: Vec<C<T>>,
    pub z: Vec<C<T>>,
    pub w: Vec<C<T>>,
    /// `|R(U, V̄, Z, W̄)|`.
    pub residual: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ConeVerdict<T> {
    pub member: bool,
    pub witness: Option<Witness<T>>,
    pub max_residual: T,
    pub threshold: T,
}

/// Where a vector sits in the decomposition `𝒲_1 ⊕ … ⊕ 𝒲_{s−1} ⊕ (ℰ ⊕ 𝒲_s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    /// `𝒲_j` for a radial block `j` (0-based).
    W(usize),
    /// `ℰ ⊕ 𝒲_s`.
    Radial,
}

/// Curvature and frame data at one point, shared by many membership tests.
#[derive(Clone, Debug)]
pub struct ConeProbe<T> {
    pub signature: Signature,
    pub point: SurfacePoint<T>,
    pub riem: Tensor4<T>,
    pub frame: FrameDecomposition<T>,
    seed: u64,
}

impl<T: Real> ConeProbe<T> {
    pub fn new(sig: &Signature, point: &SurfacePoint<T>) -> Result<Self> {
        Self::with_seed(sig, point, DEFAULT_SEED)
    }

    pub fn with_seed(sig: &Signature, point: &SurfacePoint<T>, seed: u64) -> Result<Self> {
        let frame = frame_fields(sig, point)?;
        let riem = curvature_closed_from(sig, point, &frame).riem;
        Ok(Self { signature: sig.clone(), point: point.clone(), riem, frame, seed })
    }

    pub fn dim(&self) -> usize {
        self.signature.dim()
    }

    pub fn threshold(&self) -> T {
        T::lit(DEFINITIONAL_TOL) * T::one().max(self.riem.max_abs())
    }

    fn normalized(&self, u: &TangentVector<T>) -> Result<Vec<C<T>>> {
        if !u.is_type_10(T::lit(1e-12)) {
            return Err(CrError::TypeMismatch);
        }
        let nrm = self.frame.levi.norm_sqr(&u.hol).sqrt();
        if !(nrm >= T::lit(MIN_NORM)) {
            return Err(CrError::ZeroVector);
        }
        Ok(u.hol.iter().map(|x| x / nrm).collect())
    }

    /// Membership in `ℋ_P` straight from the definition: for each probe `Z`
    /// (the frame basis, `U` itself and seeded random vectors) every
    /// `R(U, V̄, Z, W̄)` with `V, W` in a Levi-orthonormal basis of `{U, Z}^⊥`
    /// must vanish.
    pub fn definitional(&self, u: &TangentVector<T>) -> Result<ConeVerdict<T>> {
        let u = self.normalized(u)?;
        let n = self.dim();
        let levi = &self.frame.levi;
        let mut probes: Vec<Vec<C<T>>> = vec![u.clone()];
        for a in 0..n {
            probes.push(TangentVector::<T>::basis(n, a).hol);
        }
        let mut rng = sample::rng(self.seed);
        for _ in 0..RANDOM_PROBES {
            probes.push(sample::holomorphic_vector::<T, _>(n, &mut rng).hol);
        }
        let threshold = self.threshold();
        let mut worst = T::zero();
        let mut witness: Option<Witness<T>> = None;
        for z in probes {
            let znorm = levi.norm_sqr(&z).sqrt();
            let z: Vec<C<T>> = z.iter().map(|x| x / znorm).collect();
            let complement = orthogonal_complement(levi, &[u.clone(), z.clone()]);
            if complement.is_empty() {
                continue;
            }
            let form = contract_first_third(&self.riem, &u, &z);
            for v in &complement {
                for w in &complement {
                    let value = sesquilinear(&form, v, w).norm();
                    if value > worst {
                        worst = value;
                        if value > threshold {
                            witness = Some(Witness { v: v.clone(), z: z.clone(), w: w.clone(), residual: value });
                        }
                    }
                }
            }
        }
        Ok(ConeVerdict { member: worst <= threshold, witness, max_residual: worst, threshold })
    }

    /// Levi norms of the projections onto each component, for a unit `U`.
    pub fn components(&self, u: &TangentVector<T>) -> Result<Vec<(Component, T)>> {
        let u = self.normalized(u)?;
        let sig = &self.signature;
        let levi = &self.frame.levi;
        let mut out: Vec<(Component, T)> = (0..sig.radial_blocks())
            .map(|j| (Component::W(j), levi.norm_sqr(&self.frame.project_w(sig, j, &u)).max(T::zero()).sqrt()))
            .collect();
        out.push((Component::Radial, levi.norm_sqr(&self.frame.project_radial(sig, &u)).max(T::zero()).sqrt()));
        Ok(out)
    }

    /// Membership through the decomposition `ℋ = 𝒲_1 ∪ … ∪ 𝒲_{s−1} ∪ (𝒲_s ⊕ ℰ)`.
    pub fn structural(&self, u: &TangentVector<T>) -> Result<ConeVerdict<T>> {
        let comps = self.components(u)?;
        // The components are Levi-orthogonal, so the complement of component
        // `c` has norm² equal to the sum of the others.
        let total: T = comps.iter().fold(T::zero(), |acc, (_, x)| acc + *x * *x);
        let best = comps
            .iter()
            .map(|(_, x)| (total - *x * *x).max(T::zero()).sqrt())
            .fold(T::infinity(), T::min);
        let threshold = T::lit(STRUCTURAL_TOL);
        Ok(ConeVerdict { member: best <= threshold, witness: None, max_residual: best, threshold })
    }

    /// The single component `U` lies in, if any.
    pub fn component_of(&self, u: &TangentVector<T>, tol: T) -> Result<Option<Component>> {
        let comps = self.components(u)?;
        let total: T = comps.iter().fold(T::zero(), |acc, (_, x)| acc + *x * *x);
        Ok(comps.into_iter().find(|(_, x)| (total - *x * *x).max(T::zero()).sqrt() <= tol).map(|(c, _)| c))
    }

    /// Levi-orthonormal basis of a component.
    pub fn component_basis(&self, c: Component) -> &[TangentVector<T>] {
        match c {
            Component::W(j) => &self.frame.w_bases[j],
            Component::Radial => &self.frame.radial_basis,
        }
    }

    /// Random unit vector in a component.
    pub fn sample_in<R: Rng + ?Sized>(&self, c: Component, rng: &mut R) -> Option<TangentVector<T>> {
        let basis = self.component_basis(c);
        if basis.is_empty() {
            return None;
        }
        Some(combine(basis, rng))
    }

    /// Random vector with unit parts in two different components, which is
    /// never in the cone. `None` when fewer than two components are nonzero.
    pub fn sample_mixed<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<TangentVector<T>> {
        let comps: Vec<Component> = self.all_components().into_iter().filter(|c| !self.component_basis(*c).is_empty()).collect();
        if comps.len() < 2 {
            return None;
        }
        let i = rng.gen_range(0..comps.len());
        let mut j = rng.gen_range(0..comps.len() - 1);
        if j >= i {
            j += 1;
        }
        let a = combine(self.component_basis(comps[i]), rng);
        let b = combine(self.component_basis(comps[j]), rng);
        let t: f64 = rng.gen_range(0.3..1.0);
        Some(a.scale(cr(T::lit(t))).add(&b.scale(cr(T::lit(1.0 - t + 0.2)))))
    }

    pub fn all_components(&self) -> Vec<Component> {
        let mut out: Vec<Component> = (0..self.signature.radial_blocks()).map(Component::W).collect();
        out.push(Component::Radial);
        out
    }
}

fn combine<T: Real, R: Rng + ?Sized>(basis: &[TangentVector<T>], rng: &mut R) -> TangentVector<T> {
    let n = basis[0].dim();
    let mut v = TangentVector::zero(n);
    for b in basis {
        v = v.add(&b.scale(sample::complex::<T, _>(rng, 1.0)));
    }
    if v.max_abs() < T::lit(1e-3) {
        v = basis[0].clone();
    }
    v
}

/// `F_{βμ} = R_{αβ̄λμ̄} U^α Z^λ`.
fn contract_first_third<T: Real>(riem: &Tensor4<T>, u: &[C<T>], z: &[C<T>]) -> CMatrix<T> {
    let n = riem.dim();
    let mut f = CMatrix::zeros(n, n);
    for a in 0..n {
        if u[a] == cz() {
            continue;
        }
        for l in 0..n {
            let c = u[a] * z[l];
            if c == cz() {
                continue;
            }
            for b in 0..n {
                for m in 0..n {
                    f[(b, m)] += c * riem.get(a, b, l, m);
                }
            }
        }
    }
    f
}

/// `Σ F_{βμ} conj(V^β) conj(W^μ)`.
fn sesquilinear<T: Real>(f: &CMatrix<T>, v: &[C<T>], w: &[C<T>]) -> C<T> {
    let n = v.len();
    let mut acc = cz();
    for b in 0..n {
        for m in 0..n {
            acc += f[(b, m)] * v[b].conj() * w[m].conj();
        }
    }
    acc
}

/// Levi-orthonormal basis of the orthogonal complement of `span(vectors)`.
pub fn orthogonal_complement<T: Real>(levi: &crate::frame::LeviData<T>, vectors: &[Vec<C<T>>]) -> Vec<Vec<C<T>>> {
    let n = levi.h.rows();
    let tol = T::lit(1e-10);
    let span = levi_gram_schmidt(levi, vectors.to_vec(), tol);
    let k = span.len();
    let mut all = span;
    for a in 0..n {
        all.push(TangentVector::<T>::basis(n, a).hol);
    }
    levi_gram_schmidt(levi, all, tol).split_off(k)
}

/// Definitional membership with the default seed.
pub fn cone_test_definitional<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    u: &TangentVector<T>,
) -> Result<ConeVerdict<T>> {
    ConeProbe::new(sig, point)?.definitional(u)
}

pub fn cone_test_structural<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    u: &TangentVector<T>,
) -> Result<ConeVerdict<T>> {
    ConeProbe::new(sig, point)?.structural(u)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreservationReport {
    pub tested: usize,
    pub members: usize,
    pub mismatches: usize,
    pub pass: bool,
}

/// Pushes forward sampled members (from every component) and non-members
/// and compares the definitional verdicts at `P` and `f(P)`.
pub fn cone_preserved<T: Real, M: MapOracle<T> + ?Sized>(
    map: &M,
    point: &SurfacePoint<T>,
    sample_count: usize,
    seed: u64,
) -> Result<PreservationReport> {
    let sig = map.signature().clone();
    let image = map.apply(point)?;
    let jc = map.chart_jacobian(point)?;
    let g0 = jet(&sig, point)?.grad;
    let g1 = jet(&sig, &image)?.grad;
    let here = ConeProbe::new(&sig, point)?;
    let there = ConeProbe::new(&sig, &image)?;
    let mut rng = sample::rng(seed);
    let comps = here.all_components();
    let (mut tested, mut members, mut mismatches) = (0, 0, 0);
    for i in 0..sample_count {
        let slot = i % (comps.len() + 1);
        let u = if slot < comps.len() { here.sample_in(comps[slot], &mut rng) } else { here.sample_mixed(&mut rng) };
        let Some(u) = u else { continue };
        let before = here.definitional(&u)?.member;
        let fu = pushforward_with(&jc, &g0, &g1, &u);
        let after = there.definitional(&TangentVector::holomorphic(fu.hol))?.member;
        tested += 1;
        members += usize::from(before);
        mismatches += usize::from(before != after);
    }
    Ok(PreservationReport { tested, members, mismatches, pass: mismatches == 0 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct RoutingReport<T> {
    /// `sigma[j]`: the radial block whose `𝒲` receives `f_*𝒲_j`.
    pub sigma: Vec<usize>,
    pub max_residual: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Block routing: `f_*(ℰ ⊕ 𝒲_s) = ℰ ⊕ 𝒲_s` and `f_*𝒲_j ⊂ 𝒲_{σ(j)}`.
///
/// Fails with `RadialBundleEscaped` if `ℰ ⊕ 𝒲_s` lands in some `𝒲_j` and
/// with `BlockRoutingAmbiguous` if a `𝒲_j` is split or `σ` is not a
/// permutation of compatible blocks.
pub fn block_routing<T: Real, M: MapOracle<T> + ?Sized>(map: &M, point: &SurfacePoint<T>) -> Result<RoutingReport<T>> {
    let sig = map.signature().clone();
    let image = map.apply(point)?;
    let jc = map.chart_jacobian(point)?;
    let g0 = jet(&sig, point)?.grad;
    let g1 = jet(&sig, &image)?.grad;
    let here = ConeProbe::new(&sig, point)?;
    let there = ConeProbe::new(&sig, &image)?;
    let tol = T::lit(ROUTING_TOL);
    let loose = T::lit(1e-4);
    let push = |v: &TangentVector<T>| TangentVector::holomorphic(pushforward_with(&jc, &g0, &g1, v).hol);
    let residual_in = |v: &TangentVector<T>, c: Component| -> Result<T> {
        let comps = there.components(v)?;
        let total: T = comps.iter().fold(T::zero(), |acc, (_, x)| acc + *x * *x);
        let own = comps.iter().find(|(k, _)| *k == c).map(|(_, x)| *x).unwrap_or(T::zero());
        Ok((total - own * own).max(T::zero()).sqrt())
    };
    let mut worst = T::zero();
    for v in &here.frame.radial_basis {
        let fv = push(v);
        let r = residual_in(&fv, Component::Radial)?;
        if r > loose {
            if let Some(Component::W(j)) = there.component_of(&fv, loose)? {
                return Err(CrError::RadialBundleEscaped { block: j + 1 });
            }
        }
        worst = worst.max(r);
    }
    let k = sig.radial_blocks();
    let mut sigma = Vec::with_capacity(k);
    for j in 0..k {
        let mut target: Option<usize> = None;
        for v in &here.frame.w_bases[j] {
            let fv = push(v);
            let best = (0..k)
                .map(|c| Ok((c, residual_in(&fv, Component::W(c))?)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold((0, T::infinity()), |acc, x| if x.1 < acc.1 { x } else { acc });
            if best.1 > loose {
                return Err(CrError::BlockRoutingAmbiguous(format!(
                    "image of W_{} is not inside a single W block (residual {:e})",
                    j + 1,
                    best.1.to_f64_lossy()
                )));
            }
            match target {
                None => target = Some(best.0),
                Some(t) if t != best.0 => {
                    return Err(CrError::BlockRoutingAmbiguous(format!("W_{} is split between blocks", j + 1)))
                }
                _ => {}
            }
            worst = worst.max(best.1);
        }
        let t = target.unwrap_or(j);
        if sigma.contains(&t) || !sig.blocks_compatible(j, t) {
            return Err(CrError::BlockRoutingAmbiguous(format!("block {} routed to block {}", j + 1, t + 1)));
        }
        sigma.push(t);
    }
    Ok(RoutingReport { sigma, max_residual: worst, tolerance: tol, pass: worst <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::parse_map;
    use crate::maps::MapDescriptor;

    fn sig(text: &str) -> Signature {
        text.parse().unwrap()
    }

    #[test]
    fn flat_model_cone_is_everything() {
        let s = sig("n=2");
        let mut rng = sample::rng(1);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let probe = ConeProbe::new(&s, &p).unwrap();
        for _ in 0..10 {
            let u = sample::holomorphic_vector(2, &mut rng);
            assert!(probe.definitional(&u).unwrap().member);
            assert!(probe.structural(&u).unwrap().member);
        }
    }

    #[test]
    fn w_blocks_are_members() {
        let s = sig("m=2,2;n=2,2,1");
        let mut rng = sample::rng(2);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let probe = ConeProbe::new(&s, &p).unwrap();
        let u = probe.sample_in(Component::W(0), &mut rng).unwrap();
        assert!(probe.definitional(&u).unwrap().member);
        let e1 = TangentVector::holomorphic(probe.frame.e_basis[0].hol.clone());
        assert!(probe.structural(&e1).unwrap().member);
    }

    #[test]
    fn explicit_non_member_witness() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(3);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let probe = ConeProbe::new(&s, &p).unwrap();
        let x = probe.sample_in(Component::Radial, &mut rng).unwrap();
        let y = probe.sample_in(Component::W(0), &mut rng).unwrap();
        let levi = &probe.frame.levi;
        let (nx, ny) = (levi.norm_sqr(&x.hol), levi.norm_sqr(&y.hol));
        let u = x.add(&y);
        let v = x.sub(&y.scale(cr(nx / ny)));
        assert!(levi.pair(&u.hol, &v.hol).norm() < 1e-12);
        let value = probe.riem.eval(&u.hol, &v.hol, &u.hol, &v.hol).norm();
        assert!(value > 1e-3, "{value}");
        let verdict = probe.definitional(&u).unwrap();
        assert!(!verdict.member);
        assert!(verdict.witness.unwrap().residual > verdict.threshold);
        assert!(!probe.structural(&u).unwrap().member);
    }

    #[test]
    fn two_w_blocks_mixed_is_not_member() {
        let s = sig("m=2,3;n=2,2,1");
        let mut rng = sample::rng(4);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let probe = ConeProbe::new(&s, &p).unwrap();
        let u = probe.frame.w_bases[0][0].add(&probe.frame.w_bases[1][0]);
        assert!(!probe.structural(&u).unwrap().member);
        assert!(!probe.definitional(&u).unwrap().member);
    }

    #[test]
    fn tests_agree_on_random_vectors() {
        let s = sig("m=2,3;n=2,2,1");
        let mut rng = sample::rng(5);
        for _ in 0..3 {
            let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
            let probe = ConeProbe::new(&s, &p).unwrap();
            for comp in probe.all_components() {
                let u = probe.sample_in(comp, &mut rng).unwrap();
                assert_eq!(probe.definitional(&u).unwrap().member, probe.structural(&u).unwrap().member);
            }
            for _ in 0..5 {
                let u = probe.sample_mixed(&mut rng).unwrap();
                assert!(!probe.definitional(&u).unwrap().member);
                assert!(!probe.structural(&u).unwrap().member);
            }
        }
    }

    #[test]
    fn zero_vector_rejected() {
        let s = sig("m=2;n=2,1");
        let p = SurfacePoint::new(vec![C::new(1.0, 0.0), cz(), cz()], 0.0);
        let err = cone_test_definitional(&s, &p, &TangentVector::zero(3)).unwrap_err();
        assert!(matches!(err, CrError::ZeroVector));
    }

    #[test]
    fn preserved_and_routed() {
        let s = sig("m=2,2;n=2,2,1");
        let mut rng = sample::rng(6);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        for text in ["dil(r=2)", "inv", "psi(sigma=[2,1])"] {
            let m: MapDescriptor<f64> = parse_map(text, &s).unwrap();
            let report = cone_preserved(&m, &p, 12, 9).unwrap();
            assert!(report.pass, "{text}: {report:?}");
            let routing = block_routing(&m, &p).unwrap();
            assert!(routing.pass, "{text}: {}", routing.max_residual);
        }
        let m: MapDescriptor<f64> = parse_map("psi(sigma=[2,1])", &s).unwrap();
        assert_eq!(block_routing(&m, &p).unwrap().sigma, vec![1, 0]);
    }
}
