//! Recovery of the normal form `f = ψ ∘ δ_r ∘ J ∘ φ_a` of a CR map given
//! only evaluations and chart Jacobians.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cone::block_routing;
use crate::error::{CrError, Result};
use crate::frame::TangentVector;
use crate::linalg::{lstsq, CMatrix};
use crate::maps::{cr_factor, pushforward_with, Generator, MapDescriptor, MapOracle};
use crate::model::{jet, Signature, SurfacePoint};
use crate::sample;
use crate::scalar::{ci, cr, cz, Real, C};

/// Relative spread of sampled CR factors below which `λ` is constant.
pub const CONSTANCY_TOL: f64 = 1e-6;
/// Relative post-fit residual of `u = 1/λ` tolerated by the factor fit.
pub const FIT_TOL: f64 = 1e-6;
/// Tolerated `|λ − 1|` for a Levi-isometric map.
pub const ISOMETRY_TOL: f64 = 1e-7;
/// Tolerated unitarity defect of a recovered block before projection.
pub const UNITARY_TOL: f64 = 1e-8;
/// Tolerated pointwise reconstruction error.
pub const VALIDATION_TOL: f64 = 1e-7;
pub const DEFAULT_RADIUS: f64 = 0.1;
const FACTOR_SAMPLES: usize = 20;
const VALIDATION_SAMPLES: usize = 50;
/// Step of the three-point stencil along `t`; `u` is quadratic in `t`.
const T_STEP: f64 = 0.25;

/// The CR factor is either constant or `λ = k⁻² |z^{n+1} + a^{n+1} + 2i z_s·ā_s|⁻²`
/// with `a^{n+1} = t0 + i|a_s|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum FactorFit<T> {
    Constant { lambda: T },
    Inversion { k: T, a: Vec<C<T>>, t0: T, residual: T },
}

impl<T: Real> FactorFit<T> {
    /// `u = 1/λ` at `P` according to the fit.
    pub fn inverse_factor(&self, sig: &Signature, point: &SurfacePoint<T>) -> T {
        match self {
            FactorFit::Constant { lambda } => lambda.recip(),
            FactorFit::Inversion { k, a, t0, .. } => *k * *k * affine_top(sig, point, a, *t0).norm_sqr(),
        }
    }
}

/// `z^{n+1} + a^{n+1} + 2i z_s·ā_s`.
fn affine_top<T: Real>(sig: &Signature, point: &SurfacePoint<T>, a: &[C<T>], t0: T) -> C<T> {
    let a_top = C::new(t0, a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()));
    let pairing = sig.block_range(sig.flat_block()).zip(a).fold(cz(), |acc, (al, x)| acc + point.z[al] * x.conj());
    point.w(sig) + a_top + ci::<T>() * T::lit(2.0) * pairing
}

/// Random admissible points within `radius` of `p0` in every real chart
/// coordinate.
pub fn ball_points<T: Real, R: Rng + ?Sized>(
    sig: &Signature,
    p0: &SurfacePoint<T>,
    radius: f64,
    count: usize,
    rng: &mut R,
) -> Vec<SurfacePoint<T>> {
    let dim = 2 * sig.dim() + 1;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count {
        attempts += 1;
        let delta: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-radius..=radius))).collect();
        let p = p0.offset_real(&delta);
        if p.check_admissible(sig).is_ok() {
            out.push(p);
        }
    }
    out
}

/// Decides whether `λ` is constant near `p0` and otherwise fits `(k, a_s, t0)`.
///
/// `λ` is sampled at random points of the ball. For each, `u = 1/λ` on a
/// three-point stencil in `t` gives `k²` (second difference) and the
/// first-order coefficient `c₁`; then `c₂² = u/k² − (t + c₁)²`. Both are
/// affine in `(t0, |a_s|², Re a_s, Im a_s)`, which a least-squares solve
/// recovers.
pub fn recover_factor<T: Real, M: MapOracle<T> + ?Sized>(
    map: &M,
    p0: &SurfacePoint<T>,
    radius: f64,
    seed: u64,
) -> Result<FactorFit<T>> {
    let sig = map.signature().clone();
    let mut rng = sample::rng(seed);
    let mut pts = vec![p0.clone()];
    pts.extend(ball_points(&sig, p0, radius, FACTOR_SAMPLES - 1, &mut rng));
    let lambdas: Vec<T> = pts.iter().map(|p| cr_factor(map, p)).collect::<Result<_>>()?;
    let (lo, hi) = lambdas.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if !(lo > T::zero()) {
        return Err(CrError::FitFailure { residual: lo.to_f64_lossy(), tolerance: 0.0 });
    }
    if (hi - lo) / hi < T::lit(CONSTANCY_TOL) {
        let mean = lambdas.iter().fold(T::zero(), |acc, &l| acc + l) / T::of_usize(lambdas.len());
        return Ok(FactorFit::Constant { lambda: mean });
    }
    let h = T::lit(T_STEP);
    let mut k2s = Vec::with_capacity(pts.len());
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(2 * pts.len());
    let mut rhs: Vec<T> = Vec::with_capacity(2 * pts.len());
    let mut stencils = Vec::with_capacity(pts.len());
    for (p, &lam) in pts.iter().zip(&lambdas) {
        let shift = |d: T| SurfacePoint::new(p.z.clone(), p.t + d);
        let u0 = lam.recip();
        let up = cr_factor(map, &shift(h))?.recip();
        let um = cr_factor(map, &shift(-h))?.recip();
        k2s.push((up - u0 * T::lit(2.0) + um) / (T::lit(2.0) * h * h));
        stencils.push((u0, (up - um) / (T::lit(2.0) * h)));
    }
    // k² is the same everywhere; the median is robust to a stray stencil.
    let mut sorted = k2s.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let k2 = sorted[sorted.len() / 2];
    if !(k2 > T::zero()) {
        return Err(CrError::FitFailure { residual: k2.to_f64_lossy(), tolerance: 0.0 });
    }
    let flat = sig.block_range(sig.flat_block());
    let ns = flat.len();
    for (p, &(u0, du)) in pts.iter().zip(&stencils) {
        // du = 2k²(t + c₁)
        let c1 = du / (T::lit(2.0) * k2) - p.t;
        let c2 = (u0 / k2 - (p.t + c1) * (p.t + c1)).max(T::zero()).sqrt();
        let two = T::lit(2.0);
        // c₁ = t0 − 2 Σ (y α_r − x α_i)
        let mut row = vec![T::zero(); 2 + 2 * ns];
        row[0] = T::one();
        for (k, al) in flat.clone().enumerate() {
            row[2 + k] = -two * p.z[al].im;
            row[2 + ns + k] = two * p.z[al].re;
        }
        rows.push(row);
        rhs.push(c1);
        // c₂ − p = |a|² + 2 Σ (x α_r + y α_i)
        let mut row = vec![T::zero(); 2 + 2 * ns];
        row[1] = T::one();
        for (k, al) in flat.clone().enumerate() {
            row[2 + k] = two * p.z[al].re;
            row[2 + ns + k] = two * p.z[al].im;
        }
        rows.push(row);
        rhs.push(c2 - p.p(&sig));
    }
    let x = lstsq(&rows, &rhs).ok_or(CrError::FitFailure { residual: f64::INFINITY, tolerance: FIT_TOL })?;
    let t0 = x[0];
    let a: Vec<C<T>> = (0..ns).map(|k| C::new(x[2 + k], x[2 + ns + k])).collect();
    let k = k2.sqrt();
    let mut fit = FactorFit::Inversion { k, a, t0, residual: T::zero() };
    let umax = lambdas.iter().fold(T::zero(), |acc, &l| acc.max(l.recip()));
    let residual = pts
        .iter()
        .zip(&lambdas)
        .fold(T::zero(), |acc, (p, &l)| acc.max((fit.inverse_factor(&sig, p) - l.recip()).abs()))
        / umax;
    if !(residual <= T::lit(FIT_TOL)) {
        return Err(CrError::FitFailure { residual: residual.to_f64_lossy(), tolerance: FIT_TOL });
    }
    if let FactorFit::Inversion { residual: r, .. } = &mut fit {
        *r = residual;
    }
    Ok(fit)
}

/// `outer ∘ inner` with the chain rule on chart Jacobians.
pub struct Composed<'a, T, M: ?Sized> {
    pub outer: &'a M,
    pub inner: MapDescriptor<T>,
}

impl<T: Real, M: MapOracle<T> + ?Sized> MapOracle<T> for Composed<'_, T, M> {
    fn signature(&self) -> &Signature {
        self.outer.signature()
    }

    fn apply(&self, point: &SurfacePoint<T>) -> Result<SurfacePoint<T>> {
        self.outer.apply(&self.inner.apply(point)?)
    }

    fn chart_jacobian(&self, point: &SurfacePoint<T>) -> Result<CMatrix<T>> {
        let mid = self.inner.apply(point)?;
        Ok(&self.outer.chart_jacobian(&mid)? * &MapOracle::chart_jacobian(&self.inner, point)?)
    }
}

fn unitarize<T: Real>(b: CMatrix<T>) -> Result<CMatrix<T>> {
    let defect = b.unitarity_defect();
    if !(defect <= T::lit(UNITARY_TOL)) {
        return Err(CrError::NotLeviIsometric { deviation: defect.to_f64_lossy() });
    }
    b.unitary_polar().ok_or(CrError::NotLeviIsometric { deviation: defect.to_f64_lossy() })
}

/// Parameters of a Levi-isometric map `g` (CR factor 1) from `σ` (block
/// routing of `g_*𝒲_j`), the Jacobian blocks `∂ζ_k/∂z_{σ(k)}` at `q0` and
/// the affine parts of `ζ_s` and `τ`.
pub fn recover_levi_isometry<T: Real, M: MapOracle<T> + ?Sized>(
    map: &M,
    q0: &SurfacePoint<T>,
    seed: u64,
) -> Result<Generator<T>> {
    let sig = map.signature().clone();
    let mut rng = sample::rng(seed);
    let mut pts = vec![q0.clone()];
    pts.extend(ball_points(&sig, q0, DEFAULT_RADIUS, 9, &mut rng));
    let mut deviation = T::zero();
    for p in &pts {
        deviation = deviation.max((cr_factor(map, p)? - T::one()).abs());
    }
    if !(deviation <= T::lit(ISOMETRY_TOL)) {
        return Err(CrError::NotLeviIsometric { deviation: deviation.to_f64_lossy() });
    }
    let routing = block_routing(map, q0)?;
    if !routing.pass {
        return Err(CrError::BlockRoutingAmbiguous(format!(
            "block projections off by {:e}",
            routing.max_residual.to_f64_lossy()
        )));
    }
    let k = sig.radial_blocks();
    // routing sends input block j to output block routing.sigma[j]; the
    // generator stores, for output block k, its source block.
    let mut sigma = vec![0; k];
    for (j, &out) in routing.sigma.iter().enumerate() {
        sigma[out] = j;
    }
    let jc = map.chart_jacobian(q0)?;
    let block = |out: usize, src: usize| {
        let (ro, rs) = (sig.block_range(out), sig.block_range(src));
        CMatrix::from_fn(ro.len(), rs.len(), |r, c| jc[(ro.start + r, rs.start + c)])
    };
    let mut b_mats = Vec::with_capacity(k + 1);
    for (out, &src) in sigma.iter().enumerate() {
        b_mats.push(unitarize(block(out, src))?);
    }
    let image = map.apply(q0)?;
    let flat = sig.block_range(sig.flat_block());
    let mut b = Vec::new();
    let mut t0 = image.t - q0.t;
    if !flat.is_empty() {
        let bs = unitarize(block(sig.flat_block(), sig.flat_block()))?;
        let bz = bs.mul_vec(&q0.z[flat.clone()]);
        b = image.z[flat.clone()].iter().zip(&bz).map(|(x, y)| x - y).collect();
        let pairing = bz.iter().zip(&b).fold(cz(), |acc, (x, y)| acc + x * y.conj());
        t0 -= (ci::<T>() * T::lit(2.0) * pairing).re;
        b_mats.push(bs);
    }
    let g = Generator::Psi { sigma, b_mats, b, t0 };
    g.validate(&sig)?;
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JKind {
    Identity,
    Inversion,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Classification<T> {
    pub j: JKind,
    pub r: T,
    pub a: Vec<C<T>>,
    pub a_t0: T,
    /// Always a `Generator::Psi`.
    pub psi: Generator<T>,
    /// Largest pointwise reconstruction error on the validation points.
    pub residual: T,
    /// Largest relative error of the fitted `λ` on the validation points.
    pub lambda_residual: T,
    pub gauge_note: String,
}

impl<T: Real> Classification<T> {
    /// `ψ ∘ δ_r ∘ J ∘ φ_a`, without the trivial factors.
    pub fn word(&self, sig: &Signature) -> MapDescriptor<T> {
        let mut word = vec![self.psi.clone(), Generator::Dil { r: self.r }];
        if self.j == JKind::Inversion {
            word.push(Generator::Inv);
            word.push(Generator::Phi { a: self.a.clone(), t0: self.a_t0 });
        }
        MapDescriptor { signature: sig.clone(), word }
    }

    /// `δ_r ∘ J ∘ φ_a`, the part fixed by the CR factor.
    fn normalizer(sig: &Signature, j: JKind, r: T, a: &[C<T>], t0: T) -> MapDescriptor<T> {
        let mut word = vec![Generator::Dil { r }];
        if j == JKind::Inversion {
            word.push(Generator::Inv);
            word.push(Generator::Phi { a: a.to_vec(), t0 });
        }
        MapDescriptor { signature: sig.clone(), word }
    }
}

const GAUGE_CONSTANT: &str = "constant CR factor: J is the identity and a = 0, the translation is carried by psi";
const GAUGE_INVERSION: &str = "k > 0 and a are fixed by the CR factor; psi = f o G^-1";

/// Largest `max(|Δz|, |Δt|) / max(1, |f(P)|)` between two evaluations.
fn point_error<T: Real>(a: &SurfacePoint<T>, b: &SurfacePoint<T>) -> T {
    let scale = a.z.iter().fold(T::one().max(a.t.abs()), |acc, x| acc.max(x.norm()));
    let err = a.z.iter().zip(&b.z).fold((a.t - b.t).abs(), |acc, (x, y)| acc.max((x - y).norm()));
    err / scale
}

/// Full decision procedure around `p0`: factor fit, normalizer
/// `G = δ_{1/k} ∘ I ∘ φ_a` (or `δ_r`), `ψ = f ∘ G⁻¹` and validation on 50
/// fresh points.
pub fn classify<T: Real, M: MapOracle<T> + ?Sized>(map: &M, p0: &SurfacePoint<T>, seed: u64) -> Result<Classification<T>> {
    let sig = map.signature().clone();
    let fit = recover_factor(map, p0, DEFAULT_RADIUS, seed)?;
    let (j, r, a, a_t0, note) = match &fit {
        FactorFit::Constant { lambda } => (JKind::Identity, lambda.sqrt(), vec![cz(); sig.flat_dim()], T::zero(), GAUGE_CONSTANT),
        FactorFit::Inversion { k, a, t0, .. } => (JKind::Inversion, k.recip(), a.clone(), *t0, GAUGE_INVERSION),
    };
    let g = Classification::normalizer(&sig, j, r, &a, a_t0);
    let psi_oracle = Composed { outer: map, inner: g.inverse() };
    let q0 = g.apply(p0)?;
    let psi = recover_levi_isometry(&psi_oracle, &q0, seed ^ 0x9e37)?;
    let mut out = Classification {
        j,
        r,
        a,
        a_t0,
        psi,
        residual: T::zero(),
        lambda_residual: T::zero(),
        gauge_note: note.to_string(),
    };
    let word = out.word(&sig);
    let mut rng = sample::rng(seed.wrapping_add(1));
    let pts = ball_points(&sig, p0, DEFAULT_RADIUS, VALIDATION_SAMPLES, &mut rng);
    for p in &pts {
        out.residual = out.residual.max(point_error(&map.apply(p)?, &word.apply(p)?));
        let lam = cr_factor(map, p)?;
        out.lambda_residual = out.lambda_residual.max((fit.inverse_factor(&sig, p) * lam - T::one()).abs());
    }
    if !(out.residual <= T::lit(VALIDATION_TOL)) {
        return Err(CrError::ValidationFailure { residual: out.residual.to_f64_lossy(), tolerance: VALIDATION_TOL });
    }
    Ok(out)
}

/// One tabulated evaluation of a map: point, image and chart Jacobian rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SampleRecord<T> {
    pub point: SurfacePoint<T>,
    pub image: SurfacePoint<T>,
    pub jacobian: Vec<Vec<C<T>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SampleTable<T> {
    pub signature: Signature,
    pub samples: Vec<SampleRecord<T>>,
}

impl<T: Real> SampleTable<T> {
    pub fn tabulate<M: MapOracle<T> + ?Sized>(map: &M, points: &[SurfacePoint<T>]) -> Result<Self> {
        let samples = points
            .iter()
            .map(|p| {
                Ok(SampleRecord { point: p.clone(), image: map.apply(p)?, jacobian: map.chart_jacobian(p)?.to_rows() })
            })
            .collect::<Result<_>>()?;
        Ok(Self { signature: map.signature().clone(), samples })
    }

    pub fn oracle(&self) -> TabulatedOracle<'_, T> {
        TabulatedOracle { table: self }
    }
}

/// A map known only at tabulated points.
pub struct TabulatedOracle<'a, T> {
    table: &'a SampleTable<T>,
}

impl<T: Real> TabulatedOracle<'_, T> {
    fn find(&self, point: &SurfacePoint<T>) -> Result<&SampleRecord<T>> {
        let tol = T::lit(1e-12);
        self.table
            .samples
            .iter()
            .find(|r| point_error(&r.point, point) <= tol)
            .ok_or_else(|| CrError::MapDomainError("point is not in the sample table".into()))
    }
}

impl<T: Real> MapOracle<T> for TabulatedOracle<'_, T> {
    fn signature(&self) -> &Signature {
        &self.table.signature
    }

    fn apply(&self, point: &SurfacePoint<T>) -> Result<SurfacePoint<T>> {
        Ok(self.find(point)?.image.clone())
    }

    fn chart_jacobian(&self, point: &SurfacePoint<T>) -> Result<CMatrix<T>> {
        let rows = &self.find(point)?.jacobian;
        let n = self.table.signature.dim();
        CMatrix::from_rows(rows)
            .filter(|m| m.rows() == 2 * n + 1 && m.cols() == 2 * n + 1)
            .ok_or(CrError::DimensionMismatch { expected: 2 * n + 1, found: rows.len() })
    }
}

/// Complex least squares `min Σ |Σ_c a_rc x_c − b_r|²` through the real
/// embedding.
fn complex_lstsq<T: Real>(a: &[Vec<C<T>>], b: &[C<T>]) -> Option<Vec<C<T>>> {
    let n = a.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(2 * a.len());
    let mut rhs = Vec::with_capacity(2 * a.len());
    for (row, y) in a.iter().zip(b) {
        rows.push(row.iter().map(|x| x.re).chain(row.iter().map(|x| -x.im)).collect());
        rhs.push(y.re);
        rows.push(row.iter().map(|x| x.im).chain(row.iter().map(|x| x.re)).collect());
        rhs.push(y.im);
    }
    let x = lstsq(&rows, &rhs)?;
    Some((0..n).map(|c| C::new(x[c], x[n + c])).collect())
}

/// Classification from tabulated data alone.
///
/// `u = 1/λ` is linear in the unknowns `k²`, `k²a^{n+1}`, `2ik²ā_s` and
/// three quadratic combinations of them, so one least-squares solve fits it;
/// the `ψ` blocks then follow from affine least-squares fits between
/// `G(P_i)` and `f(P_i)`.
pub fn classify_samples<T: Real>(table: &SampleTable<T>) -> Result<Classification<T>> {
    let sig = table.signature.clone();
    let n = sig.dim();
    if table.samples.is_empty() {
        return Err(CrError::FitFailure { residual: f64::INFINITY, tolerance: FIT_TOL });
    }
    let mut lambdas = Vec::with_capacity(table.samples.len());
    for rec in &table.samples {
        let jc = CMatrix::from_rows(&rec.jacobian).ok_or(CrError::DimensionMismatch {
            expected: 2 * n + 1,
            found: rec.jacobian.len(),
        })?;
        let g0 = jet(&sig, &rec.point)?.grad;
        let g1 = jet(&sig, &rec.image)?.grad;
        lambdas.push(pushforward_with(&jc, &g0, &g1, &TangentVector::reeb(n)).t.re);
    }
    let (lo, hi) = lambdas.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if !(lo > T::zero()) {
        return Err(CrError::FitFailure { residual: lo.to_f64_lossy(), tolerance: 0.0 });
    }
    let fit = if (hi - lo) / hi < T::lit(CONSTANCY_TOL) {
        FactorFit::Constant { lambda: lambdas.iter().fold(T::zero(), |acc, &l| acc + l) / T::of_usize(lambdas.len()) }
    } else {
        fit_factor_linear(&sig, table, &lambdas)?
    };
    let (j, r, a, a_t0, note) = match &fit {
        FactorFit::Constant { lambda } => (JKind::Identity, lambda.sqrt(), vec![cz(); sig.flat_dim()], T::zero(), GAUGE_CONSTANT),
        FactorFit::Inversion { k, a, t0, .. } => (JKind::Inversion, k.recip(), a.clone(), *t0, GAUGE_INVERSION),
    };
    let g = Classification::normalizer(&sig, j, r, &a, a_t0);
    let pairs: Vec<(SurfacePoint<T>, SurfacePoint<T>)> =
        table.samples.iter().map(|rec| Ok((g.apply(&rec.point)?, rec.image.clone()))).collect::<Result<_>>()?;
    let psi = fit_psi(&sig, &pairs)?;
    let mut out = Classification {
        j,
        r,
        a,
        a_t0,
        psi,
        residual: T::zero(),
        lambda_residual: T::zero(),
        gauge_note: note.to_string(),
    };
    let word = out.word(&sig);
    for (rec, &lam) in table.samples.iter().zip(&lambdas) {
        out.residual = out.residual.max(point_error(&rec.image, &word.apply(&rec.point)?));
        out.lambda_residual = out.lambda_residual.max((fit.inverse_factor(&sig, &rec.point) * lam - T::one()).abs());
    }
    if !(out.residual <= T::lit(VALIDATION_TOL)) {
        return Err(CrError::ValidationFailure { residual: out.residual.to_f64_lossy(), tolerance: VALIDATION_TOL });
    }
    Ok(out)
}

fn fit_factor_linear<T: Real>(sig: &Signature, table: &SampleTable<T>, lambdas: &[T]) -> Result<FactorFit<T>> {
    let flat: Vec<usize> = sig.block_range(sig.flat_block()).collect();
    let ns = flat.len();
    let two = T::lit(2.0);
    // u = K|w|² + 2Re(w̄β) + 2Re(w̄ Σ z_α γ_α) + E + 2Re(Σ z_α F_α) + Σ z_α z̄_β M_{αβ}
    let mut rows = Vec::with_capacity(table.samples.len());
    let mut rhs = Vec::with_capacity(table.samples.len());
    for (rec, &lam) in table.samples.iter().zip(lambdas) {
        let w = rec.point.w(sig);
        let z: Vec<C<T>> = flat.iter().map(|&al| rec.point.z[al]).collect();
        let mut row = vec![w.norm_sqr(), two * w.re, two * w.im];
        for x in &z {
            let c = w.conj() * x;
            row.push(two * c.re);
            row.push(-two * c.im);
        }
        row.push(T::one());
        for x in &z {
            row.push(two * x.re);
            row.push(-two * x.im);
        }
        for a in 0..ns {
            row.push(z[a].norm_sqr());
            for b in a + 1..ns {
                let c = z[a] * z[b].conj();
                row.push(two * c.re);
                row.push(-two * c.im);
            }
        }
        rows.push(row);
        rhs.push(lam.recip());
    }
    let x = lstsq(&rows, &rhs).ok_or(CrError::FitFailure { residual: f64::INFINITY, tolerance: FIT_TOL })?;
    let k2 = x[0];
    if !(k2 > T::zero()) {
        return Err(CrError::FitFailure { residual: k2.to_f64_lossy(), tolerance: FIT_TOL });
    }
    let beta = C::new(x[1], x[2]);
    let a_top = beta / k2;
    let a: Vec<C<T>> = (0..ns)
        .map(|k| (C::new(x[3 + 2 * k], x[4 + 2 * k]) / (ci::<T>() * two * k2)).conj())
        .collect();
    let mut fit = FactorFit::Inversion { k: k2.sqrt(), a, t0: a_top.re, residual: T::zero() };
    let umax = lambdas.iter().fold(T::zero(), |acc, &l| acc.max(l.recip()));
    let residual = table
        .samples
        .iter()
        .zip(lambdas)
        .fold(T::zero(), |acc, (rec, &l)| acc.max((fit.inverse_factor(sig, &rec.point) - l.recip()).abs()))
        / umax;
    if !(residual <= T::lit(FIT_TOL)) {
        return Err(CrError::FitFailure { residual: residual.to_f64_lossy(), tolerance: FIT_TOL });
    }
    if let FactorFit::Inversion { residual: r, .. } = &mut fit {
        *r = residual;
    }
    Ok(fit)
}

/// Fits `ζ_k = B_k z_{σ(k)}`, `ζ_s = B_s z_s + b`, `τ = t + t0 + Re(2i(B_s z_s)·b̄)`
/// from `(q, ψ(q))` pairs, choosing each `σ(k)` by least residual.
fn fit_psi<T: Real>(sig: &Signature, pairs: &[(SurfacePoint<T>, SurfacePoint<T>)]) -> Result<Generator<T>> {
    let k = sig.radial_blocks();
    let fail = || CrError::FitFailure { residual: f64::INFINITY, tolerance: VALIDATION_TOL };
    let fit_block = |out: usize, src: usize, affine: bool| -> Option<(CMatrix<T>, Vec<C<T>>, T)> {
        let (ro, rs) = (sig.block_range(out), sig.block_range(src));
        let design: Vec<Vec<C<T>>> = pairs
            .iter()
            .map(|(q, _)| {
                let mut row = q.z[rs.clone()].to_vec();
                if affine {
                    row.push(cr(T::one()));
                }
                row
            })
            .collect();
        let mut b = CMatrix::zeros(ro.len(), rs.len());
        let mut shift = Vec::new();
        let mut resid = T::zero();
        for (r, o) in ro.clone().enumerate() {
            let target: Vec<C<T>> = pairs.iter().map(|(_, img)| img.z[o]).collect();
            let coef = complex_lstsq(&design, &target)?;
            for c in 0..rs.len() {
                b[(r, c)] = coef[c];
            }
            if affine {
                shift.push(coef[rs.len()]);
            }
            for (row, y) in design.iter().zip(&target) {
                let pred = row.iter().zip(&coef).fold(cz::<T>(), |acc, (x, c)| acc + x * c);
                resid = resid.max((pred - y).norm());
            }
        }
        Some((b, shift, resid))
    };
    let mut sigma = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut b_mats = Vec::with_capacity(k + 1);
    for out in 0..k {
        let mut best: Option<(usize, CMatrix<T>, T)> = None;
        for src in (0..k).filter(|&s| !used[s] && sig.blocks_compatible(out, s)) {
            let (b, _, resid) = fit_block(out, src, false).ok_or_else(fail)?;
            if best.as_ref().is_none_or(|(_, _, r)| resid < *r) {
                best = Some((src, b, resid));
            }
        }
        let (src, b, _) = best.ok_or_else(|| CrError::BlockRoutingAmbiguous(format!("no source for block {}", out + 1)))?;
        used[src] = true;
        sigma[out] = src;
        b_mats.push(unitarize(b)?);
    }
    let mut b = Vec::new();
    let flat = sig.block_range(sig.flat_block());
    if !flat.is_empty() {
        let (bs, shift, _) = fit_block(sig.flat_block(), sig.flat_block(), true).ok_or_else(fail)?;
        b = shift;
        b_mats.push(unitarize(bs)?);
    }
    let mut t0 = T::zero();
    for (q, img) in pairs {
        let mut est = img.t - q.t;
        if let Some(bs) = b_mats.get(k) {
            let bz = bs.mul_vec(&q.z[flat.clone()]);
            let pairing = bz.iter().zip(&b).fold(cz(), |acc, (x, y)| acc + x * y.conj());
            est -= (ci::<T>() * T::lit(2.0) * pairing).re;
        }
        t0 += est;
    }
    t0 /= T::of_usize(pairs.len());
    let g = Generator::Psi { sigma, b_mats, b, t0 };
    g.validate(sig)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{parse_map, FnOracle};

    fn sig(text: &str) -> Signature {
        text.parse().unwrap()
    }

    fn psi_parts(g: &Generator<f64>) -> (&[usize], &[CMatrix<f64>], &[C<f64>], f64) {
        match g {
            Generator::Psi { sigma, b_mats, b, t0 } => (sigma, b_mats, b, *t0),
            _ => panic!("not psi"),
        }
    }

    #[test]
    fn dilation_has_constant_factor() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(1);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let m: MapDescriptor<f64> = parse_map("dil(r=2)", &s).unwrap();
        match recover_factor(&m, &p, DEFAULT_RADIUS, 3).unwrap() {
            FactorFit::Constant { lambda } => assert!((lambda - 4.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let c = classify(&m, &p, 3).unwrap();
        assert_eq!(c.j, JKind::Identity);
        assert!((c.r - 2.0).abs() < 1e-12);
        let (sigma, b_mats, b, t0) = psi_parts(&c.psi);
        assert_eq!(sigma, &[0]);
        assert!(b_mats.iter().all(|m| m.sub(&CMatrix::identity(m.rows())).max_abs() < 1e-9));
        assert!(b[0].norm() < 1e-9 && t0.abs() < 1e-9);
    }

    #[test]
    fn inversion_factor() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(2);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let m: MapDescriptor<f64> = parse_map("inv", &s).unwrap();
        match recover_factor(&m, &p, DEFAULT_RADIUS, 4).unwrap() {
            FactorFit::Inversion { k, a, t0, .. } => {
                assert!((k - 1.0).abs() < 1e-8);
                assert!(a[0].norm() < 1e-8 && t0.abs() < 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthesized_inversion_is_recovered() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(3);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let m: MapDescriptor<f64> = parse_map("dil(r=0.3333333333333333) . inv . phi(a=[0.4-0.2i];t0=0.7)", &s).unwrap();
        match recover_factor(&m, &p, DEFAULT_RADIUS, 5).unwrap() {
            FactorFit::Inversion { k, a, t0, .. } => {
                assert!((k - 3.0).abs() < 1e-8, "{k}");
                assert!((a[0] - C::new(0.4, -0.2)).norm() < 1e-8);
                assert!((t0 - 0.7).abs() < 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn psi_round_trip() {
        let s = sig("m=2,2;n=2,2,1");
        for seed in 0..5 {
            let mut rng = sample::rng(seed);
            let g: Generator<f64> = sample::psi(&s, &mut rng);
            let m = MapDescriptor::single(s.clone(), g.clone()).unwrap();
            let q: SurfacePoint<f64> = sample::point(&s, &mut rng);
            let got = recover_levi_isometry(&m, &q, 1).unwrap();
            let (s1, b1, v1, t1) = psi_parts(&g);
            let (s2, b2, v2, t2) = psi_parts(&got);
            assert_eq!(s1, s2);
            for (x, y) in b1.iter().zip(b2) {
                assert!(x.sub(y).max_abs() < 1e-9);
            }
            assert!(v1.iter().zip(v2).all(|(x, y)| (x - y).norm() < 1e-9));
            assert!((t1 - t2).abs() < 1e-9);
        }
    }

    #[test]
    fn non_isometric_rejected() {
        let s = sig("m=2;n=2,1");
        let p = SurfacePoint::new(vec![C::new(1.0, 0.0), cz(), cz()], 0.0);
        let m: MapDescriptor<f64> = parse_map("dil(r=2)", &s).unwrap();
        assert!(matches!(recover_levi_isometry(&m, &p, 1), Err(CrError::NotLeviIsometric { .. })));
    }

    #[test]
    fn translation_lands_in_psi() {
        let s = sig("m=2;n=2,1");
        let p = SurfacePoint::new(vec![C::new(0.8, 0.1), C::new(0.2, -0.3), C::new(0.1, 0.4)], 0.3);
        let m: MapDescriptor<f64> = parse_map("phi(a=[0.3+0.4i];t0=-0.6)", &s).unwrap();
        let c = classify(&m, &p, 2).unwrap();
        assert_eq!(c.j, JKind::Identity);
        assert!((c.r - 1.0).abs() < 1e-12);
        let (_, _, b, t0) = psi_parts(&c.psi);
        assert!((b[0] - C::new(0.3, 0.4)).norm() < 1e-9);
        assert!((t0 + 0.6).abs() < 1e-9);
    }

    #[test]
    fn composite_round_trip() {
        let s = sig("m=2,3;n=2,2,1");
        for seed in 0..4 {
            let mut rng = sample::rng(100 + seed);
            let word: MapDescriptor<f64> = sample::normal_form(&s, &mut rng, true);
            let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
            let c = classify(&word, &p, seed).unwrap();
            assert_eq!(c.j, JKind::Inversion);
            assert!(c.residual < 1e-7, "{}", c.residual);
            assert!(c.lambda_residual < 1e-8, "{}", c.lambda_residual);
        }
    }

    #[test]
    fn tabulated_round_trip() {
        for text in ["m=2;n=2,1", "m=2;n=2,0", "m=2,3;n=2,2,1"] {
            let s = sig(text);
            for (seed, inversion) in [(7, true), (8, false)] {
                let mut rng = sample::rng(seed);
                let word: MapDescriptor<f64> = sample::normal_form(&s, &mut rng, inversion);
                let pts: Vec<SurfacePoint<f64>> = (0..60).map(|_| sample::point(&s, &mut rng)).collect();
                let table = SampleTable::tabulate(&word, &pts).unwrap();
                let c = classify_samples(&table).unwrap();
                assert_eq!(c.j == JKind::Inversion, inversion, "{text}");
                assert!(c.residual < 1e-7, "{text}: {}", c.residual);
            }
        }
    }

    #[test]
    fn tabulated_oracle_lookup() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(9);
        let word: MapDescriptor<f64> = parse_map("dil(r=2)", &s).unwrap();
        let pts: Vec<SurfacePoint<f64>> = (0..3).map(|_| sample::point(&s, &mut rng)).collect();
        let table = SampleTable::tabulate(&word, &pts).unwrap();
        let oracle = table.oracle();
        assert!(crate::maps::verify_cr(&oracle, &pts).unwrap().pass);
        let other: SurfacePoint<f64> = sample::point(&s, &mut rng);
        assert!(matches!(oracle.apply(&other), Err(CrError::MapDomainError(_))));
    }

    #[test]
    fn non_cr_map_fails_fit_or_validation() {
        let s = sig("m=2;n=2,1");
        let p = SurfacePoint::new(vec![C::new(0.8, 0.1), C::new(0.2, -0.3), C::new(0.1, 0.4)], 0.3);
        let oracle = FnOracle {
            signature: s.clone(),
            f: |q: &SurfacePoint<f64>| {
                let mut out = q.clone();
                out.t += 0.1 * q.z[2].norm_sqr();
                Ok(out)
            },
        };
        assert!(classify(&oracle, &p, 1).is_err());
    }
}
