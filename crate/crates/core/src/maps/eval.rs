use serde::{Deserialize, Serialize};

use crate::error::{CrError, Result};
use crate::frame::{levi, TangentVector};
use crate::linalg::CMatrix;
use crate::model::{defining_function, jet, Signature, SurfacePoint};
use crate::sample;
use crate::scalar::{ci, cr, cz, dot_conj, Real, C};

use super::{Generator, MapDescriptor};

/// Inversion is refused when `|z^{n+1}|` is below this.
const INV_GUARD: f64 = 1e-10;
/// Tolerance on `Im ζ^{n+1} − p(ζ)` after each generator, relative to the
/// size of the image; floored at a multiple of epsilon for `f32`.
const SURFACE_TOL: f64 = 1e-10;

/// Image point and holomorphic Jacobian in ambient coordinates.
///
/// `dzeta[(β, α)] = ∂ζ^β/∂z^α` with index `n` standing for `z^{n+1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct MapJet<T> {
    pub image: SurfacePoint<T>,
    pub dzeta: CMatrix<T>,
}

fn generator_ambient<T: Real>(
    sig: &Signature,
    g: &Generator<T>,
    z: &[C<T>],
    w: C<T>,
) -> Result<(Vec<C<T>>, C<T>, CMatrix<T>)> {
    let n = sig.dim();
    let mut jac = CMatrix::zeros(n + 1, n + 1);
    let mut zeta = z.to_vec();
    let omega;
    match g {
        Generator::Inv => {
            if w.norm() < T::lit(INV_GUARD) {
                return Err(CrError::MapDomainError(format!(
                    "inversion needs |z^(n+1)| >= {INV_GUARD:e}, got {:e}",
                    w.norm().to_f64_lossy()
                )));
            }
            if sig.radial_blocks() > 0 && w.im <= T::zero() && w.re <= T::zero() {
                return Err(CrError::BranchFailure("z^(n+1) on the non-positive real axis".into()));
            }
            for j in 0..sig.blocks() {
                let m = T::of_usize(sig.exponent(j) as usize);
                let (f, df) = if sig.exponent(j) == 1 {
                    (w.inv(), -(w * w).inv())
                } else {
                    let f = w.powf(-m.recip());
                    (f, -f / (w * m))
                };
                for a in sig.block_range(j) {
                    zeta[a] = z[a] * f;
                    jac[(a, a)] = f;
                    jac[(a, n)] = z[a] * df;
                }
            }
            omega = -w.inv();
            jac[(n, n)] = (w * w).inv();
        }
        Generator::Dil { r } => {
            for j in 0..sig.blocks() {
                let f = r.powf(T::of_usize(sig.exponent(j) as usize).recip());
                for a in sig.block_range(j) {
                    zeta[a] = z[a] * f;
                    jac[(a, a)] = cr(f);
                }
            }
            omega = w * (*r * *r);
            jac[(n, n)] = cr(*r * *r);
        }
        Generator::Psi { sigma, b_mats, b, t0 } => {
            for (k, &src) in sigma.iter().enumerate() {
                let out = sig.block_range(k);
                let inp: Vec<usize> = sig.block_range(src).collect();
                for (row, beta) in out.enumerate() {
                    let mut acc = cz();
                    for (col, &alpha) in inp.iter().enumerate() {
                        let coeff = b_mats[k][(row, col)];
                        acc += coeff * z[alpha];
                        jac[(beta, alpha)] = coeff;
                    }
                    zeta[beta] = acc;
                }
            }
            let flat: Vec<usize> = sig.block_range(sig.flat_block()).collect();
            let mut cross = cz();
            if let Some(bs) = b_mats.get(sigma.len()) {
                let zs: Vec<C<T>> = flat.iter().map(|&a| z[a]).collect();
                let image = bs.mul_vec(&zs);
                cross = dot_conj(&image, b);
                for (row, &beta) in flat.iter().enumerate() {
                    zeta[beta] = image[row] + b[row];
                    for (col, &alpha) in flat.iter().enumerate() {
                        jac[(beta, alpha)] = bs[(row, col)];
                    }
                }
                for (col, &alpha) in flat.iter().enumerate() {
                    let mut d = cz();
                    for (row, bv) in b.iter().enumerate() {
                        d += bs[(row, col)] * bv.conj();
                    }
                    jac[(n, alpha)] = ci::<T>() * T::lit(2.0) * d;
                }
            }
            let b_norm = b.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
            omega = C::new(*t0, b_norm) + w + ci::<T>() * T::lit(2.0) * cross;
            jac[(n, n)] = cr(T::one());
        }
        Generator::Phi { a, t0 } => {
            let flat: Vec<usize> = sig.block_range(sig.flat_block()).collect();
            let mut cross = cz();
            for (k, &alpha) in flat.iter().enumerate() {
                zeta[alpha] = z[alpha] + a[k];
                jac[(alpha, alpha)] = cr(T::one());
                cross += z[alpha] * a[k].conj();
                jac[(n, alpha)] = ci::<T>() * T::lit(2.0) * a[k].conj();
            }
            for j in 0..sig.radial_blocks() {
                for alpha in sig.block_range(j) {
                    jac[(alpha, alpha)] = cr(T::one());
                }
            }
            let a_norm = a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
            omega = w + C::new(*t0, a_norm) + ci::<T>() * T::lit(2.0) * cross;
            jac[(n, n)] = cr(T::one());
        }
    }
    Ok((zeta, omega, jac))
}

fn step<T: Real>(sig: &Signature, g: &Generator<T>, point: &SurfacePoint<T>) -> Result<(SurfacePoint<T>, CMatrix<T>)> {
    point.check_admissible(sig)?;
    let w = point.w(sig);
    let (zeta, omega, jac) = generator_ambient(sig, g, &point.z, w)?;
    let p_image = defining_function(sig, &zeta);
    let scale = T::one().max(omega.norm()).max(p_image);
    let residual = (omega.im - p_image).abs();
    let tol = T::lit(SURFACE_TOL).max(T::epsilon() * T::lit(1e3));
    if !(residual <= tol * scale) {
        return Err(CrError::MapDomainError(format!(
            "image leaves the surface (residual {:e})",
            residual.to_f64_lossy()
        )));
    }
    let image = SurfacePoint::new(zeta, omega.re);
    image.check_admissible(sig).map_err(|e| CrError::MapDomainError(format!("image not admissible: {e}")))?;
    Ok((image, jac))
}

impl<T: Real> MapDescriptor<T> {
    pub fn apply(&self, point: &SurfacePoint<T>) -> Result<SurfacePoint<T>> {
        point.check_admissible(&self.signature)?;
        let mut cur = point.clone();
        for g in self.word.iter().rev() {
            cur = step(&self.signature, g, &cur)?.0;
        }
        Ok(cur)
    }

    /// Image and holomorphic Jacobian by the chain rule.
    pub fn map_jet(&self, point: &SurfacePoint<T>) -> Result<MapJet<T>> {
        point.check_admissible(&self.signature)?;
        let n = self.signature.dim();
        let mut cur = point.clone();
        let mut total = CMatrix::identity(n + 1);
        for g in self.word.iter().rev() {
            let (next, jac) = step(&self.signature, g, &cur)?;
            total = &jac * &total;
            cur = next;
        }
        Ok(MapJet { image: cur, dzeta: total })
    }
}

/// `(2n+1)×(2n+1)` complex Jacobian of the chart map `(z, t) ↦ (ζ, τ)` in
/// the coordinates `(z^α, z̄^α, t)`: rows `ζ^β, ζ̄^β, τ`.
pub fn chart_jacobian_from_holomorphic<T: Real>(dzeta: &CMatrix<T>, grad: &[C<T>]) -> CMatrix<T> {
    let n = grad.len();
    let dim = 2 * n + 1;
    let mut jc = CMatrix::zeros(dim, dim);
    let i = ci::<T>();
    let half = T::lit(0.5);
    for b in 0..n {
        let jw = dzeta[(b, n)];
        for a in 0..n {
            let dz = dzeta[(b, a)] + jw * i * grad[a];
            let dzb = jw * i * grad[a].conj();
            jc[(b, a)] = dz;
            jc[(b, n + a)] = dzb;
            jc[(n + b, a)] = dzb.conj();
            jc[(n + b, n + a)] = dz.conj();
        }
        jc[(b, 2 * n)] = jw;
        jc[(n + b, 2 * n)] = jw.conj();
    }
    let jww = dzeta[(n, n)];
    for a in 0..n {
        let d = (dzeta[(n, a)] + i * jww * grad[a] - i * jww.conj() * grad[a]) * half;
        jc[(2 * n, a)] = d;
        jc[(2 * n, n + a)] = d.conj();
    }
    jc[(2 * n, 2 * n)] = cr(jww.re);
    jc
}

/// Step for finite-difference chart Jacobians.
pub const CHART_FD_STEP: f64 = 1e-6;

/// Black-box access to a map on the surface: evaluation and chart Jacobian.
pub trait MapOracle<T: Real> {
    fn signature(&self) -> &Signature;

    fn apply(&self, point: &SurfacePoint<T>) -> Result<SurfacePoint<T>>;

    fn chart_jacobian(&self, point: &SurfacePoint<T>) -> Result<CMatrix<T>> {
        numeric_chart_jacobian(|p| self.apply(p), point, CHART_FD_STEP)
    }
}

impl<T: Real> MapOracle<T> for MapDescriptor<T> {
    fn signature(&self) -> &Signature {
        &self.signature
    }

    fn apply(&self, point: &SurfacePoint<T>) -> Result<SurfacePoint<T>> {
        MapDescriptor::apply(self, point)
    }

    fn chart_jacobian(&self, point: &SurfacePoint<T>) -> Result<CMatrix<T>> {
        let mj = self.map_jet(point)?;
        let grad = jet(&self.signature, point)?.grad;
        Ok(chart_jacobian_from_holomorphic(&mj.dzeta, &grad))
    }
}

/// Wraps a closure as a map oracle with a finite-difference Jacobian.
pub struct FnOracle<F> {
    pub signature: Signature,
    pub f: F,
}

impl<T: Real, F: Fn(&SurfacePoint<T>) -> Result<SurfacePoint<T>>> MapOracle<T> for FnOracle<F> {
    fn signature(&self) -> &Signature {
        &self.signature
    }

    fn apply(&self, point: &SurfacePoint<T>) -> Result<SurfacePoint<T>> {
        (self.f)(point)
    }
}

/// Central differences of the chart map on the real coordinates
/// `(x_1, y_1, …, x_n, y_n, t)`, assembled into Wirtinger form.
pub fn numeric_chart_jacobian<T: Real>(
    f: impl Fn(&SurfacePoint<T>) -> Result<SurfacePoint<T>>,
    point: &SurfacePoint<T>,
    step: f64,
) -> Result<CMatrix<T>> {
    let n = point.dim();
    let dim = 2 * n + 1;
    let h = T::lit(step);
    // real[c] = derivative of (ζ_1..ζ_n, τ) along real coordinate c
    let mut real: Vec<(Vec<C<T>>, T)> = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut delta = vec![T::zero(); dim];
        delta[c] = h;
        let plus = f(&point.offset_real(&delta))?;
        delta[c] = -h;
        let minus = f(&point.offset_real(&delta))?;
        let dz: Vec<C<T>> = plus.z.iter().zip(&minus.z).map(|(a, b)| (a - b) / (h + h)).collect();
        real.push((dz, (plus.t - minus.t) / (h + h)));
    }
    let half = T::lit(0.5);
    let i = ci::<T>();
    let mut jc = CMatrix::zeros(dim, dim);
    for a in 0..n {
        let (dx, tx) = &real[2 * a];
        let (dy, ty) = &real[2 * a + 1];
        for b in 0..n {
            let dz = (dx[b] - i * dy[b]) * half;
            let dzb = (dx[b] + i * dy[b]) * half;
            jc[(b, a)] = dz;
            jc[(b, n + a)] = dzb;
            jc[(n + b, a)] = dzb.conj();
            jc[(n + b, n + a)] = dz.conj();
        }
        let d = (cr(*tx) - i * *ty) * half;
        jc[(2 * n, a)] = d;
        jc[(2 * n, n + a)] = d.conj();
    }
    let (dt, tt) = &real[2 * n];
    for b in 0..n {
        jc[(b, 2 * n)] = dt[b];
        jc[(n + b, 2 * n)] = dt[b].conj();
    }
    jc[(2 * n, 2 * n)] = cr(*tt);
    Ok(jc)
}

/// Pushforward of `V` at `P` given the chart Jacobian and `p_α` at `P` and
/// at the image, expressed in the adapted frame at the image.
pub fn pushforward_with<T: Real>(
    chart_jac: &CMatrix<T>,
    grad_src: &[C<T>],
    grad_dst: &[C<T>],
    v: &TangentVector<T>,
) -> TangentVector<T> {
    let chart = v.to_chart(grad_src);
    TangentVector::from_chart(&chart_jac.mul_vec(&chart), grad_dst)
}

pub fn pushforward<T: Real, M: MapOracle<T> + ?Sized>(
    map: &M,
    point: &SurfacePoint<T>,
    v: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    let sig = map.signature();
    let image = map.apply(point)?;
    let jc = map.chart_jacobian(point)?;
    let g0 = jet(sig, point)?.grad;
    let g1 = jet(sig, &image)?.grad;
    Ok(pushforward_with(&jc, &g0, &g1, v))
}

/// CR factor `λ = θ_{f(P)}(f_* T)`.
pub fn cr_factor<T: Real, M: MapOracle<T> + ?Sized>(map: &M, point: &SurfacePoint<T>) -> Result<T> {
    let n = map.signature().dim();
    Ok(pushforward(map, point, &TangentVector::reeb(n))?.t.re)
}

/// CR factor together with the largest relative deviation of
/// `|f_*V|² / |V|²` from it over three seeded random `(1,0)` vectors.
pub fn cr_factor_checked<T: Real, M: MapOracle<T> + ?Sized>(map: &M, point: &SurfacePoint<T>) -> Result<(T, T)> {
    let sig = map.signature();
    let n = sig.dim();
    let image = map.apply(point)?;
    let jc = map.chart_jacobian(point)?;
    let g0 = jet(sig, point)?.grad;
    let g1 = jet(sig, &image)?.grad;
    let l0 = levi(sig, point)?;
    let l1 = levi(sig, &image)?;
    let lambda = pushforward_with(&jc, &g0, &g1, &TangentVector::reeb(n)).t.re;
    let mut rng = sample::rng(0x5eed);
    let mut dev = T::zero();
    for _ in 0..3 {
        let v = sample::holomorphic_vector::<T, _>(n, &mut rng);
        let fv = pushforward_with(&jc, &g0, &g1, &v);
        let ratio = l1.norm_sqr(&fv.hol) / l0.norm_sqr(&v.hol);
        dev = dev.max((ratio - lambda).abs() / lambda.abs());
    }
    Ok((lambda, dev))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SampleResidual<T> {
    pub point: SurfacePoint<T>,
    pub lambda: T,
    /// `max_α |θ(f_*Z_α)|`.
    pub theta: T,
    /// `max_α` of the `Z_β̄` components of `f_*Z_α`.
    pub leakage: T,
    /// Relative violation of `L(f_*Z, f_*W̄) = λ L(Z, W̄)` on random pairs.
    pub pairing: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct CrReport<T> {
    pub samples: Vec<SampleResidual<T>>,
    pub tolerance: T,
    pub max_theta: T,
    pub max_leakage: T,
    pub max_pairing: T,
    pub min_lambda: T,
    pub pass: bool,
}

/// Checks the CR conditions at every sample. Residuals are measured
/// relative to `max(1, |f_*Z_α|)`.
pub fn verify_cr<T: Real, M: MapOracle<T> + ?Sized>(map: &M, samples: &[SurfacePoint<T>]) -> Result<CrReport<T>> {
    let sig = map.signature();
    let n = sig.dim();
    let tolerance = T::lit(1e-8);
    let mut rng = sample::rng(0xc0ffee);
    let mut out = Vec::with_capacity(samples.len());
    for point in samples {
        let image = map.apply(point)?;
        let jc = map.chart_jacobian(point)?;
        let g0 = jet(sig, point)?.grad;
        let g1 = jet(sig, &image)?.grad;
        let l0 = levi(sig, point)?;
        let l1 = levi(sig, &image)?;
        let lambda = pushforward_with(&jc, &g0, &g1, &TangentVector::reeb(n)).t.re;
        let mut theta = T::zero();
        let mut leakage = T::zero();
        for a in 0..n {
            let fz = pushforward_with(&jc, &g0, &g1, &TangentVector::basis(n, a));
            let scale = T::one().max(fz.hol.iter().fold(T::zero(), |acc, x| acc.max(x.norm())));
            theta = theta.max(fz.t.norm() / scale);
            leakage = leakage.max(fz.antihol.iter().fold(T::zero(), |acc, x| acc.max(x.norm())) / scale);
        }
        let mut pairing = T::zero();
        for _ in 0..3 {
            let u = sample::holomorphic_vector::<T, _>(n, &mut rng);
            let v = sample::holomorphic_vector::<T, _>(n, &mut rng);
            let fu = pushforward_with(&jc, &g0, &g1, &u);
            let fv = pushforward_with(&jc, &g0, &g1, &v);
            let lhs = l1.pair(&fu.hol, &fv.hol);
            let rhs = l0.pair(&u.hol, &v.hol) * lambda;
            let scale = lambda.abs().max(T::min_positive_value())
                * l0.norm_sqr(&u.hol).sqrt()
                * l0.norm_sqr(&v.hol).sqrt();
            pairing = pairing.max((lhs - rhs).norm() / scale);
        }
        out.push(SampleResidual { point: point.clone(), lambda, theta, leakage, pairing });
    }
    let fold = |f: fn(&SampleResidual<T>) -> T| out.iter().map(f).fold(T::zero(), T::max);
    let max_theta = fold(|s| s.theta);
    let max_leakage = fold(|s| s.leakage);
    let max_pairing = fold(|s| s.pairing);
    let min_lambda = out.iter().map(|s| s.lambda).fold(T::infinity(), T::min);
    let pass = max_theta <= tolerance
        && max_leakage <= tolerance
        && max_pairing <= tolerance
        && (out.is_empty() || min_lambda > T::zero());
    Ok(CrReport { samples: out, tolerance, max_theta, max_leakage, max_pairing, min_lambda, pass })
}
