//! Covariant derivatives of scalar functions, the transformation laws of
//! the Ricci curvature, torsion, scalar curvature and Chern tensor under a
//! change of contact form by a CR factor, and the identities satisfied by
//! CR-affine functions.

use serde::{Deserialize, Serialize};

use crate::curvature::{christoffel_from, curvature_closed_from};
use crate::error::{CrError, Result};
use crate::frame::{frame_fields, levi_closed, LeviData, TangentVector};
use crate::linalg::CMatrix;
use crate::maps::{cr_factor, pushforward_with, MapOracle};
use crate::model::{jet, PJet, Signature, SurfacePoint};
use crate::report::Check;
use crate::sample;
use crate::scalar::{ci, cr, cz, Real, C};

/// Base step of the finite-difference chart jets; passes at half and a
/// quarter of the step are combined by Richardson extrapolation.
pub const FD_STEP: f64 = 2e-2;
/// Relative tolerance of the transformation laws.
pub const LAW_TOL: f64 = 1e-6;
/// Tolerance of the CR-affine identities and the commutation identity.
pub const IDENTITY_TOL: f64 = 1e-7;

/// Value and chart derivatives of a complex function in the coordinates
/// `(z^α, z̄^α, t)`, indexed `α`, `n + α` and `2n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ChartJet<T> {
    pub value: C<T>,
    pub d: Vec<C<T>>,
    pub dd: CMatrix<T>,
}

impl<T: Real> ChartJet<T> {
    pub fn constant(n: usize, value: C<T>) -> Self {
        Self { value, d: vec![cz(); 2 * n + 1], dd: CMatrix::zeros(2 * n + 1, 2 * n + 1) }
    }

    pub fn dim(&self) -> usize {
        (self.d.len() - 1) / 2
    }

    /// Central differences on the real chart with two Richardson levels over
    /// the steps `step`, `step / 2` and `step / 4`.
    pub fn numeric(
        point: &SurfacePoint<T>,
        step: f64,
        f: impl Fn(&SurfacePoint<T>) -> Result<C<T>>,
    ) -> Result<Self> {
        let n = point.dim();
        let levels = [step, step / 2.0, step / 4.0]
            .into_iter()
            .map(|h| real_derivatives(point, T::lit(h), &f))
            .collect::<Result<Vec<_>>>()?;
        // h² error cancels with weights (4, −1)/3, then h⁴ with (16, −1)/15
        let extrapolate = |a: C<T>, b: C<T>, c: C<T>| {
            let lo = (b * T::lit(4.0) - a) / T::lit(3.0);
            let hi = (c * T::lit(4.0) - b) / T::lit(3.0);
            (hi * T::lit(16.0) - lo) / T::lit(15.0)
        };
        let (g, h) = (|k: usize| &levels[k].1, |k: usize| &levels[k].2);
        let grad: Vec<C<T>> = (0..2 * n + 1).map(|i| extrapolate(g(0)[i], g(1)[i], g(2)[i])).collect();
        let hess = CMatrix::from_fn(2 * n + 1, 2 * n + 1, |i, j| extrapolate(h(0)[(i, j)], h(1)[(i, j)], h(2)[(i, j)]));
        Ok(Self::from_real(n, levels[0].0, &grad, &hess))
    }

    /// Converts real-chart derivatives `(x_1, y_1, …, x_n, y_n, t)` to
    /// Wirtinger form.
    fn from_real(n: usize, value: C<T>, grad: &[C<T>], hess: &CMatrix<T>) -> Self {
        let dim = 2 * n + 1;
        let half = T::lit(0.5);
        let i = ci::<T>();
        // l[(k, c)]: coefficient of real direction c in Wirtinger direction k
        let mut l = CMatrix::zeros(dim, dim);
        for a in 0..n {
            l[(a, 2 * a)] = cr(half);
            l[(a, 2 * a + 1)] = -i * half;
            l[(n + a, 2 * a)] = cr(half);
            l[(n + a, 2 * a + 1)] = i * half;
        }
        l[(2 * n, 2 * n)] = cr(T::one());
        let d = l.mul_vec(grad);
        let dd = &(&l * hess) * &l.transpose();
        Self { value, d, dd }
    }

    /// Jet of the complex conjugate function.
    pub fn conj(&self) -> Self {
        let n = self.dim();
        let swap = |k: usize| {
            if k < n {
                k + n
            } else if k < 2 * n {
                k - n
            } else {
                k
            }
        };
        let dim = 2 * n + 1;
        Self {
            value: self.value.conj(),
            d: (0..dim).map(|k| self.d[swap(k)].conj()).collect(),
            dd: CMatrix::from_fn(dim, dim, |a, b| self.dd[(swap(a), swap(b))].conj()),
        }
    }

    /// Jet of the product, by the Leibniz rule.
    pub fn mul(&self, other: &Self) -> Self {
        let dim = self.d.len();
        Self {
            value: self.value * other.value,
            d: (0..dim).map(|k| self.d[k] * other.value + self.value * other.d[k]).collect(),
            dd: CMatrix::from_fn(dim, dim, |a, b| {
                self.dd[(a, b)] * other.value
                    + self.d[a] * other.d[b]
                    + other.d[a] * self.d[b]
                    + self.value * other.dd[(a, b)]
            }),
        }
    }
}

type RealDerivatives<T> = (C<T>, Vec<C<T>>, CMatrix<T>);

fn real_derivatives<T: Real>(
    point: &SurfacePoint<T>,
    h: T,
    f: &impl Fn(&SurfacePoint<T>) -> Result<C<T>>,
) -> Result<RealDerivatives<T>> {
    let dim = 2 * point.dim() + 1;
    let at = |offsets: &[(usize, T)]| {
        let mut delta = vec![T::zero(); dim];
        for &(c, s) in offsets {
            delta[c] += s;
        }
        f(&point.offset_real(&delta))
    };
    let f0 = f(point)?;
    let mut plus = Vec::with_capacity(dim);
    let mut minus = Vec::with_capacity(dim);
    for c in 0..dim {
        plus.push(at(&[(c, h)])?);
        minus.push(at(&[(c, -h)])?);
    }
    let two = T::lit(2.0);
    let grad: Vec<C<T>> = (0..dim).map(|c| (plus[c] - minus[c]) / (two * h)).collect();
    let mut hess = CMatrix::zeros(dim, dim);
    for a in 0..dim {
        hess[(a, a)] = (plus[a] - f0 * two + minus[a]) / (h * h);
        for b in a + 1..dim {
            let pp = at(&[(a, h), (b, h)])?;
            let pm = at(&[(a, h), (b, -h)])?;
            let mp = at(&[(a, -h), (b, h)])?;
            let mm = at(&[(a, -h), (b, -h)])?;
            let v = (pp - pm - mp + mm) / (T::lit(4.0) * h * h);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    Ok((f0, grad, hess))
}

/// Frame and covariant derivatives of a scalar function at a point.
///
/// Second derivatives: `hol_hol[(α, β)] = u_{,αβ}`,
/// `hol_bar[(α, β)] = u_{,αβ̄}`, `bar_hol[(α, β)] = u_{,β̄α}`.
#[derive(Clone, Debug)]
pub struct ScalarJet<T> {
    pub value: C<T>,
    pub first: Vec<C<T>>,
    pub first_bar: Vec<C<T>>,
    /// `u_{,0} = Tu`.
    pub reeb: C<T>,
    pub hol_hol: CMatrix<T>,
    pub hol_bar: CMatrix<T>,
    pub bar_hol: CMatrix<T>,
    /// `Z_α T u`.
    pub hol_reeb: Vec<C<T>>,
    pub levi: LeviData<T>,
}

impl<T: Real> ScalarJet<T> {
    pub fn from_chart(sig: &Signature, point: &SurfacePoint<T>, chart: &ChartJet<T>) -> Result<Self> {
        let pj = jet(sig, point)?;
        let levi = levi_closed(sig, &point.z);
        Ok(Self::assemble(&pj, levi, chart))
    }

    fn assemble(pj: &PJet<T>, levi: LeviData<T>, c: &ChartJet<T>) -> Self {
        let n = pj.dim();
        let tt = 2 * n;
        let i = ci::<T>();
        let g = &pj.grad;
        let ut = c.d[tt];
        let utt = c.dd[(tt, tt)];
        let first: Vec<C<T>> = (0..n).map(|a| c.d[a] + i * g[a] * ut).collect();
        let first_bar: Vec<C<T>> = (0..n).map(|a| c.d[n + a] - i * g[a].conj() * ut).collect();
        let gamma = christoffel_from(pj, &levi);
        let mut hol_hol = CMatrix::zeros(n, n);
        let mut hol_bar = CMatrix::zeros(n, n);
        let mut bar_hol = CMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let zz = c.dd[(a, b)]
                    + i * g[b] * c.dd[(tt, a)]
                    + i * pj.hess_hol[(a, b)] * ut
                    + i * g[a] * (c.dd[(b, tt)] + i * g[b] * utt);
                let christ = (0..n).fold(cz(), |acc, s| acc + gamma[b][a][s] * first[s]);
                hol_hol[(a, b)] = zz - christ;
                let gb = g[b].conj();
                hol_bar[(a, b)] = c.dd[(a, n + b)] + i * pj.hess[(a, b)] * ut + i * g[a] * c.dd[(n + b, tt)]
                    - i * gb * (c.dd[(tt, a)] + i * g[a] * utt);
                bar_hol[(a, b)] = c.dd[(n + b, a)] - i * pj.hess[(a, b)] * ut - i * gb * c.dd[(a, tt)]
                    + i * g[a] * (c.dd[(tt, n + b)] - i * gb * utt);
            }
        }
        let hol_reeb = (0..n).map(|a| c.dd[(a, tt)] + i * g[a] * utt).collect();
        Self { value: c.value, first, first_bar, reeb: ut, hol_hol, hol_bar, bar_hol, hol_reeb, levi }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// `Δu = h^{γβ̄}(u_{,γβ̄} + u_{,β̄γ})`.
    pub fn laplacian(&self) -> C<T> {
        let n = self.dim();
        let mut acc = cz();
        for g in 0..n {
            for b in 0..n {
                acc += self.levi.h_inv[(g, b)] * self.hol_bar[(g, b)]
                    + self.levi.h_inv[(b, g)] * self.bar_hol[(b, g)];
            }
        }
        acc
    }

    /// `|∇u|² = h^{γβ̄} u_{,γ} u_{,β̄}`.
    pub fn grad_sqr(&self) -> C<T> {
        let n = self.dim();
        let mut acc = cz();
        for g in 0..n {
            for b in 0..n {
                acc += self.levi.h_inv[(g, b)] * self.first[g] * self.first_bar[b];
            }
        }
        acc
    }

    /// `max |u_{,αβ̄} − u_{,β̄α} − i h_{αβ̄} u_{,0}|`.
    pub fn commutation_defect(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for a in 0..n {
            for b in 0..n {
                let r = self.hol_bar[(a, b)] - self.bar_hol[(a, b)] - ci::<T>() * self.levi.h[(a, b)] * self.reeb;
                worst = worst.max(r.norm());
            }
        }
        worst
    }

    /// Magnitude of the second covariant derivatives.
    pub fn hessian_scale(&self) -> T {
        self.hol_hol.max_abs().max(self.hol_bar.max_abs()).max(self.bar_hol.max_abs())
    }
}

/// Scalar jet of `f` with finite-difference chart derivatives.
pub fn scalar_jet<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    f: impl Fn(&SurfacePoint<T>) -> Result<C<T>>,
) -> Result<ScalarJet<T>> {
    point.check_admissible(sig)?;
    let chart = ChartJet::numeric(point, FD_STEP, |q| {
        let v = f(q)?;
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(CrError::EvaluationFailure("non-finite value".into()))
        }
    })?;
    ScalarJet::from_chart(sig, point, &chart)
}

/// Chart jet of `u = 1/λ` for a map, by finite differences of the CR factor.
pub fn inverse_factor_jet<T: Real, M: MapOracle<T> + ?Sized>(map: &M, point: &SurfacePoint<T>) -> Result<ChartJet<T>> {
    ChartJet::numeric(point, FD_STEP, |q| Ok(cr(cr_factor(map, q)?.recip())))
}

/// `P_{(α, β)} L` with `L` evaluated on rows of `f`: `Σ f_{αγ} M_{γδ} conj(f_{βδ})`.
fn sandwich<T: Real>(f: &CMatrix<T>, m: &CMatrix<T>) -> CMatrix<T> {
    &(f * m) * &f.adjoint()
}

/// Data shared by the transformation-law checks at one point.
struct Transport<T> {
    sig: Signature,
    image: SurfacePoint<T>,
    lambda: T,
    /// Row `α`: `(1,0)` coefficients of `f_*Z_α` at the image.
    push: CMatrix<T>,
    jc: CMatrix<T>,
    g0: Vec<C<T>>,
    g1: Vec<C<T>>,
}

impl<T: Real> Transport<T> {
    fn new<M: MapOracle<T> + ?Sized>(map: &M, point: &SurfacePoint<T>) -> Result<Self> {
        let sig = map.signature().clone();
        let n = sig.dim();
        let image = map.apply(point)?;
        let jc = map.chart_jacobian(point)?;
        let g0 = jet(&sig, point)?.grad;
        let g1 = jet(&sig, &image)?.grad;
        let lambda = pushforward_with(&jc, &g0, &g1, &TangentVector::reeb(n)).t.re;
        let rows: Vec<Vec<C<T>>> =
            (0..n).map(|a| pushforward_with(&jc, &g0, &g1, &TangentVector::basis(n, a)).hol).collect();
        let push = CMatrix::from_rows(&rows).expect("square pushforward");
        Ok(Self { sig, image, lambda, push, jc, g0, g1 })
    }

    fn push_hol(&self, v: &[C<T>]) -> Vec<C<T>> {
        pushforward_with(&self.jc, &self.g0, &self.g1, &TangentVector::holomorphic(v.to_vec())).hol
    }
}

fn rel<T: Real>(diff: T, scales: &[T]) -> T {
    diff / scales.iter().fold(T::one(), |acc, s| acc.max(*s))
}

/// Residuals at `P` of the Ricci, torsion and scalar-curvature laws with
/// `u = 1/λ`, the radial derivative `W_α λ = 0` on the radial blocks and the
/// transport `λ·R∘f = R`. Curvatures on both sides come from closed forms;
/// `u` is differentiated numerically.
pub fn check_lee<T: Real, M: MapOracle<T> + ?Sized>(map: &M, point: &SurfacePoint<T>) -> Result<Vec<Check>> {
    let tr = Transport::new(map, point)?;
    let sig = &tr.sig;
    let n = sig.dim();
    let nn = T::of_usize(n);
    let two = T::lit(2.0);
    let frame0 = frame_fields(sig, point)?;
    let curv0 = curvature_closed_from(sig, point, &frame0);
    let frame1 = frame_fields(sig, &tr.image)?;
    let curv1 = curvature_closed_from(sig, &tr.image, &frame1);
    let chart = inverse_factor_jet(map, point)?;
    let uj = ScalarJet::from_chart(sig, point, &chart)?;
    let u = uj.value;
    let h = &frame0.levi.h;
    let lap = uj.laplacian();
    let grad2 = uj.grad_sqr();
    let hscale = uj.hessian_scale() / u.norm();

    let lhs = sandwich(&tr.push, &curv1.ricci);
    let k1 = cr((nn + two) / two) / u;
    let k2 = (lap - grad2 * (two * (nn + two)) / u) / (u * two);
    let correction = CMatrix::from_fn(n, n, |a, b| {
        k1 * (uj.hol_bar[(a, b)] + uj.bar_hol[(a, b)] - uj.first[a] * uj.first_bar[b] * two / u) + k2 * h[(a, b)]
    });
    let rhs = curv0.ricci.add(&correction);
    let ricci = rel(lhs.sub(&rhs).max_abs(), &[lhs.max_abs(), curv0.ricci.max_abs(), correction.max_abs()]);

    let torsion_lhs = sandwich_sym(&tr.push, &curv1.torsion);
    let torsion_rhs = CMatrix::from_fn(n, n, |a, b| curv0.torsion[(a, b)] - ci::<T>() / u * uj.hol_hol[(a, b)]);
    let torsion = rel(torsion_lhs.sub(&torsion_rhs).max_abs(), &[hscale, torsion_lhs.max_abs()]);

    let scalar_lhs = cr(curv1.scalar) / u;
    let scalar_corr = (lap - grad2 * (nn + two) / u) * (nn + T::one()) / u;
    let scalar_rhs = cr(curv0.scalar) + scalar_corr;
    let scalar = rel((scalar_lhs - scalar_rhs).norm(), &[scalar_lhs.norm(), curv0.scalar.abs(), scalar_corr.norm()]);

    let transport = rel((tr.lambda * curv1.scalar - curv0.scalar).abs(), &[curv0.scalar.abs()]);

    // W_α λ = −W_α u / u²
    let mut w_lambda = T::zero();
    let mut z_lambda = T::zero();
    let u2 = u * u;
    for j in 0..sig.radial_blocks() {
        for a in sig.block_range(j) {
            let wu: C<T> = (0..n).fold(cz(), |acc, b| acc + frame0.q_coeff[(a, b)] * uj.first[b]);
            w_lambda = w_lambda.max((wu / u2).norm());
        }
    }
    for a in 0..n {
        z_lambda = z_lambda.max((uj.first[a] / u2).norm());
    }
    let radial = rel(w_lambda, &[z_lambda]);

    Ok(vec![
        Check::from_real("ricci_law", ricci, LAW_TOL),
        Check::from_real("torsion_law", torsion, LAW_TOL),
        Check::from_real("scalar_law", scalar, LAW_TOL),
        Check::from_real("scalar_transport", transport, LAW_TOL),
        Check::from_real("radial_factor_derivative", radial, LAW_TOL),
    ])
}

/// `Σ f_{αγ} A_{γδ} f_{βδ}` for a symmetric `(2,0)` tensor.
fn sandwich_sym<T: Real>(f: &CMatrix<T>, a: &CMatrix<T>) -> CMatrix<T> {
    &(f * a) * &f.transpose()
}

/// Relative invariance `S(f_*X, f_*Ȳ, f_*Z, f_*W̄) = λ S(X, Ȳ, Z, W̄)` on the
/// frame basis and on `probes` seeded random quadruples.
pub fn check_chern_invariance<T: Real, M: MapOracle<T> + ?Sized>(
    map: &M,
    point: &SurfacePoint<T>,
    probes: usize,
    seed: u64,
) -> Result<Check> {
    let tr = Transport::new(map, point)?;
    let sig = &tr.sig;
    let n = sig.dim();
    let s0 = curvature_closed_from(sig, point, &frame_fields(sig, point)?).chern;
    let s1 = curvature_closed_from(sig, &tr.image, &frame_fields(sig, &tr.image)?).chern;
    let pulled = s1.pull_back(&tr.push);
    let scaled = crate::curvature::Tensor4::from_fn(n, |a, b, l, m| s0.get(a, b, l, m) * tr.lambda);
    let scale = T::one().max(scaled.max_abs()).max(pulled.max_abs());
    let mut worst = pulled.max_diff(&scaled) / scale;
    let levi0 = levi_closed(sig, &point.z);
    let mut rng = sample::rng(seed);
    for _ in 0..probes {
        let v: Vec<Vec<C<T>>> = (0..4).map(|_| sample::holomorphic_vector::<T, _>(n, &mut rng).hol).collect();
        let fv: Vec<Vec<C<T>>> = v.iter().map(|x| tr.push_hol(x)).collect();
        let lhs = s1.eval(&fv[0], &fv[1], &fv[2], &fv[3]);
        let rhs = s0.eval(&v[0], &v[1], &v[2], &v[3]) * tr.lambda;
        let norms = v.iter().fold(T::one(), |acc, x| acc * levi0.norm_sqr(x).sqrt());
        let local = T::one().max(tr.lambda * s0.max_abs()) * norms;
        worst = worst.max((lhs - rhs).norm() / local);
    }
    Ok(Check::from_real("chern_invariance", worst, LAW_TOL))
}

/// `v = k(z^{n+1} + a^{n+1} + 2i z_s·ā_s)` with `a^{n+1} = t0 + i|a_s|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct CrAffine<T> {
    pub k: T,
    pub a: Vec<C<T>>,
    pub t0: T,
}

impl<T: Real> CrAffine<T> {
    pub fn a_top(&self) -> C<T> {
        C::new(self.t0, self.a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()))
    }

    fn flat_pairing(&self, sig: &Signature, z: &[C<T>]) -> C<T> {
        sig.block_range(sig.flat_block()).zip(&self.a).fold(cz(), |acc, (al, a)| acc + z[al] * a.conj())
    }

    pub fn value(&self, sig: &Signature, point: &SurfacePoint<T>) -> C<T> {
        let two_i = ci::<T>() * T::lit(2.0);
        (point.w(sig) + self.a_top() + two_i * self.flat_pairing(sig, &point.z)) * self.k
    }

    /// Exact chart jet.
    pub fn chart_jet(&self, sig: &Signature, point: &SurfacePoint<T>) -> Result<ChartJet<T>> {
        let pj = jet(sig, point)?;
        let n = sig.dim();
        let k = cr(self.k);
        let i = ci::<T>();
        let mut c = ChartJet::constant(n, self.value(sig, point));
        for a in 0..n {
            c.d[a] = k * i * pj.grad[a];
            c.d[n + a] = k * i * pj.grad[a].conj();
        }
        for (al, a) in sig.block_range(sig.flat_block()).zip(&self.a) {
            c.d[al] += k * i * T::lit(2.0) * a.conj();
        }
        c.d[2 * n] = k;
        for a in 0..n {
            for b in 0..n {
                c.dd[(a, b)] = k * i * pj.hess_hol[(a, b)];
                c.dd[(n + a, n + b)] = k * i * pj.hess_hol[(a, b)].conj();
                c.dd[(a, n + b)] = k * i * pj.hess[(a, b)];
                c.dd[(n + b, a)] = k * i * pj.hess[(a, b)];
            }
        }
        Ok(c)
    }
}

/// For `v` CR-affine: `v_{,αβ} = 0`, the third-order identity
/// `Z_α T v = n_j(m_j−1) / (2i m_j (n+1) |z_j|^{2m_j}) W_α v` for every `α`,
/// and the contracted equation `i(v̄ v_{,0} − v v̄_{,0}) = h^{γμ̄} v_{,γ} conj(v_{,μ})`.
pub fn check_cr_function_identities<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    params: &CrAffine<T>,
) -> Result<Vec<Check>> {
    let chart = params.chart_jet(sig, point)?;
    let vj = ScalarJet::from_chart(sig, point, &chart)?;
    Ok(cr_function_checks(sig, point, &vj))
}

/// The same identities for an arbitrary scalar jet (used for negative controls).
pub fn cr_function_checks<T: Real>(sig: &Signature, point: &SurfacePoint<T>, vj: &ScalarJet<T>) -> Vec<Check> {
    let n = sig.dim();
    let nn = T::of_usize(n);
    let q = crate::frame::q_coefficients(sig, &point.z);
    let size = vj.first.iter().fold(vj.value.norm().max(vj.reeb.norm()), |acc, x| acc.max(x.norm()));
    let cr_cond = vj.first_bar.iter().fold(T::zero(), |acc, x| acc.max(x.norm()));
    let hessian = vj.hol_hol.max_abs();
    let mut third = T::zero();
    for j in 0..sig.blocks() {
        let nj = T::of_usize(sig.block_dim(j));
        let m = T::of_usize(sig.exponent(j) as usize);
        let r = point.block_norm_sqr(sig, j).powi(sig.exponent(j) as i32);
        let coeff = if sig.exponent(j) == 1 {
            cz()
        } else {
            cr(nj * (m - T::one()) / (m * (nn + T::one()) * r * T::lit(2.0))) / ci::<T>()
        };
        for a in sig.block_range(j) {
            let wv = (0..n).fold(cz(), |acc, b| acc + q[(a, b)] * vj.first[b]);
            third = third.max((vj.hol_reeb[a] - coeff * wv).norm());
        }
    }
    let v = vj.value;
    let i = ci::<T>();
    // v̄_{,0} = conj(v_{,0}); v̄_{,μ̄} = conj(v_{,μ})
    let lhs = i * (v.conj() * vj.reeb - v * vj.reeb.conj());
    let mut rhs = cz();
    for g in 0..n {
        for m in 0..n {
            rhs += vj.levi.h_inv[(g, m)] * vj.first[g] * vj.first[m].conj();
        }
    }
    let size2 = T::one().max(lhs.norm()).max(rhs.norm());
    vec![
        Check::from_real("cr_condition", rel(cr_cond, &[size]), IDENTITY_TOL),
        Check::from_real("cr_hessian", rel(hessian, &[size]), IDENTITY_TOL),
        Check::from_real("third_order_commutation", rel(third, &[size]), IDENTITY_TOL),
        Check::from_real("contracted_equation", (lhs - rhs).norm() / size2, IDENTITY_TOL),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{parse_map, MapDescriptor};

    fn sig(text: &str) -> Signature {
        text.parse().unwrap()
    }

    fn all_pass(checks: &[Check]) -> bool {
        checks.iter().all(|c| c.pass)
    }

    #[test]
    fn constant_has_no_derivatives() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(1);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let j = scalar_jet(&s, &p, |_| Ok(C::new(1.0, 0.0))).unwrap();
        assert!(j.hessian_scale() < 1e-9);
        assert!(j.laplacian().norm() < 1e-9);
    }

    #[test]
    fn squared_modulus_of_top_coordinate() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(2);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let v = CrAffine { k: 1.0, a: vec![cz()], t0: 0.0 };
        let vc = v.chart_jet(&s, &p).unwrap();
        let u = vc.mul(&vc.conj());
        let exact = ScalarJet::from_chart(&s, &p, &u).unwrap();
        assert!((exact.reeb.re - 2.0 * p.t).abs() < 1e-12);
        let numeric = scalar_jet(&s, &p, |q| Ok(cr(q.w(&s).norm_sqr()))).unwrap();
        assert!((numeric.reeb - exact.reeb).norm() < 1e-8);
        let diff = numeric.hol_bar.sub(&exact.hol_bar).max_abs().max(numeric.hol_hol.sub(&exact.hol_hol).max_abs());
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn commutation_on_polynomial() {
        let s = sig("m=2,3;n=2,2,1");
        let mut rng = sample::rng(3);
        let coeffs: Vec<C<f64>> = sample::complex_vec(&mut rng, 12, 1.0);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let poly = |q: &SurfacePoint<f64>| {
            let x = q.z[0];
            let y = q.z[3];
            let t = q.t;
            Ok(coeffs[0] * x * x.conj() * t + coeffs[1] * y * y * x.conj() + coeffs[2] * t * t + coeffs[3] * q.z[4])
        };
        let j = scalar_jet(&s, &p, poly).unwrap();
        assert!(j.commutation_defect() < 1e-7, "{}", j.commutation_defect());
    }

    #[test]
    fn lee_laws_for_generators() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(4);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        for text in ["dil(r=1.7)", "inv", "psi(b=[0.3+0.2i];t0=0.4)", "phi(a=[0.2-0.5i];t0=-0.3)", "dil(r=0.6) . inv . phi(a=[0.3+0.1i];t0=0.2)"] {
            let m: MapDescriptor<f64> = parse_map(text, &s).unwrap();
            let checks = check_lee(&m, &p).unwrap();
            assert!(all_pass(&checks), "{text}: {checks:?}");
            let c = check_chern_invariance(&m, &p, 20, 1).unwrap();
            assert!(c.pass, "{text}: {c:?}");
        }
    }

    #[test]
    fn identity_map_is_exact() {
        let s = sig("m=2;n=2,1");
        let p = SurfacePoint::new(vec![C::new(1.0, 0.0), cz(), cz()], 0.0);
        let m = MapDescriptor::<f64>::identity(s);
        assert!(check_chern_invariance(&m, &p, 5, 1).unwrap().max_residual < 1e-14);
    }

    #[test]
    fn cr_affine_identities() {
        for text in ["m=2;n=2,1", "m=2;n=2,0"] {
            let s = sig(text);
            let mut rng = sample::rng(5);
            for _ in 0..5 {
                let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
                let params = CrAffine {
                    k: rng_range(&mut rng),
                    a: sample::complex_vec(&mut rng, s.flat_dim(), 1.0),
                    t0: rng_range(&mut rng),
                };
                let checks = check_cr_function_identities(&s, &p, &params).unwrap();
                assert!(all_pass(&checks), "{text}: {checks:?}");
            }
        }
    }

    fn rng_range(rng: &mut sample::SampleRng) -> f64 {
        use rand::Rng;
        rng.gen_range(0.5..2.0)
    }

    #[test]
    fn square_is_not_cr_affine() {
        let s = sig("m=2;n=2,1");
        let mut rng = sample::rng(6);
        let p: SurfacePoint<f64> = sample::point(&s, &mut rng);
        let v = CrAffine { k: 1.0, a: vec![C::new(0.3, 0.1)], t0: 0.5 }.chart_jet(&s, &p).unwrap();
        let vj = ScalarJet::from_chart(&s, &p, &v.mul(&v)).unwrap();
        let checks = cr_function_checks(&s, &p, &vj);
        let hess = checks.iter().find(|c| c.name == "cr_hessian").unwrap();
        assert!(!hess.pass && hess.max_residual > 1e-3);
    }
}
