//! Adapted frame `Z_α = ∂_α + i p_α ∂_t`, `T = ∂_t`, the Levi form, the
//! radial fields `E_j`, the projection `Q` and the fields `W_α = Q(Z_α)`.

use serde::{Deserialize, Serialize};

use crate::error::{CrError, Result};
use crate::linalg::CMatrix;
use crate::model::{jet, jet_unchecked, PJet, Signature, SurfacePoint};
use crate::scalar::{ci, cr, cz, Real, C};

/// `a^α Z_α + b^α Z_ᾱ + c T` at an implicit base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct TangentVector<T> {
    pub hol: Vec<C<T>>,
    pub antihol: Vec<C<T>>,
    pub t: C<T>,
}

impl<T: Real> TangentVector<T> {
    pub fn zero(n: usize) -> Self {
        Self { hol: vec![cz(); n], antihol: vec![cz(); n], t: cz() }
    }

    /// Type `(1,0)` vector `a^α Z_α`.
    pub fn holomorphic(hol: Vec<C<T>>) -> Self {
        let n = hol.len();
        Self { hol, antihol: vec![cz(); n], t: cz() }
    }

    pub fn basis(n: usize, alpha: usize) -> Self {
        let mut v = Self::zero(n);
        v.hol[alpha] = cr(T::one());
        v
    }

    pub fn reeb(n: usize) -> Self {
        let mut v = Self::zero(n);
        v.t = cr(T::one());
        v
    }

    pub fn dim(&self) -> usize {
        self.hol.len()
    }

    /// Complex conjugate vector: swaps the `Z_α` and `Z_ᾱ` parts.
    pub fn conj(&self) -> Self {
        Self {
            hol: self.antihol.iter().map(|x| x.conj()).collect(),
            antihol: self.hol.iter().map(|x| x.conj()).collect(),
            t: self.t.conj(),
        }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            hol: self.hol.iter().map(|x| x * s).collect(),
            antihol: self.antihol.iter().map(|x| x * s).collect(),
            t: self.t * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            hol: self.hol.iter().zip(&other.hol).map(|(a, b)| a + b).collect(),
            antihol: self.antihol.iter().zip(&other.antihol).map(|(a, b)| a + b).collect(),
            t: self.t + other.t,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(cr(-T::one())))
    }

    /// Largest modulus of the `Z_ᾱ` and `T` components.
    pub fn non_holomorphic_part(&self) -> T {
        self.antihol.iter().fold(self.t.norm(), |acc, x| acc.max(x.norm()))
    }

    pub fn is_type_10(&self, tol: T) -> bool {
        self.non_holomorphic_part() <= tol
    }

    pub fn max_abs(&self) -> T {
        self.hol.iter().chain(&self.antihol).fold(self.t.norm(), |acc, x| acc.max(x.norm()))
    }

    /// The contact form: `θ(X)` is the `T` component.
    pub fn theta(&self) -> C<T> {
        self.t
    }

    /// Coefficients on `(∂_{z^α}, ∂_{z̄^α}, ∂_t)` given `p_α` at the base point.
    pub fn to_chart(&self, grad: &[C<T>]) -> Vec<C<T>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n + 1);
        out.extend_from_slice(&self.hol);
        out.extend_from_slice(&self.antihol);
        let mut t = self.t;
        for a in 0..n {
            t += ci::<T>() * (self.hol[a] * grad[a] - self.antihol[a] * grad[a].conj());
        }
        out.push(t);
        out
    }

    /// Inverse of [`TangentVector::to_chart`].
    pub fn from_chart(chart: &[C<T>], grad: &[C<T>]) -> Self {
        let n = grad.len();
        let hol = chart[..n].to_vec();
        let antihol = chart[n..2 * n].to_vec();
        let mut t = chart[2 * n];
        for a in 0..n {
            t -= ci::<T>() * (hol[a] * grad[a] - antihol[a] * grad[a].conj());
        }
        Self { hol, antihol, t }
    }
}

/// Levi form `h_{αβ̄} = L(Z_α, Z_β̄)` and its inverse.
///
/// `h_inv[(α, β)]` is `h^{αβ̄}`, normalized by `Σ_β h^{αβ̄} h_{γβ̄} = δ_{αγ}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct LeviData<T> {
    pub h: CMatrix<T>,
    pub h_inv: CMatrix<T>,
}

impl<T: Real> LeviData<T> {
    /// `L(U, V̄)` for `(1,0)` coefficient vectors.
    pub fn pair(&self, u: &[C<T>], v: &[C<T>]) -> C<T> {
        let n = u.len();
        let mut acc = cz();
        for a in 0..n {
            if u[a] == cz() {
                continue;
            }
            for b in 0..n {
                acc += u[a] * self.h[(a, b)] * v[b].conj();
            }
        }
        acc
    }

    pub fn norm_sqr(&self, u: &[C<T>]) -> T {
        self.pair(u, u).re
    }

    /// `max |Σ_β h^{αβ̄} h_{γβ̄} − δ_{αγ}|`.
    pub fn inverse_defect(&self) -> T {
        (&self.h_inv * &self.h.transpose()).sub(&CMatrix::identity(self.h.rows())).max_abs()
    }

    /// Raises an index: `u^γ = h^{γβ̄} u_β̄`.
    pub fn raise(&self, lower_bar: &[C<T>]) -> Vec<C<T>> {
        self.h_inv.mul_vec(lower_bar)
    }
}

/// Closed-form Levi form and inverse.
pub fn levi<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<LeviData<T>> {
    point.check_admissible(sig)?;
    Ok(levi_closed(sig, &point.z))
}

pub(crate) fn levi_closed<T: Real>(sig: &Signature, z: &[C<T>]) -> LeviData<T> {
    let n = sig.dim();
    let mut h = CMatrix::zeros(n, n);
    let mut h_inv = CMatrix::zeros(n, n);
    for j in 0..sig.blocks() {
        let range = sig.block_range(j);
        let m = T::of_usize(sig.exponent(j) as usize);
        let r = z[range.clone()].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
        let c = T::lit(2.0) * m * r.powi(sig.exponent(j) as i32 - 1);
        let flat = sig.exponent(j) == 1;
        for a in range.clone() {
            for b in range.clone() {
                let delta = if a == b { T::one() } else { T::zero() };
                if flat {
                    h[(a, b)] = cr(c * delta);
                    h_inv[(a, b)] = cr(delta / c);
                } else {
                    h[(a, b)] = (cr(delta) + z[a].conj() * z[b] * ((m - T::one()) / r)) * c;
                    h_inv[(a, b)] = (cr(delta) - z[a] * z[b].conj() * ((m - T::one()) / (m * r))) / c;
                }
            }
        }
    }
    LeviData { h, h_inv }
}

/// Levi form from the jet, `h = 2 p_{αβ̄}`, inverted numerically.
pub fn levi_from_jet<T: Real>(jet: &PJet<T>) -> Result<LeviData<T>> {
    let h = jet.hess.scale(cr(T::lit(2.0)));
    let h_inv = h
        .transpose()
        .inverse()
        .ok_or_else(|| CrError::EvaluationFailure("singular Levi form".into()))?;
    Ok(LeviData { h, h_inv })
}

/// `Q_α^β = δ − z̄^α z^β / |z_j|²` within each block; identity on the flat
/// block when `z_s = 0` (the radial field of that block vanishes there).
pub(crate) fn q_coefficients<T: Real>(sig: &Signature, z: &[C<T>]) -> CMatrix<T> {
    let n = sig.dim();
    let mut q = CMatrix::identity(n);
    for j in 0..sig.blocks() {
        let range = sig.block_range(j);
        let r = z[range.clone()].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
        if r == T::zero() {
            continue;
        }
        for a in range.clone() {
            for b in range.clone() {
                q[(a, b)] -= z[a].conj() * z[b] / r;
            }
        }
    }
    q
}

#[derive(Clone, Debug)]
pub struct FrameDecomposition<T> {
    /// Radial fields `E_j` for the blocks listed in `e_blocks`.
    pub e_basis: Vec<TangentVector<T>>,
    pub e_blocks: Vec<usize>,
    /// Levi-orthonormal basis of `𝒲_j` for every block `j`.
    pub w_bases: Vec<Vec<TangentVector<T>>>,
    /// `q_coeff[(α, β)] = Q_α^β`.
    pub q_coeff: CMatrix<T>,
    /// Levi-orthonormal basis of `ℰ ⊕ 𝒲_s`.
    pub radial_basis: Vec<TangentVector<T>>,
    pub levi: LeviData<T>,
}

/// Vectors with Levi norm² below this are dropped during basis extraction.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub fn frame_fields<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<FrameDecomposition<T>> {
    let levi = levi(sig, point)?;
    let n = sig.dim();
    let z = &point.z;
    let q = q_coefficients(sig, z);
    let mut e_basis = Vec::new();
    let mut e_blocks = Vec::new();
    let mut radial_basis = Vec::new();
    for j in 0..sig.blocks() {
        let range = sig.block_range(j);
        if range.is_empty() || point.block_norm_sqr(sig, j) == T::zero() {
            continue;
        }
        let m = T::of_usize(sig.exponent(j) as usize);
        let mut hol = vec![cz(); n];
        for a in range {
            hol[a] = z[a] / m;
        }
        let e = TangentVector::holomorphic(hol);
        if j != sig.flat_block() {
            let norm = levi.norm_sqr(&e.hol).sqrt();
            radial_basis.push(e.scale(cr(norm.recip())));
        }
        e_basis.push(e);
        e_blocks.push(j);
    }
    for a in sig.block_range(sig.flat_block()) {
        radial_basis.push(TangentVector::basis(n, a).scale(cr(T::lit(0.5).sqrt())));
    }
    let mut w_bases = Vec::with_capacity(sig.blocks());
    for j in 0..sig.blocks() {
        let spanning: Vec<Vec<C<T>>> = sig.block_range(j).map(|a| q.row(a).to_vec()).collect();
        let basis = levi_gram_schmidt(&levi, spanning, T::lit(RANK_TOLERANCE));
        let expected = if e_blocks.contains(&j) { sig.block_dim(j) - 1 } else { sig.block_dim(j) };
        if basis.len() != expected {
            return Err(CrError::RankDeficiency { block: j + 1, expected, found: basis.len() });
        }
        w_bases.push(basis.into_iter().map(TangentVector::holomorphic).collect());
    }
    Ok(FrameDecomposition { e_basis, e_blocks, w_bases, q_coeff: q, radial_basis, levi })
}

/// Gram-Schmidt in the Levi inner product, in input order, dropping vectors
/// whose residual norm² falls below `tol`.
pub fn levi_gram_schmidt<T: Real>(levi: &LeviData<T>, vectors: Vec<Vec<C<T>>>, tol: T) -> Vec<Vec<C<T>>> {
    let mut basis: Vec<Vec<C<T>>> = Vec::new();
    for mut v in vectors {
        for _ in 0..2 {
            for e in &basis {
                let c = levi.pair(&v, e);
                for (x, y) in v.iter_mut().zip(e) {
                    *x -= c * y;
                }
            }
        }
        let nrm = levi.norm_sqr(&v);
        if nrm > tol {
            let s = nrm.sqrt().recip();
            basis.push(v.into_iter().map(|x| x * s).collect());
        }
    }
    basis
}

impl<T: Real> FrameDecomposition<T> {
    /// `Q(U)` for a `(1,0)` coefficient vector.
    pub fn q_apply(&self, u: &[C<T>]) -> Vec<C<T>> {
        let n = u.len();
        (0..n).map(|b| (0..n).fold(cz(), |acc, a| acc + u[a] * self.q_coeff[(a, b)])).collect()
    }

    /// Component of `U` in `𝒲_j`, `j` a radial block.
    pub fn project_w(&self, sig: &Signature, j: usize, u: &[C<T>]) -> Vec<C<T>> {
        let mut restricted = vec![cz(); u.len()];
        for a in sig.block_range(j) {
            restricted[a] = u[a];
        }
        self.q_apply(&restricted)
    }

    /// Component of `U` in `ℰ ⊕ 𝒲_s`.
    pub fn project_radial(&self, sig: &Signature, u: &[C<T>]) -> Vec<C<T>> {
        let mut out = u.to_vec();
        for j in 0..sig.radial_blocks() {
            for (x, y) in out.iter_mut().zip(self.project_w(sig, j, u)) {
                *x -= y;
            }
        }
        out
    }

    /// `Q♭(U, V̄) = L(Q(U), V̄)`.
    pub fn q_flat_coeffs(&self, u: &[C<T>], v: &[C<T>]) -> C<T> {
        self.levi.pair(&self.q_apply(u), v)
    }

    /// `Q♭` restricted to block `j`: `L(P_j U, V̄)`.
    pub fn q_flat_block(&self, sig: &Signature, j: usize, u: &[C<T>], v: &[C<T>]) -> C<T> {
        self.levi.pair(&self.project_w(sig, j, u), v)
    }
}

/// `Q♭(U, V̄)` for `(1,0)` vectors at `P`.
pub fn q_flat<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    u: &TangentVector<T>,
    v: &TangentVector<T>,
) -> Result<C<T>> {
    let tol = T::lit(1e-12);
    if !u.is_type_10(tol) || !v.is_type_10(tol) {
        return Err(CrError::TypeMismatch);
    }
    let frame = frame_fields(sig, point)?;
    Ok(frame.q_flat_coeffs(&u.hol, &v.hol))
}

/// Named frame fields, with 0-based indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameField {
    Z(usize),
    ZBar(usize),
    E(usize),
    EBar(usize),
    W(usize),
    WBar(usize),
    T,
}

impl FrameField {
    fn validate(self, sig: &Signature) -> Result<()> {
        let n = sig.dim();
        let ok = match self {
            FrameField::Z(a) | FrameField::ZBar(a) | FrameField::W(a) | FrameField::WBar(a) => a < n,
            FrameField::E(j) | FrameField::EBar(j) => j < sig.blocks() && sig.block_dim(j) > 0,
            FrameField::T => true,
        };
        if ok {
            Ok(())
        } else {
            Err(CrError::UnsupportedField(format!("{self:?} for signature {sig}")))
        }
    }

    /// Chart coefficients on `(∂_{z^α}, ∂_{z̄^α}, ∂_t)` at `z`.
    fn chart_coefficients<T: Real>(self, sig: &Signature, z: &[C<T>]) -> Vec<C<T>> {
        let n = sig.dim();
        let jet = jet_unchecked(sig, z);
        let frame_vec = match self {
            FrameField::Z(a) => TangentVector::basis(n, a),
            FrameField::ZBar(a) => TangentVector::basis(n, a).conj(),
            FrameField::T => TangentVector::reeb(n),
            FrameField::E(j) | FrameField::EBar(j) => {
                let m = T::of_usize(sig.exponent(j) as usize);
                let mut hol = vec![cz(); n];
                for a in sig.block_range(j) {
                    hol[a] = z[a] / m;
                }
                let e = TangentVector::holomorphic(hol);
                if matches!(self, FrameField::EBar(_)) {
                    e.conj()
                } else {
                    e
                }
            }
            FrameField::W(a) | FrameField::WBar(a) => {
                let q = q_coefficients(sig, z);
                let w = TangentVector::holomorphic(q.row(a).to_vec());
                if matches!(self, FrameField::WBar(_)) {
                    w.conj()
                } else {
                    w
                }
            }
        };
        frame_vec.to_chart(&jet.grad)
    }
}

/// Step for the central differences in [`lie_bracket`].
pub const BRACKET_STEP: f64 = 1e-5;

/// Numerical bracket `[X, Y]` at `P`, by central differences of the chart
/// coefficients, returned in the adapted frame at `P`.
pub fn lie_bracket<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    x: FrameField,
    y: FrameField,
) -> Result<TangentVector<T>> {
    x.validate(sig)?;
    y.validate(sig)?;
    let jet = jet(sig, point)?;
    let n = sig.dim();
    let dim = 2 * n + 1;
    let xc = x.chart_coefficients(sig, &point.z);
    let yc = y.chart_coefficients(sig, &point.z);
    let dx = wirtinger_derivatives(point, dim, BRACKET_STEP, |p| x.chart_coefficients(sig, &p.z));
    let dy = wirtinger_derivatives(point, dim, BRACKET_STEP, |p| y.chart_coefficients(sig, &p.z));
    // [X, Y]^k = X(Y^k) − Y(X^k)
    let mut out = vec![cz(); dim];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = cz();
        for c in 0..dim {
            acc += xc[c] * dy[c][k] - yc[c] * dx[c][k];
        }
        *slot = acc;
    }
    Ok(TangentVector::from_chart(&out, &jet.grad))
}

/// `d[c][k]`: derivative of component `k` of `f` along chart coordinate `c`
/// in the ordering `(z^α, z̄^α, t)`.
pub(crate) fn wirtinger_derivatives<T: Real>(
    point: &SurfacePoint<T>,
    dim: usize,
    step: f64,
    mut f: impl FnMut(&SurfacePoint<T>) -> Vec<C<T>>,
) -> Vec<Vec<C<T>>> {
    let n = point.dim();
    let h = T::lit(step);
    let half = T::lit(0.5);
    let mut real = Vec::with_capacity(2 * n + 1);
    for c in 0..2 * n + 1 {
        let mut delta = vec![T::zero(); 2 * n + 1];
        delta[c] = h;
        let plus = f(&point.offset_real(&delta));
        delta[c] = -h;
        let minus = f(&point.offset_real(&delta));
        real.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (h + h)).collect::<Vec<_>>());
    }
    let mut out = vec![vec![cz(); dim]; 2 * n + 1];
    for a in 0..n {
        for k in 0..dim {
            let dxk = real[2 * a][k];
            let dyk = real[2 * a + 1][k];
            out[a][k] = (dxk - ci::<T>() * dyk) * half;
            out[n + a][k] = (dxk + ci::<T>() * dyk) * half;
        }
    }
    out[2 * n] = real[2 * n].clone();
    out
}

/// Closed-form brackets among the frame fields.
pub fn lie_bracket_closed<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    x: FrameField,
    y: FrameField,
) -> Result<TangentVector<T>> {
    x.validate(sig)?;
    y.validate(sig)?;
    let jet = jet(sig, point)?;
    let n = sig.dim();
    let reeb = |c: C<T>| TangentVector::reeb(n).scale(c);
    let two_i = ci::<T>() * T::lit(2.0);
    let flat = sig.flat_block();
    Ok(match (x, y) {
        (FrameField::T, _) | (_, FrameField::T) => TangentVector::zero(n),
        (FrameField::Z(_), FrameField::Z(_)) | (FrameField::ZBar(_), FrameField::ZBar(_)) | (FrameField::E(_), FrameField::E(_)) | (FrameField::EBar(_), FrameField::EBar(_)) => TangentVector::zero(n),
        (FrameField::Z(a), FrameField::ZBar(b)) => reeb(-two_i * jet.hess[(a, b)]),
        (FrameField::ZBar(b), FrameField::Z(a)) => reeb(two_i * jet.hess[(a, b)]),
        (FrameField::E(j), FrameField::EBar(k)) | (FrameField::EBar(k), FrameField::E(j)) => {
            let v = if j == k {
                let r = point.block_norm_sqr(sig, j).powi(sig.exponent(j) as i32);
                -two_i * r
            } else {
                cz()
            };
            if matches!(x, FrameField::E(_)) {
                reeb(v)
            } else {
                reeb(-v)
            }
        }
        (FrameField::E(j), FrameField::ZBar(a)) | (FrameField::ZBar(a), FrameField::E(j)) if j != flat && sig.block_of(a) == flat => TangentVector::zero(n),
        _ => return Err(CrError::UnsupportedField(format!("no closed form for [{x:?}, {y:?}]"))),
    })
}
