//! Tanaka-Webster curvature, Ricci and scalar curvature, torsion, the Chern
//! tensor and sectional curvature, computed by differentiation of the Levi
//! form and by closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{CrError, Result};
use crate::frame::{frame_fields, levi, lie_bracket, FrameDecomposition, FrameField, LeviData, TangentVector};
use crate::linalg::CMatrix;
use crate::model::{jet, Signature, SurfacePoint};
use crate::scalar::{cr, cz, Real, C};

/// Four-index array laid out as `[α][β̄][λ][μ̄]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Tensor4<T> {
    n: usize,
    data: Vec<C<T>>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![cz(); n * n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(n.pow(4));
        for a in 0..n {
            for b in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        data.push(f(a, b, l, m));
                    }
                }
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, l: usize, m: usize) -> C<T> {
        self.data[((a * self.n + b) * self.n + l) * self.n + m]
    }

    #[inline]
    fn slot(&mut self, a: usize, b: usize, l: usize, m: usize) -> &mut C<T> {
        &mut self.data[((a * self.n + b) * self.n + l) * self.n + m]
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, x| acc.max(x.norm()))
    }

    pub fn max_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |acc, (x, y)| acc.max((x - y).norm()))
    }

    /// `R(U, V̄, Z, W̄) = R_{αβ̄λμ̄} U^α conj(V^β) Z^λ conj(W^μ)`.
    pub fn eval(&self, u: &[C<T>], v: &[C<T>], z: &[C<T>], w: &[C<T>]) -> C<T> {
        let n = self.n;
        let mut acc = cz();
        for a in 0..n {
            if u[a] == cz() {
                continue;
            }
            for b in 0..n {
                if v[b] == cz() {
                    continue;
                }
                let ab = u[a] * v[b].conj();
                for l in 0..n {
                    if z[l] == cz() {
                        continue;
                    }
                    let abl = ab * z[l];
                    for m in 0..n {
                        acc += abl * w[m].conj() * self.get(a, b, l, m);
                    }
                }
            }
        }
        acc
    }

    /// Changes frame: entry `(α, β, λ, μ)` of the result is the tensor
    /// evaluated on rows `α, β, λ, μ` of `basis`.
    pub fn pull_back(&self, basis: &CMatrix<T>) -> Self {
        let n = self.n;
        let k = basis.rows();
        let mut cur = self.data.clone();
        let mut dims = [n, n, n, n];
        for slot in 0..4 {
            let conj = slot % 2 == 1;
            let mut next_dims = dims;
            next_dims[slot] = k;
            let mut next = vec![cz(); next_dims.iter().product()];
            let stride = |d: &[usize; 4], i: [usize; 4]| ((i[0] * d[1] + i[1]) * d[2] + i[2]) * d[3] + i[3];
            for i0 in 0..next_dims[0] {
                for i1 in 0..next_dims[1] {
                    for i2 in 0..next_dims[2] {
                        for i3 in 0..next_dims[3] {
                            let idx = [i0, i1, i2, i3];
                            let mut acc = cz();
                            for c in 0..n {
                                let mut src = idx;
                                src[slot] = c;
                                let coeff = basis[(idx[slot], c)];
                                let coeff = if conj { coeff.conj() } else { coeff };
                                acc += coeff * cur[stride(&dims, src)];
                            }
                            next[stride(&next_dims, idx)] = acc;
                        }
                    }
                }
            }
            cur = next;
            dims = next_dims;
        }
        Self { n: k, data: cur }
    }

    /// `h^{αβ̄} S_{αβ̄λμ̄}` for every `(λ, μ)`.
    pub fn trace_first(&self, levi: &LeviData<T>) -> CMatrix<T> {
        let n = self.n;
        CMatrix::from_fn(n, n, |l, m| {
            let mut acc = cz();
            for a in 0..n {
                for b in 0..n {
                    acc += levi.h_inv[(a, b)] * self.get(a, b, l, m);
                }
            }
            acc
        })
    }

    /// Largest violation of `R_{αβ̄γμ̄} = R_{γβ̄αμ̄}` and
    /// `R_{αβ̄γμ̄} = conj(R_{βᾱμγ̄})`.
    pub fn symmetry_defect(&self) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for a in 0..n {
            for b in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        let v = self.get(a, b, l, m);
                        worst = worst.max((v - self.get(l, b, a, m)).norm());
                        worst = worst.max((v - self.get(b, a, m, l).conj()).norm());
                    }
                }
            }
        }
        worst
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct CurvatureData<T> {
    pub riem: Tensor4<T>,
    pub ricci: CMatrix<T>,
    pub scalar: T,
    pub torsion: CMatrix<T>,
    pub chern: Tensor4<T>,
}

/// Christoffel symbols `gamma[λ][α][σ] = Γ_{λα}^σ = h^{σγ̄} ∂_λ h_{αγ̄}`.
pub fn christoffel<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<Vec<Vec<Vec<C<T>>>>> {
    let j = jet(sig, point)?;
    let l = levi(sig, point)?;
    Ok(christoffel_from(&j, &l))
}

pub(crate) fn christoffel_from<T: Real>(jet: &crate::model::PJet<T>, levi: &LeviData<T>) -> Vec<Vec<Vec<C<T>>>> {
    let n = jet.dim();
    let two = T::lit(2.0);
    let mut g = vec![vec![vec![cz(); n]; n]; n];
    for lam in 0..n {
        for a in 0..n {
            for s in 0..n {
                let mut acc = cz();
                for c in 0..n {
                    acc += levi.h_inv[(s, c)] * jet.third(a, c, lam) * two;
                }
                g[lam][a][s] = acc;
            }
        }
    }
    g
}

/// Curvature by differentiating `h` through the exact jets of `p`.
pub fn curvature_numeric<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<CurvatureData<T>> {
    let jet = jet(sig, point)?;
    let levi = levi(sig, point)?;
    let n = sig.dim();
    let two = T::lit(2.0);
    let hinv = &levi.h_inv;
    // dhinv[μ][σ][γ] = ∂_μ̄ h^{σγ̄} = −h^{σā} (∂_μ̄ h_{bā}) h^{bγ̄}
    let mut dhinv = vec![CMatrix::zeros(n, n); n];
    for (mu, slot) in dhinv.iter_mut().enumerate() {
        // dh[(b, a)] = ∂_μ̄ h_{bā} = 2 conj(p_{a b̄ μ})
        let dh = CMatrix::from_fn(n, n, |b, a| jet.third(a, b, mu).conj() * two);
        *slot = (&(hinv * &dh.transpose()) * hinv).scale(cr(-T::one()));
    }
    let mut riem = Tensor4::zeros(n);
    for a in 0..n {
        for lam in 0..n {
            for mu in 0..n {
                // ∂_μ̄ Γ_{λα}^σ
                let dgamma: Vec<C<T>> = (0..n)
                    .map(|s| {
                        let mut acc = cz();
                        for c in 0..n {
                            acc += dhinv[mu][(s, c)] * jet.third(a, c, lam) * two
                                + hinv[(s, c)] * jet.fourth(a, c, lam, mu) * two;
                        }
                        acc
                    })
                    .collect();
                for b in 0..n {
                    let mut acc = cz();
                    for s in 0..n {
                        acc += dgamma[s] * levi.h[(s, b)];
                    }
                    *riem.slot(a, b, lam, mu) = -acc;
                }
            }
        }
    }
    let ricci = ricci_from(&riem, &levi);
    let scalar = scalar_from(&ricci, &levi);
    let torsion = torsion_numeric(sig, point, &levi)?;
    let chern = chern_from(&riem, &ricci, scalar, &levi);
    Ok(CurvatureData { riem, ricci, scalar, torsion, chern })
}

/// `R_{αμ̄} = h^{λβ̄} R_{αβ̄λμ̄}`.
pub fn ricci_from<T: Real>(riem: &Tensor4<T>, levi: &LeviData<T>) -> CMatrix<T> {
    let n = riem.dim();
    CMatrix::from_fn(n, n, |a, m| {
        let mut acc = cz();
        for l in 0..n {
            for b in 0..n {
                acc += levi.h_inv[(l, b)] * riem.get(a, b, l, m);
            }
        }
        acc
    })
}

/// `R = h^{αμ̄} R_{αμ̄}`, real part; the imaginary part is rounding noise.
pub fn scalar_from<T: Real>(ricci: &CMatrix<T>, levi: &LeviData<T>) -> T {
    scalar_complex(ricci, levi).re
}

pub(crate) fn scalar_complex<T: Real>(ricci: &CMatrix<T>, levi: &LeviData<T>) -> C<T> {
    let n = ricci.rows();
    let mut acc = cz();
    for a in 0..n {
        for m in 0..n {
            acc += levi.h_inv[(a, m)] * ricci[(a, m)];
        }
    }
    acc
}

/// Torsion `A_{αβ} = L(τ(Z_α), Z_β)` with `τ(Z_α) = −π₋[T, Z_α]`, from
/// numerical brackets.
fn torsion_numeric<T: Real>(sig: &Signature, point: &SurfacePoint<T>, levi: &LeviData<T>) -> Result<CMatrix<T>> {
    let n = sig.dim();
    let mut a_mat = CMatrix::zeros(n, n);
    for a in 0..n {
        let br = lie_bracket(sig, point, FrameField::T, FrameField::Z(a))?;
        // τ(Z_α) = −(antiholomorphic part), paired against Z_β: L(Z_γ̄, Z_β) = h_{βγ̄}
        for b in 0..n {
            let mut acc = cz();
            for g in 0..n {
                acc -= br.antihol[g] * levi.h[(b, g)];
            }
            a_mat[(a, b)] = acc;
        }
    }
    Ok(a_mat)
}

/// Webster's formula for the Chern tensor.
pub fn chern_from<T: Real>(riem: &Tensor4<T>, ricci: &CMatrix<T>, scalar: T, levi: &LeviData<T>) -> Tensor4<T> {
    let n = riem.dim();
    let nn = T::of_usize(n);
    let c1 = (nn + T::lit(2.0)).recip();
    let c2 = scalar / ((nn + T::one()) * (nn + T::lit(2.0)));
    let h = &levi.h;
    Tensor4::from_fn(n, |a, b, l, m| {
        riem.get(a, b, l, m)
            - (h[(a, b)] * ricci[(l, m)] + h[(l, b)] * ricci[(a, m)] + h[(a, m)] * ricci[(l, b)]
                + h[(l, m)] * ricci[(a, b)])
                * c1
            + (h[(a, b)] * h[(l, m)] + h[(l, b)] * h[(a, m)]) * c2
    })
}

/// Closed-form curvature.
pub fn curvature_closed<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<CurvatureData<T>> {
    let frame = frame_fields(sig, point)?;
    Ok(curvature_closed_from(sig, point, &frame))
}

pub(crate) fn curvature_closed_from<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    frame: &FrameDecomposition<T>,
) -> CurvatureData<T> {
    let n = sig.dim();
    let levi = &frame.levi;
    // Q_{αβ̄} = Q_α^γ h_{γβ̄}
    let qflat = &frame.q_coeff * &levi.h;
    let mut riem = Tensor4::zeros(n);
    let mut ricci = CMatrix::zeros(n, n);
    let mut scalar = T::zero();
    for j in 0..sig.radial_blocks() {
        let m = T::of_usize(sig.exponent(j) as usize);
        let r = point.block_norm_sqr(sig, j);
        let coeff = -(m - T::one()) / (T::lit(2.0) * m) * r.powi(sig.exponent(j) as i32).recip();
        let nj = T::of_usize(sig.block_dim(j));
        let range = sig.block_range(j);
        for a in range.clone() {
            for b in range.clone() {
                ricci[(a, b)] = qflat[(a, b)] * (coeff * nj);
                for l in range.clone() {
                    for mu in range.clone() {
                        *riem.slot(a, b, l, mu) =
                            (qflat[(l, mu)] * qflat[(a, b)] + qflat[(a, mu)] * qflat[(l, b)]) * coeff;
                    }
                }
            }
        }
        scalar += coeff * nj * (nj - T::one());
    }
    let chern = chern_from(&riem, &ricci, scalar, levi);
    CurvatureData { riem, ricci, scalar, torsion: CMatrix::zeros(n, n), chern }
}

/// Chern tensor at `P`, from the closed-form curvature.
pub fn chern<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<Tensor4<T>> {
    Ok(curvature_closed(sig, point)?.chern)
}

/// Sectional curvature `k(V) = R(V, V̄, V, V̄) / |V|⁴` from the differentiated tensor.
pub fn sectional<T: Real>(sig: &Signature, point: &SurfacePoint<T>, v: &TangentVector<T>) -> Result<T> {
    let (norm_sqr, _) = sectional_checks(sig, point, v)?;
    let curv = curvature_numeric(sig, point)?;
    let r = curv.riem.eval(&v.hol, &v.hol, &v.hol, &v.hol);
    Ok(r.re / (norm_sqr * norm_sqr))
}

/// Closed form `k(V) = −|V|⁻⁴ Σ_j ((m_j − 1)/m_j) |z_j|^{−2m_j} Q♭_j(V, V̄)²`,
/// where `Q♭_j` is `Q♭` restricted to block `j`; on `ℰ^⊥` this is `|V_j|⁴`.
pub fn sectional_closed<T: Real>(sig: &Signature, point: &SurfacePoint<T>, v: &TangentVector<T>) -> Result<T> {
    let (norm_sqr, frame) = sectional_checks(sig, point, v)?;
    let mut acc = T::zero();
    for j in 0..sig.radial_blocks() {
        let m = T::of_usize(sig.exponent(j) as usize);
        let r = point.block_norm_sqr(sig, j).powi(sig.exponent(j) as i32);
        let q = frame.q_flat_block(sig, j, &v.hol, &v.hol).re;
        acc -= (m - T::one()) / m / r * q * q;
    }
    Ok(acc / (norm_sqr * norm_sqr))
}

fn sectional_checks<T: Real>(
    sig: &Signature,
    point: &SurfacePoint<T>,
    v: &TangentVector<T>,
) -> Result<(T, FrameDecomposition<T>)> {
    if !v.is_type_10(T::lit(1e-12)) {
        return Err(CrError::TypeMismatch);
    }
    let frame = frame_fields(sig, point)?;
    let norm_sqr = frame.levi.norm_sqr(&v.hol);
    if norm_sqr <= T::lit(1e-24) {
        return Err(CrError::ZeroVector);
    }
    Ok((norm_sqr, frame))
}
