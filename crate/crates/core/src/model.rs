//! The generalized ellipsoid model `Im w = Σ_{j<s} |z_j|^{2m_j} + |z_s|²`.
//!
//! Blocks are indexed from 0 internally; block `s − 1` is the last (flat)
//! block, which carries exponent 1. Its variables may be absent (`n_s = 0`).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CrError, Result};
use crate::linalg::CMatrix;
use crate::scalar::{ci, cr, cz, Real, C};

/// Points whose radial blocks are closer to the origin than this are rejected.
pub const ADMISSIBILITY_MARGIN: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    exponents: Vec<u32>,
    dims: Vec<usize>,
    ranges: Vec<Range<usize>>,
}

impl Signature {
    /// `exponents` holds `m_1..m_{s−1}`, `dims` holds `n_1..n_s`.
    pub fn new(exponents: Vec<u32>, dims: Vec<usize>) -> Result<Self> {
        if dims.len() != exponents.len() + 1 {
            return Err(CrError::InvalidSignature(format!(
                "expected {} block dimensions for {} exponents, got {}",
                exponents.len() + 1,
                exponents.len(),
                dims.len()
            )));
        }
        for (j, (&m, &nj)) in exponents.iter().zip(&dims).enumerate() {
            if m < 2 {
                return Err(CrError::InvalidSignature(format!("m_{} = {m} must be at least 2", j + 1)));
            }
            if nj < 2 {
                return Err(CrError::InvalidSignature(format!("n_{} = {nj} must be at least 2", j + 1)));
            }
        }
        let mut ranges = Vec::with_capacity(dims.len());
        let mut start = 0;
        for &nj in &dims {
            ranges.push(start..start + nj);
            start += nj;
        }
        if start == 0 {
            return Err(CrError::InvalidSignature("total dimension is zero".into()));
        }
        Ok(Self { exponents, dims, ranges })
    }

    /// Number of blocks `s`.
    pub fn blocks(&self) -> usize {
        self.dims.len()
    }

    /// Index of the flat block.
    pub fn flat_block(&self) -> usize {
        self.dims.len() - 1
    }

    /// Total complex dimension `n`.
    pub fn dim(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    /// Exponent of block `j`, with the flat block reporting 1.
    pub fn exponent(&self, j: usize) -> u32 {
        self.exponents.get(j).copied().unwrap_or(1)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn block_dim(&self, j: usize) -> usize {
        self.dims[j]
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_range(&self, j: usize) -> Range<usize> {
        self.ranges[j].clone()
    }

    pub fn block_of(&self, alpha: usize) -> usize {
        self.ranges
            .iter()
            .position(|r| r.contains(&alpha))
            .expect("index outside the signature")
    }

    /// `α ∼ β`: both indices in the same block.
    pub fn equivalent(&self, alpha: usize, beta: usize) -> bool {
        self.block_of(alpha) == self.block_of(beta)
    }

    /// Number of radial (curved) blocks, `s − 1`.
    pub fn radial_blocks(&self) -> usize {
        self.exponents.len()
    }

    pub fn flat_dim(&self) -> usize {
        self.dims[self.flat_block()]
    }

    /// Whether block `j` may be sent to block `k` by a block permutation.
    pub fn blocks_compatible(&self, j: usize, k: usize) -> bool {
        self.exponent(j) == self.exponent(k) && self.dims[j] == self.dims[k]
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m: Vec<String> = self.exponents.iter().map(u32::to_string).collect();
        let n: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        write!(f, "m={};n={}", m.join(","), n.join(","))
    }
}

impl FromStr for Signature {
    type Err = CrError;

    /// Parses `"m=2,3;n=2,2,1"`. The `m` part may be empty or omitted for
    /// the flat model, e.g. `"m=;n=2"` or `"n=2"`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = |msg: &str| CrError::InvalidSignature(format!("{msg} in {text:?}"));
        let mut m: Option<Vec<u32>> = None;
        let mut n: Option<Vec<usize>> = None;
        for part in text.trim().split(';') {
            let (key, value) = part.split_once('=').ok_or_else(|| bad("missing '='"))?;
            let items: Vec<&str> =
                if value.trim().is_empty() { Vec::new() } else { value.split(',').map(str::trim).collect() };
            match key.trim() {
                "m" if m.is_none() => {
                    m = Some(items.iter().map(|x| x.parse().map_err(|_| bad("bad exponent"))).collect::<Result<_>>()?)
                }
                "n" if n.is_none() => {
                    n = Some(items.iter().map(|x| x.parse().map_err(|_| bad("bad dimension"))).collect::<Result<_>>()?)
                }
                _ => return Err(bad("unexpected key")),
            }
        }
        Signature::new(m.unwrap_or_default(), n.ok_or_else(|| bad("missing n"))?)
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A point `(z, t)` of the hypersurface, identified with `(z, t + i p(z))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SurfacePoint<T> {
    pub z: Vec<C<T>>,
    pub t: T,
}

impl<T: Real> SurfacePoint<T> {
    pub fn new(z: Vec<C<T>>, t: T) -> Self {
        Self { z, t }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn block_norm_sqr(&self, sig: &Signature, j: usize) -> T {
        self.z[sig.block_range(j)].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr())
    }

    /// Checks dimensions and that every radial block is bounded away from 0.
    pub fn check_admissible(&self, sig: &Signature) -> Result<()> {
        if self.z.len() != sig.dim() {
            return Err(CrError::DimensionMismatch { expected: sig.dim(), found: self.z.len() });
        }
        if !self.t.is_finite() || self.z.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(CrError::EvaluationFailure("non-finite coordinates".into()));
        }
        for j in 0..sig.radial_blocks() {
            let norm = self.block_norm_sqr(sig, j).sqrt();
            if norm < T::lit(ADMISSIBILITY_MARGIN) {
                return Err(CrError::InadmissiblePoint { block: j + 1, norm: norm.to_f64_lossy() });
            }
        }
        Ok(())
    }

    /// The defining function `p(z, z̄)`.
    pub fn p(&self, sig: &Signature) -> T {
        defining_function(sig, &self.z)
    }

    /// Ambient last coordinate `z^{n+1} = t + i p`.
    pub fn w(&self, sig: &Signature) -> C<T> {
        C::new(self.t, self.p(sig))
    }

    /// Translates the real chart coordinates `(x_1, y_1, …, x_n, y_n, t)`.
    pub fn offset_real(&self, delta: &[T]) -> Self {
        let mut out = self.clone();
        for (k, zk) in out.z.iter_mut().enumerate() {
            *zk += C::new(delta[2 * k], delta[2 * k + 1]);
        }
        out.t += delta[2 * self.z.len()];
        out
    }
}

pub fn defining_function<T: Real>(sig: &Signature, z: &[C<T>]) -> T {
    (0..sig.blocks())
        .map(|j| {
            let r = z[sig.block_range(j)].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
            r.powi(sig.exponent(j) as i32)
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Exact derivatives of `p` up to fourth order, Wirtinger convention
/// `∂_α = (∂_{x_α} − i ∂_{y_α}) / 2`.
///
/// Index layout: `hess[(α, β)] = p_{αβ̄}`, `hess_hol[(α, β)] = p_{αβ}`,
/// `third(α, β, λ) = p_{αβ̄λ}`, `fourth(α, β, λ, μ) = p_{αβ̄λμ̄}`.
#[derive(Clone, Debug)]
pub struct PJet<T> {
    pub value: T,
    pub grad: Vec<C<T>>,
    pub hess: CMatrix<T>,
    pub hess_hol: CMatrix<T>,
    n: usize,
    third: Vec<C<T>>,
    fourth: Vec<C<T>>,
}

impl<T: Real> PJet<T> {
    #[inline]
    pub fn third(&self, a: usize, b: usize, l: usize) -> C<T> {
        self.third[(a * self.n + b) * self.n + l]
    }

    #[inline]
    pub fn fourth(&self, a: usize, b: usize, l: usize, m: usize) -> C<T> {
        self.fourth[((a * self.n + b) * self.n + l) * self.n + m]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `p_{ᾱ} = conj(p_α)`.
    pub fn grad_bar(&self, a: usize) -> C<T> {
        self.grad[a].conj()
    }
}

/// `d^k/dr^k r^m` as the falling factorial times `r^{m−k}`.
fn radial_derivative<T: Real>(m: u32, k: u32, r: T) -> T {
    if k > m {
        return T::zero();
    }
    let coeff = (0..k).fold(1u64, |acc, i| acc * u64::from(m - i));
    T::lit(coeff as f64) * r.powi((m - k) as i32)
}

pub fn jet<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<PJet<T>> {
    point.check_admissible(sig)?;
    Ok(jet_unchecked(sig, &point.z))
}

/// Jet without the admissibility check; used by finite-difference stencils
/// that probe points off the admissible set.
pub(crate) fn jet_unchecked<T: Real>(sig: &Signature, z: &[C<T>]) -> PJet<T> {
    let n = sig.dim();
    let mut grad = vec![cz(); n];
    let mut hess = CMatrix::zeros(n, n);
    let mut hess_hol = CMatrix::zeros(n, n);
    let mut third = vec![cz(); n * n * n];
    let mut fourth = vec![cz(); n * n * n * n];
    let mut value = T::zero();
    let delta = |a: usize, b: usize| if a == b { T::one() } else { T::zero() };
    for j in 0..sig.blocks() {
        let range = sig.block_range(j);
        let m = sig.exponent(j);
        let r = z[range.clone()].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
        value += r.powi(m as i32);
        let f: Vec<T> = (1..=4).map(|k| radial_derivative(m, k, r)).collect();
        let (f1, f2, f3, f4) = (f[0], f[1], f[2], f[3]);
        for a in range.clone() {
            let za_bar = z[a].conj();
            grad[a] = za_bar * f1;
            for b in range.clone() {
                let zb = z[b];
                hess[(a, b)] = za_bar * zb * f2 + cr(f1 * delta(a, b));
                hess_hol[(a, b)] = za_bar * z[b].conj() * f2;
                for l in range.clone() {
                    let zl_bar = z[l].conj();
                    third[(a * n + b) * n + l] =
                        za_bar * zb * zl_bar * f3 + (za_bar * delta(b, l) + zl_bar * delta(a, b)) * f2;
                    for mu in range.clone() {
                        let zm = z[mu];
                        let v = za_bar * zb * zl_bar * zm * f4
                            + (zb * zl_bar * delta(a, mu)
                                + za_bar * zb * delta(l, mu)
                                + za_bar * zm * delta(b, l)
                                + zl_bar * zm * delta(a, b))
                                * f3
                            + cr((delta(a, mu) * delta(b, l) + delta(l, mu) * delta(a, b)) * f2);
                        fourth[((a * n + b) * n + l) * n + mu] = v;
                    }
                }
            }
        }
    }
    PJet { value, grad, hess, hess_hol, n, third, fourth }
}

/// Image of `P` under the biholomorphism onto the bounded ellipsoid
/// `Σ_j |w_j|^{2m_j} + |w_{n+1}|² < 1`, principal branches throughout.
pub fn to_bounded<T: Real>(sig: &Signature, point: &SurfacePoint<T>) -> Result<Vec<C<T>>> {
    point.check_admissible(sig)?;
    let w = point.w(sig);
    let shifted = w + ci();
    if shifted.norm() < T::lit(1e-12) {
        return Err(CrError::BranchFailure("i + z^{n+1} vanishes".into()));
    }
    let mut out = Vec::with_capacity(sig.dim() + 1);
    for j in 0..sig.blocks() {
        let m = T::of_usize(sig.exponent(j) as usize);
        let factor = cr(T::lit(2.0).powf(m.recip())) / shifted.powf(m.recip());
        out.extend(point.z[sig.block_range(j)].iter().map(|zk| zk * factor));
    }
    out.push((ci::<T>() - w) / shifted);
    Ok(out)
}

/// Residual of the bounded ellipsoid's defining equation at `image`.
pub fn bounded_residual<T: Real>(sig: &Signature, image: &[C<T>]) -> T {
    let n = sig.dim();
    let lhs = (0..sig.blocks())
        .map(|j| {
            let r = image[sig.block_range(j)].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
            r.powi(sig.exponent(j) as i32)
        })
        .fold(T::zero(), |a, b| a + b)
        + image[n].norm_sqr();
    (lhs - T::one()).abs()
}
