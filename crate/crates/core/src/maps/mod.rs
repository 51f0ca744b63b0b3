//! The map families (inversion, dilations, block-unitary maps, translations),
//! their composition words, evaluation and pushforward.

mod eval;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CrError, Result};
use crate::linalg::CMatrix;
use crate::model::Signature;
use crate::scalar::{cr, Real, C};

pub use eval::{
    chart_jacobian_from_holomorphic, cr_factor, cr_factor_checked, numeric_chart_jacobian, pushforward,
    pushforward_with, verify_cr, CrReport, FnOracle, MapJet, MapOracle, SampleResidual, CHART_FD_STEP,
};
pub use parse::parse_map;

/// One generator of a composition word.
///
/// Block indices are 0-based: for `Psi`, output block `k` is
/// `B_k z_{σ(k)}` and `b_mats[s−1]` (present iff `n_s ≥ 1`) acts on the
/// flat block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum Generator<T> {
    Inv,
    Dil { r: T },
    Psi { sigma: Vec<usize>, b_mats: Vec<CMatrix<T>>, b: Vec<C<T>>, t0: T },
    Phi { a: Vec<C<T>>, t0: T },
}

/// A composition word `g_1 ∘ g_2 ∘ … ∘ g_k`, stored left to right and
/// applied right to left. The empty word is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct MapDescriptor<T> {
    pub signature: Signature,
    pub word: Vec<Generator<T>>,
}

const UNITARY_TOL: f64 = 1e-12;

impl<T: Real> Generator<T> {
    pub fn validate(&self, sig: &Signature) -> Result<()> {
        let bad = |msg: String| Err(CrError::InvalidParameter(msg));
        match self {
            Generator::Inv => Ok(()),
            Generator::Dil { r } => {
                if *r > T::zero() && r.is_finite() {
                    Ok(())
                } else {
                    bad(format!("dilation factor must be positive, got {r}"))
                }
            }
            Generator::Phi { a, t0 } => {
                if a.len() != sig.flat_dim() {
                    return bad(format!("a has {} entries, flat block has {}", a.len(), sig.flat_dim()));
                }
                if !t0.is_finite() {
                    return bad("t0 must be finite".into());
                }
                Ok(())
            }
            Generator::Psi { sigma, b_mats, b, t0 } => {
                let k = sig.radial_blocks();
                if sigma.len() != k {
                    return bad(format!("sigma has {} entries, expected {k}", sigma.len()));
                }
                let mut seen = vec![false; k];
                for (j, &target) in sigma.iter().enumerate() {
                    if target >= k || seen[target] {
                        return bad("sigma is not a permutation".into());
                    }
                    seen[target] = true;
                    if !sig.blocks_compatible(j, target) {
                        return bad(format!(
                            "sigma sends block {} to block {} with different (m, n)",
                            j + 1,
                            target + 1
                        ));
                    }
                }
                let expected = k + usize::from(sig.flat_dim() > 0);
                if b_mats.len() != expected {
                    return bad(format!("expected {expected} unitary blocks, got {}", b_mats.len()));
                }
                for (j, bm) in b_mats.iter().enumerate() {
                    let nj = sig.block_dim(if j < k { j } else { sig.flat_block() });
                    if bm.rows() != nj || bm.cols() != nj {
                        return bad(format!("B{} must be {nj}x{nj}", j + 1));
                    }
                    let defect = bm.unitarity_defect();
                    if !(defect <= T::lit(UNITARY_TOL)) {
                        return bad(format!("B{} is not unitary (defect {:e})", j + 1, defect.to_f64_lossy()));
                    }
                }
                if b.len() != sig.flat_dim() {
                    return bad(format!("b has {} entries, flat block has {}", b.len(), sig.flat_dim()));
                }
                if !t0.is_finite() {
                    return bad("t0 must be finite".into());
                }
                Ok(())
            }
        }
    }

    /// Exact inverse as a word (the inversion needs a unitary correction).
    pub fn inverse_word(&self, sig: &Signature) -> Vec<Generator<T>> {
        match self {
            Generator::Dil { r } => vec![Generator::Dil { r: r.recip() }],
            Generator::Phi { a, t0 } => vec![Generator::Phi { a: a.iter().map(|x| -x).collect(), t0: -*t0 }],
            Generator::Psi { sigma, b_mats, b, t0 } => {
                let k = sigma.len();
                let mut sigma_inv = vec![0; k];
                for (j, &target) in sigma.iter().enumerate() {
                    sigma_inv[target] = j;
                }
                let mut mats: Vec<CMatrix<T>> = (0..k).map(|j| b_mats[sigma_inv[j]].adjoint()).collect();
                let mut b_new = Vec::new();
                if let Some(bs) = b_mats.get(k) {
                    let bs_adj = bs.adjoint();
                    b_new = bs_adj.mul_vec(b).into_iter().map(|x| -x).collect();
                    mats.push(bs_adj);
                }
                vec![Generator::Psi { sigma: sigma_inv, b_mats: mats, b: b_new, t0: -*t0 }]
            }
            Generator::Inv => {
                // I∘I is the block rotation z_j ↦ e^{−iπ/m_j} z_j, z_s ↦ −z_s.
                vec![rotation(sig, T::one()), Generator::Inv]
            }
        }
    }
}

/// Block-unitary map with `B_j = e^{sign·iπ/m_j}` and `B_s = −I`.
fn rotation<T: Real>(sig: &Signature, sign: T) -> Generator<T> {
    let k = sig.radial_blocks();
    let mut b_mats: Vec<CMatrix<T>> = (0..k)
        .map(|j| {
            let angle = sign * T::PI() / T::of_usize(sig.exponent(j) as usize);
            CMatrix::identity(sig.block_dim(j)).scale(C::from_polar(T::one(), angle))
        })
        .collect();
    if sig.flat_dim() > 0 {
        b_mats.push(CMatrix::identity(sig.flat_dim()).scale(cr(-T::one())));
    }
    Generator::Psi { sigma: (0..k).collect(), b_mats, b: vec![C::new(T::zero(), T::zero()); sig.flat_dim()], t0: T::zero() }
}

impl<T: Real> MapDescriptor<T> {
    pub fn new(signature: Signature, word: Vec<Generator<T>>) -> Result<Self> {
        for g in &word {
            g.validate(&signature)?;
        }
        Ok(Self { signature, word })
    }

    pub fn identity(signature: Signature) -> Self {
        Self { signature, word: Vec::new() }
    }

    pub fn single(signature: Signature, g: Generator<T>) -> Result<Self> {
        Self::new(signature, vec![g])
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut word = self.word.clone();
        word.extend(other.word.iter().cloned());
        Self { signature: self.signature.clone(), word }
    }

    pub fn inverse(&self) -> Self {
        let word = self.word.iter().rev().flat_map(|g| g.inverse_word(&self.signature)).collect();
        Self { signature: self.signature.clone(), word }
    }
}

fn fmt_real<T: Real>(x: T) -> String {
    format!("{}", x.to_f64_lossy())
}

fn fmt_complex<T: Real>(x: C<T>) -> String {
    let (re, im) = (x.re.to_f64_lossy(), x.im.to_f64_lossy());
    if im.is_sign_negative() {
        format!("{re}-{}i", -im)
    } else {
        format!("{re}+{im}i")
    }
}

fn fmt_cvec<T: Real>(v: &[C<T>]) -> String {
    let items: Vec<String> = v.iter().map(|x| fmt_complex(*x)).collect();
    format!("[{}]", items.join(","))
}

impl<T: Real> fmt::Display for Generator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Inv => write!(f, "inv"),
            Generator::Dil { r } => write!(f, "dil(r={})", fmt_real(*r)),
            Generator::Phi { a, t0 } => write!(f, "phi(a={};t0={})", fmt_cvec(a), fmt_real(*t0)),
            Generator::Psi { sigma, b_mats, b, t0 } => {
                let perm: Vec<String> = sigma.iter().map(|x| (x + 1).to_string()).collect();
                write!(f, "psi(sigma=[{}]", perm.join(","))?;
                for (j, m) in b_mats.iter().enumerate() {
                    let rows: Vec<String> = m.to_rows().iter().map(|r| fmt_cvec(r)).collect();
                    write!(f, ";B{}=[{}]", j + 1, rows.join(","))?;
                }
                write!(f, ";b={};t0={})", fmt_cvec(b), fmt_real(*t0))
            }
        }
    }
}

impl<T: Real> fmt::Display for MapDescriptor<T> {
    /// Canonical text in the map grammar; the identity prints as `id`,
    /// which the parser does not accept.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return write!(f, "id");
        }
        let terms: Vec<String> = self.word.iter().map(ToString::to_string).collect();
        write!(f, "{}", terms.join(" . "))
    }
}
