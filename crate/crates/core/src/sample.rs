//! Seeded random inputs: points, vectors, unitary matrices, map words.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::frame::TangentVector;
use crate::linalg::CMatrix;
use crate::maps::{Generator, MapDescriptor};
use crate::model::{Signature, SurfacePoint};
use crate::scalar::{Real, C};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> T {
    T::lit(rng.gen_range(lo..hi))
}

pub fn complex<T: Real, R: Rng + ?Sized>(rng: &mut R, scale: f64) -> C<T> {
    C::new(uniform(rng, -scale, scale), uniform(rng, -scale, scale))
}

pub fn complex_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize, scale: f64) -> Vec<C<T>> {
    (0..len).map(|_| complex(rng, scale)).collect()
}

/// Random admissible point: each radial block has norm in `[0.5, 1.5]`,
/// flat coordinates and `t` are uniform in `[-1, 1]`.
pub fn point<T: Real, R: Rng + ?Sized>(sig: &Signature, rng: &mut R) -> SurfacePoint<T> {
    point_with_radii(sig, rng, 0.5, 1.5)
}

pub fn point_with_radii<T: Real, R: Rng + ?Sized>(
    sig: &Signature,
    rng: &mut R,
    r_min: f64,
    r_max: f64,
) -> SurfacePoint<T> {
    let mut z = Vec::with_capacity(sig.dim());
    for j in 0..sig.blocks() {
        let nj = sig.block_dim(j);
        if j == sig.flat_block() {
            z.extend(complex_vec::<T, _>(rng, nj, 1.0));
            continue;
        }
        let dir = loop {
            let v: Vec<C<f64>> = complex_vec(rng, nj, 1.0);
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.1 {
                break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
            }
        };
        let radius = rng.gen_range(r_min..r_max);
        z.extend(dir.into_iter().map(|x| C::new(T::lit(x.re * radius), T::lit(x.im * radius))));
    }
    SurfacePoint::new(z, uniform(rng, -1.0, 1.0))
}

pub fn holomorphic_vector<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> TangentVector<T> {
    TangentVector::holomorphic(complex_vec(rng, n, 1.0))
}

/// Random unitary matrix: polar factor of a matrix with uniform entries.
pub fn unitary<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix<T> {
    loop {
        let a = CMatrix::from_fn(n, n, |_, _| complex::<T, _>(rng, 1.0));
        if let Some(u) = a.unitary_polar() {
            if u.unitarity_defect() < T::lit(1e-12) {
                return u;
            }
        }
    }
}

/// A random permutation of the radial blocks that respects `(m_j, n_j)`.
pub fn block_permutation<R: Rng + ?Sized>(sig: &Signature, rng: &mut R) -> Vec<usize> {
    let k = sig.radial_blocks();
    let mut sigma: Vec<usize> = (0..k).collect();
    // shuffle within classes of compatible blocks
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        if sig.blocks_compatible(sigma[i], sigma[j]) && sig.blocks_compatible(i, j) {
            sigma.swap(i, j);
        }
    }
    sigma
}

pub fn psi<T: Real, R: Rng + ?Sized>(sig: &Signature, rng: &mut R) -> Generator<T> {
    let sigma = block_permutation(sig, rng);
    let mut b_mats: Vec<CMatrix<T>> = (0..sig.radial_blocks()).map(|j| unitary(sig.block_dim(j), rng)).collect();
    if sig.flat_dim() > 0 {
        b_mats.push(unitary(sig.flat_dim(), rng));
    }
    Generator::Psi { sigma, b_mats, b: complex_vec(rng, sig.flat_dim(), 0.5), t0: uniform(rng, -1.0, 1.0) }
}

pub fn phi<T: Real, R: Rng + ?Sized>(sig: &Signature, rng: &mut R) -> Generator<T> {
    Generator::Phi { a: complex_vec(rng, sig.flat_dim(), 0.5), t0: uniform(rng, -1.0, 1.0) }
}

pub fn dil<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Generator<T> {
    Generator::Dil { r: T::lit(rng.gen_range(0.5f64..2.0)) }
}

pub fn generator<T: Real, R: Rng + ?Sized>(sig: &Signature, rng: &mut R) -> Generator<T> {
    match rng.gen_range(0..4) {
        0 => Generator::Inv,
        1 => dil(rng),
        2 => psi(sig, rng),
        _ => phi(sig, rng),
    }
}

/// Random composite word with `1..=max_len` generators.
pub fn word<T: Real, R: Rng + ?Sized>(sig: &Signature, rng: &mut R, max_len: usize) -> MapDescriptor<T> {
    let len = rng.gen_range(1..=max_len.max(1));
    MapDescriptor::new(sig.clone(), (0..len).map(|_| generator(sig, rng)).collect())
        .expect("sampled generators are valid")
}

/// Random `ψ ∘ δ_r ∘ I ∘ φ_a`, or `ψ ∘ δ_r` when `inversion` is false.
pub fn normal_form<T: Real, R: Rng + ?Sized>(sig: &Signature, rng: &mut R, inversion: bool) -> MapDescriptor<T> {
    let mut word = vec![psi(sig, rng), dil(rng)];
    if inversion {
        word.push(Generator::Inv);
        word.push(phi(sig, rng));
    }
    MapDescriptor::new(sig.clone(), word).expect("sampled generators are valid")
}
