//! Parser for the map grammar:
//!
//! ```text
//! word := term (" . " term)*
//! term := "inv" | "dil(r=<float>)" | "phi(a=<cvec>;t0=<float>)"
//!       | "psi(sigma=<perm>;B<j>=<cmat>;b=<cvec>;t0=<float>)"
//! ```
//!
//! Arguments may appear in any order. Omitted `psi`/`phi` arguments take
//! the defaults `sigma = id`, `B_j = I`, `a = b = 0`, `t0 = 0`; `dil`
//! requires `r`. Complex scalars are written `re+imi`, `re-imi`, `re` or
//! `imi`. Permutations are 1-based.

use crate::error::{CrError, Result};
use crate::linalg::CMatrix;
use crate::model::Signature;
use crate::scalar::{Real, C};

use super::{Generator, MapDescriptor};

pub fn parse_map<T: Real>(text: &str, sig: &Signature) -> Result<MapDescriptor<T>> {
    let mut p = Parser { src: text, pos: 0 };
    let mut word = Vec::new();
    loop {
        let start = p.pos;
        let g = p.term(sig)?;
        g.validate(sig).map_err(|e| match e {
            CrError::InvalidParameter(msg) => CrError::InvalidParameter(format!("term at offset {start}: {msg}")),
            other => other,
        })?;
        word.push(g);
        if p.at_end() {
            break;
        }
        p.expect(" . ")?;
    }
    Ok(MapDescriptor { signature: sig.clone(), word })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

enum Arg<T> {
    Real(T),
    Vec(Vec<C<T>>),
    Mat(Vec<Vec<C<T>>>),
    Perm(Vec<usize>),
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn err<X>(&self, message: impl Into<String>) -> Result<X> {
        Err(CrError::SyntaxError { offset: self.pos, message: message.into() })
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected {s:?}"))
        }
    }

    fn ident(&mut self) -> &'a str {
        let rest = self.rest();
        let len = rest.find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    /// Raw token up to the next structural delimiter.
    fn token(&mut self) -> (usize, &'a str) {
        let start = self.pos;
        let rest = self.rest();
        let len = rest.find([';', ')', ',', ']', '[', '(']).unwrap_or(rest.len());
        self.pos += len;
        (start, rest[..len].trim())
    }

    fn term<T: Real>(&mut self, sig: &Signature) -> Result<Generator<T>> {
        let start = self.pos;
        let name = self.ident();
        match name {
            "inv" => Ok(Generator::Inv),
            "dil" => {
                let args = self.args::<T>(&["r"])?;
                match args.into_iter().next() {
                    Some((_, Arg::Real(r))) => Ok(Generator::Dil { r }),
                    _ => Err(CrError::SyntaxError { offset: start, message: "dil requires r=<float>".into() }),
                }
            }
            "phi" => {
                let mut a = vec![C::new(T::zero(), T::zero()); sig.flat_dim()];
                let mut t0 = T::zero();
                for (key, arg) in self.args::<T>(&["a", "t0"])? {
                    match (key.as_str(), arg) {
                        ("a", Arg::Vec(v)) => a = v,
                        ("t0", Arg::Real(x)) => t0 = x,
                        _ => unreachable!(),
                    }
                }
                Ok(Generator::Phi { a, t0 })
            }
            "psi" => {
                let k = sig.radial_blocks();
                let mut sigma: Vec<usize> = (0..k).collect();
                let mut b_mats: Vec<CMatrix<T>> = (0..k).map(|j| CMatrix::identity(sig.block_dim(j))).collect();
                if sig.flat_dim() > 0 {
                    b_mats.push(CMatrix::identity(sig.flat_dim()));
                }
                let mut b = vec![C::new(T::zero(), T::zero()); sig.flat_dim()];
                let mut t0 = T::zero();
                let mat_keys: Vec<String> = (1..=b_mats.len()).map(|j| format!("B{j}")).collect();
                let mut keys: Vec<&str> = vec!["sigma", "b", "t0"];
                keys.extend(mat_keys.iter().map(String::as_str));
                for (key, arg) in self.args::<T>(&keys)? {
                    match (key.as_str(), arg) {
                        ("sigma", Arg::Perm(p)) => sigma = p,
                        ("b", Arg::Vec(v)) => b = v,
                        ("t0", Arg::Real(x)) => t0 = x,
                        (mk, Arg::Mat(rows)) => {
                            let j: usize = mk[1..].parse().expect("matrix key");
                            b_mats[j - 1] = CMatrix::from_rows(&rows).ok_or_else(|| {
                                CrError::InvalidParameter(format!("{mk} has rows of unequal length"))
                            })?;
                        }
                        _ => unreachable!(),
                    }
                }
                Ok(Generator::Psi { sigma, b_mats, b, t0 })
            }
            "" => self.err("expected a term"),
            other => Err(CrError::SyntaxError { offset: start, message: format!("unknown term {other:?}") }),
        }
    }

    fn args<T: Real>(&mut self, allowed: &[&str]) -> Result<Vec<(String, Arg<T>)>> {
        self.expect("(")?;
        let mut out: Vec<(String, Arg<T>)> = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            let key_pos = self.pos;
            let key = self.ident().to_string();
            if !allowed.contains(&key.as_str()) {
                return Err(CrError::SyntaxError { offset: key_pos, message: format!("unexpected argument {key:?}") });
            }
            if out.iter().any(|(k, _)| *k == key) {
                return Err(CrError::SyntaxError { offset: key_pos, message: format!("duplicate argument {key:?}") });
            }
            self.expect("=")?;
            let arg = match key.as_str() {
                "r" | "t0" => Arg::Real(self.real()?),
                "a" | "b" => Arg::Vec(self.cvec()?),
                "sigma" => Arg::Perm(self.perm()?),
                _ => Arg::Mat(self.cmat()?),
            };
            out.push((key, arg));
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(";")?;
        }
    }

    fn real<T: Real>(&mut self) -> Result<T> {
        let (start, tok) = self.token();
        match tok.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(T::lit(x)),
            _ => Err(CrError::SyntaxError { offset: start, message: format!("invalid number {tok:?}") }),
        }
    }

    fn complex<T: Real>(&mut self) -> Result<C<T>> {
        let (start, tok) = self.token();
        parse_complex(tok)
            .map(|(re, im)| C::new(T::lit(re), T::lit(im)))
            .ok_or(CrError::SyntaxError { offset: start, message: format!("invalid complex number {tok:?}") })
    }

    fn list<X>(&mut self, mut item: impl FnMut(&mut Self) -> Result<X>) -> Result<Vec<X>> {
        self.expect("[")?;
        let mut out = Vec::new();
        if self.eat("]") {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat("]") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn cvec<T: Real>(&mut self) -> Result<Vec<C<T>>> {
        self.list(|p| p.complex())
    }

    fn cmat<T: Real>(&mut self) -> Result<Vec<Vec<C<T>>>> {
        self.list(|p| p.cvec())
    }

    fn perm(&mut self) -> Result<Vec<usize>> {
        self.list(|p| {
            let (start, tok) = p.token();
            match tok.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(CrError::SyntaxError { offset: start, message: format!("invalid block index {tok:?}") }),
            }
        })
    }
}

/// `re`, `imi`, `re+imi`, `re-imi`; a bare `i` means one.
fn parse_complex(tok: &str) -> Option<(f64, f64)> {
    let tok = tok.trim();
    if tok.is_empty() {
        return None;
    }
    let Some(body) = tok.strip_suffix('i') else {
        return tok.parse().ok().filter(|x: &f64| x.is_finite()).map(|x| (x, 0.0));
    };
    // split at the last sign that is not an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().ok()?, imag_part(&body[k..])?),
        None => (0.0, imag_part(body)?),
    };
    (re.is_finite() && im.is_finite()).then_some((re, im))
}

fn imag_part(s: &str) -> Option<f64> {
    match s {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => s.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("1.5"), Some((1.5, 0.0)));
        assert_eq!(parse_complex("2i"), Some((0.0, 2.0)));
        assert_eq!(parse_complex("-i"), Some((0.0, -1.0)));
        assert_eq!(parse_complex("1-2i"), Some((1.0, -2.0)));
        assert_eq!(parse_complex("1e-3+2e-2i"), Some((1e-3, 2e-2)));
        assert_eq!(parse_complex("-1e+2-1e-1i"), Some((-100.0, -0.1)));
        assert_eq!(parse_complex("abc"), None);
        assert_eq!(parse_complex("1+2"), None);
    }
}
