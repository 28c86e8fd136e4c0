use std::fmt;

use crate::error::{Error, Result};

/// A bijection of `{0, .., n-1}` stored by images: `k ↦ images[k]`.
///
/// Composition follows function composition: `a.compose(&b)` applies `b`
/// first, so that `σ(g).compose(&σ(h)) = σ(gh)` for a homomorphism.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<u32>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            images: (0..n as u32).collect(),
        }
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        if n > u32::MAX as usize {
            return Err(Error::DegreeOverflow(format!("degree {n} exceeds u32 range")));
        }
        let mut seen = vec![false; n];
        for &k in &images {
            if k >= n || seen[k] {
                return Err(Error::InvalidPermutation(format!(
                    "image list of length {n} is not a bijection (offending image {k})"
                )));
            }
            seen[k] = true;
        }
        Ok(Self {
            images: images.into_iter().map(|k| k as u32).collect(),
        })
    }

    pub(crate) fn from_images_unchecked(images: Vec<u32>) -> Self {
        debug_assert!(Self::from_images(images.iter().map(|&k| k as usize).collect()).is_ok());
        Self { images }
    }

    /// Cyclic shift `k ↦ k + s (mod n)`.
    pub fn shift(n: usize, s: i64) -> Self {
        let n64 = n as i64;
        Self {
            images: (0..n64).map(|k| (k + s).rem_euclid(n64) as u32).collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    #[inline]
    pub fn apply(&self, k: usize) -> usize {
        self.images[k] as usize
    }

    pub fn images(&self) -> &[u32] {
        &self.images
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(
            self.degree(),
            other.degree(),
            "composing permutations of different degree"
        );
        Permutation {
            images: other.images.iter().map(|&k| self.images[k as usize]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.images.len()];
        for (k, &img) in self.images.iter().enumerate() {
            inv[img as usize] = k as u32;
        }
        Permutation { images: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(k, &v)| k as u32 == v)
    }

    pub fn fixed_points(&self) -> usize {
        self.images.iter().enumerate().filter(|(k, &v)| *k as u32 == v).count()
    }

    /// Nontrivial cycles in 1-based notation, ordered by smallest element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.degree()];
        let mut out = Vec::new();
        for start in 0..self.degree() {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut k = start;
            while !seen[k] {
                seen[k] = true;
                cycle.push(k + 1);
                k = self.apply(k);
            }
            if cycle.len() > 1 {
                out.push(cycle);
            }
        }
        out
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return f.write_str("()");
        }
        for c in cycles {
            let parts: Vec<String> = c.iter().map(|k| k.to_string()).collect();
            write!(f, "({})", parts.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_is_a_cycle() {
        let p = Permutation::shift(4, 1);
        assert_eq!(p.to_string(), "(1 2 3 4)");
        assert_eq!(p.compose(&p.inverse()), Permutation::identity(4));
    }

    #[test]
    fn compose_applies_right_first() {
        let a = Permutation::from_images(vec![1, 0, 2]).unwrap();
        let b = Permutation::from_images(vec![0, 2, 1]).unwrap();
        let ab = a.compose(&b);
        for k in 0..3 {
            assert_eq!(ab.apply(k), a.apply(b.apply(k)));
        }
    }

    #[test]
    fn rejects_non_bijection() {
        assert!(Permutation::from_images(vec![0, 0]).is_err());
        assert!(Permutation::from_images(vec![0, 2]).is_err());
    }
}
