//! 2×2 matrices, transfer and propagation matrices, and cocycle products.
//!
//! Products follow the cocycle convention: the `n`-step product starting at
//! `i` is `M(i+n−1)···M(i)`, so the factor at the starting index is applied
//! first. Block propagation matrices use the same order, first resonator
//! rightmost.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::blocks::{Block, BlockLibrary, BlockSequence, Resonator, ResonatorSequence};
use crate::error::{Error, Result};

/// Real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn diag(x: f64, y: f64) -> Self {
        Self::new(x, 0.0, 0.0, y)
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c)
    }

    /// Determinant via Kahan's fused multiply-add scheme, accurate to a few
    /// ulps even when `ad ≈ bc`.
    pub fn det(&self) -> f64 {
        let w = self.b * self.c;
        let e = (-self.b).mul_add(self.c, w);
        self.a.mul_add(self.d, -w) + e
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .abs()
            .max(self.b.abs())
            .max(self.c.abs())
            .max(self.d.abs())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Numerical(format!("singular matrix {self:?}")));
        }
        Ok(Self::new(
            self.d / det,
            -self.b / det,
            -self.c / det,
            self.a / det,
        ))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl std::ops::Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

/// Propagation matrix of one resonator at spectral parameter `lambda`.
pub fn propagation_matrix(r: &Resonator, lambda: f64) -> Mat2 {
    let k = r.length() * lambda / (r.wave_speed() * r.wave_speed());
    // fused so the stored matrix is unimodular to within half an ulp of its corner
    Mat2::new((-r.spacing()).mul_add(k, 1.0), r.spacing(), -k, 1.0)
}

/// Transfer matrix of the three-term recurrence
/// `a_prev x_{i−1} + (b_cur − λ) x_i + a_cur x_{i+1} = 0`, acting on `(x_i, x_{i−1})`.
pub fn transfer_matrix(a_prev: f64, a_cur: f64, b_cur: f64, lambda: f64) -> Result<Mat2> {
    if a_cur == 0.0 {
        return Err(Error::Domain(
            "transfer matrix needs a nonzero coupling".into(),
        ));
    }
    Ok(Mat2::new(
        (lambda - b_cur) / a_cur,
        -a_prev / a_cur,
        1.0,
        0.0,
    ))
}

/// Change of basis `Q(i)` from `(x_i, x_{i−1})` to `(u, u')` at the left end
/// of resonator `i`.
pub fn conjugacy(r_cur: &Resonator, r_prev: &Resonator) -> Mat2 {
    let top = r_cur.wave_speed() / r_cur.length().sqrt();
    let s = r_prev.spacing();
    Mat2::new(
        top,
        0.0,
        top / s,
        -r_prev.wave_speed() / (r_prev.length().sqrt() * s),
    )
}

/// Propagation matrix of a whole block, first resonator applied first.
pub fn block_propagation(b: &Block, lambda: f64) -> Mat2 {
    b.resonators()
        .iter()
        .fold(Mat2::IDENTITY, |acc, r| propagation_matrix(r, lambda) * acc)
}

/// An indexed family of 2×2 matrices.
pub trait Cocycle {
    fn at(&self, i: i64) -> Mat2;
}

impl<F: Fn(i64) -> Mat2> Cocycle for F {
    fn at(&self, i: i64) -> Mat2 {
        self(i)
    }
}

/// Resonator propagation matrices along a chain, repeated periodically.
pub struct PropagationCocycle<'a> {
    chain: &'a ResonatorSequence,
    lambda: f64,
}

impl<'a> PropagationCocycle<'a> {
    pub fn new(chain: &'a ResonatorSequence, lambda: f64) -> Result<Self> {
        if chain.is_empty() {
            return Err(Error::Validation("cocycle needs a nonempty chain".into()));
        }
        Ok(Self { chain, lambda })
    }
}

impl Cocycle for PropagationCocycle<'_> {
    fn at(&self, i: i64) -> Mat2 {
        let n = self.chain.len() as i64;
        propagation_matrix(
            &self.chain.resonators()[i.rem_euclid(n) as usize],
            self.lambda,
        )
    }
}

/// Block propagation matrices along a block sequence, repeated periodically.
pub struct BlockCocycle {
    mats: Vec<Mat2>,
    indices: Vec<usize>,
}

impl BlockCocycle {
    pub fn new(library: &BlockLibrary, seq: &BlockSequence, lambda: f64) -> Result<Self> {
        seq.validate(library)?;
        if seq.is_empty() {
            return Err(Error::Validation(
                "cocycle needs a nonempty sequence".into(),
            ));
        }
        let mats = library
            .blocks()
            .iter()
            .map(|b| block_propagation(b, lambda))
            .collect();
        Ok(Self {
            mats,
            indices: seq.indices.clone(),
        })
    }
}

impl Cocycle for BlockCocycle {
    fn at(&self, i: i64) -> Mat2 {
        let n = self.indices.len() as i64;
        self.mats[self.indices[i.rem_euclid(n) as usize]]
    }
}

/// A product stored as `e^{log_scale}·matrix` with `matrix` of max-entry 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteratedProduct {
    pub matrix: Mat2,
    pub log_scale: f64,
}

impl IteratedProduct {
    pub fn identity() -> Self {
        Self {
            matrix: Mat2::IDENTITY,
            log_scale: 0.0,
        }
    }

    /// Left-multiply by `m` and renormalise.
    pub fn push(&mut self, m: Mat2) {
        self.matrix = m * self.matrix;
        let s = self.matrix.max_abs();
        if s > 0.0 && s.is_finite() {
            self.matrix = self.matrix.scale(1.0 / s);
            self.log_scale += s.ln();
        }
    }

    /// The product as an ordinary matrix (may overflow for long products).
    pub fn reconstruct(&self) -> Mat2 {
        self.matrix.scale(self.log_scale.exp())
    }
}

/// `n`-step product of `cocycle` starting at `start`.
///
/// For `n < 0` this is `M(start+n)^{-1}···M(start−1)^{-1}`, the inverse of
/// the forward product that ends at `start`.
pub fn iterate<C: Cocycle + ?Sized>(cocycle: &C, start: i64, n: i64) -> Result<IteratedProduct> {
    let mut p = IteratedProduct::identity();
    if n >= 0 {
        for i in start..start + n {
            p.push(cocycle.at(i));
        }
    } else {
        for i in (start + n..start).rev() {
            p.push(cocycle.at(i).inverse()?);
        }
    }
    if !p.matrix.is_finite() {
        return Err(Error::Numerical(format!(
            "cocycle product from {start} over {n} steps is not finite"
        )));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacitance::{band_diag, band_offdiag};
    use proptest::prelude::*;

    fn res(l: f64, s: f64, v: f64) -> Resonator {
        Resonator::new(l, s, v).unwrap()
    }

    #[test]
    fn propagation_examples() {
        assert_eq!(
            propagation_matrix(&res(1.0, 1.0, 1.0), 0.0),
            Mat2::new(1.0, 1.0, 0.0, 1.0)
        );
        assert_eq!(
            propagation_matrix(&res(2.0, 2.0, 1.0), 2.0),
            Mat2::new(-7.0, 2.0, -4.0, 1.0)
        );
    }

    #[test]
    fn transfer_examples() {
        let t = transfer_matrix(-1.0, -1.0, 2.0, 0.7).unwrap();
        assert!(t.max_diff(&Mat2::new(2.0 - 0.7, -1.0, 1.0, 0.0)) < 1e-15);
        assert_eq!(transfer_matrix(-1.0, -2.0, 3.0, 3.0).unwrap().a, 0.0);
        assert!(transfer_matrix(-1.0, 0.0, 3.0, 3.0).is_err());
    }

    #[test]
    fn conjugacy_unit() {
        let r = res(1.0, 1.0, 1.0);
        assert_eq!(conjugacy(&r, &r), Mat2::new(1.0, 0.0, 1.0, -1.0));
    }

    #[test]
    fn standard_block_traces() {
        let lib = BlockLibrary::standard();
        for lambda in [0.0, 0.3, 1.0, 1.5, 2.5, 3.5, 7.0] {
            let t1 = block_propagation(&lib.blocks()[0], lambda).trace();
            let t2 = block_propagation(&lib.blocks()[1], lambda).trace();
            assert!((t1 - (2.0 - 4.0 * lambda)).abs() < 1e-12);
            assert!((t2 - (2.0 * lambda * lambda - 6.0 * lambda + 2.0)).abs() < 1e-11);
        }
        let b = &lib.blocks()[0];
        assert_eq!(
            block_propagation(b, 0.4),
            propagation_matrix(&b.resonators()[0], 0.4)
        );
    }

    #[test]
    fn iterate_edge_cases() {
        let m = Mat2::new(2.0, 1.0, 1.0, 1.0);
        let c = |_: i64| m;
        assert_eq!(iterate(&c, 3, 0).unwrap().reconstruct(), Mat2::IDENTITY);
        assert!(iterate(&c, 3, 1).unwrap().reconstruct().max_diff(&m) < 1e-15);
        let back = iterate(&c, 0, -1).unwrap().reconstruct();
        assert!((back * m).max_diff(&Mat2::IDENTITY) < 1e-14);
        let singular = |_: i64| Mat2::new(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            iterate(&singular, 0, -2),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn long_products_stay_bounded() {
        let c = |_: i64| Mat2::new(-7.0, 2.0, -4.0, 1.0);
        let p = iterate(&c, 0, 500).unwrap();
        assert!(p.matrix.is_finite() && (p.matrix.max_abs() - 1.0).abs() < 1e-15);
        assert!(p.matrix.norm() >= 0.5 && p.matrix.norm() <= 2.0);
        // spectral radius 3 + 2√2
        let rate = p.log_scale / 500.0;
        assert!((rate - (3.0 + 8f64.sqrt()).ln()).abs() < 1e-2);
    }

    fn arb_res() -> impl Strategy<Value = Resonator> {
        (0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0).prop_map(|(l, s, v)| res(l, s, v))
    }

    proptest! {
        #[test]
        fn unimodular(r in arb_res(), lambda in 0.0f64..10.0) {
            let p = propagation_matrix(&r, lambda);
            prop_assert!((p.det() - 1.0).abs() <= 1e-14 * p.max_abs().max(1.0).powi(2));
        }

        #[test]
        fn transfer_determinant(ap in -5.0f64..-0.1, ac in -5.0f64..-0.1, b in 0.0f64..5.0, l in 0.0f64..5.0) {
            let t = transfer_matrix(ap, ac, b, l).unwrap();
            prop_assert!((t.det() - ap / ac).abs() <= 1e-14 * (ap / ac).abs().max(1.0));
        }

        #[test]
        fn cohomology(chain in prop::collection::vec(arb_res(), 4..50), lambda in 0.0f64..6.0) {
            for i in 1..chain.len() - 1 {
                let (rp, r, rn) = (&chain[i - 1], &chain[i], &chain[i + 1]);
                let t = transfer_matrix(band_offdiag(rp, r), band_offdiag(r, rn), band_diag(rp, r), lambda).unwrap();
                let lhs = conjugacy(rn, r) * t * conjugacy(r, rp).inverse().unwrap();
                let p = propagation_matrix(r, lambda);
                prop_assert!(lhs.max_diff(&p) <= 1e-10 * p.max_abs().max(1.0));
            }
        }

        #[test]
        fn block_concatenation(a in prop::collection::vec(arb_res(), 1..5), b in prop::collection::vec(arb_res(), 1..5), lambda in 0.0f64..4.0) {
            let ba = Block::new(a.clone()).unwrap();
            let bb = Block::new(b.clone()).unwrap();
            let joined = Block::new(a.into_iter().chain(b).collect()).unwrap();
            let lhs = block_propagation(&joined, lambda);
            let rhs = block_propagation(&bb, lambda) * block_propagation(&ba, lambda);
            prop_assert!(lhs.max_diff(&rhs) <= 1e-12 * lhs.max_abs().max(1.0));
        }

        #[test]
        fn composition_law(chain in prop::collection::vec(arb_res(), 1..30), lambda in 0.0f64..4.0, i in -10i64..10, m in -20i64..20, n in -20i64..20) {
            let ch = ResonatorSequence::from_resonators(chain);
            let c = PropagationCocycle::new(&ch, lambda).unwrap();
            let whole = iterate(&c, i, m + n).unwrap();
            let first = iterate(&c, i, m).unwrap();
            let second = iterate(&c, i + m, n).unwrap();
            let composed = second.matrix * first.matrix;
            let scale = second.log_scale + first.log_scale - whole.log_scale;
            let diff = composed.scale(scale.exp()).max_diff(&whole.matrix);
            // relative to the largest intermediate factor
            let tol = 1e-9 * (1.0 + (second.log_scale + first.log_scale - whole.log_scale).exp());
            prop_assert!(diff <= tol, "diff {diff}");
        }

        #[test]
        fn renormalised_matches_naive(chain in prop::collection::vec(arb_res(), 1..10), lambda in 0.0f64..2.0, n in 0i64..30) {
            let ch = ResonatorSequence::from_resonators(chain);
            let c = PropagationCocycle::new(&ch, lambda).unwrap();
            let naive = (0..n).fold(Mat2::IDENTITY, |acc, i| c.at(i) * acc);
            let p = iterate(&c, 0, n).unwrap().reconstruct();
            prop_assert!(p.max_diff(&naive) <= 1e-9 * naive.max_abs().max(1.0));
        }
    }
}
