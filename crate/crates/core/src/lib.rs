//! Spectra of block-disordered chains of subwavelength resonators.
//!
//! A chain of resonators with lengths `ℓ_i`, trailing spacings `s_i` and wave
//! speeds `v_i` has its leading-order resonant frequencies given by the
//! eigenvalues of `VC`, where `V = diag(v_i²/ℓ_i)` and `C` is the tridiagonal
//! capacitance matrix. The crate assembles the symmetric form
//! `J = V^{1/2} C V^{1/2}`, solves it, and certifies spectral gaps of
//! infinite and semi-infinite chains built from a finite block library via
//! the propagation-matrix cocycle.
//!
//! # Indexing
//!
//! Everything is 0-based.
//!
//! | quantity | meaning |
//! |---|---|
//! | `ℓ_i, s_i, v_i` | resonator `i`, `0 ≤ i < N`; `s_i` is the gap between `i` and `i+1` |
//! | `a_i` | off-diagonal of `J` coupling `i` and `i+1`, `0 ≤ i < N−1` |
//! | `b_i` | diagonal of `J`, `0 ≤ i < N` |
//! | `b_0`, `b_{N−1}` | physical edge values `v_0²/(ℓ_0 s_0)` and `v_{N−1}²/(ℓ_{N−1} s_{N−2})` |
//! | `P(i)` | propagation matrix of resonator `i`; maps `(u, u')` at its left end to the left end of `i+1` |
//! | `Q(i)` | conjugacy between transfer and propagation matrices, uses resonators `i−1, i` |
//! | blocks | indices `0..D` into the library |
//!
//! # Modules
//!
//! - [`blocks`]: resonators, libraries, sampling and de Bruijn words.
//! - [`capacitance`]: `C`, `V` and the finite Jacobi matrix.
//! - [`tridiag`]: Sturm bisection and inverse iteration.
//! - [`cocycle`]: 2×2 matrices, transfer/propagation matrices, renormalised products.
//! - [`projective`]: the projective line, fixed points, source-sink test, invariant cones.
//! - [`classify`]: per-frequency verdicts and band scans.
//! - [`edge`]: stable directions and edge modes of semi-infinite chains.
//! - [`finite`]: finite spectra, inclusion checks and density of states.
//! - [`cli`]: the `resochain` command-line driver.

pub mod blocks;
pub mod capacitance;
pub mod classify;
pub mod cli;
pub mod cocycle;
pub mod edge;
pub mod error;
pub mod finite;
pub mod projective;
pub mod tridiag;

pub use blocks::{Block, BlockLibrary, BlockSequence, Provenance, Resonator, ResonatorSequence};
pub use error::{Error, Result};
