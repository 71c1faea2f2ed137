//! Resonators, blocks, block libraries and the sequences built from them.
//!
//! A chain is described at two levels. The block level is a word over the
//! library alphabet `0..D` (a [`BlockSequence`]); the resonator level is the
//! concatenation of the chosen blocks' resonators (a [`ResonatorSequence`]).
//! Block indices are 0-based throughout the crate.
//!
//! Random sampling uses ChaCha8 (a counter-mode generator, see
//! [`rand_chacha::ChaCha8Rng`]) seeded with `seed_from_u64`. Each draw takes
//! one `f64` uniform on `[0, 1)` and walks the cumulative probabilities, so a
//! given `(library, M, seed)` produces the same word on every platform.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ p_d = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// One subwavelength resonator: its length, the gap to the *next* resonator
/// and its interior wave speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResonator")]
pub struct Resonator {
    length: f64,
    spacing: f64,
    wave_speed: f64,
}

#[derive(Deserialize)]
struct RawResonator {
    length: f64,
    spacing: f64,
    wave_speed: f64,
}

impl TryFrom<RawResonator> for Resonator {
    type Error = Error;

    fn try_from(raw: RawResonator) -> Result<Self> {
        Resonator::new(raw.length, raw.spacing, raw.wave_speed)
    }
}

impl Resonator {
    pub fn new(length: f64, spacing: f64, wave_speed: f64) -> Result<Self> {
        for (name, value) in [
            ("length", length),
            ("spacing", spacing),
            ("wave_speed", wave_speed),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Validation(format!(
                    "resonator {name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(Self {
            length,
            spacing,
            wave_speed,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wave_speed(&self) -> f64 {
        self.wave_speed
    }

    /// Same resonator with a different trailing spacing.
    pub fn with_spacing(&self, spacing: f64) -> Result<Self> {
        Self::new(self.length, spacing, self.wave_speed)
    }

    /// Entry `v²/ℓ` of the material matrix.
    pub fn material(&self) -> f64 {
        self.wave_speed * self.wave_speed / self.length
    }
}

/// A nonempty, ordered list of resonators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Resonator>", into = "Vec<Resonator>")]
pub struct Block {
    resonators: Vec<Resonator>,
}

impl TryFrom<Vec<Resonator>> for Block {
    type Error = Error;

    fn try_from(resonators: Vec<Resonator>) -> Result<Self> {
        Block::new(resonators)
    }
}

impl From<Block> for Vec<Resonator> {
    fn from(block: Block) -> Self {
        block.resonators
    }
}

impl Block {
    pub fn new(resonators: Vec<Resonator>) -> Result<Self> {
        if resonators.is_empty() {
            return Err(Error::Validation(
                "a block needs at least one resonator".into(),
            ));
        }
        Ok(Self { resonators })
    }

    pub fn resonators(&self) -> &[Resonator] {
        &self.resonators
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.resonators.len()
    }
}

/// `D` blocks together with their sampling probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLibrary")]
pub struct BlockLibrary {
    blocks: Vec<Block>,
    probabilities: Vec<f64>,
}

/// On-disk form: `blocks` is an array of arrays of
/// `{length, spacing, wave_speed}` tables; `probabilities` defaults to uniform.
#[derive(Deserialize)]
struct RawLibrary {
    blocks: Vec<Block>,
    #[serde(default)]
    probabilities: Option<Vec<f64>>,
}

impl TryFrom<RawLibrary> for BlockLibrary {
    type Error = Error;

    fn try_from(raw: RawLibrary) -> Result<Self> {
        match raw.probabilities {
            Some(p) => BlockLibrary::new(raw.blocks, p),
            None => BlockLibrary::uniform(raw.blocks),
        }
    }
}

impl BlockLibrary {
    pub fn new(blocks: Vec<Block>, probabilities: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Validation(
                "a library needs at least one block".into(),
            ));
        }
        if blocks.len() != probabilities.len() {
            return Err(Error::Validation(format!(
                "{} blocks but {} probabilities",
                blocks.len(),
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Validation(format!(
                "sampling probabilities must be positive, got {p}"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::Validation(format!(
                "sampling probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            blocks,
            probabilities,
        })
    }

    /// All blocks equally likely.
    pub fn uniform(blocks: Vec<Block>) -> Result<Self> {
        let d = blocks.len().max(1);
        let p = vec![1.0 / d as f64; blocks.len()];
        Self::new(blocks, p)
    }

    /// The monomer/dimer pair used throughout the examples: a single
    /// resonator with `ℓ = s = 2`, and a dimer with `ℓ = 1`, spacings `1, 2`.
    /// All wave speeds are 1; both blocks are drawn with probability 1/2.
    pub fn standard() -> Self {
        let r = |l, s| Resonator::new(l, s, 1.0).expect("valid resonator");
        let monomer = Block::new(vec![r(2.0, 2.0)]).expect("nonempty");
        let dimer = Block::new(vec![r(1.0, 1.0), r(1.0, 2.0)]).expect("nonempty");
        Self::new(vec![monomer, dimer], vec![0.5, 0.5]).expect("valid library")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> Result<&Block> {
        self.blocks.get(index).ok_or_else(|| {
            Error::Validation(format!(
                "block index {index} out of range for a library of {} blocks",
                self.blocks.len()
            ))
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Number of blocks `D`.
    pub fn size(&self) -> usize {
        self.blocks.len()
    }

    /// Mean number of resonators per sampled block.
    pub fn mean_block_length(&self) -> f64 {
        self.blocks
            .iter()
            .zip(&self.probabilities)
            .map(|(b, p)| p * b.len() as f64)
            .sum()
    }
}

/// Where a block sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    IidSample { seed: u64 },
    PseudoErgodicWord { depth: usize },
    Explicit,
}

/// A finite word over the block alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSequence {
    pub indices: Vec<usize>,
    pub provenance: Provenance,
}

impl BlockSequence {
    pub fn explicit(indices: Vec<usize>) -> Self {
        Self {
            indices,
            provenance: Provenance::Explicit,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self, library: &BlockLibrary) -> Result<()> {
        match self.indices.iter().find(|&&d| d >= library.size()) {
            Some(d) => Err(Error::Validation(format!(
                "block index {d} out of range for a library of {} blocks",
                library.size()
            ))),
            None => Ok(()),
        }
    }

    /// The same blocks in reverse order.
    pub fn reversed(&self) -> Self {
        let mut indices = self.indices.clone();
        indices.reverse();
        Self {
            indices,
            provenance: Provenance::Explicit,
        }
    }
}

/// Resonators of a chain together with the index at which each block starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSequence {
    resonators: Vec<Resonator>,
    block_offsets: Vec<usize>,
}

impl ResonatorSequence {
    /// A chain with no block structure (each resonator is its own block).
    pub fn from_resonators(resonators: Vec<Resonator>) -> Self {
        let block_offsets = (0..resonators.len()).collect();
        Self {
            resonators,
            block_offsets,
        }
    }

    /// The first `n` resonators of the chain repeated periodically.
    pub fn periodic_prefix(&self, n: usize) -> Self {
        let len = self.resonators.len();
        if len == 0 {
            return self.clone();
        }
        let mut resonators = Vec::with_capacity(n);
        let mut block_offsets = Vec::new();
        let mut base = 0;
        while resonators.len() < n {
            let take = (n - resonators.len()).min(len);
            resonators.extend_from_slice(&self.resonators[..take]);
            block_offsets.extend(
                self.block_offsets
                    .iter()
                    .filter(|&&o| o < take)
                    .map(|o| o + base),
            );
            base += len;
        }
        Self {
            resonators,
            block_offsets,
        }
    }

    /// Number of resonators in the first `blocks` blocks of the periodic
    /// repetition of the chain.
    pub fn resonators_in_blocks(&self, blocks: usize) -> usize {
        let per = self.block_offsets.len();
        if per == 0 {
            return 0;
        }
        let (full, rest) = (blocks / per, blocks % per);
        let partial = if rest == 0 {
            0
        } else {
            self.block_offsets[rest]
        };
        full * self.resonators.len() + partial
    }

    pub fn resonators(&self) -> &[Resonator] {
        &self.resonators
    }

    pub fn block_offsets(&self) -> &[usize] {
        &self.block_offsets
    }

    pub fn len(&self) -> usize {
        self.resonators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resonators.is_empty()
    }

    /// First `n` resonators (or all of them, if fewer).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.resonators.len());
        Self {
            resonators: self.resonators[..n].to_vec(),
            block_offsets: self
                .block_offsets
                .iter()
                .copied()
                .filter(|&o| o < n)
                .collect(),
        }
    }

    /// The spatial mirror image of the chain.
    ///
    /// Resonator order is reversed and each resonator's trailing spacing
    /// becomes the spacing that preceded it in the original chain. The
    /// original first resonator takes the last resonator's trailing spacing,
    /// which is the gap it sees when the chain is repeated periodically.
    pub fn mirrored(&self) -> Self {
        let n = self.resonators.len();
        let resonators = (0..n)
            .map(|k| {
                let i = n - 1 - k;
                let prev = if i == 0 { n - 1 } else { i - 1 };
                let r = self.resonators[i];
                Resonator {
                    spacing: self.resonators[prev].spacing,
                    ..r
                }
            })
            .collect();
        let mut ends: Vec<usize> = self
            .block_offsets
            .iter()
            .skip(1)
            .copied()
            .chain([n])
            .collect();
        ends.reverse();
        let block_offsets = if n == 0 {
            Vec::new()
        } else {
            ends.into_iter().map(|e| n - e).collect()
        };
        Self {
            resonators,
            block_offsets,
        }
    }
}

/// Concatenate the blocks of `seq` into a resonator chain.
pub fn expand_blocks(library: &BlockLibrary, seq: &BlockSequence) -> Result<ResonatorSequence> {
    seq.validate(library)?;
    let mut resonators = Vec::new();
    let mut block_offsets = Vec::with_capacity(seq.len());
    for &d in &seq.indices {
        block_offsets.push(resonators.len());
        resonators.extend_from_slice(library.blocks[d].resonators());
    }
    Ok(ResonatorSequence {
        resonators,
        block_offsets,
    })
}

/// Draw `m` blocks independently with the library's probabilities.
pub fn sample_iid(library: &BlockLibrary, m: usize, seed: u64) -> BlockSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = library
        .probabilities
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last = library.size() - 1;
    let indices = (0..m)
        .map(|_| {
            let u: f64 = rng.gen();
            cumulative.iter().position(|&c| u < c).unwrap_or(last)
        })
        .collect();
    BlockSequence {
        indices,
        provenance: Provenance::IidSample { seed },
    }
}

/// A finite word over `0..d` containing every word of length `≤ k`.
///
/// This is the linearised de Bruijn sequence `B(d, k)` built from Lyndon
/// words (Fredricksen–Kessler–Maiorana), of length `d^k + k - 1`. Every
/// shorter word is a prefix of some length-`k` word, so it appears too. A
/// finite word can only approximate pseudo-ergodicity; `k` is the depth of
/// the approximation.
pub fn pseudo_ergodic_word(d: usize, k: usize) -> Result<BlockSequence> {
    if d == 0 || k == 0 {
        return Err(Error::Validation(format!(
            "pseudo-ergodic word needs d >= 1 and k >= 1 (got d={d}, k={k})"
        )));
    }
    let mut indices = Vec::with_capacity(d.pow(k as u32) + k);
    if d == 1 {
        indices.resize(k, 0);
    } else {
        let mut a = vec![0usize; k + 1];
        de_bruijn(1, 1, d, k, &mut a, &mut indices);
        let head: Vec<usize> = indices[..k - 1].to_vec();
        indices.extend(head);
    }
    Ok(BlockSequence {
        indices,
        provenance: Provenance::PseudoErgodicWord { depth: k },
    })
}

fn de_bruijn(t: usize, p: usize, d: usize, k: usize, a: &mut [usize], out: &mut Vec<usize>) {
    if t > k {
        if k.is_multiple_of(p) {
            out.extend_from_slice(&a[1..=p]);
        }
        return;
    }
    a[t] = a[t - p];
    de_bruijn(t + 1, p, d, k, a, out);
    for j in a[t - p] + 1..d {
        a[t] = j;
        de_bruijn(t + 1, t, d, k, a, out);
    }
}

/// Whether every word over `0..d` of each length `1..=k` occurs contiguously.
pub fn contains_all_words(seq: &BlockSequence, d: usize, k: usize) -> bool {
    (1..=k).all(|len| {
        let needed = match d.checked_pow(len as u32) {
            Some(n) => n,
            None => return false,
        };
        if seq.len() < len || seq.len() - len + 1 < needed {
            return false;
        }
        let seen: HashSet<&[usize]> = seq
            .indices
            .windows(len)
            .filter(|w| w.iter().all(|&x| x < d))
            .collect();
        seen.len() == needed
    })
}

/// Markov transition matrix of the resonator chain.
///
/// States are `(block, position)` pairs ordered block by block. A resonator
/// that is not last in its block is always followed by the next one; the
/// last resonator of a block is followed by the first resonator of block
/// `d'` with probability `p_{d'}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    pub states: Vec<(usize, usize)>,
    pub rows: Vec<Vec<f64>>,
}

pub fn transition_matrix(library: &BlockLibrary) -> TransitionMatrix {
    let states: Vec<(usize, usize)> = library
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(d, b)| (0..b.len()).map(move |r| (d, r)))
        .collect();
    let first_of: Vec<usize> = library
        .blocks
        .iter()
        .scan(0, |acc, b| {
            let start = *acc;
            *acc += b.len();
            Some(start)
        })
        .collect();
    let n = states.len();
    let rows = states
        .iter()
        .enumerate()
        .map(|(i, &(d, r))| {
            let mut row = vec![0.0; n];
            if r + 1 < library.blocks[d].len() {
                row[i + 1] = 1.0;
            } else {
                for (start, p) in first_of.iter().zip(&library.probabilities) {
                    row[*start] = *p;
                }
            }
            row
        })
        .collect();
    TransitionMatrix { states, rows }
}
