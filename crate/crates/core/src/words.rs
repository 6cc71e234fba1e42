//! Symbol sequences: seeded i.i.d. streams, fixed words, and exhaustive
//! enumeration of all words of a given length.
//!
//! Streams are ChaCha8 keyed by `seed` with the generator's 64-bit stream
//! selector set to `stream_id`, so distinct `(seed, stream_id)` pairs are
//! independent and any replica can be regenerated without touching others.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Hard cap on the number of words any exact enumeration may visit.
pub const ENUMERATION_BUDGET: u128 = 1 << 24;

/// Source of symbols `i_1, i_2, ...` consumed left to right.
pub trait SymbolSource {
    fn next_symbol(&mut self) -> usize;

    /// `(seed, stream_id)` for seeded streams.
    fn origin(&self) -> Option<(u64, u64)> {
        None
    }
}

/// Validates a probability vector and returns its cumulative sums.
pub fn cumulative(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(invalid("probs", "must be nonempty"));
    }
    for (index, &value) in probs.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::DegenerateProbability { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::ProbsNotNormalized { sum });
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    *out.last_mut().expect("nonempty") = 1.0;
    Ok(out)
}

/// SplitMix64 finalizer; used to derive independent sub-seeds from a seed
/// and a purpose tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded realization of `mu^N`, generated lazily.
#[derive(Debug, Clone)]
pub struct WordStream {
    seed: u64,
    stream_id: u64,
    cumulative: Arc<[f64]>,
    rng: ChaCha8Rng,
    position: u64,
}

impl WordStream {
    pub fn new(probs: &[f64], seed: u64, stream_id: u64) -> Result<Self> {
        Ok(Self::from_cumulative(cumulative(probs)?.into(), seed, stream_id))
    }

    pub(crate) fn from_cumulative(cumulative: Arc<[f64]>, seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            cumulative,
            rng,
            position: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of symbols consumed so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Raw uniform draw from the underlying generator (not a symbol).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl SymbolSource for WordStream {
    #[inline]
    fn next_symbol(&mut self) -> usize {
        let u: f64 = self.rng.random();
        self.position += 1;
        let cum = &self.cumulative;
        let mut i = 0;
        while u >= cum[i] {
            i += 1;
        }
        i
    }

    fn origin(&self) -> Option<(u64, u64)> {
        Some((self.seed, self.stream_id))
    }
}

/// A finite word replayed symbol by symbol; panics when exhausted.
#[derive(Debug, Clone)]
pub struct FixedWord {
    symbols: Vec<usize>,
    cursor: usize,
}

impl FixedWord {
    pub fn new(symbols: Vec<usize>) -> Self {
        Self { symbols, cursor: 0 }
    }
}

impl SymbolSource for FixedWord {
    fn next_symbol(&mut self) -> usize {
        let s = self.symbols[self.cursor];
        self.cursor += 1;
        s
    }
}

impl<S: SymbolSource + ?Sized> SymbolSource for &mut S {
    fn next_symbol(&mut self) -> usize {
        (**self).next_symbol()
    }

    fn origin(&self) -> Option<(u64, u64)> {
        (**self).origin()
    }
}

fn check_budget(alphabet: usize, n: usize, budget: u128) -> Result<()> {
    let words = (alphabet as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if words > budget {
        Err(Error::EnumerationBudget { words, budget })
    } else {
        Ok(())
    }
}

/// Iterator over all `N^n` words with their `mu^n` weights, in
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct WordEnumerator {
    probs: Vec<f64>,
    current: Vec<usize>,
    done: bool,
}

/// Enumerates every word of length `n`; refuses when `N^n > 2^24`.
pub fn enumerate_words(probs: &[f64], n: usize) -> Result<WordEnumerator> {
    cumulative(probs)?;
    check_budget(probs.len(), n, ENUMERATION_BUDGET)?;
    Ok(WordEnumerator {
        probs: probs.to_vec(),
        current: vec![0; n],
        done: false,
    })
}

impl Iterator for WordEnumerator {
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let word = self.current.clone();
        let weight = word.iter().fold(1.0, |w, &s| w * self.probs[s]);
        // odometer increment, last symbol fastest
        let n_sym = self.probs.len();
        let mut k = self.current.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.current[k] += 1;
            if self.current[k] < n_sym {
                break;
            }
            self.current[k] = 0;
        }
        Some((word, weight))
    }
}

/// Depth-first traversal of all words of length `n`, threading a state
/// through each prefix so shared prefixes are evaluated once.
///
/// `step(state, symbol)` advances a prefix state; `leaf(state, weight)` is
/// called once per full word in lexicographic order. Weights are the
/// left-to-right products `p_{i_1} * ... * p_{i_n}`, identical to
/// [`enumerate_words`].
pub fn fold_words<S, F, L>(probs: &[f64], n: usize, init: S, step: &F, leaf: &mut L) -> Result<()>
where
    F: Fn(&S, usize) -> S,
    L: FnMut(&S, f64),
{
    check_budget(probs.len(), n, ENUMERATION_BUDGET)?;
    fn rec<S, F, L>(probs: &[f64], depth: usize, state: &S, weight: f64, step: &F, leaf: &mut L)
    where
        F: Fn(&S, usize) -> S,
        L: FnMut(&S, f64),
    {
        if depth == 0 {
            leaf(state, weight);
            return;
        }
        for (s, p) in probs.iter().enumerate() {
            let next = step(state, s);
            rec(probs, depth - 1, &next, weight * p, step, leaf);
        }
    }
    rec(probs, n, &init, 1.0, step, leaf);
    Ok(())
}
