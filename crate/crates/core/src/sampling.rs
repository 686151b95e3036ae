//! Random streams and discrete samplers shared by the Monte-Carlo engines.
//!
//! Replicate `r` of a batch seeded with `master` always draws from ChaCha8 stream `r` of the
//! key derived from `master`, whichever worker thread runs it, so batch results do not
//! depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::law::FiniteLaw;
use crate::scalar::Scalar;

pub type StreamRng = ChaCha8Rng;

/// Default master seed used when none is given.
pub const DEFAULT_SEED: u64 = 0x5EED;

pub fn replicate_rng(master_seed: u64, replicate: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

/// Runs `f(r, rng_r)` for `r in 0..reps` on `workers` threads; output is in replicate order.
pub fn par_replicates<T, F>(reps: u64, master_seed: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("sampling", format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(master_seed, r);
                f(r, &mut rng)
            })
            .collect()
    }))
}

/// Pairwise sum in a fixed tree shape.
pub fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0,1)").sample(rng)
}

/// Category probabilities prepared for repeated multinomial splitting.
#[derive(Debug, Clone)]
pub struct Categorical {
    probs: Vec<f64>,
    /// `suffix[i] = sum(probs[i..])`.
    suffix: Vec<f64>,
    alias: Option<WeightedAliasIndex<f64>>,
}

impl Categorical {
    /// Categories should be passed in decreasing probability for early exit in [`Self::split`].
    pub fn new(probs: Vec<f64>) -> Self {
        let mut suffix = vec![0.0; probs.len()];
        let mut acc = 0.0;
        for i in (0..probs.len()).rev() {
            acc += probs[i];
            suffix[i] = acc;
        }
        let alias = if probs.iter().any(|&p| p > 0.0) {
            WeightedAliasIndex::new(probs.clone()).ok()
        } else {
            None
        };
        Self { probs, suffix, alias }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// One category index.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.as_ref().expect("non-empty law").sample(rng)
    }

    /// Multinomial counts of `n` draws, by sequential conditional binomials. Calls
    /// `emit(category, count)` for every category with a positive count.
    pub fn split<R: Rng + ?Sized>(&self, rng: &mut R, n: u64, mut emit: impl FnMut(usize, u64)) {
        let mut remaining = n;
        let last = self.probs.len() - 1;
        for i in 0..=last {
            if remaining == 0 {
                break;
            }
            let c = if i == last {
                remaining
            } else {
                let p = if self.suffix[i] > 0.0 { self.probs[i] / self.suffix[i] } else { 0.0 };
                binomial(rng, remaining, p.min(1.0))
            };
            if c > 0 {
                emit(i, c);
                remaining -= c;
            }
        }
    }
}

/// Sampler for a [`FiniteLaw`].
#[derive(Debug, Clone)]
pub struct LawSampler {
    values: Vec<u64>,
    cat: Categorical,
}

impl LawSampler {
    pub fn new<S: Scalar>(law: &FiniteLaw<S>) -> Self {
        let mut atoms: Vec<(u64, f64)> = law.atoms().iter().map(|&(x, p)| (x, p.as_f64())).collect();
        atoms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self {
            values: atoms.iter().map(|a| a.0).collect(),
            cat: Categorical::new(atoms.iter().map(|a| a.1).collect()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.values[self.cat.draw(rng)]
    }

    /// Sum of `n` iid draws, or `None` on overflow.
    pub fn sum_of<R: Rng + ?Sized>(&self, rng: &mut R, n: u64) -> Option<u64> {
        let mut total: u64 = 0;
        let mut overflow = false;
        if n <= self.values.len() as u64 {
            for _ in 0..n {
                total = total.checked_add(self.draw(rng))?;
            }
        } else {
            self.cat.split(rng, n, |i, c| {
                match self.values[i].checked_mul(c).and_then(|v| total.checked_add(v)) {
                    Some(t) => total = t,
                    None => overflow = true,
                }
            });
        }
        (!overflow).then_some(total)
    }

    /// Counts per distinct value for `n` draws.
    pub fn split<R: Rng + ?Sized>(&self, rng: &mut R, n: u64, mut emit: impl FnMut(u64, u64)) {
        self.cat.split(rng, n, |i, c| emit(self.values[i], c));
    }
}
