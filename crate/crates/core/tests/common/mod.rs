#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use bwbp::{FiniteLaw, ModelSpec, SharingLaw};
use rand::Rng;

/// Random positive weights summing to 1.
pub fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
    p
}

/// Random model: offspring support within 0..=4 containing some k >= 1, sharing laws with at
/// most 5 distinct vectors with entries in 0..=4.
pub fn random_model<R: Rng>(rng: &mut R) -> ModelSpec {
    let mut ks = BTreeSet::from([rng.random_range(1..=4u64)]);
    for _ in 0..rng.random_range(0..3) {
        ks.insert(rng.random_range(0..=4u64));
    }
    let ks: Vec<u64> = ks.into_iter().collect();
    let offspring = FiniteLaw::new(ks.iter().copied().zip(simplex(rng, ks.len()))).unwrap();
    let mut sharing = BTreeMap::new();
    for &k in ks.iter().filter(|&&k| k >= 1) {
        let k = k as usize;
        let mut vectors = BTreeSet::new();
        let want = rng.random_range(1..=5);
        while vectors.len() < want {
            vectors.insert((0..k).map(|_| rng.random_range(0..=4u64)).collect::<Vec<_>>());
        }
        let probs = simplex(rng, vectors.len());
        sharing.insert(k, SharingLaw::new(k, vectors.into_iter().zip(probs)).unwrap());
    }
    ModelSpec::new("random", offspring, sharing).unwrap()
}
