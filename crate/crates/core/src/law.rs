//! Finite-support laws on the non-negative integers and on `N0^k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

/// A probability law on `N0` with finite support.
///
/// Atoms are kept sorted by value, with distinct values and strictly positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FiniteLaw<S: Scalar = f64> {
    atoms: Vec<(u64, S)>,
}

/// Law of the number of daughter cells `N`.
pub type OffspringLaw<S = f64> = FiniteLaw<S>;

impl<S: Scalar> FiniteLaw<S> {
    pub fn new(atoms: impl IntoIterator<Item = (u64, S)>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (x, p) in atoms {
            if !p.is_finite() || p < S::zero() {
                return Err(Error::structural(
                    "law",
                    format!("probability {p} for value {x} is not a finite non-negative number"),
                ));
            }
            if seen.insert(x, p).is_some() {
                return Err(Error::structural("law", format!("duplicate atom at value {x}")));
            }
        }
        let total = compensated_sum(seen.values().copied());
        if (total - S::one()).abs() > S::tol() {
            return Err(Error::structural(
                "law",
                format!("probabilities sum to {total}, not 1"),
            ));
        }
        Ok(Self {
            atoms: seen.into_iter().filter(|&(_, p)| p > S::zero()).collect(),
        })
    }

    pub fn delta(x: u64) -> Self {
        Self {
            atoms: vec![(x, S::one())],
        }
    }

    /// Builds a law from possibly repeated atoms, merging equal values; no normalization check.
    pub(crate) fn merged(atoms: impl IntoIterator<Item = (u64, S)>) -> Self {
        let mut acc: BTreeMap<u64, Vec<S>> = BTreeMap::new();
        for (x, p) in atoms {
            acc.entry(x).or_default().push(p);
        }
        Self {
            atoms: acc
                .into_iter()
                .map(|(x, ps)| (x, compensated_sum(ps)))
                .filter(|&(_, p)| p > S::zero())
                .collect(),
        }
    }

    pub fn atoms(&self) -> &[(u64, S)] {
        &self.atoms
    }

    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.atoms.iter().map(|&(x, _)| x)
    }

    pub fn prob(&self, x: u64) -> S {
        self.atoms
            .binary_search_by_key(&x, |&(v, _)| v)
            .map(|i| self.atoms[i].1)
            .unwrap_or_else(|_| S::zero())
    }

    pub fn mean(&self) -> S {
        compensated_sum(self.atoms.iter().map(|&(x, p)| S::of_u64(x) * p))
    }

    pub fn max_value(&self) -> u64 {
        self.atoms.last().map(|&(x, _)| x).unwrap_or(0)
    }

    /// `P(X >= x)`.
    pub fn tail(&self, x: u64) -> S {
        compensated_sum(self.atoms.iter().filter(|&&(v, _)| v >= x).map(|&(_, p)| p))
    }

    pub fn total_mass(&self) -> S {
        compensated_sum(self.atoms.iter().map(|&(_, p)| p))
    }

    pub fn is_delta(&self, x: u64) -> bool {
        self.atoms.len() == 1 && self.atoms[0].0 == x
    }

    /// Dense probability vector over `0..=max_value`.
    pub fn dense(&self) -> Vec<S> {
        let mut v = vec![S::zero(); self.max_value() as usize + 1];
        for &(x, p) in &self.atoms {
            v[x as usize] = p;
        }
        v
    }
}

/// Joint law of one parasite's offspring vector `(X^(1,k), ..., X^(k,k))` in a cell with `k` daughters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SharingLaw<S: Scalar = f64> {
    k: usize,
    atoms: Vec<(Vec<u64>, S)>,
}

impl<S: Scalar> SharingLaw<S> {
    pub fn new(k: usize, atoms: impl IntoIterator<Item = (Vec<u64>, S)>) -> Result<Self> {
        if k == 0 {
            return Err(Error::structural("law", "sharing law needs k >= 1 daughter cells"));
        }
        let mut seen = BTreeMap::new();
        for (v, p) in atoms {
            if v.len() != k {
                return Err(Error::structural(
                    "law",
                    format!("sharing vector {v:?} has length {} but k = {k}", v.len()),
                ));
            }
            if !p.is_finite() || p < S::zero() {
                return Err(Error::structural(
                    "law",
                    format!("probability {p} for sharing vector {v:?} is not a finite non-negative number"),
                ));
            }
            if seen.contains_key(&v) {
                return Err(Error::structural(
                    "law",
                    format!("duplicate sharing vector {v:?} for k = {k}"),
                ));
            }
            seen.insert(v, p);
        }
        let total = compensated_sum(seen.values().copied());
        if (total - S::one()).abs() > S::tol() {
            return Err(Error::structural(
                "law",
                format!("sharing probabilities for k = {k} sum to {total}, not 1"),
            ));
        }
        Ok(Self {
            k,
            atoms: seen.into_iter().filter(|(_, p)| *p > S::zero()).collect(),
        })
    }

    /// Merges equal vectors by summing their mass; no normalization check.
    pub(crate) fn merged(k: usize, atoms: impl IntoIterator<Item = (Vec<u64>, S)>) -> Self {
        let mut acc: BTreeMap<Vec<u64>, Vec<S>> = BTreeMap::new();
        for (v, p) in atoms {
            debug_assert_eq!(v.len(), k);
            acc.entry(v).or_default().push(p);
        }
        Self {
            k,
            atoms: acc
                .into_iter()
                .map(|(v, ps)| (v, compensated_sum(ps)))
                .filter(|(_, p)| *p > S::zero())
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn atoms(&self) -> &[(Vec<u64>, S)] {
        &self.atoms
    }

    /// Law of `X^(j,k)`, with `j` 1-based.
    pub fn marginal(&self, j: usize) -> FiniteLaw<S> {
        assert!((1..=self.k).contains(&j), "coordinate {j} out of 1..={}", self.k);
        FiniteLaw::merged(self.atoms.iter().map(|(v, p)| (v[j - 1], *p)))
    }

    /// `mu_{j,k} = E X^(j,k)`, with `j` 1-based.
    pub fn marginal_mean(&self, j: usize) -> S {
        assert!((1..=self.k).contains(&j), "coordinate {j} out of 1..={}", self.k);
        compensated_sum(self.atoms.iter().map(|(v, p)| S::of_u64(v[j - 1]) * *p))
    }

    /// Law of the total offspring `sum_j X^(j,k)` of one parasite.
    pub fn total_law(&self) -> FiniteLaw<S> {
        FiniteLaw::merged(self.atoms.iter().map(|(v, p)| (v.iter().sum(), *p)))
    }

    /// Whether `P(X^(j,k) > 0) > 0`.
    pub fn coordinate_can_be_positive(&self, j: usize) -> bool {
        self.atoms.iter().any(|(v, _)| v[j - 1] > 0)
    }

    pub fn total_mass(&self) -> S {
        compensated_sum(self.atoms.iter().map(|(_, p)| *p))
    }
}
