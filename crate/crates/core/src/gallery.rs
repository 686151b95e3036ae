//! Named reference models. The `models/` directory at the repository root ships the same
//! models as JSON files.

use std::collections::BTreeMap;

use crate::law::{FiniteLaw, SharingLaw};
use crate::model::ModelSpec;

fn binary(offspring: &[(u64, f64)], split: &[(Vec<u64>, f64)], label: &str) -> ModelSpec {
    let sharing = SharingLaw::new(2, split.iter().cloned()).expect("gallery sharing law");
    ModelSpec::new(
        label,
        FiniteLaw::new(offspring.iter().copied()).expect("gallery offspring law"),
        BTreeMap::from([(2, sharing)]),
    )
    .expect("gallery model")
}

fn binary_split() -> Vec<(Vec<u64>, f64)> {
    vec![(vec![2, 0], 0.25), (vec![1, 1], 0.5), (vec![0, 2], 0.25)]
}

/// Binary cell division; each parasite has exactly two offspring, each independently in
/// either daughter.
pub fn bs() -> ModelSpec {
    binary(&[(2, 1.0)], &binary_split(), "BS")
}

/// Binary division; each parasite sends both its offspring to the left daughter.
pub fn ld() -> ModelSpec {
    binary(&[(2, 1.0)], &[(vec![2, 0], 1.0)], "LD")
}

/// Binary division; a parasite sends two offspring left with probability `a`, two right with
/// probability `b`, and has none otherwise.
pub fn sa(a: f64, b: f64) -> ModelSpec {
    assert!(a >= 0.0 && b >= 0.0 && a + b <= 1.0, "SA({a},{b}) is not a law");
    let mut atoms = vec![(vec![2, 0], a), (vec![0, 2], b)];
    if a + b < 1.0 {
        atoms.push((vec![0, 0], 1.0 - (a + b)));
    }
    binary(&[(2, 1.0)], &atoms, &format!("SA({a},{b})"))
}

/// Binary division with very unequal sharing: left coordinate is 0 or 8 (mean 4),
/// right coordinate is independently 0 or 1 (mean 0.1).
pub fn w() -> ModelSpec {
    binary(
        &[(2, 1.0)],
        &[
            (vec![0, 0], 0.45),
            (vec![0, 1], 0.05),
            (vec![8, 0], 0.45),
            (vec![8, 1], 0.05),
        ],
        "W",
    )
}

/// Critical cell tree (`p_0 = p_2 = 1/2`, so `nu = 1`) with binary-split sharing.
pub fn critical_bs() -> ModelSpec {
    binary(&[(0, 0.5), (2, 0.5)], &binary_split(), "BS-critical")
}

/// Subcritical cell tree (`nu = 0.8`) with binary-split sharing.
pub fn subcritical_bs() -> ModelSpec {
    binary(&[(0, 0.6), (2, 0.4)], &binary_split(), "BS-subcritical")
}

/// Every named model together with its file stem under `models/`.
pub fn all() -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("bs", bs()),
        ("ld", ld()),
        ("sa_0.2_0.2", sa(0.2, 0.2)),
        ("sa_0.3_0.3", sa(0.3, 0.3)),
        ("w", w()),
        ("bs_critical", critical_bs()),
        ("bs_subcritical", subcritical_bs()),
    ]
}
