//! Convolution powers of finite laws, truncated at a state cap.
//!
//! Vectors are indexed by value `0..=cap`; mass that would land above `cap` is dropped and
//! reported as lost.

use crate::law::FiniteLaw;
use crate::scalar::{compensated_sum, Scalar};

/// `(a * b)` restricted to `0..=cap`.
pub fn convolve_capped<S: Scalar>(a: &[S], b: &[S], cap: usize) -> Vec<S> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = (a.len() + b.len() - 1).min(cap + 1);
    let mut out = vec![S::zero(); len];
    for (i, &x) in a.iter().enumerate().take(len) {
        if x == S::zero() {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(len - i) {
            out[i + j] = out[i + j] + x * y;
        }
    }
    out
}

/// One more convolution with a sparse law: `pow * law`, capped.
pub fn convolve_sparse<S: Scalar>(pow: &[S], law: &FiniteLaw<S>, cap: usize) -> Vec<S> {
    if pow.is_empty() {
        return Vec::new();
    }
    let len = (pow.len() - 1 + law.max_value() as usize + 1).min(cap + 1);
    let mut out = vec![S::zero(); len];
    for &(x, p) in law.atoms() {
        let x = x as usize;
        if x >= len {
            continue;
        }
        for (y, &q) in pow.iter().enumerate().take(len - x) {
            out[x + y] = out[x + y] + p * q;
        }
    }
    out
}

/// `law^{*z}` restricted to `0..=cap`, by binary exponentiation.
pub fn power_capped<S: Scalar>(law: &FiniteLaw<S>, z: u64, cap: usize) -> Vec<S> {
    let mut result = vec![S::one()];
    let mut base: Vec<S> = law.dense();
    base.truncate(cap + 1);
    let mut e = z;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve_capped(&result, &base, cap);
        }
        e >>= 1;
        if e > 0 {
            base = convolve_capped(&base, &base, cap);
        }
    }
    result
}

/// Mass missing from a truncated probability vector.
pub fn lost_mass<S: Scalar>(v: &[S]) -> S {
    (S::one() - compensated_sum(v.iter().copied())).max(S::zero())
}

/// All powers `law^{*z}` for `z = 0..=max_z`, each restricted to `0..=cap`.
pub fn powers_table<S: Scalar>(law: &FiniteLaw<S>, max_z: usize, cap: usize) -> Vec<Vec<S>> {
    let mut table = Vec::with_capacity(max_z + 1);
    let mut pow = vec![S::one()];
    for _ in 0..=max_z {
        let next = convolve_sparse(&pow, law, cap);
        table.push(pow);
        pow = next;
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern() -> FiniteLaw {
        FiniteLaw::new(vec![(0, 0.5), (1, 0.5)]).unwrap()
    }

    #[test]
    fn binomial_powers() {
        let p = power_capped(&bern(), 4, 10);
        let expect = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
        assert_eq!(p.len(), 5);
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn capped_power_loses_tail() {
        let p = power_capped(&bern(), 4, 2);
        assert_eq!(p.len(), 3);
        assert!((lost_mass(&p) - 5.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn table_agrees_with_binary_exponentiation() {
        let law = FiniteLaw::new(vec![(0, 0.8), (2, 0.15), (3, 0.05)]).unwrap();
        let table = powers_table(&law, 12, 20);
        for (z, row) in table.iter().enumerate() {
            let direct = power_capped(&law, z as u64, 20);
            assert_eq!(row.len(), direct.len(), "z={z}");
            for (a, b) in row.iter().zip(&direct) {
                let (a, b): (&f64, &f64) = (a, b);
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert_eq!(table[0], vec![1.0]);
    }
}
