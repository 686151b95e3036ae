//! Model specification of a branching-within-branching process.
//!
//! A model is the cell offspring law `(p_k)` together with, for every `k >= 1` in its
//! support, the joint law of how a single parasite's progeny is shared among the `k`
//! daughter cells. Cells with no daughters (`k = 0`) need no sharing law: their
//! parasites die with them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::law::{FiniteLaw, OffspringLaw, SharingLaw};
use crate::scalar::{compensated_sum, Scalar};

/// Upper bound on atoms a family constructor may enumerate for a single `k`.
pub const ATOM_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelSpec<S: Scalar = f64> {
    label: String,
    offspring: OffspringLaw<S>,
    sharing: BTreeMap<usize, SharingLaw<S>>,
}

/// Exact first moments of a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Moments<S: Scalar = f64> {
    /// Mean number of daughter cells.
    pub nu: S,
    /// Mean number of offspring per parasite.
    pub gamma: S,
    /// `mu_{j,k}` keyed by `(j, k)`.
    #[serde(serialize_with = "serialize_mu")]
    pub mu: BTreeMap<(usize, usize), S>,
}

fn serialize_mu<S: Scalar, Ser: serde::Serializer>(
    mu: &BTreeMap<(usize, usize), S>,
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(mu.len()))?;
    for (&(j, k), m) in mu {
        seq.serialize_element(&(j, k, m))?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1_holds: bool,
    pub a2_holds: bool,
    pub a3_holds: bool,
    pub p1_less_than_1: bool,
    pub z1_nondegenerate: bool,
    /// All parasites of a cell always send their progeny into one common daughter.
    pub degenerate_sharing: bool,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.a1_holds && self.a2_holds && self.a3_holds
    }

    /// Fails with the first violated assumption.
    pub fn require(&self) -> Result<()> {
        let failed = [
            (self.a1_holds, Assumption::A1),
            (self.a2_holds, Assumption::A2),
            (self.a3_holds, Assumption::A3),
        ]
        .into_iter()
        .find(|(holds, _)| !holds);
        match failed {
            None => Ok(()),
            Some((_, assumption)) => Err(Error::Assumption {
                module: "model",
                assumption,
                detail: self.violations.join("; "),
            }),
        }
    }
}

impl<S: Scalar> ModelSpec<S> {
    pub fn new(
        label: impl Into<String>,
        offspring: OffspringLaw<S>,
        sharing: BTreeMap<usize, SharingLaw<S>>,
    ) -> Result<Self> {
        for k in offspring.support().filter(|&k| k >= 1) {
            match sharing.get(&(k as usize)) {
                None => {
                    return Err(Error::structural(
                        "model",
                        format!("missing sharing law for k = {k} (p_{k} > 0)"),
                    ))
                }
                Some(law) if law.k() != k as usize => {
                    return Err(Error::structural(
                        "model",
                        format!("sharing law registered under k = {k} has k = {}", law.k()),
                    ))
                }
                Some(_) => {}
            }
        }
        if let Some(k) = sharing.keys().find(|&&k| offspring.prob(k as u64) == S::zero()) {
            return Err(Error::structural(
                "model",
                format!("sharing law given for k = {k}, which is outside the offspring support"),
            ));
        }
        Ok(Self {
            label: label.into(),
            offspring,
            sharing,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn offspring(&self) -> &OffspringLaw<S> {
        &self.offspring
    }

    pub fn sharing(&self) -> &BTreeMap<usize, SharingLaw<S>> {
        &self.sharing
    }

    /// Sharing law for `k` daughters; `None` for `k = 0` or unsupported `k`.
    pub fn sharing_for(&self, k: usize) -> Option<&SharingLaw<S>> {
        self.sharing.get(&k)
    }

    /// `(k, p_k)` for `k >= 1` in the offspring support.
    pub fn dividing(&self) -> impl Iterator<Item = (usize, S, &SharingLaw<S>)> + '_ {
        self.offspring
            .atoms()
            .iter()
            .filter(|&&(k, _)| k >= 1)
            .map(|&(k, p)| (k as usize, p, &self.sharing[&(k as usize)]))
    }

    pub fn nu(&self) -> S {
        self.offspring.mean()
    }

    pub fn moments(&self) -> Moments<S> {
        let mut mu = BTreeMap::new();
        let mut terms = Vec::new();
        for (k, pk, law) in self.dividing() {
            for j in 1..=k {
                let m = law.marginal_mean(j);
                mu.insert((j, k), m);
                terms.push(pk * m);
            }
        }
        Moments {
            nu: self.nu(),
            gamma: compensated_sum(terms),
            mu,
        }
    }

    /// `P(Z_1 = 1)` from a single parasite.
    pub fn prob_one_offspring(&self) -> S {
        compensated_sum(self.dividing().map(|(_, pk, law)| pk * law.total_law().prob(1)))
    }

    /// At most one coordinate per supported `k` can ever be positive.
    pub fn has_degenerate_sharing(&self) -> bool {
        self.dividing()
            .all(|(k, _, law)| (1..=k).filter(|&j| law.coordinate_can_be_positive(j)).count() <= 1)
    }

    pub fn validate(&self) -> AssumptionReport {
        let tol = S::tol();
        let moments = self.moments();
        let mut violations = Vec::new();

        let a1_holds = moments.gamma > tol && moments.gamma.is_finite();
        if !a1_holds {
            violations.push(format!("(A1) gamma={} is not in (0, inf)", moments.gamma));
        }

        let p1 = self.offspring.prob(1);
        let p1_less_than_1 = p1 < S::one() - tol;
        if !p1_less_than_1 {
            violations.push("(A2) P(N=1)=1".to_string());
        }
        let z1_nondegenerate = self.prob_one_offspring() < S::one() - tol;
        if !z1_nondegenerate {
            violations.push("(A2) P(Z1=1)=1".to_string());
        }

        let a3_holds = self
            .dividing()
            .any(|(k, pk, law)| (1..=k).any(|j| pk * law.marginal(j).tail(2) > S::zero()));
        if !a3_holds {
            violations.push("(A3) no (j,k) with p_k P(X^(j,k) >= 2) > 0".to_string());
        }

        AssumptionReport {
            a1_holds,
            a2_holds: p1_less_than_1 && z1_nondegenerate,
            a3_holds,
            p1_less_than_1,
            z1_nondegenerate,
            degenerate_sharing: self.has_degenerate_sharing(),
            violations,
        }
    }

    /// Truncated model: coordinate `(j,k)` is zeroed when `mu_{j,k} < 1/M`, otherwise values above
    /// `M` are clipped to 0. The cell offspring law is unchanged.
    pub fn truncate(&self, m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("model", "truncation level M must be positive"));
        }
        let threshold = S::one() / S::of_u64(m);
        let sharing = self
            .sharing
            .iter()
            .map(|(&k, law)| {
                let killed: Vec<bool> = (1..=k).map(|j| law.marginal_mean(j) < threshold).collect();
                let atoms = law.atoms().iter().map(|(v, p)| {
                    let clipped = v
                        .iter()
                        .zip(&killed)
                        .map(|(&x, &dead)| if dead || x > m { 0 } else { x })
                        .collect();
                    (clipped, *p)
                });
                (k, SharingLaw::merged(k, atoms))
            })
            .collect();
        Ok(Self {
            label: format!("{}|truncated(M={m})", self.label),
            offspring: self.offspring.clone(),
            sharing,
        })
    }

    /// The same model with probabilities converted to another scalar type.
    pub fn convert<T: Scalar>(&self) -> ModelSpec<T> {
        let conv = |p: S| T::lit(p.as_f64());
        ModelSpec {
            label: self.label.clone(),
            offspring: FiniteLaw::merged(self.offspring.atoms().iter().map(|&(k, p)| (k, conv(p)))),
            sharing: self
                .sharing
                .iter()
                .map(|(&k, law)| {
                    (
                        k,
                        SharingLaw::merged(k, law.atoms().iter().map(|(v, p)| (v.clone(), conv(*p)))),
                    )
                })
                .collect(),
        }
    }
}

fn check_budget(count: u128, x: u64, k: usize) -> Result<()> {
    if count > ATOM_BUDGET {
        Err(Error::capacity(
            "model",
            format!("enumerating (x={x}, k={k}) needs {count} atoms, budget is {ATOM_BUDGET}"),
        ))
    } else {
        Ok(())
    }
}

/// `C(n + r, r)` with saturation.
fn compositions_count(x: u64, k: usize) -> u128 {
    let (n, r) = (x as u128 + k as u128 - 1, k as u128 - 1);
    let r = r.min(n - r);
    let mut c: u128 = 1;
    for i in 1..=r {
        c = match c.checked_mul(n - r + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
        if c > ATOM_BUDGET * 1024 {
            return u128::MAX;
        }
    }
    c
}

fn ln_factorial<S: Scalar>(n: u64) -> S {
    compensated_sum((2..=n).map(|i| S::of_u64(i).ln()))
}

/// `P(multinomial(x; q) = parts)`.
fn multinomial_pmf<S: Scalar>(parts: &[u64], q: &[S]) -> S {
    if parts.iter().zip(q).any(|(&xj, &qj)| xj > 0 && qj == S::zero()) {
        return S::zero();
    }
    // Direct product of binomial coefficients is exact for the small cases that matter.
    let mut remaining: u64 = parts.iter().sum();
    let mut p = S::one();
    for (&xj, &qj) in parts.iter().zip(q) {
        let mut c = S::one();
        for i in 1..=xj {
            c = c * S::of_u64(remaining - xj + i) / S::of_u64(i);
        }
        p = p * c * qj.powi(xj as i32);
        remaining -= xj;
    }
    if p.is_finite() && xj_fits_i32(parts) {
        return p;
    }
    let total: u64 = parts.iter().sum();
    let mut lnp = ln_factorial::<S>(total);
    for (&xj, &qj) in parts.iter().zip(q) {
        if xj > 0 {
            lnp = lnp - ln_factorial::<S>(xj) + S::of_u64(xj) * qj.ln();
        }
    }
    lnp.exp()
}

fn xj_fits_i32(parts: &[u64]) -> bool {
    parts.iter().all(|&x| x <= i32::MAX as u64)
}

fn for_each_composition(x: u64, k: usize, f: &mut impl FnMut(&[u64])) {
    fn rec(rest: u64, slot: usize, buf: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if slot + 1 == buf.len() {
            buf[slot] = rest;
            f(buf);
            return;
        }
        for v in (0..=rest).rev() {
            buf[slot] = v;
            rec(rest - v, slot + 1, buf, f);
        }
    }
    let mut buf = vec![0; k];
    rec(x, 0, &mut buf, f);
}

fn check_probability_vector<S: Scalar>(q: &[S], k: usize) -> Result<()> {
    if q.len() != k {
        return Err(Error::structural(
            "model",
            format!("q({k}) has length {}, expected {k}", q.len()),
        ));
    }
    if q.iter().any(|&v| !v.is_finite() || v < S::zero()) {
        return Err(Error::structural("model", format!("q({k}) has a negative or non-finite entry")));
    }
    let total = compensated_sum(q.iter().copied());
    if (total - S::one()).abs() > S::tol() {
        return Err(Error::structural("model", format!("q({k}) sums to {total}, not 1")));
    }
    Ok(())
}

/// Each parasite has a total progeny drawn from `parasite_law`, distributed among the `k`
/// daughters multinomially with cell probabilities `q[k]`.
pub fn make_multinomial<S: Scalar>(
    offspring: OffspringLaw<S>,
    parasite_law: &FiniteLaw<S>,
    q: &BTreeMap<usize, Vec<S>>,
) -> Result<ModelSpec<S>> {
    let mut sharing = BTreeMap::new();
    for k in offspring.support().filter(|&k| k >= 1).map(|k| k as usize) {
        let qk = q.get(&k).ok_or_else(|| {
            Error::structural("model", format!("multinomial family: missing q({k})"))
        })?;
        check_probability_vector(qk, k)?;
        let mut total: u128 = 0;
        for x in parasite_law.support() {
            total = total.saturating_add(compositions_count(x, k));
            check_budget(total, x, k)?;
        }
        let mut atoms = Vec::new();
        for &(x, px) in parasite_law.atoms() {
            for_each_composition(x, k, &mut |parts| {
                let p = px * multinomial_pmf(parts, qk);
                if p > S::zero() {
                    atoms.push((parts.to_vec(), p));
                }
            });
        }
        sharing.insert(k, SharingLaw::merged(k, atoms));
    }
    ModelSpec::new("multinomial", offspring, sharing)
}

/// Every coordinate `X^(j,k)` is drawn independently from `per_cell_law`.
pub fn make_iid_per_daughter<S: Scalar>(
    offspring: OffspringLaw<S>,
    per_cell_law: &FiniteLaw<S>,
) -> Result<ModelSpec<S>> {
    let mut sharing = BTreeMap::new();
    let width = per_cell_law.atoms().len() as u128;
    for k in offspring.support().filter(|&k| k >= 1).map(|k| k as usize) {
        let count = (0..k).try_fold(1u128, |acc, _| acc.checked_mul(width)).unwrap_or(u128::MAX);
        check_budget(count, per_cell_law.max_value(), k)?;
        let mut atoms: Vec<(Vec<u64>, S)> = vec![(Vec::with_capacity(k), S::one())];
        for _ in 0..k {
            atoms = atoms
                .into_iter()
                .flat_map(|(v, p)| {
                    per_cell_law.atoms().iter().map(move |&(x, px)| {
                        let mut w = v.clone();
                        w.push(x);
                        (w, p * px)
                    })
                })
                .collect();
        }
        sharing.insert(k, SharingLaw::merged(k, atoms));
    }
    ModelSpec::new("iid_per_daughter", offspring, sharing)
}

/// Parasites only ever live in the first daughter cell: `X^(1,k) ~ leftmost_laws[k]`, all other
/// coordinates are zero.
pub fn make_leftmost<S: Scalar>(
    offspring: OffspringLaw<S>,
    leftmost_laws: &BTreeMap<usize, FiniteLaw<S>>,
) -> Result<ModelSpec<S>> {
    let mut sharing = BTreeMap::new();
    for k in offspring.support().filter(|&k| k >= 1).map(|k| k as usize) {
        let law = leftmost_laws.get(&k).ok_or_else(|| {
            Error::structural("model", format!("leftmost family: missing law for k = {k}"))
        })?;
        let atoms = law.atoms().iter().map(|&(x, p)| {
            let mut v = vec![0; k];
            v[0] = x;
            (v, p)
        });
        sharing.insert(k, SharingLaw::merged(k, atoms));
    }
    ModelSpec::new("leftmost", offspring, sharing)
}
