//! The size-biased spine and its parasite process, a branching process in iid random
//! environment (BPRE).
//!
//! Along a spine chosen by drawing the daughter count `T` size-biased (`P(T = k) = k p_k / nu`)
//! and the followed daughter `C` uniformly in `1..=T`, the parasites reproduce with law
//! `L(X^(C,T))`. The environment is therefore the law `L(X^(j,k))` picked with weight
//! `p_k / nu`. Averaged over the tree, `P_z(Z'_n = k) = nu^-n E_z T_{n,k}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convolve::{convolve_sparse, lost_mass};
use crate::error::{Error, Result};
use crate::law::FiniteLaw;
use crate::model::ModelSpec;
use crate::sampling::{Categorical, LawSampler};
use crate::scalar::{compensated_sum, Scalar};
use crate::simulate::{exact_expected_counts, GenerationState, Simulator};

/// One environment: the law of `X^(j,k)` with selection weight `p_k / nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Environment<S: Scalar = f64> {
    pub j: usize,
    pub k: usize,
    pub weight: S,
    pub law: FiniteLaw<S>,
}

impl<S: Scalar> Environment<S> {
    /// Mean offspring `g'(1)` in this environment.
    pub fn mean(&self) -> S {
        self.law.mean()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AbpreSpec<S: Scalar = f64> {
    envs: Vec<Environment<S>>,
}

impl<S: Scalar> AbpreSpec<S> {
    /// Checks that weights are non-negative and sum to 1.
    pub fn new(envs: Vec<Environment<S>>) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::structural("spine", "environment list is empty"));
        }
        if envs.iter().any(|e| e.weight.is_nan() || e.weight < S::zero()) {
            return Err(Error::structural("spine", "environment weights must be non-negative"));
        }
        let total = compensated_sum(envs.iter().map(|e| e.weight));
        if (total - S::one()).abs() > S::tol() {
            return Err(Error::structural(
                "spine",
                format!("environment weights sum to {total}, not 1"),
            ));
        }
        Ok(Self { envs })
    }

    pub fn envs(&self) -> &[Environment<S>] {
        &self.envs
    }

    pub fn total_weight(&self) -> S {
        compensated_sum(self.envs.iter().map(|e| e.weight))
    }

    /// `(mean, weight)` pairs.
    pub fn means(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.envs.iter().map(|e| (e.mean(), e.weight))
    }

    /// Environments with equal laws merged.
    fn distinct_laws(&self) -> Vec<(&FiniteLaw<S>, S)> {
        let mut out: Vec<(&FiniteLaw<S>, Vec<S>)> = Vec::new();
        for e in &self.envs {
            match out.iter_mut().find(|(law, _)| **law == e.law) {
                Some((_, ws)) => ws.push(e.weight),
                None => out.push((&e.law, vec![e.weight])),
            }
        }
        out.into_iter().map(|(law, ws)| (law, compensated_sum(ws))).collect()
    }
}

/// Environment law of the spine process of `spec`.
pub fn abpre_env<S: Scalar>(spec: &ModelSpec<S>) -> Result<AbpreSpec<S>> {
    let nu = spec.nu();
    if nu <= S::zero() {
        return Err(Error::invalid("spine", "cells never divide (nu = 0), no spine exists"));
    }
    let envs = spec
        .dividing()
        .flat_map(|(k, pk, law)| {
            (1..=k).map(move |j| Environment {
                j,
                k,
                weight: pk / nu,
                law: law.marginal(j),
            })
        })
        .collect();
    AbpreSpec::new(envs)
}

/// Size-biased daughter count `t` and the uniformly chosen daughter `c` in `1..=t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpineDraw {
    pub t: usize,
    pub c: usize,
}

pub struct SpineSampler {
    ks: Vec<usize>,
    cat: Categorical,
}

impl SpineSampler {
    pub fn new<S: Scalar>(spec: &ModelSpec<S>) -> Result<Self> {
        if spec.nu() <= S::zero() {
            return Err(Error::invalid("spine", "cells never divide (nu = 0), no spine exists"));
        }
        let (ks, weights) = spec
            .dividing()
            .map(|(k, pk, _)| (k, (S::of_u64(k as u64) * pk).as_f64()))
            .unzip();
        Ok(Self {
            ks,
            cat: Categorical::new(weights),
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SpineDraw {
        let t = self.ks[self.cat.draw(rng)];
        SpineDraw {
            t,
            c: rng.random_range(1..=t),
        }
    }
}

pub fn sample_spine_step<S: Scalar, R: Rng + ?Sized>(spec: &ModelSpec<S>, rng: &mut R) -> Result<SpineDraw> {
    Ok(SpineSampler::new(spec)?.draw(rng))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbpreTrajectory {
    /// `Z'_0, ..., Z'_m`; shorter than requested only after overflow.
    pub values: Vec<u64>,
    pub overflowed: bool,
}

pub struct AbpreSampler {
    pick: Categorical,
    laws: Vec<LawSampler>,
}

impl AbpreSampler {
    pub fn new<S: Scalar>(env: &AbpreSpec<S>) -> Self {
        Self {
            pick: Categorical::new(env.envs().iter().map(|e| e.weight.as_f64()).collect()),
            laws: env.envs().iter().map(|e| LawSampler::new(&e.law)).collect(),
        }
    }

    pub fn trajectory<R: Rng + ?Sized>(&self, z0: u64, n: usize, rng: &mut R) -> AbpreTrajectory {
        let mut values = Vec::with_capacity(n + 1);
        values.push(z0);
        let mut z = z0;
        for _ in 0..n {
            let env = self.pick.draw(rng);
            z = if z == 0 {
                0
            } else {
                match self.laws[env].sum_of(rng, z) {
                    Some(next) => next,
                    None => return AbpreTrajectory { values, overflowed: true },
                }
            };
            values.push(z);
        }
        AbpreTrajectory {
            values,
            overflowed: false,
        }
    }
}

pub fn simulate_abpre<S: Scalar, R: Rng + ?Sized>(env: &AbpreSpec<S>, z0: u64, n: usize, rng: &mut R) -> AbpreTrajectory {
    AbpreSampler::new(env).trajectory(z0, n, rng)
}

/// Distribution of `Z'_m` for `m = 0..=n` on `0..=cap`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct AbpreDistribution<S: Scalar = f64> {
    pub z0: u64,
    pub cap: usize,
    /// `generations[m][y] = P(Z'_m = y)`.
    pub generations: Vec<Vec<S>>,
    /// Cumulative mass that left `0..=cap` by generation `m`.
    pub escaped: Vec<S>,
}

impl<S: Scalar> AbpreDistribution<S> {
    pub fn last(&self) -> &[S] {
        self.generations.last().expect("generation 0 present")
    }

    /// `P(Z'_m = y)`, zero beyond the cap.
    pub fn prob(&self, m: usize, y: usize) -> S {
        self.generations[m].get(y).copied().unwrap_or_else(S::zero)
    }

    /// `P(Z'_m > 0)` restricted to the tracked states.
    pub fn survival(&self, m: usize) -> S {
        compensated_sum(self.generations[m].iter().skip(1).copied())
    }
}

pub const ABPRE_MAX_CAP: usize = 1 << 16;
const ABPRE_ESCAPE_LIMIT: f64 = 0.5;

/// Exact law of `Z'_m` by mixing environments at the distribution level each generation.
pub fn abpre_exact<S: Scalar>(env: &AbpreSpec<S>, z0: u64, n: usize, cap: usize) -> Result<AbpreDistribution<S>> {
    if cap == 0 || cap > ABPRE_MAX_CAP {
        return Err(Error::invalid("spine", format!("state cap must be in 1..={ABPRE_MAX_CAP}")));
    }
    if z0 as usize > cap {
        return Err(Error::invalid("spine", format!("initial count {z0} exceeds cap {cap}")));
    }
    let laws = env.distinct_laws();
    let mut dist = vec![S::zero(); z0 as usize + 1];
    dist[z0 as usize] = S::one();
    let mut generations = vec![dist.clone()];
    let mut escaped = vec![S::zero()];

    for _ in 0..n {
        let top = dist.iter().rposition(|&p| p > S::zero()).unwrap_or(0);
        let mut next = vec![S::zero(); cap + 1];
        let mut lost_terms = vec![*escaped.last().expect("nonempty")];
        for &(law, weight) in &laws {
            let mut pow = vec![S::one()];
            for (z, &pz) in dist.iter().enumerate().take(top + 1) {
                if z > 0 {
                    pow = convolve_sparse(&pow, law, cap);
                }
                if pz == S::zero() {
                    continue;
                }
                let w = weight * pz;
                for (acc, &q) in next.iter_mut().zip(&pow) {
                    *acc = *acc + w * q;
                }
                lost_terms.push(w * lost_mass(&pow));
            }
        }
        let used = next.iter().rposition(|&p| p > S::zero()).unwrap_or(0);
        next.truncate(used + 1);
        dist = next;
        generations.push(dist.clone());
        escaped.push(compensated_sum(lost_terms));
    }

    let total_escaped = escaped.last().expect("nonempty").as_f64();
    if total_escaped > ABPRE_ESCAPE_LIMIT {
        return Err(Error::EscapedMass {
            module: "spine",
            escaped: total_escaped,
            limit: ABPRE_ESCAPE_LIMIT,
            detail: format!("abpre_exact with z0={z0}, n={n}, cap={cap}"),
        });
    }
    Ok(AbpreDistribution {
        z0,
        cap,
        generations,
        escaped,
    })
}

/// How the tree side `nu^-n E T_{n,k}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeSide {
    Exact,
    MonteCarlo { reps: u64, seed: u64, workers: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Row {
    pub k: usize,
    /// `P(Z'_n = k)`.
    pub lhs: f64,
    /// `nu^-n E T_{n,k}`.
    pub rhs: f64,
    pub diff: f64,
    /// Monte-Carlo standard error of `rhs`; `None` when exact.
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Aggregate {
    /// `P(Z'_n > 0)`.
    pub lhs: f64,
    /// `nu^-n E T*_n`.
    pub rhs: f64,
    pub diff: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop1Table {
    pub n: usize,
    pub z0: u64,
    pub tree_side: TreeSide,
    pub rows: Vec<Prop1Row>,
    pub aggregate: Prop1Aggregate,
}

impl Prop1Table {
    pub fn max_abs_diff(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.diff.abs())
            .chain(std::iter::once(self.aggregate.diff.abs()))
            .fold(0.0, f64::max)
    }
}

/// Compares the spine law of `Z'_n` with the size-scaled expected cell counts of the tree.
pub fn check_prop1<S: Scalar>(spec: &ModelSpec<S>, z0: u64, n: usize, cap: usize, tree: TreeSide) -> Result<Prop1Table> {
    let env = abpre_env(spec)?;
    let spine = abpre_exact(&env, z0, n, cap)?;
    let nu_n = spec.nu().as_f64().powi(n as i32);

    let (rhs, rhs_se, agg_rhs, agg_se): (Vec<f64>, Option<Vec<f64>>, f64, Option<f64>) = match tree {
        TreeSide::Exact => {
            let counts = exact_expected_counts(spec, z0, n, cap)?;
            let g = counts.at(n);
            (
                g.by_load.iter().map(|e| e.as_f64() / nu_n).collect(),
                None,
                g.e_t_star.as_f64() / nu_n,
                None,
            )
        }
        TreeSide::MonteCarlo { reps, seed, workers } => {
            if reps < 2 {
                return Err(Error::invalid("spine", "Monte-Carlo tree side needs at least 2 replicates"));
            }
            let start = GenerationState::init(&[z0])?;
            let per_rep = crate::sampling::par_replicates(reps, seed, workers, |_, rng| {
                let sim = Simulator::new(spec);
                let mut state = start.clone();
                for _ in 0..n {
                    // Overflow is impossible at the small horizons this check runs at; treat as empty.
                    state = sim.step(&state, rng).unwrap_or_else(|_| state.clone());
                }
                let loads: Vec<f64> = (0..=cap as u64).map(|c| state.cells_with(c) as f64).collect();
                (loads, state.t_star() as f64)
            })?;
            let r = reps as f64;
            let mut means = Vec::with_capacity(cap + 1);
            let mut ses = Vec::with_capacity(cap + 1);
            for c in 0..=cap {
                let xs: Vec<f64> = per_rep.iter().map(|(l, _)| l[c]).collect();
                let (m, se) = mean_and_se(&xs, r);
                means.push(m / nu_n);
                ses.push(se / nu_n);
            }
            let ts: Vec<f64> = per_rep.iter().map(|(_, t)| *t).collect();
            let (m, se) = mean_and_se(&ts, r);
            (means, Some(ses), m / nu_n, Some(se / nu_n))
        }
    };

    let lhs: Vec<f64> = (0..=cap).map(|k| spine.prob(n, k).as_f64()).collect();
    let width = lhs
        .iter()
        .zip(&rhs)
        .rposition(|(a, b)| *a != 0.0 || *b != 0.0)
        .map_or(1, |i| i + 1);
    let rows = (0..width)
        .map(|k| Prop1Row {
            k,
            lhs: lhs[k],
            rhs: rhs[k],
            diff: lhs[k] - rhs[k],
            se: rhs_se.as_ref().map(|s| s[k]),
        })
        .collect();
    let agg_lhs = spine.survival(n).as_f64();
    Ok(Prop1Table {
        n,
        z0,
        tree_side: tree,
        rows,
        aggregate: Prop1Aggregate {
            lhs: agg_lhs,
            rhs: agg_rhs,
            diff: agg_lhs - agg_rhs,
            se: agg_se,
        },
    })
}

fn mean_and_se(xs: &[f64], r: f64) -> (f64, f64) {
    let mean = crate::sampling::tree_sum(xs) / r;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = crate::sampling::tree_sum(&dev) / (r - 1.0);
    (mean, (var / r).sqrt())
}
