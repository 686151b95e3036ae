//! Estimators that confront the classifier with simulation and with the exact spine law.
//!
//! Monte-Carlo operations run replicate `r` on stream `r` of the master seed (see
//! [`crate::sampling`]) and reduce in replicate order, so their results do not depend on the
//! worker count.

use std::io::Write;

use serde::Serialize;

use crate::criteria::{classify, inf_theta, mean_log, KappaClass, Verdict, DEFAULT_THETA_TOL};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scalar::Scalar;
use crate::simulate::{GenerationState, Outcome, RunConfig, Simulator};
use crate::spine::{abpre_env, abpre_exact};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Fewer surviving replicates than this and [`survival_growth`] reports no fractions.
pub const MIN_SURVIVORS: u64 = 30;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: u64, n: u64) -> (f64, f64) {
    assert!(n > 0 && successes <= n);
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

/// Monte-Carlo extinction probability by the horizon.
///
/// Cap hits and runs still alive at the horizon both count as survival, so `point` is a
/// lower bound for the extinction probability; the alive-at-horizon share is
/// `censored_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    /// Fraction of replicates extinct by the horizon.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reps: u64,
    pub horizon: u64,
    pub z_cap: u64,
    pub censored_fraction: f64,
    pub extinct: u64,
    pub cap_hit: u64,
    pub alive_at_horizon: u64,
    pub z0: u64,
    pub seed: u64,
    pub verdict: Option<Verdict>,
}

impl EstimateResult {
    /// Wilson interval for the survival probability, `(1 - ci_high, 1 - ci_low)`.
    pub fn survival_interval(&self) -> (f64, f64) {
        (1.0 - self.ci_high, 1.0 - self.ci_low)
    }

    pub fn survival_point(&self) -> f64 {
        1.0 - self.point
    }
}

fn reject_zero_reps(reps: u64) -> Result<()> {
    if reps == 0 {
        return Err(Error::invalid("estimate", "reps must be at least 1"));
    }
    Ok(())
}

fn batch<S: Scalar, T: Send>(
    spec: &ModelSpec<S>,
    reps: u64,
    seed: u64,
    workers: usize,
    f: impl Fn(&Simulator<'_, S>, &mut crate::sampling::StreamRng) -> T + Sync + Send,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("estimate", format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map_init(
                || Simulator::new(spec),
                |sim, r| {
                    let mut rng = crate::sampling::replicate_rng(seed, r);
                    f(sim, &mut rng)
                },
            )
            .collect()
    }))
}

/// Fraction of `reps` runs from one cell with `z0` parasites that die out by `horizon`.
/// The classifier verdict is attached when the model satisfies the standing assumptions.
pub fn extinction_prob<S: Scalar>(
    spec: &ModelSpec<S>,
    z0: u64,
    horizon: u64,
    z_cap: u64,
    reps: u64,
    seed: u64,
    workers: usize,
) -> Result<EstimateResult> {
    reject_zero_reps(reps)?;
    let init = GenerationState::init(&[z0])?;
    let config = RunConfig::new(horizon, z_cap)?;
    let verdict = classify(spec).ok().map(|r| r.verdict);
    let outcomes = batch(spec, reps, seed, workers, |sim, rng| sim.run_with(&init, &config, rng, |_| ()).0)?;
    let (mut extinct, mut cap_hit, mut alive) = (0, 0, 0);
    for o in outcomes {
        match o {
            Outcome::Extinct(_) => extinct += 1,
            Outcome::ExplosionCapHit(_) => cap_hit += 1,
            Outcome::AliveAtHorizon => alive += 1,
        }
    }
    let (ci_low, ci_high) = wilson(extinct, reps);
    Ok(EstimateResult {
        point: extinct as f64 / reps as f64,
        ci_low,
        ci_high,
        reps,
        horizon,
        z_cap,
        censored_fraction: alive as f64 / reps as f64,
        extinct,
        cap_hit,
        alive_at_horizon: alive,
        z0,
        seed,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    /// `E T*_n = nu^n P(Z'_n > 0)`.
    pub e_tstar: f64,
    /// `e_tstar(n) / e_tstar(n - 1)`; `None` for `n = 0`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub z0: u64,
    pub cap: usize,
    pub rows: Vec<DecayRow>,
    /// `nu * inf_theta E g'(1)^theta`.
    pub predicted_limit: f64,
    pub kappa_used: Option<f64>,
    pub kappa_class: Option<KappaClass>,
    /// Spine mass that left the tracked states by `n_max`.
    pub escaped: f64,
}

impl DecayFit {
    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter_map(|r| r.ratio)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,e_tstar,ratio")?;
        for r in &self.rows {
            match r.ratio {
                Some(q) => writeln!(out, "{},{:e},{:e}", r.n, r.e_tstar, q)?,
                None => writeln!(out, "{},{:e},", r.n, r.e_tstar)?,
            }
        }
        Ok(())
    }
}

pub const DECAY_MAX_N: usize = 14;

/// Exact `E T*_n` for `n <= n_max` from one cell with one parasite, via the spine law.
pub fn decay_rate<S: Scalar>(spec: &ModelSpec<S>, n_max: usize, cap: usize) -> Result<DecayFit> {
    if n_max == 0 || n_max > DECAY_MAX_N {
        return Err(Error::invalid("estimate", format!("n_max must be in 1..={DECAY_MAX_N}, got {n_max}")));
    }
    spec.validate().require()?;
    let env = abpre_env(spec)?;
    let ml = mean_log(&env);
    if ml >= -S::tol() {
        return Err(Error::invalid(
            "estimate",
            format!("decay_rate needs a subcritical spine process, E log g'(1) = {ml}"),
        ));
    }
    let dist = abpre_exact(&env, 1, n_max, cap)?;
    let nu = spec.nu().as_f64();
    let mut rows: Vec<DecayRow> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let e_tstar = nu.powi(n as i32) * dist.survival(n).as_f64();
        let ratio = rows.last().map(|prev| e_tstar / prev.e_tstar);
        rows.push(DecayRow { n, e_tstar, ratio });
    }
    let (_, inf_value) = inf_theta(&env, S::lit(DEFAULT_THETA_TOL));
    let kappa_class = crate::criteria::kappa_class(&env);
    Ok(DecayFit {
        z0: 1,
        cap,
        rows,
        predicted_limit: nu * inf_value.as_f64(),
        kappa_used: kappa_class.map(KappaClass::kappa),
        kappa_class,
        escaped: dist.escaped.last().map_or(0.0, |e| e.as_f64()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyRow {
    pub horizon: u64,
    /// Fraction of replicates with `1 <= Z_n <= band_max`.
    pub fraction: f64,
    pub se: f64,
    pub in_band: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyScan {
    pub band_max: u64,
    pub reps: u64,
    pub seed: u64,
    pub z_cap: u64,
    pub rows: Vec<DichotomyRow>,
    /// Each fraction is at most its predecessor plus two combined standard errors.
    pub nonincreasing_within_2se: bool,
}

/// Default explosion cap for [`dichotomy_scan`]; runs that reach it count as out of band later on.
pub const DICHOTOMY_Z_CAP: u64 = 10_000;

/// Per-horizon fraction of runs whose total parasite count lies in `[1, band_max]`.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_scan<S: Scalar>(
    spec: &ModelSpec<S>,
    z0: u64,
    horizons: &[u64],
    band_max: u64,
    reps: u64,
    seed: u64,
    workers: usize,
    z_cap: u64,
) -> Result<DichotomyScan> {
    reject_zero_reps(reps)?;
    if band_max == 0 {
        return Err(Error::invalid("estimate", "band upper end must be at least 1"));
    }
    if z_cap <= band_max {
        return Err(Error::invalid("estimate", "explosion cap must exceed the band"));
    }
    let mut sorted = horizons.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let Some(&max_h) = sorted.last() else {
        return Err(Error::invalid("estimate", "no horizons given"));
    };
    if max_h == 0 {
        return Err(Error::invalid("estimate", "horizons must be at least 1"));
    }
    let init = GenerationState::init(&[z0])?;
    let config = RunConfig::new(max_h, z_cap)?;
    let band = band_max as u128;
    let hits = batch(spec, reps, seed, workers, |sim, rng| {
        let mut inside = vec![false; sorted.len()];
        sim.run_with(&init, &config, rng, |s| {
            if let Ok(i) = sorted.binary_search(&s.generation()) {
                let z = s.z_total();
                inside[i] = z >= 1 && z <= band;
            }
        });
        inside
    })?;
    let mut rows = Vec::with_capacity(sorted.len());
    for (i, &h) in sorted.iter().enumerate() {
        let in_band = hits.iter().filter(|v| v[i]).count() as u64;
        let p = in_band as f64 / reps as f64;
        rows.push(DichotomyRow {
            horizon: h,
            fraction: p,
            se: (p * (1.0 - p) / reps as f64).sqrt(),
            in_band,
        });
    }
    let nonincreasing_within_2se = rows
        .windows(2)
        .all(|w| w[1].fraction <= w[0].fraction + 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt());
    Ok(DichotomyScan {
        band_max,
        reps,
        seed,
        z_cap,
        rows,
        nonincreasing_within_2se,
    })
}

pub const GROWTH_LEVELS: [u64; 4] = [1, 2, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthLevel {
    pub t: u64,
    /// Fraction of surviving runs whose final `T*` exceeds `t`.
    pub among_survivors: Option<f64>,
    /// Same, among runs that reached the explosion cap.
    pub among_cap_hit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthSummary {
    pub reps: u64,
    pub horizon: u64,
    pub z_cap: u64,
    pub seed: u64,
    pub survivors: u64,
    pub cap_hit: u64,
    pub degenerate_sharing: bool,
    /// Too few survivors to report fractions.
    pub insufficient_survivors: bool,
    pub levels: Vec<GrowthLevel>,
    /// Degenerate sharing only: every surviving run had `T*_n = 1` at every generation.
    pub tstar_always_one: Option<bool>,
    /// Largest `T*` seen on any surviving run.
    pub max_tstar_on_survivors: u64,
}

/// Contaminated-cell counts on runs that do not die out by `horizon`.
pub fn survival_growth<S: Scalar>(
    spec: &ModelSpec<S>,
    z0: u64,
    horizon: u64,
    z_cap: u64,
    reps: u64,
    seed: u64,
    workers: usize,
) -> Result<GrowthSummary> {
    reject_zero_reps(reps)?;
    let init = GenerationState::init(&[z0])?;
    let config = RunConfig::new(horizon, z_cap)?;
    let degenerate = spec.has_degenerate_sharing();
    // (outcome, final T*, max T* over the path)
    let runs = batch(spec, reps, seed, workers, |sim, rng| {
        let (mut last, mut max) = (0u64, 0u64);
        let (outcome, overflow) = sim.run_with(&init, &config, rng, |s| {
            last = s.t_star();
            max = max.max(last);
        });
        if let Some(s) = overflow {
            last = s.t_star();
            max = max.max(last);
        }
        (outcome, last, max)
    })?;

    let survivors: Vec<_> = runs.iter().filter(|r| !matches!(r.0, Outcome::Extinct(_))).collect();
    let cap_hits: Vec<_> = survivors
        .iter()
        .filter(|r| matches!(r.0, Outcome::ExplosionCapHit(_)))
        .collect();
    let n_surv = survivors.len() as u64;
    let insufficient = n_surv < MIN_SURVIVORS;
    let frac = |set: &[&&(Outcome, u64, u64)], t: u64| {
        if set.is_empty() || insufficient {
            None
        } else {
            Some(set.iter().filter(|r| r.1 > t).count() as f64 / set.len() as f64)
        }
    };
    let surv_refs: Vec<_> = survivors.iter().collect();
    let levels = GROWTH_LEVELS
        .iter()
        .map(|&t| GrowthLevel {
            t,
            among_survivors: frac(&surv_refs, t),
            among_cap_hit: frac(&cap_hits, t),
        })
        .collect();
    let max_tstar = survivors.iter().map(|r| r.2).max().unwrap_or(0);
    Ok(GrowthSummary {
        reps,
        horizon,
        z_cap,
        seed,
        survivors: n_surv,
        cap_hit: cap_hits.len() as u64,
        degenerate_sharing: degenerate,
        insufficient_survivors: insufficient,
        levels,
        tstar_always_one: degenerate.then(|| survivors.iter().all(|r| r.2 == 1)),
        max_tstar_on_survivors: max_tstar,
    })
}
