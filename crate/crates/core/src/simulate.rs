//! Forward simulation of the cell/parasite process, generation by generation, and an exact
//! small-horizon recursion for expected cell counts.
//!
//! Contaminated cells are kept as a multiset `parasites per cell -> number of cells`. Cells
//! hosting the same number of parasites evolve iid, so a group of `m` such cells with `k`
//! daughters each can be sampled in one multinomial draw over the joint law of a single
//! cell's daughter vector (the `z`-fold convolution of the sharing law) whenever that law is
//! small. Otherwise each cell draws the atom counts of its `z` parasites directly. Both
//! routes realize the same law.
//!
//! Uncontaminated cells never host parasites again and are only counted: their offspring is
//! drawn in aggregate, and the counter saturates at [`CLEAN_SATURATION`].

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convolve::{lost_mass, powers_table};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sampling::{Categorical, LawSampler};
use crate::scalar::{compensated_sum, Scalar};

/// Clean-cell counts above this value are no longer tracked exactly.
pub const CLEAN_SATURATION: u64 = 1 << 40;

/// Default number of per-parasite-count histogram buckets kept per generation.
pub const DEFAULT_HIST_CAP: usize = 16;

/// Largest joint daughter-vector law used for aggregated sampling.
const JOINT_SUPPORT_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationState {
    /// Parasite count -> number of cells hosting exactly that many parasites.
    contaminated: BTreeMap<u64, u64>,
    clean_cells: u64,
    clean_saturated: bool,
    generation: u64,
}

impl GenerationState {
    /// Generation 0 with one contaminated cell per entry.
    pub fn init(initial_parasites: &[u64]) -> Result<Self> {
        if initial_parasites.is_empty() {
            return Err(Error::invalid("simulate", "initial population needs at least one cell"));
        }
        if initial_parasites.contains(&0) {
            return Err(Error::invalid(
                "simulate",
                "initial cells must host at least one parasite (add clean ancestors with with_clean_cells)",
            ));
        }
        let mut contaminated = BTreeMap::new();
        for &z in initial_parasites {
            *contaminated.entry(z).or_insert(0) += 1;
        }
        Ok(Self {
            contaminated,
            clean_cells: 0,
            clean_saturated: false,
            generation: 0,
        })
    }

    /// Adds uncontaminated ancestor cells.
    pub fn with_clean_cells(mut self, clean: u64) -> Self {
        self.clean_cells = clean.min(CLEAN_SATURATION);
        self.clean_saturated = clean > CLEAN_SATURATION;
        self
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn contaminated(&self) -> &BTreeMap<u64, u64> {
        &self.contaminated
    }

    /// Parasite counts of all contaminated cells, in increasing order.
    pub fn cells(&self) -> impl Iterator<Item = u64> + '_ {
        self.contaminated
            .iter()
            .flat_map(|(&z, &m)| std::iter::repeat_n(z, m as usize))
    }

    pub fn clean_cells(&self) -> u64 {
        self.clean_cells
    }

    pub fn clean_saturated(&self) -> bool {
        self.clean_saturated
    }

    /// Number of contaminated cells.
    pub fn t_star(&self) -> u64 {
        self.contaminated.values().sum()
    }

    /// Total parasites.
    pub fn z_total(&self) -> u128 {
        self.contaminated
            .iter()
            .map(|(&z, &m)| z as u128 * m as u128)
            .sum()
    }

    /// Total cells, unless the clean counter saturated.
    pub fn t_total(&self) -> Option<u64> {
        (!self.clean_saturated).then(|| self.clean_cells + self.t_star())
    }

    /// Number of cells with exactly `k` parasites (`k = 0`: clean cells).
    pub fn cells_with(&self, k: u64) -> u64 {
        if k == 0 {
            self.clean_cells
        } else {
            self.contaminated.get(&k).copied().unwrap_or(0)
        }
    }

    pub fn is_extinct(&self) -> bool {
        self.contaminated.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "generation")]
pub enum Outcome {
    Extinct(u64),
    AliveAtHorizon,
    ExplosionCapHit(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub n: u64,
    /// Total parasites, saturating at `u64::MAX`.
    pub z_total: u64,
    pub t_star: u64,
    /// `None` once the clean-cell counter saturated.
    pub t_total: Option<u64>,
    pub clean_saturated: bool,
    /// `hist[k]` = cells with exactly `k` parasites, `k = 0..=hist_cap`.
    pub hist: Vec<u64>,
    /// Cells with more than `hist_cap` parasites.
    pub hist_overflow: u64,
}

impl GenerationRow {
    pub fn of(state: &GenerationState, hist_cap: usize) -> Self {
        let hist: Vec<u64> = (0..=hist_cap as u64).map(|k| state.cells_with(k)).collect();
        let hist_overflow = state
            .contaminated
            .range(hist_cap as u64 + 1..)
            .map(|(_, &m)| m)
            .sum();
        Self {
            n: state.generation,
            z_total: u64::try_from(state.z_total()).unwrap_or(u64::MAX),
            t_star: state.t_star(),
            t_total: state.t_total(),
            clean_saturated: state.clean_saturated,
            hist,
            hist_overflow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<GenerationRow>,
    pub outcome: Outcome,
    pub seed: u64,
    pub replicate_index: u64,
}

impl RunRecord {
    pub fn last(&self) -> &GenerationRow {
        self.rows.last().expect("run records start with generation 0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    /// Stop once the total parasite count reaches this value.
    pub z_cap: u64,
    pub hist_cap: usize,
}

impl RunConfig {
    pub fn new(horizon: u64, z_cap: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("simulate", "horizon must be at least 1"));
        }
        if z_cap == 0 {
            return Err(Error::invalid("simulate", "explosion cap must be at least 1"));
        }
        Ok(Self {
            horizon,
            z_cap,
            hist_cap: DEFAULT_HIST_CAP,
        })
    }

    pub fn with_hist_cap(mut self, hist_cap: usize) -> Self {
        self.hist_cap = hist_cap;
        self
    }
}

/// A parasite count overflowed `u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overflow;

struct VectorLaw {
    vectors: Vec<Vec<u64>>,
    cat: Categorical,
}

impl VectorLaw {
    fn new(mut atoms: Vec<(Vec<u64>, f64)>) -> Self {
        atoms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (vectors, probs) = atoms.into_iter().unzip();
        Self {
            vectors,
            cat: Categorical::new(probs),
        }
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }
}

/// Joint daughter-vector laws keyed by `(k, z)`; `None` marks a support over the limit.
type JointCache = HashMap<(usize, u64), Option<Rc<VectorLaw>>>;

/// Sampling tables for one model. Holds a per-instance cache, so use one per thread.
pub struct Simulator<'a, S: Scalar = f64> {
    spec: &'a ModelSpec<S>,
    offspring: LawSampler,
    sharing: BTreeMap<usize, VectorLaw>,
    joint: RefCell<JointCache>,
}

struct NextGeneration {
    contaminated: BTreeMap<u64, u64>,
    clean: u64,
}

impl NextGeneration {
    fn place(&mut self, daughters: &[u64], cells: u64) {
        for &x in daughters {
            if x > 0 {
                *self.contaminated.entry(x).or_insert(0) += cells;
            } else {
                self.clean = self.clean.saturating_add(cells);
            }
        }
    }
}

impl<'a, S: Scalar> Simulator<'a, S> {
    pub fn new(spec: &'a ModelSpec<S>) -> Self {
        let sharing = spec
            .sharing()
            .iter()
            .map(|(&k, law)| {
                let atoms = law.atoms().iter().map(|(v, p)| (v.clone(), p.as_f64())).collect();
                (k, VectorLaw::new(atoms))
            })
            .collect();
        Self {
            spec,
            offspring: LawSampler::new(spec.offspring()),
            sharing,
            joint: RefCell::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &ModelSpec<S> {
        self.spec
    }

    /// Joint law of one cell's daughter vector when it hosts `z` parasites and has `k` daughters,
    /// or `None` when its support exceeds the aggregation limit.
    fn joint_law(&self, k: usize, z: u64) -> Option<Rc<VectorLaw>> {
        if let Some(hit) = self.joint.borrow().get(&(k, z)) {
            return hit.clone();
        }
        let built = self.build_joint(k, z).map(Rc::new);
        self.joint.borrow_mut().insert((k, z), built.clone());
        built
    }

    fn build_joint(&self, k: usize, z: u64) -> Option<VectorLaw> {
        if z as usize > JOINT_SUPPORT_LIMIT {
            return None;
        }
        let single = &self.sharing[&k];
        let mut law: HashMap<Vec<u64>, f64> = HashMap::from([(vec![0; k], 1.0)]);
        for _ in 0..z {
            let mut next: HashMap<Vec<u64>, f64> = HashMap::with_capacity(law.len() * 2);
            for (v, p) in &law {
                for (a, &q) in single.vectors.iter().zip(single.cat.probs()) {
                    let mut w = v.clone();
                    for (wi, ai) in w.iter_mut().zip(a) {
                        *wi = wi.checked_add(*ai)?;
                    }
                    *next.entry(w).or_insert(0.0) += p * q;
                }
            }
            if next.len() > JOINT_SUPPORT_LIMIT {
                return None;
            }
            law = next;
        }
        Some(VectorLaw::new(law.into_iter().collect()))
    }

    fn place_group<R: Rng + ?Sized>(
        &self,
        k: usize,
        z: u64,
        cells: u64,
        rng: &mut R,
        next: &mut NextGeneration,
    ) -> Result<(), Overflow> {
        let single = &self.sharing[&k];
        if cells >= 2 {
            if let Some(joint) = self.joint_law(k, z) {
                if (joint.len() as u64) <= cells.saturating_mul(single.len() as u64) {
                    let mut hits = Vec::new();
                    joint.cat.split(rng, cells, |i, c| hits.push((i, c)));
                    for (i, c) in hits {
                        next.place(&joint.vectors[i], c);
                    }
                    return Ok(());
                }
            }
        }
        let mut daughters = vec![0u64; k];
        for _ in 0..cells {
            daughters.iter_mut().for_each(|d| *d = 0);
            let mut overflow = false;
            let mut add = |atom: usize, times: u64, daughters: &mut [u64]| {
                for (d, &a) in daughters.iter_mut().zip(&single.vectors[atom]) {
                    match a.checked_mul(times).and_then(|v| d.checked_add(v)) {
                        Some(v) => *d = v,
                        None => overflow = true,
                    }
                }
            };
            if z <= single.len() as u64 {
                for _ in 0..z {
                    let atom = single.cat.draw(rng);
                    add(atom, 1, &mut daughters);
                }
            } else {
                let mut picks = Vec::with_capacity(single.len());
                single.cat.split(rng, z, |i, c| picks.push((i, c)));
                for (i, c) in picks {
                    add(i, c, &mut daughters);
                }
            }
            if overflow {
                return Err(Overflow);
            }
            next.place(&daughters, 1);
        }
        Ok(())
    }

    /// One generation of the process.
    pub fn step<R: Rng + ?Sized>(&self, state: &GenerationState, rng: &mut R) -> Result<GenerationState, Overflow> {
        let mut next = NextGeneration {
            contaminated: BTreeMap::new(),
            clean: 0,
        };
        let mut groups = Vec::new();
        for (&z, &m) in &state.contaminated {
            groups.clear();
            self.offspring.split(rng, m, |k, c| groups.push((k, c)));
            for &(k, c) in &groups {
                if k > 0 {
                    self.place_group(k as usize, z, c, rng, &mut next)?;
                }
            }
        }

        let mut saturated = state.clean_saturated;
        if !saturated && state.clean_cells > 0 {
            let mut born: u64 = 0;
            self.offspring
                .split(rng, state.clean_cells, |k, c| born = born.saturating_add(k.saturating_mul(c)));
            next.clean = next.clean.saturating_add(born);
        }
        let mut clean = next.clean;
        if saturated || clean > CLEAN_SATURATION {
            saturated = true;
            clean = CLEAN_SATURATION;
        }
        Ok(GenerationState {
            contaminated: next.contaminated,
            clean_cells: clean,
            clean_saturated: saturated,
            generation: state.generation + 1,
        })
    }

    /// Steps until extinction, the explosion cap, or the horizon.
    pub fn run<R: Rng + ?Sized>(&self, init: &GenerationState, config: &RunConfig, rng: &mut R) -> RunRecord {
        let mut rows = Vec::new();
        let (outcome, last) = self.run_with(init, config, rng, |s| rows.push(GenerationRow::of(s, config.hist_cap)));
        if let Some(last) = last {
            let mut row = GenerationRow::of(&last, config.hist_cap);
            row.n += 1;
            row.z_total = u64::MAX;
            rows.push(row);
        }
        RunRecord {
            rows,
            outcome,
            seed: 0,
            replicate_index: 0,
        }
    }

    /// Like [`Simulator::run`] but hands every generation (including the initial one) to
    /// `observe` instead of recording it. On a `u64` overflow the last finite state is returned.
    pub fn run_with<R: Rng + ?Sized>(
        &self,
        init: &GenerationState,
        config: &RunConfig,
        rng: &mut R,
        mut observe: impl FnMut(&GenerationState),
    ) -> (Outcome, Option<GenerationState>) {
        observe(init);
        let cap = config.z_cap as u128;
        if init.z_total() >= cap {
            return (Outcome::ExplosionCapHit(init.generation), None);
        }
        let mut state = init.clone();
        loop {
            if state.generation >= init.generation + config.horizon {
                return (Outcome::AliveAtHorizon, None);
            }
            match self.step(&state, rng) {
                Ok(next) => state = next,
                Err(Overflow) => return (Outcome::ExplosionCapHit(state.generation + 1), Some(state)),
            }
            observe(&state);
            if state.is_extinct() {
                return (Outcome::Extinct(state.generation), None);
            }
            if state.z_total() >= cap {
                return (Outcome::ExplosionCapHit(state.generation), None);
            }
        }
    }
}

pub fn init(initial_parasites: &[u64]) -> Result<GenerationState> {
    GenerationState::init(initial_parasites)
}

/// Single generation step; prefer [`Simulator::step`] in loops.
pub fn step<S: Scalar, R: Rng + ?Sized>(
    state: &GenerationState,
    spec: &ModelSpec<S>,
    rng: &mut R,
) -> Result<GenerationState, Overflow> {
    Simulator::new(spec).step(state, rng)
}

pub fn run<S: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<S>,
    init: &GenerationState,
    config: &RunConfig,
    rng: &mut R,
) -> RunRecord {
    Simulator::new(spec).run(init, config, rng)
}

/// Monte-Carlo batch: replicate `r` runs on stream `r` of `seed`.
pub fn run_batch<S: Scalar, T: Send>(
    spec: &ModelSpec<S>,
    init: &GenerationState,
    config: &RunConfig,
    reps: u64,
    seed: u64,
    workers: usize,
    summarize: impl Fn(RunRecord) -> T + Sync + Send,
) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("simulate", format!("cannot start {workers} workers: {e}")))?;
    use rayon::prelude::*;
    Ok(pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map_init(
                || Simulator::new(spec),
                |sim, r| {
                    let mut rng = crate::sampling::replicate_rng(seed, r);
                    let mut rec = sim.run(init, config, &mut rng);
                    rec.seed = seed;
                    rec.replicate_index = r;
                    summarize(rec)
                },
            )
            .collect()
    }))
}

/// Exact expected cell counts by parasite load.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ExpectedCounts<S: Scalar = f64> {
    pub z0: u64,
    pub cap: usize,
    /// One entry per generation `0..=n`.
    pub generations: Vec<ExpectedGeneration<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ExpectedGeneration<S: Scalar = f64> {
    pub n: usize,
    /// `by_load[c] = E T_{n,c}` for `c = 0..=cap`.
    pub by_load: Vec<S>,
    pub e_t_star: S,
    pub e_z: S,
    /// Upper bound on the expected number of cells whose load left `0..=cap` at some point.
    pub escaped_cells: S,
    /// `escaped_cells / nu^n`.
    pub escaped_mass: S,
}

impl<S: Scalar> ExpectedCounts<S> {
    pub fn at(&self, n: usize) -> &ExpectedGeneration<S> {
        &self.generations[n]
    }
}

pub const EXACT_MAX_HORIZON: usize = 6;
pub const EXACT_MAX_CAP: usize = 1024;
const EXACT_ESCAPE_LIMIT: f64 = 0.1;

/// `E_{z0} T_{m,c}` for `m <= n` and loads `c <= cap`, by the one-step recursion over the
/// load of each daughter cell.
pub fn exact_expected_counts<S: Scalar>(spec: &ModelSpec<S>, z0: u64, n: usize, cap: usize) -> Result<ExpectedCounts<S>> {
    if n > EXACT_MAX_HORIZON {
        return Err(Error::invalid(
            "simulate",
            format!("exact expected counts support n <= {EXACT_MAX_HORIZON}, got {n}"),
        ));
    }
    if cap == 0 || cap > EXACT_MAX_CAP {
        return Err(Error::invalid("simulate", format!("state cap must be in 1..={EXACT_MAX_CAP}")));
    }
    if z0 == 0 || z0 as usize > cap {
        return Err(Error::invalid("simulate", format!("initial load {z0} must be in 1..={cap}")));
    }

    // kernel[z][x] = sum_{j,k} p_k P(coordinate-j sum of z sharing draws = x)
    let width = cap + 1;
    let mut kernel = vec![vec![S::zero(); width]; width];
    let mut kernel_lost = vec![S::zero(); width];
    for (k, pk, law) in spec.dividing() {
        for j in 1..=k {
            let table = powers_table(&law.marginal(j), cap, cap);
            for (z, pow) in table.iter().enumerate() {
                for (x, &p) in pow.iter().enumerate() {
                    kernel[z][x] = kernel[z][x] + pk * p;
                }
                kernel_lost[z] = kernel_lost[z] + pk * lost_mass(pow);
            }
        }
    }

    let nu = spec.nu();
    let z0 = z0 as usize;
    let mut layer: Vec<Vec<S>> = (0..width)
        .map(|z| (0..width).map(|c| if c == z { S::one() } else { S::zero() }).collect())
        .collect();
    let mut escaped = vec![S::zero(); width];
    let mut generations = vec![summarize_layer(&layer[z0], escaped[z0], S::one(), 0)];

    for m in 0..n {
        let nu_m = nu.powi(m as i32);
        let mut next = vec![vec![S::zero(); width]; width];
        let mut next_escaped = vec![S::zero(); width];
        for z in 0..width {
            let row = &kernel[z];
            let mut esc_terms = vec![kernel_lost[z] * nu_m];
            for (x, &w) in row.iter().enumerate() {
                if w == S::zero() {
                    continue;
                }
                for (acc, &e) in next[z].iter_mut().zip(&layer[x]) {
                    *acc = *acc + w * e;
                }
                esc_terms.push(w * escaped[x]);
            }
            next_escaped[z] = compensated_sum(esc_terms);
        }
        layer = next;
        escaped = next_escaped;
        generations.push(summarize_layer(&layer[z0], escaped[z0], nu.powi(m as i32 + 1), m + 1));
    }

    let last = generations.last().expect("generation 0 present");
    if last.escaped_mass.as_f64() > EXACT_ESCAPE_LIMIT {
        return Err(Error::EscapedMass {
            module: "simulate",
            escaped: last.escaped_mass.as_f64(),
            limit: EXACT_ESCAPE_LIMIT,
            detail: format!("exact_expected_counts with n={n}, cap={cap}"),
        });
    }
    Ok(ExpectedCounts {
        z0: z0 as u64,
        cap,
        generations,
    })
}

fn summarize_layer<S: Scalar>(row: &[S], escaped: S, nu_n: S, n: usize) -> ExpectedGeneration<S> {
    ExpectedGeneration {
        n,
        by_load: row.to_vec(),
        e_t_star: compensated_sum(row.iter().skip(1).copied()),
        e_z: compensated_sum(row.iter().enumerate().map(|(c, &e)| S::of_u64(c as u64) * e)),
        escaped_cells: escaped,
        escaped_mass: if nu_n > S::zero() { escaped / nu_n } else { S::zero() },
    }
}
