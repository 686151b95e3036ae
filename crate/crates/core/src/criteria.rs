//! Almost-sure extinction criteria for the parasite population.
//!
//! Everything is computed exactly from the finite-support environment law of the spine
//! process (see [`crate::spine`]):
//!
//! * degenerate sharing (all parasites of a cell always end up in the same daughter): the
//!   parasites follow a BPRE driven by the host cell's daughter count, and die out a.s. iff
//!   `E log E(Z_1 | N) <= 0` or `E log- P(Z_1 > 0 | N) = inf`;
//! * otherwise: a.s. extinction iff `nu <= 1`, or `nu > 1`, `E log g'(1) < 0` and
//!   `inf_{0<=theta<=1} E g'(1)^theta <= 1/nu`.
//!
//! Boundary comparisons use the scalar tolerance ([`Scalar::tol`]) and are flagged in the report.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::Result;
use crate::golden::golden_section_min;
use crate::model::ModelSpec;
use crate::scalar::{compensated_sum, pow_convention, xlnx, Scalar};
use crate::spine::{abpre_env, AbpreSpec};

/// Lower end of the golden-section bracket; `theta = 0` itself is evaluated separately.
pub const THETA_EPS: f64 = 1e-12;
pub const DEFAULT_THETA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbpreClass {
    Supercritical,
    Critical,
    Subcritical,
}

/// Subregime of a subcritical spine process, by the sign of `E g'(1) log g'(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KappaClass {
    Strongly,
    Intermediate,
    Weakly,
}

impl KappaClass {
    /// Polynomial correction exponent of the survival asymptotics.
    pub fn kappa(self) -> f64 {
        match self {
            KappaClass::Strongly => 0.0,
            KappaClass::Intermediate => 0.5,
            KappaClass::Weakly => 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    AlmostSureExtinction,
    PositiveSurvival,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::AlmostSureExtinction => "AlmostSureExtinction",
            Verdict::PositiveSurvival => "PositiveSurvival",
        })
    }
}

/// Which sharp comparisons fell inside the tolerance band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFlags {
    pub nu_at_one: bool,
    pub mean_log_at_zero: bool,
    pub xlogx_at_zero: bool,
    pub inf_theta_at_inverse_nu: bool,
    pub case_a_meanlog_at_zero: bool,
}

impl BoundaryFlags {
    pub fn any(&self) -> bool {
        self.nu_at_one
            || self.mean_log_at_zero
            || self.xlogx_at_zero
            || self.inf_theta_at_inverse_nu
            || self.case_a_meanlog_at_zero
    }
}

fn ext<S: Scalar, Ser: Serializer>(x: &S, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
    let v = x.as_f64();
    if v.is_finite() {
        ser.serialize_f64(v)
    } else if v.is_nan() {
        ser.serialize_str("nan")
    } else if v > 0.0 {
        ser.serialize_str("+inf")
    } else {
        ser.serialize_str("-inf")
    }
}

fn ext_opt<S: Scalar, Ser: Serializer>(x: &Option<S>, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
    match x {
        Some(v) => ext(v, ser),
        None => ser.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct CriterionReport<S: Scalar = f64> {
    pub label: String,
    pub nu: S,
    pub gamma: S,
    /// `E log g'(1)`; `-inf` when some environment has mean 0.
    #[serde(serialize_with = "ext")]
    pub mean_log_g: S,
    /// `E g'(1) log g'(1)` with `0 log 0 = 0`.
    #[serde(serialize_with = "ext")]
    pub xlogx: S,
    pub inf_theta_value: S,
    pub inf_theta_arg: S,
    pub abpre_class: AbpreClass,
    pub kappa_class: Option<KappaClass>,
    pub kappa: Option<f64>,
    pub degenerate_case: bool,
    /// `E log E(Z_1 | N)`, degenerate case only.
    #[serde(serialize_with = "ext_opt")]
    pub case_a_meanlog: Option<S>,
    /// Whether `E log- P(Z_1 > 0 | N) = inf`, degenerate case only.
    pub case_a_logminus_infinite: Option<bool>,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub boundary: BoundaryFlags,
}

impl<S: Scalar> CriterionReport<S> {
    /// Re-derives the verdict from the reported quantities.
    pub fn expected_verdict(&self) -> Verdict {
        let tol = S::tol();
        let extinct = if self.degenerate_case {
            self.case_a_meanlog.is_some_and(|m| m <= tol) || self.case_a_logminus_infinite == Some(true)
        } else {
            self.nu <= S::one() + tol
                || (self.abpre_class == AbpreClass::Subcritical
                    && self.inf_theta_value <= S::one() / self.nu + tol)
        };
        if extinct {
            Verdict::AlmostSureExtinction
        } else {
            Verdict::PositiveSurvival
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.kappa_class.is_some() == (self.abpre_class == AbpreClass::Subcritical)
            && self.expected_verdict() == self.verdict
    }
}

/// `E log g'(1)` over environments.
pub fn mean_log<S: Scalar>(env: &AbpreSpec<S>) -> S {
    let mut terms = Vec::new();
    for (mu, w) in env.means() {
        if w == S::zero() {
            continue;
        }
        if mu == S::zero() {
            return S::neg_infinity();
        }
        terms.push(w * mu.ln());
    }
    compensated_sum(terms)
}

/// `E g'(1) log g'(1)`.
pub fn xlogx<S: Scalar>(env: &AbpreSpec<S>) -> S {
    compensated_sum(env.means().map(|(mu, w)| w * xlnx(mu)))
}

/// `E g'(1)^theta` with `0^0 = 1`.
pub fn theta_objective<S: Scalar>(env: &AbpreSpec<S>, theta: S) -> S {
    assert!(theta >= S::zero() && theta <= S::one(), "theta = {theta} outside [0, 1]");
    compensated_sum(env.means().map(|(mu, w)| w * pow_convention(mu, theta)))
}

/// `E g'(1) = E Z'_1`, equal to `gamma / nu`.
pub fn mean_offspring<S: Scalar>(env: &AbpreSpec<S>) -> S {
    compensated_sum(env.means().map(|(mu, w)| w * mu))
}

/// `(arg, value)` of `inf_{0<=theta<=1} E g'(1)^theta`.
///
/// The objective is convex on `(0, 1]`, so a golden-section search on `[THETA_EPS, 1]` finds
/// its interior minimum; `theta = 0` and `theta = 1` are compared explicitly because the
/// objective may jump at 0 when some environment has mean 0. Ties go to 0, then 1.
pub fn inf_theta<S: Scalar>(env: &AbpreSpec<S>, tol: S) -> (S, S) {
    let f = |t: S| theta_objective(env, t);
    let search = golden_section_min(f, S::lit(THETA_EPS), S::one(), tol);
    let candidates = [(S::zero(), f(S::zero())), (S::one(), f(S::one())), (search.arg, search.value)];
    candidates
        .into_iter()
        .fold(None, |best: Option<(S, S)>, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
        .expect("three candidates")
}

/// Subregime of a subcritical environment; `None` unless `E log g'(1) < 0`.
pub fn kappa_class<S: Scalar>(env: &AbpreSpec<S>) -> Option<KappaClass> {
    let tol = S::tol();
    if mean_log(env) >= -tol {
        return None;
    }
    let x = xlogx(env);
    Some(if x.abs() <= tol {
        KappaClass::Intermediate
    } else if x < S::zero() {
        KappaClass::Strongly
    } else {
        KappaClass::Weakly
    })
}

/// Evaluates every criterion quantity and the extinction verdict. Fails unless the model
/// satisfies (A1)-(A3).
pub fn classify<S: Scalar>(spec: &ModelSpec<S>) -> Result<CriterionReport<S>> {
    let report = spec.validate();
    report.require()?;
    let tol = S::tol();
    let moments = spec.moments();
    let (nu, gamma) = (moments.nu, moments.gamma);
    let env = abpre_env(spec)?;

    let ml = mean_log(&env);
    let xl = xlogx(&env);
    let (inf_arg, inf_value) = inf_theta(&env, S::lit(DEFAULT_THETA_TOL));
    let abpre_class = if ml.abs() <= tol {
        AbpreClass::Critical
    } else if ml > S::zero() {
        AbpreClass::Supercritical
    } else {
        AbpreClass::Subcritical
    };
    let kappa = kappa_class(&env);

    let mut boundary = BoundaryFlags {
        nu_at_one: (nu - S::one()).abs() <= tol,
        mean_log_at_zero: ml.abs() <= tol,
        xlogx_at_zero: abpre_class == AbpreClass::Subcritical && xl.abs() <= tol,
        inf_theta_at_inverse_nu: (inf_value - S::one() / nu).abs() <= tol,
        case_a_meanlog_at_zero: false,
    };

    let degenerate = report.degenerate_sharing;
    let (case_a_meanlog, case_a_logminus_infinite, verdict) = if degenerate {
        // E log E(Z_1 | N) and E log- P(Z_1 > 0 | N); k = 0 contributes log 0.
        let mut terms = Vec::new();
        let mut meanlog = None;
        let mut logminus_infinite = false;
        for &(k, pk) in spec.offspring().atoms() {
            let (mean_total, p_zero) = match spec.sharing_for(k as usize) {
                Some(law) => {
                    let total = law.total_law();
                    (total.mean(), total.prob(0))
                }
                None => (S::zero(), S::one()),
            };
            if p_zero >= S::one() - tol {
                logminus_infinite = true;
            }
            if mean_total == S::zero() {
                meanlog = Some(S::neg_infinity());
            } else {
                terms.push(pk * mean_total.ln());
            }
        }
        let meanlog = meanlog.unwrap_or_else(|| compensated_sum(terms));
        boundary.case_a_meanlog_at_zero = meanlog.abs() <= tol;
        let extinct = meanlog <= tol || logminus_infinite;
        (
            Some(meanlog),
            Some(logminus_infinite),
            if extinct { Verdict::AlmostSureExtinction } else { Verdict::PositiveSurvival },
        )
    } else {
        let extinct = nu <= S::one() + tol
            || (abpre_class == AbpreClass::Subcritical && inf_value <= S::one() / nu + tol);
        (
            None,
            None,
            if extinct { Verdict::AlmostSureExtinction } else { Verdict::PositiveSurvival },
        )
    };

    Ok(CriterionReport {
        label: spec.label().to_string(),
        nu,
        gamma,
        mean_log_g: ml,
        xlogx: xl,
        inf_theta_value: inf_value,
        inf_theta_arg: inf_arg,
        abpre_class,
        kappa_class: kappa,
        kappa: kappa.map(KappaClass::kappa),
        degenerate_case: degenerate,
        case_a_meanlog,
        case_a_logminus_infinite,
        verdict,
        tolerance: S::TOLERANCE,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::{Assumption, Error};
    use crate::gallery;
    use crate::law::FiniteLaw;
    use crate::spine::Environment;

    fn env_of(spec: &ModelSpec) -> AbpreSpec {
        abpre_env(spec).unwrap()
    }

    /// Two environments of weight 1/2, each a law on {0, 2} with the given mean.
    fn two_point_env(m1: f64, m2: f64) -> AbpreSpec {
        let law = |m: f64| FiniteLaw::new(vec![(0, 1.0 - m / 2.0), (2, m / 2.0)]).unwrap();
        AbpreSpec::new(vec![
            Environment { j: 1, k: 2, weight: 0.5, law: law(m1) },
            Environment { j: 2, k: 2, weight: 0.5, law: law(m2) },
        ])
        .unwrap()
    }

    #[test]
    fn mean_log_examples() {
        assert_eq!(mean_log(&env_of(&gallery::bs())), 0.0);
        assert!((mean_log(&env_of(&gallery::sa(0.2, 0.2))) - 0.4f64.ln()).abs() < 1e-15);
        assert_eq!(mean_log(&env_of(&gallery::ld())), f64::NEG_INFINITY);
    }

    #[test]
    fn xlogx_examples() {
        assert_eq!(xlogx(&env_of(&gallery::bs())), 0.0);
        assert!((xlogx(&env_of(&gallery::sa(0.2, 0.2))) - 0.4 * 0.4f64.ln()).abs() < 1e-15);
        let w = xlogx(&env_of(&gallery::w()));
        assert!((w - (4.0 * 4f64.ln() + 0.1 * 0.1f64.ln()) / 2.0).abs() < 1e-14);
        assert!((w - 2.657).abs() < 1e-3);
    }

    #[test]
    fn theta_objective_examples() {
        let bs = env_of(&gallery::bs());
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(theta_objective(&bs, t), 1.0);
        }
        let sa = env_of(&gallery::sa(0.2, 0.2));
        assert!((theta_objective(&sa, 1.0) - 0.4).abs() < 1e-15);
        assert_eq!(theta_objective(&sa, 0.0), 1.0);
        let w = theta_objective(&env_of(&gallery::w()), 0.5);
        assert!((w - (2.0 + 0.1f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((w - 1.15811).abs() < 1e-5);
        // a mean-zero environment counts fully at theta = 0 only
        let ld = env_of(&gallery::ld());
        assert_eq!(theta_objective(&ld, 0.0), 1.0);
        assert!((theta_objective(&ld, 1.0) - 1.0).abs() < 1e-15);
        assert!((theta_objective(&ld, 1e-9) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn inf_theta_examples() {
        let (arg, value) = inf_theta(&env_of(&gallery::sa(0.2, 0.2)), 1e-10);
        assert_eq!(arg, 1.0);
        assert!((value - 0.4).abs() < 1e-15);

        let (arg, value) = inf_theta(&env_of(&gallery::bs()), 1e-10);
        assert_eq!((arg, value), (0.0, 1.0));

        let (arg, value) = inf_theta(&env_of(&gallery::w()), 1e-10);
        // stationary point of (4^t + 0.1^t)/2: 40^t = ln 10 / ln 4
        let exact = (10f64.ln() / 4f64.ln()).ln() / 40f64.ln();
        assert!((arg - exact).abs() < 1e-8);
        assert!((arg - 0.1375).abs() < 5e-4);
        assert!((value - 0.96930).abs() < 1e-4);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_class(&env_of(&gallery::sa(0.2, 0.2))), Some(KappaClass::Strongly));
        assert_eq!(kappa_class(&env_of(&gallery::w())), Some(KappaClass::Weakly));
        assert_eq!(kappa_class(&env_of(&gallery::bs())), None);

        // means c e and c / e: (c e) ln(c e) + (c/e) ln(c/e) = 0 at ln c = -tanh(1)
        let c = (-1f64.tanh()).exp();
        let e = std::f64::consts::E;
        let env = two_point_env(c * e, c / e);
        assert!(xlogx(&env).abs() < 1e-15);
        assert_eq!(kappa_class(&env), Some(KappaClass::Intermediate));
        assert_eq!(KappaClass::Intermediate.kappa(), 0.5);
    }

    #[test]
    fn mean_offspring_examples() {
        assert_eq!(mean_offspring(&env_of(&gallery::bs())), 1.0);
        assert!((mean_offspring(&env_of(&gallery::sa(0.2, 0.2))) - 0.4).abs() < 1e-15);
        assert!((mean_offspring(&env_of(&gallery::w())) - 2.05).abs() < 1e-14);
    }

    #[test]
    fn classify_examples() {
        let r = classify(&gallery::critical_bs()).unwrap();
        assert_eq!(r.verdict, Verdict::AlmostSureExtinction);
        assert!(r.boundary.nu_at_one);

        let r = classify(&gallery::sa(0.2, 0.2)).unwrap();
        assert_eq!(r.verdict, Verdict::AlmostSureExtinction);
        assert_eq!(r.abpre_class, AbpreClass::Subcritical);
        assert!((r.inf_theta_value - 0.4).abs() < 1e-15);

        let r = classify(&gallery::bs()).unwrap();
        assert_eq!(r.verdict, Verdict::PositiveSurvival);
        assert_eq!(r.abpre_class, AbpreClass::Critical);
        assert!(r.boundary.mean_log_at_zero && r.kappa_class.is_none());

        let r = classify(&gallery::ld()).unwrap();
        assert!(r.degenerate_case);
        assert!((r.case_a_meanlog.unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(r.case_a_logminus_infinite, Some(false));
        assert_eq!(r.verdict, Verdict::PositiveSurvival);

        let r = classify(&gallery::w()).unwrap();
        assert_eq!(r.verdict, Verdict::PositiveSurvival);
        assert_eq!(r.kappa_class, Some(KappaClass::Weakly));

        for (_, spec) in gallery::all() {
            assert!(classify(&spec).unwrap().is_consistent());
        }
    }

    #[test]
    fn classify_refuses_trivial_models() {
        let line = crate::model::make_leftmost(
            FiniteLaw::new(vec![(2, 1.0)]).unwrap(),
            &std::collections::BTreeMap::from([(2, FiniteLaw::delta(1))]),
        )
        .unwrap();
        match classify(&line) {
            Err(Error::Assumption { assumption, .. }) => assert_eq!(assumption, Assumption::A2),
            other => panic!("expected (A2) failure, got {other:?}"),
        }
    }

    #[test]
    fn report_serializes_infinities() {
        let r = classify(&gallery::ld()).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["mean_log_g"], "-inf");
        assert_eq!(json["verdict"], "PositiveSurvival");
    }

    #[test]
    fn single_precision_classification() {
        let sa: ModelSpec<f32> = gallery::sa(0.2, 0.2).convert();
        let r = classify(&sa).unwrap();
        assert_eq!(r.verdict, Verdict::AlmostSureExtinction);
        assert!((r.inf_theta_value - 0.4).abs() < 1e-6);
    }
}
