//! JSON model files.
//!
//! ```json
//! { "label": "BS",
//!   "offspring": [[2, 1.0]],
//!   "sharing": { "2": [[[2, 0], 0.25], [[1, 1], 0.5], [[0, 2], 0.25]] } }
//! ```
//!
//! Instead of `"sharing"`, a file may name a `"family"` with its parameters:
//! `"multinomial"` (`"parasite_law"`, `"q"`), `"iid_per_daughter"` (`"per_cell_law"`) or
//! `"leftmost"` (`"leftmost_laws"`). Unknown keys are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{FiniteLaw, SharingLaw};
use crate::model::{make_iid_per_daughter, make_leftmost, make_multinomial, ModelSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Multinomial,
    IidPerDaughter,
    Leftmost,
}

type Atoms<S> = Vec<(u64, S)>;
type VectorAtoms<S> = Vec<(Vec<u64>, S)>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
struct ModelFile<S: Scalar> {
    label: String,
    offspring: Atoms<S>,
    #[serde(default)]
    sharing: Option<BTreeMap<String, VectorAtoms<S>>>,
    #[serde(default)]
    family: Option<Family>,
    #[serde(default)]
    parasite_law: Option<Atoms<S>>,
    #[serde(default)]
    q: Option<BTreeMap<String, Vec<S>>>,
    #[serde(default)]
    per_cell_law: Option<Atoms<S>>,
    #[serde(default)]
    leftmost_laws: Option<BTreeMap<String, Atoms<S>>>,
}

fn parse_k(key: &str) -> Result<usize> {
    key.trim()
        .parse::<usize>()
        .map_err(|_| Error::structural("format", format!("key {key:?} is not a daughter count")))
}

fn keyed<T, U>(map: BTreeMap<String, T>, mut f: impl FnMut(usize, T) -> Result<U>) -> Result<BTreeMap<usize, U>> {
    map.into_iter()
        .map(|(key, v)| {
            let k = parse_k(&key)?;
            Ok((k, f(k, v)?))
        })
        .collect()
}

fn unexpected(name: &str, family: &str) -> Error {
    Error::structural("format", format!("key {name:?} is not a parameter of {family}"))
}

fn required<T>(v: Option<T>, name: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| Error::structural("format", format!("{family} requires {name:?}")))
}

pub fn parse_model<S: Scalar>(text: &str) -> Result<ModelSpec<S>> {
    let file: ModelFile<S> = serde_json::from_str(text)
        .map_err(|e| Error::structural("format", format!("model file: {e}")))?;
    let offspring = FiniteLaw::new(file.offspring)?;

    let spec = match (file.sharing, file.family) {
        (Some(_), Some(_)) => {
            return Err(Error::structural("format", "give either \"sharing\" or \"family\", not both"))
        }
        (None, None) => return Err(Error::structural("format", "missing \"sharing\" or \"family\"")),
        (Some(sharing), None) => {
            for (name, present) in [
                ("parasite_law", file.parasite_law.is_some()),
                ("q", file.q.is_some()),
                ("per_cell_law", file.per_cell_law.is_some()),
                ("leftmost_laws", file.leftmost_laws.is_some()),
            ] {
                if present {
                    return Err(unexpected(name, "an explicit sharing model"));
                }
            }
            let sharing = keyed(sharing, |k, atoms| SharingLaw::new(k, atoms))?;
            ModelSpec::new(file.label, offspring, sharing)?
        }
        (None, Some(Family::Multinomial)) => {
            if file.per_cell_law.is_some() {
                return Err(unexpected("per_cell_law", "multinomial"));
            }
            if file.leftmost_laws.is_some() {
                return Err(unexpected("leftmost_laws", "multinomial"));
            }
            let parasite_law = FiniteLaw::new(required(file.parasite_law, "parasite_law", "multinomial")?)?;
            let q = keyed(required(file.q, "q", "multinomial")?, |_, v| Ok(v))?;
            make_multinomial(offspring, &parasite_law, &q)?.with_label(file.label)
        }
        (None, Some(Family::IidPerDaughter)) => {
            for (name, present) in [
                ("parasite_law", file.parasite_law.is_some()),
                ("q", file.q.is_some()),
                ("leftmost_laws", file.leftmost_laws.is_some()),
            ] {
                if present {
                    return Err(unexpected(name, "iid_per_daughter"));
                }
            }
            let law = FiniteLaw::new(required(file.per_cell_law, "per_cell_law", "iid_per_daughter")?)?;
            make_iid_per_daughter(offspring, &law)?.with_label(file.label)
        }
        (None, Some(Family::Leftmost)) => {
            for (name, present) in [
                ("parasite_law", file.parasite_law.is_some()),
                ("q", file.q.is_some()),
                ("per_cell_law", file.per_cell_law.is_some()),
            ] {
                if present {
                    return Err(unexpected(name, "leftmost"));
                }
            }
            let laws = keyed(required(file.leftmost_laws, "leftmost_laws", "leftmost")?, |_, atoms| {
                FiniteLaw::new(atoms)
            })?;
            make_leftmost(offspring, &laws)?.with_label(file.label)
        }
    };
    Ok(spec)
}

/// Serializes a model in the explicit `"sharing"` form.
pub fn model_to_json<S: Scalar>(spec: &ModelSpec<S>) -> String {
    let list = |items: Vec<String>, indent: &str| {
        format!("[\n{indent}  {}\n{indent}]", items.join(&format!(",\n{indent}  ")))
    };
    let offspring = spec.offspring().atoms().iter().map(compact).collect();
    let sharing: Vec<String> = spec
        .sharing()
        .iter()
        .map(|(k, law)| format!("\"{k}\": {}", list(law.atoms().iter().map(compact).collect(), "    ")))
        .collect();
    format!(
        "{{\n  \"label\": {},\n  \"offspring\": {},\n  \"sharing\": {{\n    {}\n  }}\n}}",
        compact(&spec.label()),
        list(offspring, "  "),
        sharing.join(",\n    ")
    )
}

fn compact<T: Serialize>(x: &T) -> String {
    serde_json::to_string(x).expect("value serializes")
}
