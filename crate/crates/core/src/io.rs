//! JSON formats for instances and solutions.
//!
//! Slots are numbered from 1 in files and from 0 in memory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::model::{
    DemandPreference, Elasticity, FractionalSolution, Instance, MixedSolution, Selection, User,
};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    m: usize,
    capacities: Vec<f64>,
    users: Vec<UserFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserFile {
    id: String,
    preferences: Vec<PrefFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrefFile {
    id: String,
    window: Vec<usize>,
    values: Vec<ComplexPower>,
    utility: f64,
    #[serde(default)]
    elastic: bool,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolutionFile {
    chosen: Vec<(String, String)>,
    #[serde(default)]
    fractional: Vec<(String, String, f64)>,
}

/// Parses an instance. Structural problems (slot 0, `m` disagreeing with the
/// capacity list) are errors; semantic checks are left to
/// [`crate::model::validate`].
pub fn instance_from_json(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.m != file.capacities.len() {
        return Err(CspError::InvalidArgument(format!(
            "m = {} but {} capacities given",
            file.m,
            file.capacities.len()
        )));
    }
    let mut users = Vec::with_capacity(file.users.len());
    for u in file.users {
        let mut prefs = Vec::with_capacity(u.preferences.len());
        for p in u.preferences {
            if p.window.contains(&0) {
                return Err(CspError::InvalidArgument(format!(
                    "{}/{}: slot numbers start at 1",
                    u.id, p.id
                )));
            }
            prefs.push(DemandPreference {
                id: p.id,
                window: p.window.iter().map(|t| t - 1).collect(),
                values: p.values,
                utility: p.utility,
                elasticity: if p.elastic {
                    Elasticity::Elastic
                } else {
                    Elasticity::Inelastic
                },
            });
        }
        users.push(User::new(u.id, prefs));
    }
    Ok(Instance::new(file.capacities, users))
}

pub fn instance_to_json(instance: &Instance) -> String {
    let file = InstanceFile {
        m: instance.slots(),
        capacities: instance.capacities.clone(),
        users: instance
            .users
            .iter()
            .map(|u| UserFile {
                id: u.id.clone(),
                preferences: u
                    .preferences
                    .iter()
                    .map(|p| PrefFile {
                        id: p.id.clone(),
                        window: p.window.iter().map(|t| t + 1).collect(),
                        values: p.values.clone(),
                        utility: p.utility,
                        elastic: p.is_elastic(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("instance serialization is infallible")
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_instance(path: &Path, instance: &Instance) -> Result<()> {
    std::fs::write(path, instance_to_json(instance) + "\n")?;
    Ok(())
}

/// Serializes by identifiers, in (user, preference) index order.
pub fn solution_to_json(instance: &Instance, solution: &MixedSolution) -> String {
    let id = |r| {
        let (u, p) = instance.ids(r);
        (u.to_string(), p.to_string())
    };
    let file = SolutionFile {
        chosen: solution.chosen.iter().map(id).collect(),
        fractional: solution
            .fractional
            .iter()
            .map(|(r, x)| {
                let (u, p) = id(r);
                (u, p, x)
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("solution serialization is infallible")
}

pub fn solution_from_json(instance: &Instance, text: &str) -> Result<MixedSolution> {
    let file: SolutionFile = serde_json::from_str(text)?;
    let mut chosen = Selection::new();
    for (u, p) in &file.chosen {
        chosen.insert(instance.find(u, p)?);
    }
    let mut fractional = FractionalSolution::new();
    for (u, p, x) in &file.fractional {
        fractional.set(instance.find(u, p)?, *x);
    }
    Ok(MixedSolution { chosen, fractional })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "m": 2,
      "capacities": [5.0, 9.0],
      "users": [
        {"id": "a", "preferences": [
          {"id": "p", "window": [1, 2], "values": [[3.0, 4.0], [1.0, 0.0]], "utility": 7.0}
        ]},
        {"id": "b", "preferences": [
          {"id": "q", "window": [2], "values": [[0.5, 0.5]], "utility": 2.0, "elastic": true}
        ]}
      ]
    }"#;

    #[test]
    fn instance_round_trip() {
        let inst = instance_from_json(SAMPLE).unwrap();
        assert_eq!(inst.users[0].preferences[0].window, vec![0, 1]);
        assert!(inst.users[1].preferences[0].is_elastic());
        let again = instance_from_json(&instance_to_json(&inst)).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn slot_zero_is_rejected() {
        let bad = SAMPLE.replace("[1, 2]", "[0, 1]");
        assert!(matches!(instance_from_json(&bad), Err(CspError::InvalidArgument(_))));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = instance_from_json("{\n  \"m\": 1,\n  \"capacities\": [1.0,]\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn solution_round_trip() {
        let inst = instance_from_json(SAMPLE).unwrap();
        let text = r#"{"chosen": [["a", "p"]], "fractional": [["b", "q", 0.25]]}"#;
        let sol = solution_from_json(&inst, text).unwrap();
        assert_eq!(sol.chosen.len(), 1);
        let back = solution_from_json(&inst, &solution_to_json(&inst, &sol)).unwrap();
        assert_eq!(sol, back);
        assert!(solution_from_json(&inst, r#"{"chosen": [["z", "p"]]}"#).is_err());
    }
}
