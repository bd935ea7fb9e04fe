//! Versioned JSON documents.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, SCHEMA_VERSION};
use crate::planner::Plan;
use crate::sim::Scenario;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("invalid document: {0}")]
    Invalid(String),
}

/// A plan as written by `tamp plan`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema_version: u32,
    pub instance_id: String,
    pub plan: Plan,
}

impl PlanDocument {
    pub fn new(instance_id: &str, plan: Plan) -> Self {
        PlanDocument { schema_version: SCHEMA_VERSION, instance_id: instance_id.to_string(), plan }
    }
}

#[derive(Deserialize)]
struct Versioned {
    schema_version: u32,
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, DocError> {
    let v: Versioned = serde_json::from_str(text)?;
    if v.schema_version != SCHEMA_VERSION {
        return Err(DocError::Version { found: v.schema_version });
    }
    Ok(serde_json::from_str(text)?)
}

pub fn parse_instance(text: &str) -> Result<Instance, DocError> {
    let inst: Instance = parse(text)?;
    inst.world0.check_consistency().map_err(DocError::Invalid)?;
    if inst.goal.order.iter().any(|&b| !inst.world0.contains(b)) {
        return Err(DocError::Invalid("goal names an unknown block".into()));
    }
    let ws = &inst.workspace;
    let t = inst.goal.target_point();
    if !ws.table.holds(&t, ws.block_size) || !ws.reach.contains(&t) {
        return Err(DocError::Invalid("goal point is off the table or out of reach".into()));
    }
    Ok(inst)
}

pub fn parse_plan(text: &str) -> Result<PlanDocument, DocError> {
    parse(text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, DocError> {
    let sc: Scenario = parse(text)?;
    sc.validate().map_err(|e| DocError::Invalid(e.to_string()))?;
    Ok(sc)
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("documents serialize") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_instance, Domain};
    use crate::sim::tool_push_scenario;

    #[test]
    fn instance_round_trip_is_byte_stable() {
        let inst = gen_instance(Domain::Tower, 4, 7).unwrap();
        let text = to_json(&inst);
        let back = parse_instance(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(to_json(&back), text);
    }

    #[test]
    fn scenario_round_trip() {
        let sc = tool_push_scenario();
        assert_eq!(parse_scenario(&to_json(&sc)).unwrap(), sc);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut inst = gen_instance(Domain::Op, 3, 0).unwrap();
        inst.schema_version = 99;
        assert!(matches!(parse_instance(&to_json(&inst)), Err(DocError::Version { found: 99 })));
        assert!(matches!(parse_instance("{"), Err(DocError::Json(_))));
    }

    #[test]
    fn unreachable_goal_is_invalid() {
        let mut inst = gen_instance(Domain::Op, 3, 0).unwrap();
        inst.goal.target = (0.6, 0.0);
        assert!(matches!(parse_instance(&to_json(&inst)), Err(DocError::Invalid(_))));
    }
}
