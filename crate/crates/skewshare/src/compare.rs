//! Side-by-side run of the three strategies on the same inputs: the
//! baseline heavy-hitter strategy (partition one side, broadcast the
//! other), plain Shares ignoring heavy hitters, and the full
//! heavy-hitter-aware plan. Routing only; nothing is joined here.

use crate::data::Database;
use crate::error::{Error, Result};
use crate::hh::{detect_heavy_hitters, HeavyHitterReport};
use crate::optimize::OptimizerConfig;
use crate::plan::plan_from_database;
use crate::query::{Attribute, JoinQuery};
use crate::simulate::{baseline_hh_execute, execute_plan, SimulatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategySummary {
    pub communication: u64,
    pub max_load: u64,
    pub reducers_used: u64,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub baseline: StrategySummary,
    pub plain_shares: StrategySummary,
    pub hh_aware: StrategySummary,
    pub report: HeavyHitterReport,
}

/// The baseline strategy is defined for two relations sharing exactly
/// one attribute; returns that attribute.
pub fn shared_attribute(q: &JoinQuery) -> Result<Attribute> {
    if q.relations().len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "strategy comparison needs a two-relation query, got {} relations",
            q.relations().len()
        )));
    }
    let (r, s) = (&q.relations()[0], &q.relations()[1]);
    let shared: Vec<&Attribute> = r.attributes.iter().filter(|a| s.contains(a)).collect();
    match shared.as_slice() {
        [only] => Ok((*only).clone()),
        _ => Err(Error::InvalidArgument(format!(
            "strategy comparison needs exactly one shared attribute, got {}",
            shared.len()
        ))),
    }
}

pub fn run_compare(
    q: &JoinQuery,
    db: &Database,
    k: u64,
    tau: f64,
    seed: u64,
    cfg: &OptimizerConfig,
    single_thread: bool,
) -> Result<CompareOutcome> {
    let join_attr = shared_attribute(q)?;
    let report = detect_heavy_hitters(db, q, tau)?;
    let sim_cfg = SimulatorConfig {
        single_thread,
        reducer_cap: None,
        materialize: false,
    };

    let hh_values: Vec<String> = report
        .values_for(&join_attr)
        .iter()
        .map(|v| v.value.clone())
        .collect();
    let base = baseline_hh_execute(&db[0], &db[1], &join_attr, &hh_values, k, seed, false)?;
    let baseline = StrategySummary {
        communication: base.communication,
        max_load: base.max_load,
        reducers_used: base.reducers_used,
    };

    let empty = HeavyHitterReport::empty(q, tau);
    let plain_plan = plan_from_database(q, db, &empty, k, cfg)?;
    let plain_sim = execute_plan(db, q, &plain_plan, seed, &sim_cfg)?;
    let plain_shares = StrategySummary {
        communication: plain_sim.trace.communication,
        max_load: plain_sim.trace.max_load,
        reducers_used: plain_sim.trace.reducers_used,
    };

    let hh_plan = plan_from_database(q, db, &report, k, cfg)?;
    let hh_sim = execute_plan(db, q, &hh_plan, seed, &sim_cfg)?;
    let hh_aware = StrategySummary {
        communication: hh_sim.trace.communication,
        max_load: hh_sim.trace.max_load,
        reducers_used: hh_sim.trace.reducers_used,
    };

    Ok(CompareOutcome {
        baseline,
        plain_shares,
        hh_aware,
        report,
    })
}
