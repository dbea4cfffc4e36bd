//! Plan assembly: ties the decomposition, cost model and optimizer
//! together into one executable join plan.

use crate::cost::{residual_cost, ContinuousShares, CostExpression, IntegerShares, RelationSizes};
use crate::data::Database;
use crate::decompose::{
    enumerate_combinations, residual_specs, type_sets, ResidualSpec, TypeCombination, TypeSets,
    DEFAULT_COMBINATION_CAP,
};
use crate::error::Result;
use crate::hh::HeavyHitterReport;
use crate::optimize::{allocate_reducers, OptimizerConfig, ResidualProblem};
use crate::query::{Attribute, JoinQuery};

/// Solver diagnostics kept alongside each residual plan entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub clamped: Vec<Attribute>,
    pub converged: bool,
}

/// One residual join, fully planned.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPlan {
    pub index: usize,
    pub combination: TypeCombination,
    /// Per relation, in query order.
    pub relevant_sizes: Vec<(String, u64)>,
    pub empty: bool,
    pub expression: CostExpression,
    pub free_attributes: Vec<Attribute>,
    /// Reducers granted to this residual join (0 when empty).
    pub budget: u64,
    pub continuous_shares: ContinuousShares,
    pub predicted_cost_continuous: f64,
    pub integer_shares: IntegerShares,
    pub predicted_cost_integer: u64,
    pub diagnostics: Diagnostics,
}

impl ResidualPlan {
    pub fn sizes_map(&self) -> RelationSizes {
        self.relevant_sizes.iter().cloned().collect()
    }
}

/// The complete plan: one entry per type combination.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinPlan {
    pub query: JoinQuery,
    pub k: u64,
    pub type_sets: TypeSets,
    pub residuals: Vec<ResidualPlan>,
}

impl JoinPlan {
    pub fn total_predicted_integer(&self) -> u64 {
        self.residuals
            .iter()
            .map(|r| r.predicted_cost_integer)
            .sum()
    }

    pub fn total_predicted_continuous(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.predicted_cost_continuous)
            .sum()
    }

    pub fn converged(&self) -> bool {
        self.residuals.iter().all(|r| r.diagnostics.converged)
    }

    pub fn budget_sum(&self) -> u64 {
        self.residuals.iter().map(|r| r.budget).sum()
    }
}

/// Plan from precomputed residual specs (sizes-only planning works off a
/// stats file through this entry point).
pub fn plan_from_specs(
    q: &JoinQuery,
    ts: &TypeSets,
    specs: &[ResidualSpec],
    k: u64,
    cfg: &OptimizerConfig,
) -> Result<JoinPlan> {
    let mut costs = Vec::with_capacity(specs.len());
    for spec in specs {
        costs.push(residual_cost(q, &spec.combination)?);
    }
    let problems: Vec<ResidualProblem> = specs
        .iter()
        .zip(&costs)
        .map(|(spec, rc)| ResidualProblem {
            expression: rc.expression.clone(),
            sizes: spec.relevant_sizes.iter().cloned().collect(),
            free_vars: rc.free_attributes.clone(),
            empty: spec.empty,
        })
        .collect();
    let allocations = allocate_reducers(&problems, k, cfg)?;

    let residuals = specs
        .iter()
        .zip(costs)
        .zip(allocations)
        .map(|((spec, rc), alloc)| ResidualPlan {
            index: spec.index,
            combination: spec.combination.clone(),
            relevant_sizes: spec.relevant_sizes.clone(),
            empty: spec.empty,
            expression: rc.expression,
            free_attributes: rc.free_attributes,
            budget: alloc.budget,
            predicted_cost_continuous: if spec.empty {
                0.0
            } else {
                alloc.continuous.cost
            },
            diagnostics: Diagnostics {
                iterations: alloc.continuous.iterations,
                kkt_residual: alloc.continuous.kkt_residual,
                clamped: alloc.continuous.clamped.clone(),
                converged: alloc.continuous.converged,
            },
            continuous_shares: alloc.continuous.shares,
            integer_shares: alloc.integer_shares,
            predicted_cost_integer: alloc.integer_cost,
        })
        .collect();

    Ok(JoinPlan {
        query: q.clone(),
        k,
        type_sets: ts.clone(),
        residuals,
    })
}

/// Plan straight from data: enumerate combinations from the report,
/// count relevant sizes, optimize.
pub fn plan_from_database(
    q: &JoinQuery,
    db: &Database,
    hh: &HeavyHitterReport,
    k: u64,
    cfg: &OptimizerConfig,
) -> Result<JoinPlan> {
    let ts = type_sets(q, hh);
    let combinations = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP)?;
    let specs = residual_specs(db, q, &combinations, &ts)?;
    plan_from_specs(q, &ts, &specs, k, cfg)
}
