//! JSON document formats: heavy-hitter reports, plans, simulation
//! reports, comparisons and the stats file for sizes-only planning.
//! Every document carries `format_version: 1`. Plan entries are keyed by
//! combination index with an explicit attribute -> type mapping, where a
//! type is `"-"` for ordinary or the heavy-hitter value itself.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::cost::residual_cost;
use crate::decompose::{AttrType, ResidualSpec, TypeCombination, TypeSets};
use crate::error::{Error, Result};
use crate::hh::{HeavyHitterReport, HeavyHitterValue};
use crate::plan::{Diagnostics, JoinPlan, ResidualPlan};
use crate::query::{Attribute, JoinQuery};
use crate::simulate::{Metrics, ShuffleTrace, SimulationResult};

pub const FORMAT_VERSION: u32 = 1;

const ORDINARY: &str = "-";

fn type_label(t: &AttrType) -> String {
    match t {
        AttrType::Ordinary => ORDINARY.to_string(),
        AttrType::HeavyHitter(v) => v.clone(),
    }
}

fn type_from_label(label: &str) -> AttrType {
    if label == ORDINARY {
        AttrType::Ordinary
    } else {
        AttrType::HeavyHitter(label.to_string())
    }
}

// ---------------------------------------------------------------------------
// heavy-hitter report

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HhReportDoc {
    pub format_version: u32,
    pub threshold: f64,
    pub attributes: Vec<HhAttributeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HhAttributeDoc {
    pub attribute: String,
    pub values: Vec<HhValueDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HhValueDoc {
    pub value: String,
    pub counts: BTreeMap<String, u64>,
}

impl HhReportDoc {
    pub fn from_report(report: &HeavyHitterReport) -> Self {
        HhReportDoc {
            format_version: FORMAT_VERSION,
            threshold: report.threshold,
            attributes: report
                .attributes
                .iter()
                .map(|entry| HhAttributeDoc {
                    attribute: entry.attribute.name().to_string(),
                    values: entry
                        .values
                        .iter()
                        .map(|v| HhValueDoc {
                            value: v.value.clone(),
                            counts: v.counts.iter().cloned().collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn into_report(self, q: &JoinQuery) -> Result<HeavyHitterReport> {
        check_version(self.format_version)?;
        let mut report = HeavyHitterReport::empty(q, self.threshold);
        for entry in self.attributes {
            let attr = Attribute::new(&entry.attribute);
            if !q.has_attribute(&attr) {
                return Err(Error::Document(format!(
                    "report lists unknown attribute {}",
                    entry.attribute
                )));
            }
            let slot = report
                .attributes
                .iter_mut()
                .find(|e| e.attribute == attr)
                .expect("slot for every query attribute");
            slot.values = entry
                .values
                .into_iter()
                .map(|v| HeavyHitterValue {
                    value: v.value,
                    counts: v.counts.into_iter().collect(),
                })
                .collect();
        }
        Ok(report)
    }
}

// ---------------------------------------------------------------------------
// plan document

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanDoc {
    pub format_version: u32,
    pub query: String,
    pub k: u64,
    pub type_sets: Vec<TypeSetDoc>,
    pub entries: Vec<PlanEntryDoc>,
    pub totals: PlanTotalsDoc,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TypeSetDoc {
    pub attribute: String,
    /// `"-"` first, then the heavy-hitter values in detection order.
    pub types: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanEntryDoc {
    pub index: usize,
    pub types: BTreeMap<String, String>,
    pub empty: bool,
    pub relevant_sizes: BTreeMap<String, u64>,
    pub cost_expression: String,
    pub free_attributes: Vec<String>,
    pub k_i: u64,
    pub continuous_shares: BTreeMap<String, f64>,
    pub integer_shares: BTreeMap<String, u64>,
    pub predicted_cost_continuous: f64,
    pub predicted_cost_integer: u64,
    pub optimizer: OptimizerDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimizerDoc {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub clamped: Vec<String>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanTotalsDoc {
    pub predicted_cost_continuous: f64,
    pub predicted_cost_integer: u64,
}

impl PlanDoc {
    pub fn from_plan(plan: &JoinPlan) -> Self {
        PlanDoc {
            format_version: FORMAT_VERSION,
            query: plan.query.to_text(),
            k: plan.k,
            type_sets: plan
                .type_sets
                .entries
                .iter()
                .map(|(a, types)| TypeSetDoc {
                    attribute: a.name().to_string(),
                    types: types.iter().map(type_label).collect(),
                })
                .collect(),
            entries: plan
                .residuals
                .iter()
                .map(|r| PlanEntryDoc {
                    index: r.index,
                    types: r
                        .combination
                        .types
                        .iter()
                        .map(|(a, t)| (a.name().to_string(), type_label(t)))
                        .collect(),
                    empty: r.empty,
                    relevant_sizes: r.relevant_sizes.iter().cloned().collect(),
                    cost_expression: r.expression.to_string(),
                    free_attributes: r
                        .free_attributes
                        .iter()
                        .map(|a| a.name().to_string())
                        .collect(),
                    k_i: r.budget,
                    continuous_shares: r
                        .continuous_shares
                        .iter()
                        .map(|(a, s)| (a.name().to_string(), *s))
                        .collect(),
                    integer_shares: r
                        .integer_shares
                        .iter()
                        .map(|(a, s)| (a.name().to_string(), *s))
                        .collect(),
                    predicted_cost_continuous: r.predicted_cost_continuous,
                    predicted_cost_integer: r.predicted_cost_integer,
                    optimizer: OptimizerDoc {
                        iterations: r.diagnostics.iterations,
                        kkt_residual: r.diagnostics.kkt_residual,
                        clamped: r
                            .diagnostics
                            .clamped
                            .iter()
                            .map(|a| a.name().to_string())
                            .collect(),
                        converged: r.diagnostics.converged,
                    },
                })
                .collect(),
            totals: PlanTotalsDoc {
                predicted_cost_continuous: plan.total_predicted_continuous(),
                predicted_cost_integer: plan.total_predicted_integer(),
            },
            converged: plan.converged(),
        }
    }

    /// Rebuild the executable plan. The cost expressions are recomputed
    /// from the query and cross-checked against the stored text.
    pub fn into_plan(self) -> Result<JoinPlan> {
        check_version(self.format_version)?;
        let query = JoinQuery::parse(&self.query)?;
        let type_sets = TypeSets {
            entries: self
                .type_sets
                .iter()
                .map(|tsd| {
                    (
                        Attribute::new(&tsd.attribute),
                        tsd.types.iter().map(|l| type_from_label(l)).collect(),
                    )
                })
                .collect(),
        };
        let mut residuals = Vec::with_capacity(self.entries.len());
        for entry in self.entries {
            let combination = combination_from_doc(&query, &entry.types)?;
            let rc = residual_cost(&query, &combination)?;
            let rendered = rc.expression.to_string();
            if rendered != entry.cost_expression {
                return Err(Error::Document(format!(
                    "entry {}: stored expression `{}` does not match `{}` derived from the query",
                    entry.index, entry.cost_expression, rendered
                )));
            }
            let free: Vec<String> = rc
                .free_attributes
                .iter()
                .map(|a| a.name().to_string())
                .collect();
            if free != entry.free_attributes {
                return Err(Error::Document(format!(
                    "entry {}: free attributes {:?} do not match {:?}",
                    entry.index, entry.free_attributes, free
                )));
            }
            residuals.push(ResidualPlan {
                index: entry.index,
                combination,
                relevant_sizes: query
                    .relations()
                    .iter()
                    .map(|r| {
                        entry
                            .relevant_sizes
                            .get(&r.name)
                            .copied()
                            .map(|n| (r.name.clone(), n))
                            .ok_or_else(|| {
                                Error::Document(format!(
                                    "entry {} lacks a size for relation {}",
                                    entry.index, r.name
                                ))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?,
                empty: entry.empty,
                expression: rc.expression,
                free_attributes: rc.free_attributes,
                budget: entry.k_i,
                continuous_shares: entry
                    .continuous_shares
                    .iter()
                    .map(|(a, s)| (Attribute::new(a), *s))
                    .collect(),
                predicted_cost_continuous: entry.predicted_cost_continuous,
                integer_shares: entry
                    .integer_shares
                    .iter()
                    .map(|(a, s)| (Attribute::new(a), *s))
                    .collect(),
                predicted_cost_integer: entry.predicted_cost_integer,
                diagnostics: Diagnostics {
                    iterations: entry.optimizer.iterations,
                    kkt_residual: entry.optimizer.kkt_residual,
                    clamped: entry.optimizer.clamped.iter().map(Attribute::new).collect(),
                    converged: entry.optimizer.converged,
                },
            });
        }
        Ok(JoinPlan {
            query,
            k: self.k,
            type_sets,
            residuals,
        })
    }
}

fn combination_from_doc(
    q: &JoinQuery,
    types: &BTreeMap<String, String>,
) -> Result<TypeCombination> {
    let mut out = Vec::with_capacity(q.attributes().len());
    for a in q.attributes() {
        let label = types.get(a.name()).ok_or_else(|| {
            Error::Document(format!("combination lacks a type for attribute {a}"))
        })?;
        out.push((a.clone(), type_from_label(label)));
    }
    for name in types.keys() {
        if !q.has_attribute(&Attribute::new(name)) {
            return Err(Error::Document(format!(
                "combination types unknown attribute {name}"
            )));
        }
    }
    Ok(TypeCombination { types: out })
}

// ---------------------------------------------------------------------------
// stats file (sizes-only planning)

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatsDoc {
    pub format_version: u32,
    pub combinations: Vec<StatsEntryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatsEntryDoc {
    /// Attribute -> type; attributes left out default to ordinary.
    pub types: BTreeMap<String, String>,
    pub sizes: BTreeMap<String, u64>,
}

impl StatsDoc {
    /// Match each enumerated combination with its stats entry.
    pub fn into_specs(
        self,
        q: &JoinQuery,
        combinations: &[TypeCombination],
    ) -> Result<Vec<ResidualSpec>> {
        check_version(self.format_version)?;
        let mut specs = Vec::with_capacity(combinations.len());
        for (index, c) in combinations.iter().enumerate() {
            let entry = self
                .combinations
                .iter()
                .find(|e| {
                    c.types.iter().all(|(a, t)| {
                        let label = e
                            .types
                            .get(a.name())
                            .map(String::as_str)
                            .unwrap_or(ORDINARY);
                        type_from_label(label) == *t
                    })
                })
                .ok_or_else(|| Error::Document(format!("stats file lacks combination {index}")))?;
            let relevant_sizes = q
                .relations()
                .iter()
                .map(|r| {
                    entry
                        .sizes
                        .get(&r.name)
                        .copied()
                        .map(|n| (r.name.clone(), n))
                        .ok_or_else(|| {
                            Error::Document(format!(
                                "stats entry for combination {index} lacks relation {}",
                                r.name
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let empty = relevant_sizes.iter().any(|(_, n)| *n == 0);
            specs.push(ResidualSpec {
                index,
                combination: c.clone(),
                relevant_sizes,
                empty,
            });
        }
        Ok(specs)
    }
}

// ---------------------------------------------------------------------------
// simulation report

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimReportDoc {
    pub format_version: u32,
    pub query: String,
    pub k: u64,
    pub seed: u64,
    pub predicted_cost: u64,
    pub measured_cost: u64,
    pub cost_match: bool,
    pub output_size: u64,
    pub exactly_once: bool,
    /// Oracle comparison when `--verify` ran, absent otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
    pub max_load: u64,
    pub mean_load: f64,
    pub stddev_load: f64,
    pub reducers_used: u64,
    pub relation_copies: BTreeMap<String, u64>,
    pub replication: BTreeMap<String, f64>,
    pub per_residual: Vec<SimResidualDoc>,
    /// Per-reducer dump, present behind `--dump-reducers`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reducers: Option<Vec<ReducerDoc>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimResidualDoc {
    pub index: usize,
    pub k_i: u64,
    pub grid_cells: u64,
    pub reducers_used: u64,
    pub communication: u64,
    pub predicted: u64,
    pub max_load: u64,
    pub output_size: u64,
    pub relation_copies: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReducerDoc {
    pub residual: usize,
    pub buckets: Vec<u64>,
    pub received: u64,
    pub emitted: u64,
}

impl SimReportDoc {
    pub fn build(
        plan: &JoinPlan,
        sim: &SimulationResult,
        metrics: &Metrics,
        seed: u64,
        verified: Option<bool>,
        dump_reducers: bool,
    ) -> Self {
        let trace: &ShuffleTrace = &sim.trace;
        SimReportDoc {
            format_version: FORMAT_VERSION,
            query: plan.query.to_text(),
            k: plan.k,
            seed,
            predicted_cost: plan.total_predicted_integer(),
            measured_cost: trace.communication,
            cost_match: plan.total_predicted_integer() == trace.communication,
            output_size: sim.output.len() as u64,
            exactly_once: sim.exactly_once,
            verified,
            max_load: trace.max_load,
            mean_load: metrics.mean_load,
            stddev_load: metrics.stddev_load,
            reducers_used: trace.reducers_used,
            relation_copies: trace.relation_copies.iter().cloned().collect(),
            replication: metrics.replication.iter().cloned().collect(),
            per_residual: trace
                .residuals
                .iter()
                .map(|r| SimResidualDoc {
                    index: r.index,
                    k_i: r.budget,
                    grid_cells: r.grid_cells,
                    reducers_used: r.reducers_used,
                    communication: r.communication,
                    predicted: plan.residuals[r.index].predicted_cost_integer,
                    max_load: r.max_load,
                    output_size: r.output_size,
                    relation_copies: r.relation_copies.iter().cloned().collect(),
                })
                .collect(),
            reducers: dump_reducers.then(|| {
                trace
                    .reducer_stats
                    .iter()
                    .map(|r| ReducerDoc {
                        residual: r.key.residual,
                        buckets: r.key.buckets.clone(),
                        received: r.received,
                        emitted: r.emitted,
                    })
                    .collect()
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// strategy comparison

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CompareDoc {
    pub format_version: u32,
    pub query: String,
    pub k: u64,
    pub threshold: f64,
    pub seed: u64,
    pub baseline: StrategyDoc,
    pub plain_shares: StrategyDoc,
    pub hh_aware: StrategyDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StrategyDoc {
    pub communication: u64,
    pub max_load: u64,
    pub reducers_used: u64,
}

// ---------------------------------------------------------------------------
// I/O helpers

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Document(format!(
            "unsupported format_version {v}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

pub fn to_json_string<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string_pretty(doc)
        .map_err(|e| Error::Document(format!("serialization failed: {e}")))
}

pub fn write_json<T: Serialize>(doc: &T, path: &Path) -> Result<()> {
    let text = to_json_string(doc)?;
    fs::write(path, text + "\n").map_err(|e| Error::Data {
        file: path.display().to_string(),
        line: None,
        message: format!("cannot write: {e}"),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data {
        file: path.display().to_string(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Data {
        file: path.display().to_string(),
        line: Some(e.line()),
        message: format!("malformed JSON: {e}"),
    })
}
