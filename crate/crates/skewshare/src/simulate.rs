//! In-memory execution of a join plan: route every tuple to its reducer
//! grid cells through per-attribute hash functions, join inside each
//! reducer, and measure communication and load.
//!
//! Replication is deterministic: a tuple of relation R lands in exactly
//! one bucket per share-bearing attribute R contains and in every bucket
//! of the share-bearing attributes R lacks, so the measured
//! communication equals the symbolic prediction exactly, independent of
//! hash values.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::data::{Database, RelationInstance, Tuple, Value};
use crate::decompose::tuple_matches;
use crate::error::{Error, Result};
use crate::plan::JoinPlan;
use crate::query::{Attribute, JoinQuery};

/// Deterministic seeded hashing: FNV-1a over the value bytes, finished
/// with a 64-bit avalanche mix, reduced modulo the share.
#[derive(Debug, Clone, Copy)]
pub struct HashFamily {
    seed: u64,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn avalanche(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

fn fnv(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl HashFamily {
    pub fn new(seed: u64) -> Self {
        HashFamily { seed }
    }

    /// Independent stream per (residual join, attribute).
    fn attribute_seed(&self, residual: usize, attr: &Attribute) -> u64 {
        let r = avalanche(self.seed ^ (residual as u64).wrapping_mul(0x9e3779b97f4a7c15));
        avalanche(r ^ fnv(0, attr.name().as_bytes()))
    }

    pub fn bucket(&self, residual: usize, attr: &Attribute, value: &Value, share: u64) -> u64 {
        avalanche(fnv(self.attribute_seed(residual, attr), value.as_bytes())) % share
    }
}

/// Identifies one reducer: residual join index plus one bucket per
/// share-bearing attribute of that residual join.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReducerKey {
    pub residual: usize,
    pub buckets: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatorConfig {
    /// Run routing and joining on a single thread.
    pub single_thread: bool,
    /// Error out when one reducer receives more than this many tuples.
    pub reducer_cap: Option<u64>,
    /// Skip the per-reducer joins (loads and communication only).
    pub materialize: bool,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            single_thread: false,
            reducer_cap: None,
            materialize: true,
        }
    }
}

/// Per-reducer statistics for reducers that received at least one tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducerStat {
    pub key: ReducerKey,
    pub received: u64,
    pub emitted: u64,
}

/// Measured behaviour of one residual join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualTrace {
    pub index: usize,
    pub budget: u64,
    /// Cells of the reducer grid, = product of the integer shares.
    pub grid_cells: u64,
    /// Reducers that received at least one tuple.
    pub reducers_used: u64,
    pub relation_copies: Vec<(String, u64)>,
    pub communication: u64,
    pub max_load: u64,
    pub output_size: u64,
}

/// Measured behaviour of a full plan execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleTrace {
    pub residuals: Vec<ResidualTrace>,
    /// Total copies sent per relation, in query order.
    pub relation_copies: Vec<(String, u64)>,
    /// Input sizes per relation, for replication factors.
    pub relation_sizes: Vec<(String, u64)>,
    pub communication: u64,
    pub max_load: u64,
    pub reducers_used: u64,
    pub reducer_stats: Vec<ReducerStat>,
}

/// Plan execution outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub trace: ShuffleTrace,
    /// Joined rows, one value per query attribute, duplicate-free.
    /// Empty when the simulator ran in route-only mode.
    pub output: BTreeSet<Vec<Value>>,
    /// False if any result row was emitted by more than one reducer.
    pub exactly_once: bool,
}

/// Summary metrics derived from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub communication: u64,
    /// copies / size per relation (0 when the relation is empty).
    pub replication: Vec<(String, f64)>,
    pub max_load: u64,
    pub mean_load: f64,
    pub stddev_load: f64,
    pub reducers_used: u64,
}

/// Summarize a trace: total communication, per-relation replication
/// factors and the load distribution over the reducers that received
/// tuples.
pub fn measure(trace: &ShuffleTrace) -> Metrics {
    let replication = trace
        .relation_copies
        .iter()
        .zip(&trace.relation_sizes)
        .map(|((name, copies), (_, size))| {
            (
                name.clone(),
                if *size == 0 {
                    0.0
                } else {
                    *copies as f64 / *size as f64
                },
            )
        })
        .collect();
    let loads: Vec<f64> = trace
        .reducer_stats
        .iter()
        .map(|r| r.received as f64)
        .collect();
    let n = loads.len().max(1) as f64;
    let mean = loads.iter().sum::<f64>() / n;
    let var = loads.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Metrics {
        communication: trace.communication,
        replication,
        max_load: trace.max_load,
        mean_load: mean,
        stddev_load: var.sqrt(),
        reducers_used: trace.reducers_used,
    }
}

/// The grid axes of one residual join: share-bearing attributes (integer
/// share >= 2) in query attribute order.
fn axes_of(plan: &JoinPlan, residual: usize) -> Vec<(Attribute, u64)> {
    let rp = &plan.residuals[residual];
    plan.query
        .attributes()
        .iter()
        .filter_map(|a| match rp.integer_shares.get(a) {
            Some(share) if *share >= 2 => Some((a.clone(), *share)),
            _ => None,
        })
        .collect()
}

/// Flat grid ids of the reducers a tuple must reach: fixed bucket on
/// every axis attribute the schema contains, every bucket on the rest.
fn route_tuple(
    t: &Tuple,
    schema_positions: &[Option<usize>],
    axes: &[(Attribute, u64)],
    hashes: &HashFamily,
    residual: usize,
) -> Vec<u64> {
    let mut ids: Vec<u64> = vec![0];
    let mut stride = 1u64;
    for ((attr, share), pos) in axes.iter().zip(schema_positions) {
        match pos {
            Some(p) => {
                let d = hashes.bucket(residual, attr, &t.values[*p], *share);
                for id in &mut ids {
                    *id += d * stride;
                }
            }
            None => {
                let mut expanded = Vec::with_capacity(ids.len() * *share as usize);
                for d in 0..*share {
                    expanded.extend(ids.iter().map(|id| id + d * stride));
                }
                ids = expanded;
            }
        }
        stride *= share;
    }
    ids
}

/// Public form of the routing rule, for tests and diagnostics: the full
/// reducer keys a matching tuple of `schema_name` reaches in `residual`.
/// Calling it with a tuple outside the residual's combination is a
/// contract violation and errors.
pub fn map_tuple_to_reducers(
    plan: &JoinPlan,
    residual: usize,
    schema_name: &str,
    t: &Tuple,
    hashes: &HashFamily,
) -> Result<Vec<ReducerKey>> {
    let schema = plan.query.relation(schema_name)?;
    let rp = plan
        .residuals
        .get(residual)
        .ok_or_else(|| Error::InvalidArgument(format!("no residual join {residual}")))?;
    if !tuple_matches(&rp.combination, &plan.type_sets, schema, t) {
        return Err(Error::InvalidArgument(format!(
            "tuple does not satisfy the constraints of residual join {residual}"
        )));
    }
    let axes = axes_of(plan, residual);
    let positions: Vec<Option<usize>> = axes.iter().map(|(a, _)| schema.position(a)).collect();
    let ids = route_tuple(t, &positions, &axes, hashes, residual);
    Ok(ids
        .into_iter()
        .map(|id| ReducerKey {
            residual,
            buckets: unflatten(id, &axes),
        })
        .collect())
}

fn unflatten(mut id: u64, axes: &[(Attribute, u64)]) -> Vec<u64> {
    let mut buckets = Vec::with_capacity(axes.len());
    for (_, share) in axes {
        buckets.push(id % share);
        id /= share;
    }
    buckets
}

/// Execute `plan` on `db`: route, join per reducer, measure.
pub fn execute_plan(
    db: &Database,
    q: &JoinQuery,
    plan: &JoinPlan,
    seed: u64,
    cfg: &SimulatorConfig,
) -> Result<SimulationResult> {
    if plan.query != *q {
        return Err(Error::PlanMismatch(format!(
            "plan was built for `{}`, got `{}`",
            plan.query, q
        )));
    }
    let instances: Vec<&RelationInstance> = q
        .relations()
        .iter()
        .map(|schema| crate::data::instance(db, &schema.name))
        .collect::<Result<Vec<_>>>()?;
    let hashes = HashFamily::new(seed);
    let nrels = instances.len();

    let mut residual_traces = Vec::new();
    let mut reducer_stats = Vec::new();
    let mut output: BTreeSet<Vec<Value>> = BTreeSet::new();
    let mut emitted_by: HashMap<Vec<Value>, ReducerKey> = HashMap::new();
    let mut exactly_once = true;
    let mut total_copies = vec![0u64; nrels];

    for rp in &plan.residuals {
        if rp.budget == 0 {
            residual_traces.push(ResidualTrace {
                index: rp.index,
                budget: 0,
                grid_cells: 0,
                reducers_used: 0,
                relation_copies: instances
                    .iter()
                    .map(|inst| (inst.schema.name.clone(), 0))
                    .collect(),
                communication: 0,
                max_load: 0,
                output_size: 0,
            });
            continue;
        }
        let axes = axes_of(plan, rp.index);
        let grid_cells: u64 = axes.iter().map(|(_, s)| *s).product();

        // route: per reducer cell, the tuple ids received per relation
        let mut cells: HashMap<u64, Vec<Vec<usize>>> = HashMap::new();
        let mut copies = vec![0u64; nrels];
        for (rel_idx, inst) in instances.iter().enumerate() {
            let positions: Vec<Option<usize>> =
                axes.iter().map(|(a, _)| inst.schema.position(a)).collect();
            for (tid, t) in inst.tuples.iter().enumerate() {
                if !tuple_matches(&rp.combination, &plan.type_sets, &inst.schema, t) {
                    continue;
                }
                let ids = route_tuple(t, &positions, &axes, &hashes, rp.index);
                copies[rel_idx] += ids.len() as u64;
                for id in ids {
                    cells.entry(id).or_insert_with(|| vec![Vec::new(); nrels])[rel_idx].push(tid);
                }
            }
        }

        if let Some(cap) = cfg.reducer_cap {
            for (id, per_rel) in &cells {
                let received: u64 = per_rel.iter().map(|v| v.len() as u64).sum();
                if received > cap {
                    return Err(Error::ReducerOverflow {
                        residual: rp.index,
                        reducer: format!("{:?}", unflatten(*id, &axes)),
                        received,
                    });
                }
            }
        }

        // deterministic order for joining and merging
        let mut ordered: Vec<(u64, Vec<Vec<usize>>)> = cells.into_iter().collect();
        ordered.sort_by_key(|(id, _)| *id);

        let join_cell = |per_rel: &Vec<Vec<usize>>| -> Vec<Vec<Value>> {
            if !cfg.materialize {
                return Vec::new();
            }
            join_within_reducer(q, &instances, per_rel)
        };
        let joined: Vec<Vec<Vec<Value>>> = if cfg.single_thread {
            ordered
                .iter()
                .map(|(_, per_rel)| join_cell(per_rel))
                .collect()
        } else {
            ordered
                .par_iter()
                .map(|(_, per_rel)| join_cell(per_rel))
                .collect()
        };

        let mut max_load = 0u64;
        let mut res_output = 0u64;
        for ((id, per_rel), rows) in ordered.iter().zip(joined) {
            let received: u64 = per_rel.iter().map(|v| v.len() as u64).sum();
            max_load = max_load.max(received);
            res_output += rows.len() as u64;
            let key = ReducerKey {
                residual: rp.index,
                buckets: unflatten(*id, &axes),
            };
            reducer_stats.push(ReducerStat {
                key: key.clone(),
                received,
                emitted: rows.len() as u64,
            });
            for row in rows {
                if let Some(first) = emitted_by.get(&row) {
                    if *first != key {
                        exactly_once = false;
                    }
                } else {
                    emitted_by.insert(row.clone(), key.clone());
                }
                output.insert(row);
            }
        }

        let communication: u64 = copies.iter().sum();
        for (acc, c) in total_copies.iter_mut().zip(&copies) {
            *acc += c;
        }
        residual_traces.push(ResidualTrace {
            index: rp.index,
            budget: rp.budget,
            grid_cells,
            reducers_used: ordered.len() as u64,
            relation_copies: instances
                .iter()
                .zip(&copies)
                .map(|(inst, c)| (inst.schema.name.clone(), *c))
                .collect(),
            communication,
            max_load,
            output_size: res_output,
        });
    }

    let trace = ShuffleTrace {
        communication: residual_traces.iter().map(|r| r.communication).sum(),
        max_load: residual_traces
            .iter()
            .map(|r| r.max_load)
            .max()
            .unwrap_or(0),
        reducers_used: residual_traces.iter().map(|r| r.reducers_used).sum(),
        relation_copies: instances
            .iter()
            .zip(&total_copies)
            .map(|(inst, c)| (inst.schema.name.clone(), *c))
            .collect(),
        relation_sizes: instances
            .iter()
            .map(|inst| (inst.schema.name.clone(), inst.size()))
            .collect(),
        residuals: residual_traces,
        reducer_stats,
    };
    Ok(SimulationResult {
        trace,
        output,
        exactly_once,
    })
}

/// Natural join of the received tuples, relations in query order, by
/// hash join on the attributes shared with what is already bound.
fn join_within_reducer(
    q: &JoinQuery,
    instances: &[&RelationInstance],
    per_rel: &[Vec<usize>],
) -> Vec<Vec<Value>> {
    let nattrs = q.attributes().len();
    let attr_pos: HashMap<&Attribute, usize> = q
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| (a, i))
        .collect();

    let mut rows: Vec<Vec<Option<Value>>> = vec![vec![None; nattrs]];
    let mut bound: Vec<bool> = vec![false; nattrs];

    for (inst, tuple_ids) in instances.iter().zip(per_rel) {
        // positions (schema, global) of the relation's attributes
        let cols: Vec<(usize, usize)> = inst
            .schema
            .attributes
            .iter()
            .enumerate()
            .map(|(si, a)| (si, attr_pos[a]))
            .collect();
        let key_cols: Vec<(usize, usize)> =
            cols.iter().copied().filter(|(_, gi)| bound[*gi]).collect();

        let mut index: HashMap<Vec<&Value>, Vec<usize>> = HashMap::new();
        for &tid in tuple_ids {
            let t = &inst.tuples[tid];
            let key: Vec<&Value> = key_cols.iter().map(|(si, _)| &t.values[*si]).collect();
            index.entry(key).or_default().push(tid);
        }

        let mut next = Vec::new();
        for row in &rows {
            let key: Vec<&Value> = key_cols
                .iter()
                .map(|(_, gi)| row[*gi].as_ref().unwrap())
                .collect();
            if let Some(matches) = index.get(&key) {
                for &tid in matches {
                    let t = &inst.tuples[tid];
                    let mut extended = row.clone();
                    for (si, gi) in &cols {
                        extended[*gi] = Some(t.values[*si].clone());
                    }
                    next.push(extended);
                }
            }
        }
        rows = next;
        for (_, gi) in &cols {
            bound[*gi] = true;
        }
        if rows.is_empty() {
            return Vec::new();
        }
    }

    let mut out: Vec<Vec<Value>> = rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|v| v.expect("all attributes bound"))
                .collect()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Outcome of the baseline two-relation heavy-hitter strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    /// Copies sent for the heavy-hitter part, = sum over values of
    /// (larger side + k * smaller side).
    pub hh_communication: u64,
    /// Copies sent for the ordinary part (no replication).
    pub ordinary_communication: u64,
    pub communication: u64,
    pub max_load: u64,
    pub reducers_used: u64,
    pub output: BTreeSet<Vec<Value>>,
}

/// The pre-Shares strategy: per heavy-hitter value, hash-partition the
/// larger side into k buckets on its non-join attributes and broadcast
/// the smaller side to all k; ordinary tuples are hash-routed on the
/// join value.
pub fn baseline_hh_execute(
    r_inst: &RelationInstance,
    s_inst: &RelationInstance,
    join_attr: &Attribute,
    hh_values: &[Value],
    k: u64,
    seed: u64,
    materialize: bool,
) -> Result<BaselineOutcome> {
    if k < 1 {
        return Err(Error::InvalidArgument("baseline needs k >= 1".to_string()));
    }
    let rp = r_inst
        .schema
        .position(join_attr)
        .ok_or_else(|| Error::UnknownAttribute(join_attr.name().to_string()))?;
    let sp = s_inst
        .schema
        .position(join_attr)
        .ok_or_else(|| Error::UnknownAttribute(join_attr.name().to_string()))?;
    let hashes = HashFamily::new(seed);

    // (received r-tuples, received s-tuples) per reducer
    let mut reducers: HashMap<(usize, u64), (Vec<usize>, Vec<usize>)> = HashMap::new();
    let mut ordinary = 0u64;
    let mut hh_comm = 0u64;

    let hh_index = |v: &Value| hh_values.iter().position(|h| h == v);

    // ordinary routing: reducer family 0, bucket by join value
    for (tid, t) in r_inst.tuples.iter().enumerate() {
        let v = &t.values[rp];
        if hh_index(v).is_none() {
            let b = hashes.bucket(0, join_attr, v, k);
            reducers.entry((0, b)).or_default().0.push(tid);
            ordinary += 1;
        }
    }
    for (tid, t) in s_inst.tuples.iter().enumerate() {
        let v = &t.values[sp];
        if hh_index(v).is_none() {
            let b = hashes.bucket(0, join_attr, v, k);
            reducers.entry((0, b)).or_default().1.push(tid);
            ordinary += 1;
        }
    }

    // heavy hitters: reducer family 1 + value index
    for (vi, v) in hh_values.iter().enumerate() {
        let r_ids: Vec<usize> = r_inst
            .tuples
            .iter()
            .enumerate()
            .filter(|(_, t)| &t.values[rp] == v)
            .map(|(i, _)| i)
            .collect();
        let s_ids: Vec<usize> = s_inst
            .tuples
            .iter()
            .enumerate()
            .filter(|(_, t)| &t.values[sp] == v)
            .map(|(i, _)| i)
            .collect();
        let r_larger = r_ids.len() >= s_ids.len();
        let (larger, smaller) = if r_larger {
            (&r_ids, &s_ids)
        } else {
            (&s_ids, &r_ids)
        };
        hh_comm += larger.len() as u64 + k * smaller.len() as u64;

        let partition = |inst: &RelationInstance, tid: usize, join_pos: usize| -> u64 {
            let t = &inst.tuples[tid];
            let mut h = hashes.attribute_seed(1 + vi, join_attr);
            for (i, val) in t.values.iter().enumerate() {
                if i != join_pos {
                    h = avalanche(fnv(h, val.as_bytes()));
                }
            }
            h % k
        };
        for &tid in larger {
            let b = if r_larger {
                partition(r_inst, tid, rp)
            } else {
                partition(s_inst, tid, sp)
            };
            let entry = reducers.entry((1 + vi, b)).or_default();
            if r_larger {
                entry.0.push(tid);
            } else {
                entry.1.push(tid);
            }
        }
        for &tid in smaller {
            for b in 0..k {
                let entry = reducers.entry((1 + vi, b)).or_default();
                if r_larger {
                    entry.1.push(tid);
                } else {
                    entry.0.push(tid);
                }
            }
        }
    }

    let mut output = BTreeSet::new();
    let mut max_load = 0u64;
    for ((_, _), (r_ids, s_ids)) in &reducers {
        max_load = max_load.max((r_ids.len() + s_ids.len()) as u64);
        if !materialize {
            continue;
        }
        // tiny hash join on the join attribute
        let mut by_value: HashMap<&Value, Vec<usize>> = HashMap::new();
        for &tid in r_ids {
            by_value
                .entry(&r_inst.tuples[tid].values[rp])
                .or_default()
                .push(tid);
        }
        for &sid in s_ids {
            let sv = &s_inst.tuples[sid].values[sp];
            if let Some(rids) = by_value.get(sv) {
                for &tid in rids {
                    output.insert(merge_rows(r_inst, s_inst, tid, sid, rp, sp));
                }
            }
        }
    }

    Ok(BaselineOutcome {
        hh_communication: hh_comm,
        ordinary_communication: ordinary,
        communication: hh_comm + ordinary,
        max_load,
        reducers_used: reducers.len() as u64,
        output,
    })
}

/// Result row: r's attributes followed by s's minus the shared join
/// attribute, which is the natural-join column order when the two
/// relations share exactly that attribute.
fn merge_rows(
    r_inst: &RelationInstance,
    s_inst: &RelationInstance,
    rid: usize,
    sid: usize,
    _rp: usize,
    sp: usize,
) -> Vec<Value> {
    let mut row: Vec<Value> = r_inst.tuples[rid].values.clone();
    for (i, v) in s_inst.tuples[sid].values.iter().enumerate() {
        if i != sp {
            row.push(v.clone());
        }
    }
    row
}
