//! Heavy-hitter detection: the first round of the two-round scheme.
//!
//! A value is a heavy hitter for an attribute when its frequency reaches
//! the threshold fraction of the tuples in at least one relation
//! containing that attribute. Counting is exact (full hash aggregation).

use std::collections::{BTreeMap, HashMap};

use crate::data::{Database, RelationInstance, Value};
use crate::error::{Error, Result};
use crate::query::{Attribute, JoinQuery};

/// One reported heavy-hitter value with its exact per-relation counts
/// (every relation containing the attribute is listed, even below
/// threshold).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeavyHitterValue {
    pub value: Value,
    /// (relation name, count) in query relation order.
    pub counts: Vec<(String, u64)>,
}

impl HeavyHitterValue {
    pub fn count_in(&self, relation: &str) -> u64 {
        self.counts
            .iter()
            .find(|(r, _)| r == relation)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }
}

/// Heavy hitters of one attribute, in order of first occurrence in the
/// data (relations in query order, tuples in file order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeHeavyHitters {
    pub attribute: Attribute,
    pub values: Vec<HeavyHitterValue>,
}

/// The first-round output: per attribute, the detected heavy hitters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyHitterReport {
    pub threshold: f64,
    /// One entry per query attribute, in query attribute order.
    pub attributes: Vec<AttributeHeavyHitters>,
}

impl HeavyHitterReport {
    /// A report with no heavy hitters at all (plain Shares planning).
    pub fn empty(q: &JoinQuery, threshold: f64) -> Self {
        HeavyHitterReport {
            threshold,
            attributes: q
                .attributes()
                .iter()
                .map(|a| AttributeHeavyHitters {
                    attribute: a.clone(),
                    values: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn values_for(&self, a: &Attribute) -> &[HeavyHitterValue] {
        self.attributes
            .iter()
            .find(|e| &e.attribute == a)
            .map(|e| e.values.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.iter().all(|e| e.values.is_empty())
    }

    pub fn total_values(&self) -> usize {
        self.attributes.iter().map(|e| e.values.len()).sum()
    }
}

/// Exact multiplicity of each distinct value of `a` in `inst`.
pub fn count_frequencies(inst: &RelationInstance, a: &Attribute) -> Result<BTreeMap<Value, u64>> {
    let pos = inst
        .schema
        .position(a)
        .ok_or_else(|| Error::UnknownAttribute(a.name().to_string()))?;
    let mut counts = BTreeMap::new();
    for t in &inst.tuples {
        *counts.entry(t.values[pos].clone()).or_insert(0u64) += 1;
    }
    Ok(counts)
}

/// Scan the database and report, per attribute, every value whose
/// frequency reaches `threshold` of the tuples in at least one relation
/// containing the attribute.
pub fn detect_heavy_hitters(
    db: &Database,
    q: &JoinQuery,
    threshold: f64,
) -> Result<HeavyHitterReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let mut attributes = Vec::new();
    for a in q.attributes() {
        let containing: Vec<&RelationInstance> = q
            .relations()
            .iter()
            .map(|schema| crate::data::instance(db, &schema.name))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|inst| inst.schema.contains(a))
            .collect();

        // Per-relation counts plus the global first-occurrence rank of
        // each value, so the report order is reproducible.
        let mut per_rel: Vec<BTreeMap<Value, u64>> = Vec::new();
        let mut first_seen: HashMap<Value, u64> = HashMap::new();
        let mut rank = 0u64;
        for inst in &containing {
            let pos = inst.schema.position(a).expect("filtered on contains");
            let mut counts = BTreeMap::new();
            for t in &inst.tuples {
                let v = &t.values[pos];
                *counts.entry(v.clone()).or_insert(0u64) += 1;
                first_seen.entry(v.clone()).or_insert_with(|| {
                    rank += 1;
                    rank
                });
            }
            per_rel.push(counts);
        }

        let mut heavy: Vec<(u64, Value)> = Vec::new();
        for (inst, counts) in containing.iter().zip(&per_rel) {
            let size = inst.size();
            if size == 0 {
                continue;
            }
            for (v, c) in counts {
                if *c as f64 >= threshold * size as f64 && !heavy.iter().any(|(_, hv)| hv == v) {
                    heavy.push((first_seen[v], v.clone()));
                }
            }
        }
        heavy.sort();

        let values = heavy
            .into_iter()
            .map(|(_, v)| HeavyHitterValue {
                value: v.clone(),
                counts: containing
                    .iter()
                    .zip(&per_rel)
                    .map(|(inst, counts)| {
                        (
                            inst.schema.name.clone(),
                            counts.get(&v).copied().unwrap_or(0),
                        )
                    })
                    .collect(),
            })
            .collect();
        attributes.push(AttributeHeavyHitters {
            attribute: a.clone(),
            values,
        });
    }
    Ok(HeavyHitterReport {
        threshold,
        attributes,
    })
}
