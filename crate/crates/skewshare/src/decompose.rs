//! Decomposition of a join into residual joins around heavy hitters.
//!
//! Every attribute gets a list of types: the ordinary type plus one type
//! per heavy-hitter value. A type combination picks one type per
//! attribute and identifies one residual join; a tuple participates in a
//! combination iff its values satisfy the combination's constraints on
//! the attributes of its own relation.

use std::collections::HashSet;

use crate::data::{Database, Tuple, Value};
use crate::error::{Error, Result};
use crate::hh::HeavyHitterReport;
use crate::query::{Attribute, JoinQuery, RelationSchema};

/// Default cap on the Cartesian product of type sets.
pub const DEFAULT_COMBINATION_CAP: u128 = 1_000_000;

/// The type of one attribute inside a combination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AttrType {
    Ordinary,
    HeavyHitter(Value),
}

impl AttrType {
    pub fn is_ordinary(&self) -> bool {
        matches!(self, AttrType::Ordinary)
    }
}

/// Per-attribute type lists, in query attribute order. Also serves as
/// the lookup of all heavy-hitter values per attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeSets {
    pub entries: Vec<(Attribute, Vec<AttrType>)>,
}

impl TypeSets {
    pub fn types_of(&self, a: &Attribute) -> &[AttrType] {
        self.entries
            .iter()
            .find(|(attr, _)| attr == a)
            .map(|(_, t)| t.as_slice())
            .unwrap_or(&[])
    }

    /// Heavy-hitter values of `a`, in report order.
    pub fn hh_values(&self, a: &Attribute) -> Vec<&Value> {
        self.types_of(a)
            .iter()
            .filter_map(|t| match t {
                AttrType::HeavyHitter(v) => Some(v),
                AttrType::Ordinary => None,
            })
            .collect()
    }

    /// Number of combinations = product of the type-set sizes.
    pub fn combination_count(&self) -> u128 {
        self.entries.iter().map(|(_, t)| t.len() as u128).product()
    }
}

/// One residual join's identity: a total mapping attribute -> type, in
/// query attribute order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeCombination {
    pub types: Vec<(Attribute, AttrType)>,
}

impl TypeCombination {
    pub fn type_of(&self, a: &Attribute) -> Option<&AttrType> {
        self.types
            .iter()
            .find(|(attr, _)| attr == a)
            .map(|(_, t)| t)
    }

    pub fn is_all_ordinary(&self) -> bool {
        self.types.iter().all(|(_, t)| t.is_ordinary())
    }

    /// Attributes typed with a heavy-hitter value.
    pub fn hh_attributes(&self) -> Vec<&Attribute> {
        self.types
            .iter()
            .filter(|(_, t)| !t.is_ordinary())
            .map(|(a, _)| a)
            .collect()
    }

    /// Ordinary-typed attributes (the ones eligible for shares).
    pub fn ordinary_attributes(&self) -> Vec<&Attribute> {
        self.types
            .iter()
            .filter(|(_, t)| t.is_ordinary())
            .map(|(a, _)| a)
            .collect()
    }
}

/// Build the per-attribute type lists: ordinary first, then one type per
/// heavy hitter in report order.
pub fn type_sets(q: &JoinQuery, hh: &HeavyHitterReport) -> TypeSets {
    let entries = q
        .attributes()
        .iter()
        .map(|a| {
            let mut types = vec![AttrType::Ordinary];
            for v in hh.values_for(a) {
                types.push(AttrType::HeavyHitter(v.value.clone()));
            }
            (a.clone(), types)
        })
        .collect();
    TypeSets { entries }
}

/// Enumerate the Cartesian product of the type sets in a fixed order:
/// the first attribute cycles fastest, so the all-ordinary combination
/// comes first and the listing matches a mixed-radix count.
pub fn enumerate_combinations(ts: &TypeSets, cap: u128) -> Result<Vec<TypeCombination>> {
    let product = ts.combination_count();
    if product > cap {
        return Err(Error::CombinationOverflow { product, cap });
    }
    let n = product as usize;
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let mut rest = idx;
        let types = ts
            .entries
            .iter()
            .map(|(a, choices)| {
                let digit = rest % choices.len();
                rest /= choices.len();
                (a.clone(), choices[digit].clone())
            })
            .collect();
        out.push(TypeCombination { types });
    }
    Ok(out)
}

/// Does tuple `t` of `schema` satisfy combination `c`? Heavy-hitter
/// typed attributes must carry exactly that value; ordinary-typed
/// attributes must not carry any heavy-hitter value. Attributes outside
/// the schema impose no constraint.
pub fn tuple_matches(
    c: &TypeCombination,
    ts: &TypeSets,
    schema: &RelationSchema,
    t: &Tuple,
) -> bool {
    debug_assert_eq!(t.arity(), schema.arity());
    for (pos, a) in schema.attributes.iter().enumerate() {
        let v = &t.values[pos];
        match c.type_of(a) {
            Some(AttrType::HeavyHitter(b)) => {
                if v != b {
                    return false;
                }
            }
            Some(AttrType::Ordinary) | None => {
                if ts.hh_values(a).contains(&v) {
                    return false;
                }
            }
        }
    }
    true
}

/// One residual join's identity plus its relevant relation sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualSpec {
    pub index: usize,
    pub combination: TypeCombination,
    /// Count of contributing tuples per relation, in query relation order.
    pub relevant_sizes: Vec<(String, u64)>,
    /// True when some relation contributes no tuples (join output empty).
    pub empty: bool,
}

impl ResidualSpec {
    pub fn size_of(&self, relation: &str) -> u64 {
        self.relevant_sizes
            .iter()
            .find(|(r, _)| r == relation)
            .map(|(_, n)| *n)
            .unwrap_or(0)
    }
}

/// Count, per combination and relation, the tuples that satisfy the
/// combination's constraints on the relation's own attributes.
pub fn residual_specs(
    db: &Database,
    q: &JoinQuery,
    combinations: &[TypeCombination],
    ts: &TypeSets,
) -> Result<Vec<ResidualSpec>> {
    let instances: Vec<_> = q
        .relations()
        .iter()
        .map(|schema| crate::data::instance(db, &schema.name))
        .collect::<Result<Vec<_>>>()?;

    // Precompute per relation the set of HH values per attribute position
    // so the per-tuple check is a couple of hash probes.
    let mut specs = Vec::with_capacity(combinations.len());
    for (index, c) in combinations.iter().enumerate() {
        let mut relevant_sizes = Vec::with_capacity(instances.len());
        for inst in &instances {
            let n = count_matching(c, ts, inst);
            relevant_sizes.push((inst.schema.name.clone(), n));
        }
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

fn count_matching(c: &TypeCombination, ts: &TypeSets, inst: &crate::data::RelationInstance) -> u64 {
    // Per-position constraint: Some(v) = must equal v; None + set = must
    // avoid the set.
    let constraints: Vec<(Option<&Value>, HashSet<&Value>)> = inst
        .schema
        .attributes
        .iter()
        .map(|a| match c.type_of(a) {
            Some(AttrType::HeavyHitter(b)) => (Some(b), HashSet::new()),
            _ => (None, ts.hh_values(a).into_iter().collect()),
        })
        .collect();
    inst.tuples
        .iter()
        .filter(|t| {
            t.values
                .iter()
                .zip(&constraints)
                .all(|(v, (eq, avoid))| match eq {
                    Some(b) => v == *b,
                    None => !avoid.contains(v),
                })
        })
        .count() as u64
}
