//! Symbolic communication-cost expressions.
//!
//! Sending a relation to a reducer grid replicates each tuple once per
//! bucket of every share-bearing attribute the relation does not
//! contain, so the communication cost of a join is a posynomial: one
//! term per relation, size times the product of the absent attributes'
//! shares. Residual joins simplify the base expression by fixing
//! heavy-hitter-typed shares to 1 and dropping dominated attributes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::decompose::TypeCombination;
use crate::error::{Error, Result};
use crate::query::{Attribute, JoinQuery};

/// Continuous shares per attribute; attributes not listed have share 1.
pub type ContinuousShares = BTreeMap<Attribute, f64>;
/// Integer shares per attribute; attributes not listed have share 1.
pub type IntegerShares = BTreeMap<Attribute, u64>;
/// Relation sizes by name.
pub type RelationSizes = BTreeMap<String, u64>;

/// One posynomial term: a relation's size coefficient times the product
/// of the listed share variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostTerm {
    pub relation: String,
    /// Share variables, kept sorted by attribute name.
    pub variables: BTreeSet<Attribute>,
}

/// A communication-cost posynomial in canonical form: one term per
/// relation, relations in query order, variables sorted by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostExpression {
    pub terms: Vec<CostTerm>,
}

impl CostExpression {
    /// All distinct variables, sorted by attribute name.
    pub fn variables(&self) -> BTreeSet<Attribute> {
        self.terms
            .iter()
            .flat_map(|t| t.variables.iter().cloned())
            .collect()
    }

    /// Terms containing `v`.
    pub fn terms_with<'a>(&'a self, v: &'a Attribute) -> impl Iterator<Item = &'a CostTerm> + 'a {
        self.terms.iter().filter(move |t| t.variables.contains(v))
    }

    /// Remove a set of variables from every term.
    pub fn without(&self, drop: &BTreeSet<Attribute>) -> CostExpression {
        CostExpression {
            terms: self
                .terms
                .iter()
                .map(|t| CostTerm {
                    relation: t.relation.clone(),
                    variables: t.variables.difference(drop).cloned().collect(),
                })
                .collect(),
        }
    }
}

impl fmt::Display for CostExpression {
    /// Renders like `r*c + s + t*b`: lowercased relation symbol, then
    /// the lowercased variable names in sorted order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rendered: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let mut parts = vec![t.relation.to_lowercase()];
                parts.extend(t.variables.iter().map(|v| v.name().to_lowercase()));
                parts.join("*")
            })
            .collect();
        f.write_str(&rendered.join(" + "))
    }
}

/// The cost expression of the original join, before any simplification:
/// each relation's term carries the shares of every attribute absent
/// from that relation.
pub fn base_cost_expression(q: &JoinQuery) -> CostExpression {
    let terms = q
        .relations()
        .iter()
        .map(|r| CostTerm {
            relation: r.name.clone(),
            variables: q
                .attributes()
                .iter()
                .filter(|a| !r.contains(a))
                .cloned()
                .collect(),
        })
        .collect();
    CostExpression { terms }
}

/// A residual join's simplified cost expression together with the
/// attributes that still carry shares (their product is the reducer
/// budget of the residual join).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualCost {
    pub expression: CostExpression,
    /// Ordinary-typed attributes that survived dominance, sorted.
    pub free_attributes: Vec<Attribute>,
}

/// Simplify the base expression for one type combination: heavy-hitter
/// typed attributes get share 1, then dominance among the ordinary-typed
/// attributes eliminates the dominated ones.
pub fn residual_cost(q: &JoinQuery, c: &TypeCombination) -> Result<ResidualCost> {
    let base = base_cost_expression(q);
    let hh: BTreeSet<Attribute> = c.hh_attributes().into_iter().cloned().collect();
    let eligible: BTreeSet<Attribute> = c.ordinary_attributes().into_iter().cloned().collect();
    let dominated = q.dominated_attributes(&eligible)?;
    let mut drop = hh;
    drop.extend(dominated.iter().cloned());
    let expression = base.without(&drop);
    let free_attributes = eligible.difference(&dominated).cloned().collect();
    Ok(ResidualCost {
        expression,
        free_attributes,
    })
}

/// Evaluate with real-valued shares: Σ size × Π shares. Attributes
/// absent from `shares` count as 1.
pub fn evaluate_cost(
    e: &CostExpression,
    sizes: &RelationSizes,
    shares: &ContinuousShares,
) -> Result<f64> {
    let mut total = 0.0;
    for t in &e.terms {
        let size = *sizes
            .get(&t.relation)
            .ok_or_else(|| Error::UnknownRelation(t.relation.clone()))? as f64;
        let repl: f64 = t
            .variables
            .iter()
            .map(|v| shares.get(v).copied().unwrap_or(1.0))
            .product();
        total += size * repl;
    }
    Ok(total)
}

/// Evaluate with integer shares in exact integer arithmetic.
pub fn evaluate_cost_integer(
    e: &CostExpression,
    sizes: &RelationSizes,
    shares: &IntegerShares,
) -> Result<u64> {
    let mut total: u128 = 0;
    for t in &e.terms {
        let size = *sizes
            .get(&t.relation)
            .ok_or_else(|| Error::UnknownRelation(t.relation.clone()))? as u128;
        let mut repl: u128 = 1;
        for v in &t.variables {
            repl = repl
                .checked_mul(shares.get(v).copied().unwrap_or(1) as u128)
                .ok_or(Error::CostOverflow)?;
        }
        total = total
            .checked_add(size.checked_mul(repl).ok_or(Error::CostOverflow)?)
            .ok_or(Error::CostOverflow)?;
    }
    u64::try_from(total).map_err(|_| Error::CostOverflow)
}

/// Communication cost of the baseline heavy-hitter strategy: partition
/// the larger side into k buckets, broadcast the smaller side.
pub fn baseline_cost(r: u64, s: u64, k: u64) -> Result<u64> {
    if r < s {
        return Err(Error::InvalidArgument(format!(
            "baseline expects the larger relation first, got r={r} < s={s}"
        )));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("baseline needs k >= 1".to_string()));
    }
    k.checked_mul(s)
        .and_then(|ks| ks.checked_add(r))
        .ok_or(Error::CostOverflow)
}
