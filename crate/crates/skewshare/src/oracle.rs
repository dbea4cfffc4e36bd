//! Brute-force references: nested-loop join, exhaustive share search,
//! and the auxiliary-relation materialization check. Used by tests, the
//! acceptance suite and the `--verify` flag; exponential is fine here.

use std::collections::{BTreeSet, HashMap};

use crate::cost::{evaluate_cost_integer, CostExpression, IntegerShares, RelationSizes};
use crate::data::{Database, RelationInstance, Tuple, Value};
use crate::decompose::{tuple_matches, AttrType, TypeCombination, TypeSets};
use crate::error::{Error, Result};
use crate::query::{Attribute, JoinQuery, RelationSchema};

/// Exact natural join by plain nested loops: no hashing anywhere, so it
/// shares nothing with the simulator's join path. Rows are value vectors
/// in query attribute order, duplicate-free.
pub fn nested_loop_join(db: &Database, q: &JoinQuery) -> Result<BTreeSet<Vec<Value>>> {
    let instances: Vec<&RelationInstance> = q
        .relations()
        .iter()
        .map(|schema| crate::data::instance(db, &schema.name))
        .collect::<Result<Vec<_>>>()?;
    let nattrs = q.attributes().len();

    let mut partials: Vec<Vec<Option<Value>>> = vec![vec![None; nattrs]];
    for inst in instances {
        let cols: Vec<(usize, usize)> = inst
            .schema
            .attributes
            .iter()
            .enumerate()
            .map(|(si, a)| {
                (
                    si,
                    q.attributes()
                        .iter()
                        .position(|x| x == a)
                        .expect("attr in query"),
                )
            })
            .collect();
        let mut next = Vec::new();
        for partial in &partials {
            for t in &inst.tuples {
                let consistent = cols.iter().all(|(si, gi)| match &partial[*gi] {
                    Some(v) => v == &t.values[*si],
                    None => true,
                });
                if consistent {
                    let mut extended = partial.clone();
                    for (si, gi) in &cols {
                        extended[*gi] = Some(t.values[*si].clone());
                    }
                    next.push(extended);
                }
            }
        }
        partials = next;
        if partials.is_empty() {
            return Ok(BTreeSet::new());
        }
    }
    Ok(partials
        .into_iter()
        .map(|row| row.into_iter().map(|v| v.expect("all bound")).collect())
        .collect())
}

/// Restrict every relation to the tuples matching `c`, then join: the
/// reference semantics of one residual join.
pub fn residual_join(
    db: &Database,
    q: &JoinQuery,
    c: &TypeCombination,
    ts: &TypeSets,
) -> Result<BTreeSet<Vec<Value>>> {
    let restricted: Database = q
        .relations()
        .iter()
        .map(|schema| {
            let inst = crate::data::instance(db, &schema.name)?;
            let tuples = inst
                .tuples
                .iter()
                .filter(|t| tuple_matches(c, ts, schema, t))
                .cloned()
                .collect();
            RelationInstance::new(schema.clone(), tuples)
        })
        .collect::<Result<Vec<_>>>()?;
    nested_loop_join(&restricted, q)
}

/// Enumerate every integer share vector over `vars` whose product is
/// exactly `budget` and return the cost-minimal one (first in
/// lexicographic order on ties).
pub fn exhaustive_share_search(
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    budget: u64,
) -> Result<(IntegerShares, u64)> {
    if budget > 256 {
        return Err(Error::OracleBounds(format!("budget {budget} > 256")));
    }
    if vars.len() > 5 {
        return Err(Error::OracleBounds(format!("{} variables > 5", vars.len())));
    }
    if budget < 1 {
        return Err(Error::InvalidArgument("budget must be >= 1".to_string()));
    }
    if vars.is_empty() {
        let cost = evaluate_cost_integer(expr, sizes, &IntegerShares::new())?;
        return Ok((IntegerShares::new(), cost));
    }

    let mut best: Option<(u64, Vec<u64>)> = None;
    let mut shares = vec![1u64; vars.len()];
    search(expr, sizes, vars, budget, 0, &mut shares, &mut best)?;
    let (cost, shares) = best.expect("(budget, 1, ..., 1) always qualifies");
    Ok((vars.iter().cloned().zip(shares).collect(), cost))
}

fn search(
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    rest: u64,
    pos: usize,
    shares: &mut Vec<u64>,
    best: &mut Option<(u64, Vec<u64>)>,
) -> Result<()> {
    if pos == vars.len() - 1 {
        shares[pos] = rest;
        let assignment: IntegerShares = vars.iter().cloned().zip(shares.iter().copied()).collect();
        let cost = evaluate_cost_integer(expr, sizes, &assignment)?;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            *best = Some((cost, shares.clone()));
        }
        return Ok(());
    }
    for d in 1..=rest {
        if rest.is_multiple_of(d) {
            shares[pos] = d;
            search(expr, sizes, vars, rest / d, pos + 1, shares, best)?;
        }
    }
    Ok(())
}

/// The conceptual heavy-hitter-free database: every relation containing
/// an HH-typed attribute gets that column renamed per relation and its
/// values replaced by fresh composite tokens, and one auxiliary relation
/// per HH-typed attribute reconnects the renamed columns with a
/// Cartesian product.
#[derive(Debug, Clone)]
pub struct MaterializedResidual {
    pub database: Database,
    pub query: JoinQuery,
    /// Names of the auxiliary relations, in query attribute order.
    pub aux_relations: Vec<String>,
    /// fresh token -> original value.
    pub fresh_to_original: HashMap<Value, Value>,
    /// original attribute -> representative attribute in the new query.
    column_of: Vec<(Attribute, Attribute)>,
}

impl MaterializedResidual {
    /// Map joined rows of the modified query back into the original
    /// attribute space.
    pub fn map_back(&self, rows: &BTreeSet<Vec<Value>>) -> BTreeSet<Vec<Value>> {
        let positions: Vec<usize> = self
            .column_of
            .iter()
            .map(|(_, col)| {
                self.query
                    .attributes()
                    .iter()
                    .position(|a| a == col)
                    .expect("representative column exists")
            })
            .collect();
        rows.iter()
            .map(|row| {
                positions
                    .iter()
                    .map(|p| {
                        let v = &row[*p];
                        self.fresh_to_original.get(v).unwrap_or(v).clone()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fresh token for the heavy value `b` of tuple `t`: the values of the
/// non-replaced attributes identify the tuple, dot-joined, framed by the
/// value and the relation name (`2.1.R` for tuple (1,2) of R(A,B)).
fn fresh_token(b: &Value, t: &Tuple, keep: &[usize], relation: &str) -> Value {
    let ident: Vec<&str> = keep.iter().map(|i| t.values[*i].as_str()).collect();
    format!("{b}.{}.{relation}", ident.join("."))
}

/// Build the modified database D' and query J' for one combination with
/// at least one heavy-hitter-typed attribute.
pub fn materialize_hh_free(
    db: &Database,
    q: &JoinQuery,
    c: &TypeCombination,
    ts: &TypeSets,
) -> Result<MaterializedResidual> {
    let hh_attrs: Vec<(&Attribute, &Value)> = c
        .types
        .iter()
        .filter_map(|(a, t)| match t {
            AttrType::HeavyHitter(v) => Some((a, v)),
            AttrType::Ordinary => None,
        })
        .collect();
    if hh_attrs.is_empty() {
        return Err(Error::InvalidArgument(
            "materialization needs at least one heavy-hitter-typed attribute".to_string(),
        ));
    }

    let renamed = |a: &Attribute, rel: &str| Attribute::new(format!("{}_{}", a.name(), rel));
    let mut fresh_to_original: HashMap<Value, Value> = HashMap::new();
    // per HH attribute, per containing relation: the distinct fresh
    // tokens in first-appearance order
    let mut fresh_columns: HashMap<(String, String), Vec<Value>> = HashMap::new();

    let mut new_relations: Vec<RelationInstance> = Vec::new();
    for schema in q.relations() {
        let inst = crate::data::instance(db, &schema.name)?;
        let replaced: Vec<usize> = schema
            .attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| hh_attrs.iter().any(|(h, _)| h == a))
            .map(|(i, _)| i)
            .collect();
        let keep: Vec<usize> = (0..schema.arity())
            .filter(|i| !replaced.contains(i))
            .collect();

        let new_schema = RelationSchema::new(
            schema.name.clone(),
            schema
                .attributes
                .iter()
                .map(|a| {
                    if hh_attrs.iter().any(|(h, _)| *h == a) {
                        renamed(a, &schema.name)
                    } else {
                        a.clone()
                    }
                })
                .collect(),
        )?;

        let mut tuples = Vec::new();
        for t in &inst.tuples {
            if !tuple_matches(c, ts, schema, t) {
                continue;
            }
            let mut values = t.values.clone();
            for &pos in &replaced {
                let b = &t.values[pos];
                let token = fresh_token(b, t, &keep, &schema.name);
                fresh_to_original.insert(token.clone(), b.clone());
                let col = fresh_columns
                    .entry((
                        schema.attributes[pos].name().to_string(),
                        schema.name.clone(),
                    ))
                    .or_default();
                if !col.contains(&token) {
                    col.push(token.clone());
                }
                values[pos] = token;
            }
            tuples.push(Tuple::new(values));
        }
        new_relations.push(RelationInstance::new(new_schema, tuples)?);
    }

    // one auxiliary relation per HH attribute: the Cartesian product of
    // the per-relation fresh columns
    let mut aux_relations = Vec::new();
    for (attr, _) in &hh_attrs {
        let containing: Vec<&RelationSchema> =
            q.relations().iter().filter(|r| r.contains(attr)).collect();
        let name = format!("R_aux_{}", attr.name());
        let schema = RelationSchema::new(
            name.clone(),
            containing.iter().map(|r| renamed(attr, &r.name)).collect(),
        )?;
        let columns: Vec<Vec<Value>> = containing
            .iter()
            .map(|r| {
                fresh_columns
                    .get(&(attr.name().to_string(), r.name.clone()))
                    .cloned()
                    .unwrap_or_default()
            })
            .collect();
        let mut tuples: Vec<Tuple> = vec![Tuple::new(Vec::new())];
        for col in &columns {
            let mut next = Vec::with_capacity(tuples.len() * col.len());
            for t in &tuples {
                for v in col {
                    let mut values = t.values.clone();
                    values.push(v.clone());
                    next.push(Tuple::new(values));
                }
            }
            tuples = next;
        }
        aux_relations.push(name);
        new_relations.push(RelationInstance::new(schema, tuples)?);
    }

    let query = JoinQuery::new(new_relations.iter().map(|r| r.schema.clone()).collect())?;
    let column_of = q
        .attributes()
        .iter()
        .map(|a| {
            if hh_attrs.iter().any(|(h, _)| *h == a) {
                let first = q
                    .relations()
                    .iter()
                    .find(|r| r.contains(a))
                    .expect("attribute appears somewhere");
                (a.clone(), renamed(a, &first.name))
            } else {
                (a.clone(), a.clone())
            }
        })
        .collect();

    Ok(MaterializedResidual {
        database: new_relations,
        query,
        aux_relations,
        fresh_to_original,
        column_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::base_cost_expression;
    use crate::data::instance_from_rows;
    use crate::decompose::{enumerate_combinations, type_sets, DEFAULT_COMBINATION_CAP};
    use crate::hh::detect_heavy_hitters;

    fn two_way() -> JoinQuery {
        JoinQuery::parse("R(A,B); S(B,C)").unwrap()
    }

    fn hot_block_db(q: &JoinQuery) -> Database {
        vec![
            instance_from_rows(&q.relations()[0], &[&["1", "2"], &["3", "2"], &["4", "2"]]),
            instance_from_rows(&q.relations()[1], &[&["2", "5"], &["2", "6"]]),
        ]
    }

    #[test]
    fn nested_loop_hot_block() {
        let q = two_way();
        let db = hot_block_db(&q);
        let out = nested_loop_join(&db, &q).unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn nested_loop_disjoint_is_empty() {
        let q = two_way();
        let db = vec![
            instance_from_rows(&q.relations()[0], &[&["1", "x"]]),
            instance_from_rows(&q.relations()[1], &[&["y", "2"]]),
        ];
        assert!(nested_loop_join(&db, &q).unwrap().is_empty());
    }

    #[test]
    fn nested_loop_triangle_single_cycle() {
        let q = JoinQuery::parse("R1(X1,X2); R2(X2,X3); R3(X3,X1)").unwrap();
        let db = vec![
            instance_from_rows(&q.relations()[0], &[&["1", "2"]]),
            instance_from_rows(&q.relations()[1], &[&["2", "3"]]),
            instance_from_rows(&q.relations()[2], &[&["3", "1"]]),
        ];
        let out = nested_loop_join(&db, &q).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out.contains(&vec!["1".to_string(), "2".to_string(), "3".to_string()]));
    }

    #[test]
    fn share_search_two_way() {
        let q = two_way();
        let e = base_cost_expression(&q); // r*c + s*a
        let sizes = RelationSizes::from([("R".into(), 1000u64), ("S".into(), 500u64)]);
        let vars = vec![Attribute::from("A"), Attribute::from("C")];
        let (shares, cost) = exhaustive_share_search(&e, &sizes, &vars, 16).unwrap();
        assert_eq!(cost, 6000);
        let product: u64 = shares.values().product();
        assert_eq!(product, 16);
    }

    #[test]
    fn share_search_budget_one_and_single_var() {
        let q = two_way();
        let e = base_cost_expression(&q);
        let sizes = RelationSizes::from([("R".into(), 10u64), ("S".into(), 20u64)]);
        let vars = vec![Attribute::from("A"), Attribute::from("C")];
        let (shares, cost) = exhaustive_share_search(&e, &sizes, &vars, 1).unwrap();
        assert!(shares.values().all(|s| *s == 1));
        assert_eq!(cost, 30);
        // single variable: forced to the budget
        let single = vec![Attribute::from("A")];
        let (shares, _) = exhaustive_share_search(&e, &sizes, &single, 6).unwrap();
        assert_eq!(shares[&Attribute::from("A")], 6);
    }

    #[test]
    fn share_search_bounds() {
        let q = two_way();
        let e = base_cost_expression(&q);
        let sizes = RelationSizes::from([("R".into(), 1u64), ("S".into(), 1u64)]);
        let vars = vec![Attribute::from("A")];
        assert!(exhaustive_share_search(&e, &sizes, &vars, 300).is_err());
    }

    #[test]
    fn materialize_emits_exact_tokens_and_aux_product() {
        let q = two_way();
        let db = hot_block_db(&q);
        let hh = detect_heavy_hitters(&db, &q, 0.6).unwrap();
        let ts = type_sets(&q, &hh);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        let hot = &combos[1]; // B = 2
        let m = materialize_hh_free(&db, &q, hot, &ts).unwrap();

        let r = &m.database[0];
        assert_eq!(r.schema.attributes[1].name(), "B_R");
        let r_tokens: Vec<&str> = r.tuples.iter().map(|t| t.values[1].as_str()).collect();
        assert_eq!(r_tokens, vec!["2.1.R", "2.3.R", "2.4.R"]);

        let s = &m.database[1];
        assert_eq!(s.schema.attributes[0].name(), "B_S");
        let s_tokens: Vec<&str> = s.tuples.iter().map(|t| t.values[0].as_str()).collect();
        assert_eq!(s_tokens, vec!["2.5.S", "2.6.S"]);

        let aux = &m.database[2];
        assert_eq!(m.aux_relations, vec!["R_aux_B".to_string()]);
        let pairs: BTreeSet<(String, String)> = aux
            .tuples
            .iter()
            .map(|t| (t.values[0].clone(), t.values[1].clone()))
            .collect();
        let expected: BTreeSet<(String, String)> = [
            ("2.1.R", "2.5.S"),
            ("2.3.R", "2.5.S"),
            ("2.4.R", "2.5.S"),
            ("2.1.R", "2.6.S"),
            ("2.3.R", "2.6.S"),
            ("2.4.R", "2.6.S"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(pairs, expected);
    }

    #[test]
    fn materialize_round_trip_equals_residual_join() {
        let q = two_way();
        let db = hot_block_db(&q);
        let hh = detect_heavy_hitters(&db, &q, 0.6).unwrap();
        let ts = type_sets(&q, &hh);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        let hot = &combos[1];
        let m = materialize_hh_free(&db, &q, hot, &ts).unwrap();
        let modified = nested_loop_join(&m.database, &m.query).unwrap();
        let mapped = m.map_back(&modified);
        let reference = residual_join(&db, &q, hot, &ts).unwrap();
        assert_eq!(mapped, reference);
        assert_eq!(mapped.len(), 6);
    }

    #[test]
    fn materialized_database_has_no_heavy_hitters() {
        let q = two_way();
        let db = hot_block_db(&q);
        let hh = detect_heavy_hitters(&db, &q, 0.6).unwrap();
        let ts = type_sets(&q, &hh);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        let m = materialize_hh_free(&db, &q, &combos[1], &ts).unwrap();
        // every fresh token is unique within its column, so no value of a
        // replaced attribute can cross any threshold above 1/size (the
        // smallest participating relation has 2 tuples here)
        let report = detect_heavy_hitters(&m.database, &m.query, 0.51).unwrap();
        for attr in ["B_R", "B_S"] {
            assert!(report.values_for(&Attribute::from(attr)).is_empty());
        }
    }

    #[test]
    fn materialize_rejects_all_ordinary() {
        let q = two_way();
        let db = hot_block_db(&q);
        let hh = detect_heavy_hitters(&db, &q, 0.6).unwrap();
        let ts = type_sets(&q, &hh);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        assert!(materialize_hh_free(&db, &q, &combos[0], &ts).is_err());
    }

    #[test]
    fn residual_joins_partition_the_full_join() {
        let q = two_way();
        let db = vec![
            instance_from_rows(
                &q.relations()[0],
                &[
                    &["1", "2"],
                    &["3", "2"],
                    &["4", "2"],
                    &["5", "7"],
                    &["6", "8"],
                ],
            ),
            instance_from_rows(
                &q.relations()[1],
                &[&["2", "5"], &["2", "6"], &["7", "9"], &["8", "9"]],
            ),
        ];
        let hh = detect_heavy_hitters(&db, &q, 0.5).unwrap();
        let ts = type_sets(&q, &hh);
        let combos = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP).unwrap();
        let full = nested_loop_join(&db, &q).unwrap();
        let mut union = BTreeSet::new();
        let mut total = 0;
        for c in &combos {
            let part = residual_join(&db, &q, c, &ts).unwrap();
            total += part.len();
            union.extend(part);
        }
        assert_eq!(union, full);
        assert_eq!(total, full.len(), "residual joins must not overlap");
    }
}
