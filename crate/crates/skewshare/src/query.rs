//! Join queries as hypergraphs of relations over named attributes.
//!
//! A query is a list of relation atoms like `R(A,B); S(B,E,C); T(C,D)`;
//! join semantics are the natural join on shared attribute names. The
//! module also computes the schema-level dominance relation: attribute
//! `a` is dominated by `b` when `b` appears in every relation that
//! contains `a`, and dominated attributes never receive a share.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// A join attribute, identified by its case-sensitive name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attribute(String);

impl Attribute {
    pub fn new(name: impl Into<String>) -> Self {
        Attribute(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Attribute {
    fn from(s: &str) -> Self {
        Attribute(s.to_string())
    }
}

/// A relation name plus its ordered, duplicate-free attribute list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, attributes: Vec<Attribute>) -> Result<Self> {
        let name = name.into();
        if attributes.is_empty() {
            return Err(Error::InvalidQuery(format!(
                "relation {name} has no attributes"
            )));
        }
        let mut seen = BTreeSet::new();
        for a in &attributes {
            if !seen.insert(a.clone()) {
                return Err(Error::InvalidQuery(format!(
                    "duplicate attribute {a} in relation {name}"
                )));
            }
        }
        Ok(RelationSchema { name, attributes })
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn contains(&self, a: &Attribute) -> bool {
        self.attributes.iter().any(|x| x == a)
    }

    /// Position of `a` in the schema, if present.
    pub fn position(&self, a: &Attribute) -> Option<usize> {
        self.attributes.iter().position(|x| x == a)
    }
}

/// A multiway natural-join query: ≥ 2 relation schemas over a shared
/// attribute namespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinQuery {
    relations: Vec<RelationSchema>,
    /// Duplicate-free union of all attributes in first-seen order.
    attributes: Vec<Attribute>,
}

impl JoinQuery {
    pub fn new(relations: Vec<RelationSchema>) -> Result<Self> {
        if relations.len() < 2 {
            return Err(Error::InvalidQuery(format!(
                "a join needs at least 2 relations, got {}",
                relations.len()
            )));
        }
        let mut names = BTreeSet::new();
        for r in &relations {
            if !names.insert(r.name.clone()) {
                return Err(Error::InvalidQuery(format!(
                    "duplicate relation name {}",
                    r.name
                )));
            }
        }
        let mut attributes = Vec::new();
        for r in &relations {
            for a in &r.attributes {
                if !attributes.contains(a) {
                    attributes.push(a.clone());
                }
            }
        }
        Ok(JoinQuery {
            relations,
            attributes,
        })
    }

    /// Parse query text: atoms `Name(A1,...,Am)` separated by `;` or
    /// newlines, `#` starts a comment running to end of line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut relations = Vec::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            };
            for piece in line.split(';') {
                if piece.trim().is_empty() {
                    continue;
                }
                let col = piece.len() - piece.trim_start().len() + offset_of(line, piece) + 1;
                relations.push(parse_atom(piece.trim(), lineno + 1, col)?);
            }
        }
        JoinQuery::new(relations)
    }

    /// Parse a single relation atom like `R(A,B)`.
    pub fn parse_schema(text: &str) -> Result<RelationSchema> {
        parse_atom(text.trim(), 1, 1)
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    /// All attributes in first-seen order.
    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn relation(&self, name: &str) -> Result<&RelationSchema> {
        self.relations
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn has_attribute(&self, a: &Attribute) -> bool {
        self.attributes.contains(a)
    }

    /// Names of the relations whose schema lists `a`.
    pub fn relations_containing(&self, a: &Attribute) -> Result<BTreeSet<&str>> {
        if !self.has_attribute(a) {
            return Err(Error::UnknownAttribute(a.name().to_string()));
        }
        Ok(self
            .relations
            .iter()
            .filter(|r| r.contains(a))
            .map(|r| r.name.as_str())
            .collect())
    }

    /// Dominated attributes among `eligible`: `a` is dominated when some
    /// other eligible `b` occurs in every relation containing `a`. Ties
    /// (identical relation sets) keep the lexicographically smallest
    /// name and dominate the rest, so the survivors form an antichain
    /// with one representative per equal-set class.
    pub fn dominated_attributes(
        &self,
        eligible: &BTreeSet<Attribute>,
    ) -> Result<BTreeSet<Attribute>> {
        let mut rels: BTreeMap<&Attribute, BTreeSet<&str>> = BTreeMap::new();
        for a in eligible {
            rels.insert(a, self.relations_containing(a)?);
        }
        let mut dominated = BTreeSet::new();
        for a in eligible {
            let ra = &rels[a];
            for b in eligible {
                if a == b {
                    continue;
                }
                let rb = &rels[b];
                if ra.is_subset(rb) && (ra != rb || b < a) {
                    dominated.insert(a.clone());
                    break;
                }
            }
        }
        Ok(dominated)
    }

    /// The canonical one-line text form, parseable by [`JoinQuery::parse`].
    pub fn to_text(&self) -> String {
        self.relations
            .iter()
            .map(|r| {
                let attrs = r
                    .attributes
                    .iter()
                    .map(|a| a.name())
                    .collect::<Vec<_>>()
                    .join(",");
                format!("{}({})", r.name, attrs)
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for JoinQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn offset_of(line: &str, piece: &str) -> usize {
    // byte offset of `piece` within `line` (both come from the same buffer)
    piece.as_ptr() as usize - line.as_ptr() as usize
}

fn parse_atom(atom: &str, line: usize, col: usize) -> Result<RelationSchema> {
    let err = |message: String| Error::QuerySyntax { line, col, message };
    let open = atom
        .find('(')
        .ok_or_else(|| err(format!("expected `Name(A1,...)` in `{atom}`")))?;
    if !atom.ends_with(')') {
        return Err(err(format!("missing `)` in `{atom}`")));
    }
    let name = atom[..open].trim();
    if name.is_empty() || !is_identifier(name) {
        return Err(err(format!("bad relation name in `{atom}`")));
    }
    let inner = &atom[open + 1..atom.len() - 1];
    let mut attributes = Vec::new();
    for part in inner.split(',') {
        let a = part.trim();
        if a.is_empty() || !is_identifier(a) {
            return Err(err(format!("bad attribute `{part}` in `{atom}`")));
        }
        attributes.push(Attribute::new(a));
    }
    let mut seen = BTreeSet::new();
    for a in &attributes {
        if !seen.insert(a.clone()) {
            return Err(err(format!("duplicate attribute {a} in atom `{atom}`")));
        }
    }
    RelationSchema::new(name, attributes)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn running_example() -> JoinQuery {
        JoinQuery::parse("R(A,B); S(B,E,C); T(C,D)").unwrap()
    }

    fn attrs(names: &[&str]) -> BTreeSet<Attribute> {
        names.iter().map(|n| Attribute::from(*n)).collect()
    }

    #[test]
    fn parse_two_way() {
        let q = JoinQuery::parse("R(A,B); S(B,C)").unwrap();
        assert_eq!(q.relations().len(), 2);
        let names: Vec<_> = q.attributes().iter().map(|a| a.name()).collect();
        assert_eq!(names, vec!["A", "B", "C"]);
    }

    #[test]
    fn parse_running_example() {
        let q = running_example();
        assert_eq!(q.relations().len(), 3);
        let names: BTreeSet<_> = q.attributes().iter().map(|a| a.name()).collect();
        assert_eq!(names, ["A", "B", "C", "D", "E"].into_iter().collect());
    }

    #[test]
    fn parse_newline_separated_with_comments() {
        let q = JoinQuery::parse("# the query\nR(A,B)\nS(B,C) # trailing\n").unwrap();
        assert_eq!(q.relations().len(), 2);
    }

    #[test]
    fn parse_duplicate_attribute_in_atom() {
        let e = JoinQuery::parse("R(A,A); S(A,B)").unwrap_err();
        assert!(matches!(e, Error::QuerySyntax { .. }), "{e}");
    }

    #[test]
    fn parse_duplicate_relation_name() {
        let e = JoinQuery::parse("R(A,B); R(B,C)").unwrap_err();
        assert!(matches!(e, Error::InvalidQuery(_)), "{e}");
    }

    #[test]
    fn parse_single_relation_rejected() {
        let e = JoinQuery::parse("R(A,B)").unwrap_err();
        assert!(matches!(e, Error::InvalidQuery(_)), "{e}");
    }

    #[test]
    fn parse_reports_position() {
        match JoinQuery::parse("R(A,B)\nS(B,") {
            Err(Error::QuerySyntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn relations_containing_running_example() {
        let q = running_example();
        let rels = |n: &str| q.relations_containing(&Attribute::from(n)).unwrap();
        assert_eq!(rels("B"), ["R", "S"].into_iter().collect());
        assert_eq!(rels("E"), ["S"].into_iter().collect());
        assert_eq!(rels("A"), ["R"].into_iter().collect());
        assert!(q.relations_containing(&Attribute::from("Z")).is_err());
    }

    #[test]
    fn dominance_all_eligible() {
        let q = running_example();
        let dominated = q
            .dominated_attributes(&attrs(&["A", "B", "C", "D", "E"]))
            .unwrap();
        assert_eq!(dominated, attrs(&["A", "D", "E"]));
    }

    #[test]
    fn dominance_without_b() {
        let q = running_example();
        let dominated = q
            .dominated_attributes(&attrs(&["A", "C", "D", "E"]))
            .unwrap();
        assert_eq!(dominated, attrs(&["D", "E"]));
    }

    #[test]
    fn dominance_tie_keeps_lexicographic_smallest() {
        let q = JoinQuery::parse("R(A,B); S(A,B)").unwrap();
        let dominated = q.dominated_attributes(&attrs(&["A", "B"])).unwrap();
        assert_eq!(dominated, attrs(&["B"]));
    }

    #[test]
    fn dominance_empty_eligible() {
        let q = running_example();
        assert!(q.dominated_attributes(&BTreeSet::new()).unwrap().is_empty());
    }

    #[test]
    fn text_round_trip() {
        let q = running_example();
        assert_eq!(JoinQuery::parse(&q.to_text()).unwrap(), q);
    }
}
