//! Relation instances and the TSV data format.
//!
//! Values are literal strings; a tuple is positionally aligned with its
//! relation schema. One TSV file per relation, first row = attribute
//! names in schema order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::query::{Attribute, JoinQuery, RelationSchema};

/// An atomic value. Data files carry literal strings; generated integers
/// are rendered in decimal.
pub type Value = String;

/// One tuple, positionally aligned with a [`RelationSchema`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tuple {
    pub values: Vec<Value>,
}

impl Tuple {
    pub fn new(values: Vec<Value>) -> Self {
        Tuple { values }
    }

    pub fn arity(&self) -> usize {
        self.values.len()
    }
}

impl<const N: usize> From<[&str; N]> for Tuple {
    fn from(vals: [&str; N]) -> Self {
        Tuple::new(vals.iter().map(|v| v.to_string()).collect())
    }
}

/// A relation schema plus its tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationInstance {
    pub schema: RelationSchema,
    pub tuples: Vec<Tuple>,
}

impl RelationInstance {
    pub fn new(schema: RelationSchema, tuples: Vec<Tuple>) -> Result<Self> {
        for t in &tuples {
            if t.arity() != schema.arity() {
                return Err(Error::ArityMismatch {
                    relation: schema.name.clone(),
                    expected: schema.arity(),
                    got: t.arity(),
                });
            }
        }
        Ok(RelationInstance { schema, tuples })
    }

    pub fn size(&self) -> u64 {
        self.tuples.len() as u64
    }

    /// Value of attribute `a` in tuple `t`.
    pub fn value_of<'t>(&self, t: &'t Tuple, a: &Attribute) -> Option<&'t Value> {
        self.schema.position(a).map(|i| &t.values[i])
    }
}

/// An in-memory database: one instance per relation of the query.
pub type Database = Vec<RelationInstance>;

/// Look up the instance for `name`.
pub fn instance<'d>(db: &'d Database, name: &str) -> Result<&'d RelationInstance> {
    db.iter()
        .find(|r| r.schema.name == name)
        .ok_or_else(|| Error::UnknownRelation(name.to_string()))
}

/// Parse one relation's TSV content. The header row must match the
/// schema's attribute names in order.
pub fn parse_tsv(schema: &RelationSchema, content: &str, file: &str) -> Result<RelationInstance> {
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Data {
        file: file.to_string(),
        line: Some(1),
        message: "empty file, expected a header row".to_string(),
    })?;
    let header_names: Vec<&str> = header.split('\t').collect();
    let expected: Vec<&str> = schema.attributes.iter().map(|a| a.name()).collect();
    if header_names != expected {
        return Err(Error::Data {
            file: file.to_string(),
            line: Some(1),
            message: format!(
                "header [{}] does not match schema [{}]",
                header_names.join(","),
                expected.join(",")
            ),
        });
    }
    let mut tuples = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let values: Vec<Value> = line.split('\t').map(|v| v.to_string()).collect();
        if values.len() != schema.arity() {
            return Err(Error::Data {
                file: file.to_string(),
                line: Some(idx + 1),
                message: format!("expected {} fields, got {}", schema.arity(), values.len()),
            });
        }
        tuples.push(Tuple::new(values));
    }
    RelationInstance::new(schema.clone(), tuples)
}

/// Render an instance as TSV (header row + one row per tuple).
pub fn to_tsv(inst: &RelationInstance) -> String {
    let mut out = String::new();
    let header: Vec<&str> = inst.schema.attributes.iter().map(|a| a.name()).collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for t in &inst.tuples {
        out.push_str(&t.values.join("\t"));
        out.push('\n');
    }
    out
}

/// Load `<Relation>.tsv` for every relation of the query from `dir`.
pub fn load_database(q: &JoinQuery, dir: &Path) -> Result<Database> {
    let mut db = Vec::new();
    for schema in q.relations() {
        let path = dir.join(format!("{}.tsv", schema.name));
        let content = fs::read_to_string(&path).map_err(|e| Error::Data {
            file: path.display().to_string(),
            line: None,
            message: format!("cannot read data for relation {}: {e}", schema.name),
        })?;
        db.push(parse_tsv(schema, &content, &path.display().to_string())?);
    }
    Ok(db)
}

/// Write one TSV file per relation into `dir`.
pub fn store_database(db: &Database, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Data {
        file: dir.display().to_string(),
        line: None,
        message: format!("cannot create data directory: {e}"),
    })?;
    for inst in db {
        let path = dir.join(format!("{}.tsv", inst.schema.name));
        fs::write(&path, to_tsv(inst)).map_err(|e| Error::Data {
            file: path.display().to_string(),
            line: None,
            message: format!("cannot write: {e}"),
        })?;
    }
    Ok(())
}

/// Convenience constructor for tests and examples.
pub fn instance_from_rows(schema: &RelationSchema, rows: &[&[&str]]) -> RelationInstance {
    let tuples = rows
        .iter()
        .map(|r| Tuple::new(r.iter().map(|v| v.to_string()).collect()))
        .collect();
    RelationInstance::new(schema.clone(), tuples).expect("row arity matches schema")
}
