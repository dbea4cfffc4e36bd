//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the planner, simulator and I/O layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Query text could not be parsed; carries line and column (1-based).
    QuerySyntax {
        line: usize,
        col: usize,
        message: String,
    },
    /// Structural problem with a query (duplicate names, arity, ...).
    InvalidQuery(String),
    /// An attribute was referenced that the query does not contain.
    UnknownAttribute(String),
    /// A relation was referenced that the query or database does not contain.
    UnknownRelation(String),
    /// Tuple arity does not match the schema.
    ArityMismatch {
        relation: String,
        expected: usize,
        got: usize,
    },
    /// Heavy-hitter threshold outside (0, 1].
    InvalidThreshold(f64),
    /// The Cartesian product of type sets exceeds the configured cap.
    CombinationOverflow { product: u128, cap: u128 },
    /// Not enough reducers for the non-empty residual joins.
    InsufficientBudget { k: u64, required: u64 },
    /// A numeric argument was out of range.
    InvalidArgument(String),
    /// Integer cost arithmetic overflowed u64.
    CostOverflow,
    /// A reducer exceeded the configured memory cap.
    ReducerOverflow {
        residual: usize,
        reducer: String,
        received: u64,
    },
    /// Plan and query/data do not describe the same join.
    PlanMismatch(String),
    /// Data file problem; carries file and line when known.
    Data {
        file: String,
        line: Option<usize>,
        message: String,
    },
    /// Malformed report/plan/stats document.
    Document(String),
    /// Infeasible data-generation request.
    Generator(String),
    /// Oracle enumeration bounds exceeded.
    OracleBounds(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::QuerySyntax { line, col, message } => {
                write!(f, "query syntax error at {line}:{col}: {message}")
            }
            Error::InvalidQuery(m) => write!(f, "invalid query: {m}"),
            Error::UnknownAttribute(a) => write!(f, "unknown attribute: {a}"),
            Error::UnknownRelation(r) => write!(f, "unknown relation: {r}"),
            Error::ArityMismatch {
                relation,
                expected,
                got,
            } => {
                write!(
                    f,
                    "relation {relation}: expected arity {expected}, got {got}"
                )
            }
            Error::InvalidThreshold(t) => {
                write!(f, "heavy-hitter threshold must be in (0, 1], got {t}")
            }
            Error::CombinationOverflow { product, cap } => {
                write!(f, "type combination count {product} exceeds cap {cap}")
            }
            Error::InsufficientBudget { k, required } => {
                write!(
                    f,
                    "budget k={k} is below the {required} non-empty residual joins"
                )
            }
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::CostOverflow => write!(f, "integer cost overflowed u64"),
            Error::ReducerOverflow {
                residual,
                reducer,
                received,
            } => write!(
                f,
                "reducer {reducer} of residual join {residual} exceeded the memory cap \
                 ({received} tuples received)"
            ),
            Error::PlanMismatch(m) => write!(f, "plan does not match the query: {m}"),
            Error::Data {
                file,
                line,
                message,
            } => match line {
                Some(l) => write!(f, "{file}:{l}: {message}"),
                None => write!(f, "{file}: {message}"),
            },
            Error::Document(m) => write!(f, "malformed document: {m}"),
            Error::Generator(m) => write!(f, "generator: {m}"),
            Error::OracleBounds(m) => write!(f, "oracle bounds exceeded: {m}"),
        }
    }
}

impl std::error::Error for Error {}
