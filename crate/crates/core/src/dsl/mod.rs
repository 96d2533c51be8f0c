//! Loop-free command language the perception agent writes, plus the
//! environment that carries its variables from one turn to the next.

mod exec;
mod snapshot;
mod syntax;
mod value;

use thiserror::Error;

pub use exec::{
    execute, Emission, Environment, ExecResult, ExecutionLog, LogRecord, Outcome, Provenance, ToolError, ToolRegistry,
};
pub use snapshot::{restore, snapshot};
pub use syntax::{parse, parse_in_scope, pretty_print, Call, Expr, Program, Span, Statement, StatementKind};
pub use value::{Handle, HandleKind, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at {span}: expected {}, found {found}", expected.join(" or "))]
    Syntax { span: Span, expected: Vec<String>, found: String },
    #[error("'{name}' used before assignment at {span}")]
    UseBeforeAssign { name: String, span: Span },
    #[error("key \"{key}\" emitted twice (second at {span})")]
    DuplicateEmit { key: String, span: Span },
    #[error("unknown tool {tool} at {span}")]
    UnknownTool { tool: String, span: Span },
    #[error("{tool} at {span} takes {expected} arguments, got {got}")]
    ArityMismatch { tool: String, expected: String, got: usize, span: Span },
    #[error("{tool} at {span}: {message}")]
    TypeMismatch { tool: String, message: String, span: Span },
    #[error("{tool} failed at {span}: {message}")]
    Tool { tool: String, message: String, span: Span },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}
