use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::syntax::{Call, Expr, Program, Span, StatementKind};
use super::value::Value;
use super::DslError;

/// Where a value came from: the call that produced it and the PA turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub module: String,
    pub op: String,
    pub args: Vec<String>,
    pub turn: u32,
}

impl Provenance {
    fn of_call(call: &Call, turn: u32) -> Self {
        Self { module: call.module.clone(), op: call.op.clone(), args: call.args.iter().map(|a| a.to_string()).collect(), turn }
    }

    fn literal(expr: &Expr, turn: u32) -> Self {
        Self { module: "literal".into(), op: String::new(), args: vec![expr.to_string()], turn }
    }
}

/// Variable bindings persisted across PA turns, with the origin of each.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub(crate) bindings: BTreeMap<String, Value>,
    pub(crate) origins: BTreeMap<String, Provenance>,
    pub(crate) turn: u32,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Value, origin: Option<Provenance>) {
        let name = name.into();
        match origin {
            Some(o) => self.origins.insert(name.clone(), o),
            None => self.origins.remove(&name),
        };
        self.bindings.insert(name, value);
    }

    pub fn origin(&self, name: &str) -> Option<&Provenance> {
        self.origins.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn turn(&self) -> u32 {
        self.turn
    }

    /// Starts the next PA turn; provenance records carry this counter.
    pub fn begin_turn(&mut self) -> u32 {
        self.turn += 1;
        self.turn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub key: String,
    pub value: Value,
    pub provenance: Provenance,
}

/// Failure reported by a registry operation.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolError {
    Unknown,
    Arity { expected: String, got: usize },
    Type(String),
    Failed(String),
}

/// Host side of the language: the only way a program can act.
pub trait ToolRegistry {
    fn call(&mut self, module: &str, op: &str, args: &[Value]) -> Result<Value, ToolError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok { summary: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub span: Span,
    pub source: String,
    /// `module.op` of the statement's outermost call, if any.
    pub call: Option<String>,
    pub outcome: Outcome,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub records: Vec<LogRecord>,
}

impl ExecutionLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }

    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.wall_ms = 0.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecResult {
    pub emitted: Vec<Emission>,
    pub log: ExecutionLog,
    /// First failure; statements after it did not run.
    pub error: Option<DslError>,
}

struct Runner<'a> {
    env: &'a mut Environment,
    registry: &'a mut dyn ToolRegistry,
    span: Span,
}

impl Runner<'_> {
    fn eval(&mut self, expr: &Expr) -> Result<Value, DslError> {
        match expr {
            Expr::Str(s) => Ok(Value::Str(s.clone())),
            Expr::Number(n) => Ok(Value::Number(*n)),
            Expr::Var(v) => {
                self.env.get(v).cloned().ok_or_else(|| DslError::UseBeforeAssign { name: v.clone(), span: self.span })
            }
            Expr::List(items) => Ok(Value::List(items.iter().map(|e| self.eval(e)).collect::<Result<_, _>>()?)),
            Expr::Call(c) => self.call(c),
        }
    }

    fn call(&mut self, call: &Call) -> Result<Value, DslError> {
        let args = call.args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
        let tool = call.name();
        let span = self.span;
        self.registry.call(&call.module, &call.op, &args).map_err(|e| match e {
            ToolError::Unknown => DslError::UnknownTool { tool, span },
            ToolError::Arity { expected, got } => DslError::ArityMismatch { tool, expected, got, span },
            ToolError::Type(message) => DslError::TypeMismatch { tool, message, span },
            ToolError::Failed(message) => DslError::Tool { tool, message, span },
        })
    }

    /// Provenance of an emitted expression: its call, the call that bound
    /// the variable, or a literal marker.
    fn provenance(&self, expr: &Expr) -> Provenance {
        match expr {
            Expr::Call(c) => Provenance::of_call(c, self.env.turn),
            Expr::Var(v) => self.env.origin(v).cloned().unwrap_or_else(|| Provenance::literal(expr, self.env.turn)),
            _ => Provenance::literal(expr, self.env.turn),
        }
    }
}

/// Runs statements in order. Bindings and emissions made before a failure
/// are kept; nothing after it runs.
pub fn execute(program: &Program, env: &mut Environment, registry: &mut dyn ToolRegistry) -> ExecResult {
    let mut emitted = Vec::new();
    let mut log = ExecutionLog::default();
    let mut runner = Runner { env, registry, span: Span { line: 0, col: 0 } };
    for stmt in &program.statements {
        runner.span = stmt.span;
        let start = Instant::now();
        let (call, result) = match &stmt.kind {
            StatementKind::Assign { name, call } => (
                Some(call.name()),
                runner.call(call).map(|v| {
                    let summary = v.to_string();
                    let origin = Provenance::of_call(call, runner.env.turn);
                    runner.env.bind(name.clone(), v, Some(origin));
                    summary
                }),
            ),
            StatementKind::Call(call) => (Some(call.name()), runner.call(call).map(|v| v.to_string())),
            StatementKind::Emit { key, expr } => {
                let call = if let Expr::Call(c) = expr { Some(c.name()) } else { None };
                let result = runner.eval(expr).map(|value| {
                    let summary = value.to_string();
                    emitted.push(Emission { key: key.clone(), value, provenance: runner.provenance(expr) });
                    summary
                });
                (call, result)
            }
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let source = stmt.kind.to_string();
        match result {
            Ok(summary) => log.records.push(LogRecord { span: stmt.span, source, call, outcome: Outcome::Ok { summary }, wall_ms }),
            Err(e) => {
                log.records.push(LogRecord {
                    span: stmt.span,
                    source,
                    call,
                    outcome: Outcome::Error { message: e.to_string() },
                    wall_ms,
                });
                return ExecResult { emitted, log, error: Some(e) };
            }
        }
    }
    ExecResult { emitted, log, error: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, parse_in_scope, restore, snapshot};

    /// Adds numbers; records every call.
    #[derive(Default)]
    struct Adder {
        calls: Vec<String>,
    }

    impl ToolRegistry for Adder {
        fn call(&mut self, module: &str, op: &str, args: &[Value]) -> Result<Value, ToolError> {
            self.calls.push(format!("{module}.{op}"));
            match (module, op) {
                ("math", "add") => {
                    let mut s = 0.0;
                    for a in args {
                        s += a.as_number().ok_or_else(|| ToolError::Type(format!("expected number, got {}", a.kind_name())))?;
                    }
                    Ok(Value::Number(s))
                }
                ("math", "fail") => Err(ToolError::Failed("boom".into())),
                _ => Err(ToolError::Unknown),
            }
        }
    }

    #[test]
    fn two_emits_on_empty_env() {
        let p = parse("emit \"a\" 1\nx = math.add(1, 1)\nemit \"b\" x").unwrap();
        let mut env = Environment::new();
        env.begin_turn();
        let r = execute(&p, &mut env, &mut Adder::default());
        assert!(r.error.is_none());
        assert_eq!(r.emitted.iter().map(|e| (&*e.key, e.value.clone())).collect::<Vec<_>>(), vec![
            ("a", Value::Number(1.0)),
            ("b", Value::Number(2.0))
        ]);
        assert_eq!(r.emitted[1].provenance, Provenance { module: "math".into(), op: "add".into(), args: vec!["1".into(), "1".into()], turn: 1 });
        assert_eq!(r.emitted[0].provenance.module, "literal");
        assert_eq!(env.get("x"), Some(&Value::Number(2.0)));
        assert_eq!(r.log.records.len(), 3);
    }

    #[test]
    fn unknown_tool_keeps_earlier_work() {
        let p = parse("emit \"a\" 1\ny = math.add(2)\nperception.nonexistent()\nemit \"b\" 2").unwrap();
        let mut env = Environment::new();
        let mut reg = Adder::default();
        let r = execute(&p, &mut env, &mut reg);
        assert_eq!(r.emitted.len(), 1);
        assert_eq!(env.get("y"), Some(&Value::Number(2.0)));
        match r.error {
            Some(DslError::UnknownTool { tool, span }) => {
                assert_eq!(tool, "perception.nonexistent");
                assert_eq!(span, Span { line: 3, col: 1 });
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.log.records.len(), 3);
        assert!(matches!(r.log.records[2].outcome, Outcome::Error { .. }));
    }

    #[test]
    fn tool_errors_are_wrapped() {
        let mut env = Environment::new();
        let r = execute(&parse("math.add(\"x\")").unwrap(), &mut env, &mut Adder::default());
        assert!(matches!(r.error, Some(DslError::TypeMismatch { .. })));
        let r = execute(&parse("emit \"k\" math.fail()").unwrap(), &mut env, &mut Adder::default());
        assert!(matches!(r.error, Some(DslError::Tool { ref message, .. }) if message == "boom"));
    }

    #[test]
    fn second_turn_reads_restored_binding() {
        let mut env = Environment::new();
        env.begin_turn();
        execute(&parse("base = math.add(40, 2)").unwrap(), &mut env, &mut Adder::default());
        let bytes = snapshot(&env);
        let mut env2 = restore(&bytes).unwrap();
        env2.begin_turn();
        let p = parse_in_scope("emit \"answer\" base\nemit \"more\" math.add(base, 1)", env2.names()).unwrap();
        let r = execute(&p, &mut env2, &mut Adder::default());
        assert!(r.error.is_none());
        assert_eq!(r.emitted[0].value, Value::Number(42.0));
        // The restored binding keeps its turn-1 origin.
        assert_eq!(r.emitted[0].provenance.turn, 1);
        assert_eq!(r.emitted[1].provenance.turn, 2);
    }

    #[test]
    fn log_json_and_determinism() {
        let p = parse("x = math.add(1, 2)\nemit \"k\" [x, \"s\"]").unwrap();
        let run = || {
            let mut env = Environment::new();
            let r = execute(&p, &mut env, &mut Adder::default());
            (r.emitted, r.log.without_timings(), env)
        };
        assert_eq!(run(), run());
        let json = run().1.to_json();
        let back: ExecutionLog = serde_json::from_str(&json).unwrap();
        assert_eq!(back, run().1);
    }
}
