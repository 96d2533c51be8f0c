//! Concrete syntax of the command language.
//!
//! ```text
//! program   := { statement NEWLINE }
//! statement := IDENT "=" call | call | "emit" STRING expr
//! call      := IDENT "." IDENT "(" [ expr { "," expr } ] ")"
//! expr      := STRING | NUMBER | IDENT | "[" [ expr { "," expr } ] "]" | call
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::DslError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Call {
    pub module: String,
    pub op: String,
    pub args: Vec<Expr>,
}

impl Call {
    pub fn name(&self) -> String {
        format!("{}.{}", self.module, self.op)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Str(String),
    Number(f64),
    Var(String),
    List(Vec<Expr>),
    Call(Call),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StatementKind {
    Assign { name: String, call: Call },
    Call(Call),
    Emit { key: String, expr: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub span: Span,
    pub kind: StatementKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub statements: Vec<Statement>,
}

impl Program {
    /// Statements without their source positions, for structural comparison.
    pub fn kinds(&self) -> Vec<&StatementKind> {
        self.statements.iter().map(|s| &s.kind).collect()
    }

    pub fn emit_keys(&self) -> Vec<&str> {
        self.statements
            .iter()
            .filter_map(|s| match &s.kind {
                StatementKind::Emit { key, .. } => Some(key.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(f64),
    Emit,
    Eq,
    Dot,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(_) => "string".into(),
            Tok::Number(n) => format!("number {n}"),
            Tok::Emit => "'emit'".into(),
            Tok::Eq => "'='".into(),
            Tok::Dot => "'.'".into(),
            Tok::Comma => "','".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(span: Span, expected: &[&str], found: impl Into<String>) -> DslError {
    DslError::Syntax { span, expected: expected.iter().map(|s| s.to_string()).collect(), found: found.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, Span)>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let advance = |n: usize, i: &mut usize, col: &mut u32| {
            *i += n;
            *col += n as u32;
        };
        match c {
            '\n' => {
                out.push((Tok::Newline, span));
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(1, &mut i, &mut col);
                }
            }
            '=' | '.' | ',' | '(' | ')' | '[' | ']' => {
                let tok = match c {
                    '=' => Tok::Eq,
                    '.' => Tok::Dot,
                    ',' => Tok::Comma,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    _ => Tok::RBracket,
                };
                out.push((tok, span));
                advance(1, &mut i, &mut col);
            }
            '"' => {
                let mut s = String::new();
                advance(1, &mut i, &mut col);
                loop {
                    let Some(&ch) = chars.get(i) else {
                        return Err(syntax(span, &["closing '\"'"], "end of input"));
                    };
                    match ch {
                        '"' => {
                            advance(1, &mut i, &mut col);
                            break;
                        }
                        '\n' => return Err(syntax(Span { line, col }, &["closing '\"'"], "end of line")),
                        '\\' => {
                            let esc = chars.get(i + 1).copied();
                            let decoded = match esc {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                _ => {
                                    return Err(syntax(
                                        Span { line, col },
                                        &["escape \\\" \\\\ \\n or \\t"],
                                        format!("\\{}", esc.map(String::from).unwrap_or_default()),
                                    ))
                                }
                            };
                            s.push(decoded);
                            advance(2, &mut i, &mut col);
                        }
                        _ => {
                            s.push(ch);
                            advance(1, &mut i, &mut col);
                        }
                    }
                }
                out.push((Tok::Str(s), span));
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) || c == '+' => {
                let start = i;
                advance(1, &mut i, &mut col);
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        advance(1, &mut i, &mut col);
                    } else {
                        break;
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let value = lit.parse::<f64>().ok().filter(|v| v.is_finite());
                match value {
                    Some(v) => out.push((Tok::Number(v), span)),
                    None => return Err(syntax(span, &["number"], lit)),
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i, &mut col);
                }
                let word: String = chars[start..i].iter().collect();
                out.push((if word == "emit" { Tok::Emit } else { Tok::Ident(word) }, span));
            }
            other => return Err(syntax(span, &["statement"], format!("'{other}'"))),
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    bound: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Span, DslError> {
        let (t, span) = self.next();
        if t == tok {
            Ok(span)
        } else {
            Err(syntax(span, &[expected], t.describe()))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, Span), DslError> {
        match self.next() {
            (Tok::Ident(s), span) => Ok((s, span)),
            (t, span) => Err(syntax(span, &[expected], t.describe())),
        }
    }

    fn program(&mut self) -> Result<Program, DslError> {
        let mut statements = Vec::new();
        let mut keys = BTreeSet::new();
        loop {
            while *self.peek() == Tok::Newline {
                self.next();
            }
            if *self.peek() == Tok::Eof {
                break;
            }
            let stmt = self.statement()?;
            if let StatementKind::Emit { key, .. } = &stmt.kind {
                if !keys.insert(key.clone()) {
                    return Err(DslError::DuplicateEmit { key: key.clone(), span: stmt.span });
                }
            }
            statements.push(stmt);
            match self.next() {
                (Tok::Newline | Tok::Eof, _) => {}
                (t, span) => return Err(syntax(span, &["end of line"], t.describe())),
            }
        }
        Ok(Program { statements })
    }

    fn statement(&mut self) -> Result<Statement, DslError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Emit => {
                self.next();
                let key = match self.next() {
                    (Tok::Str(s), _) if !s.is_empty() => s,
                    (Tok::Str(_), sp) => return Err(syntax(sp, &["nonempty key string"], "empty string")),
                    (t, sp) => return Err(syntax(sp, &["key string"], t.describe())),
                };
                let expr = self.expr()?;
                StatementKind::Emit { key, expr }
            }
            Tok::Ident(name) => {
                if self.toks.get(self.pos + 1).map(|t| &t.0) == Some(&Tok::Eq) {
                    self.next();
                    self.next();
                    let call = self.call()?;
                    self.bound.insert(name.clone());
                    StatementKind::Assign { name, call }
                } else {
                    StatementKind::Call(self.call()?)
                }
            }
            t => return Err(syntax(span, &["identifier", "'emit'"], t.describe())),
        };
        Ok(Statement { span, kind })
    }

    fn call(&mut self) -> Result<Call, DslError> {
        let (module, _) = self.ident("module name")?;
        self.expect(Tok::Dot, "'.'")?;
        let (op, _) = self.ident("operation name")?;
        self.expect(Tok::LParen, "'('")?;
        let args = self.items(Tok::RParen, "')'")?;
        Ok(Call { module, op, args })
    }

    /// Comma-separated expressions up to and including `close`.
    fn items(&mut self, close: Tok, close_desc: &str) -> Result<Vec<Expr>, DslError> {
        let mut out = Vec::new();
        if *self.peek() == close {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            match self.next() {
                (Tok::Comma, _) => {}
                (t, _) if t == close => return Ok(out),
                (t, span) => return Err(syntax(span, &["','", close_desc], t.describe())),
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Str(s))
            }
            Tok::Number(n) => {
                self.next();
                Ok(Expr::Number(n))
            }
            Tok::LBracket => {
                self.next();
                Ok(Expr::List(self.items(Tok::RBracket, "']'")?))
            }
            Tok::Ident(name) => {
                if self.toks.get(self.pos + 1).map(|t| &t.0) == Some(&Tok::Dot) {
                    return Ok(Expr::Call(self.call()?));
                }
                self.next();
                if !self.bound.contains(&name) {
                    return Err(DslError::UseBeforeAssign { name, span });
                }
                Ok(Expr::Var(name))
            }
            t => Err(syntax(span, &["string", "number", "identifier", "'['", "call"], t.describe())),
        }
    }
}

/// Parses a standalone program: every variable must be assigned in it.
pub fn parse(text: &str) -> Result<Program, DslError> {
    parse_in_scope(text, std::iter::empty::<&str>())
}

/// Parses a program that may also read the given already-bound names, e.g.
/// variables restored from an earlier turn.
pub fn parse_in_scope<'a>(text: &str, bound: impl IntoIterator<Item = &'a str>) -> Result<Program, DslError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, bound: bound.into_iter().map(String::from).collect() };
    p.program()
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Str(s) => f.write_str(&quote(s)),
            Expr::Number(n) => write!(f, "{n}"),
            Expr::Var(v) => f.write_str(v),
            Expr::List(items) => {
                f.write_char('[')?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_char(']')
            }
            Expr::Call(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}(", self.module, self.op)?;
        for (i, e) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_char(')')
    }
}

impl fmt::Display for StatementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatementKind::Assign { name, call } => write!(f, "{name} = {call}"),
            StatementKind::Call(c) => write!(f, "{c}"),
            StatementKind::Emit { key, expr } => write!(f, "emit {} {expr}", quote(key)),
        }
    }
}

/// Canonical text: one statement per line, no comments.
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for s in &program.statements {
        writeln!(out, "{}", s.kind).expect("write to string");
    }
    out
}
