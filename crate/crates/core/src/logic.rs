//! AND/OR execution-order expressions over plan step references.
//!
//! Grammar (keywords case-insensitive, OR binds tighter than AND):
//!
//! ```text
//! expr := disj ("AND" disj)*
//! disj := atom ("OR" atom)*
//! atom := "Step" integer | "(" expr ")"
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("malformed execution order `{text}`: {reason}")]
    MalformedExpression { text: String, reason: String },
    #[error("execution order references step {step} but the plan has {steps} steps")]
    DanglingReference { step: u32, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicExpr {
    Leaf(u32),
    And(Vec<LogicExpr>),
    Or(Vec<LogicExpr>),
}

impl LogicExpr {
    /// `Step 1 AND Step 2 AND ... AND Step n`, or a bare leaf when `n == 1`.
    pub fn all_steps(n: u32) -> LogicExpr {
        Self::join((1..=n).map(LogicExpr::Leaf).collect(), LogicExpr::And)
    }

    fn join(mut children: Vec<LogicExpr>, wrap: fn(Vec<LogicExpr>) -> LogicExpr) -> LogicExpr {
        if children.len() == 1 {
            children.pop().expect("one child")
        } else {
            wrap(children)
        }
    }

    pub fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<u32>) {
        match self {
            LogicExpr::Leaf(id) => out.push(*id),
            LogicExpr::And(children) | LogicExpr::Or(children) => {
                children.iter().for_each(|c| c.collect_leaves(out));
            }
        }
    }

    pub fn max_step(&self) -> u32 {
        self.leaves().into_iter().max().unwrap_or(0)
    }

    /// Checks operator arity and that every leaf names one of `steps` plan steps.
    pub fn validate(&self, steps: usize) -> Result<(), LogicError> {
        match self {
            LogicExpr::Leaf(id) if *id == 0 || *id as usize > steps => {
                Err(LogicError::DanglingReference { step: *id, steps })
            }
            LogicExpr::Leaf(_) => Ok(()),
            LogicExpr::And(children) | LogicExpr::Or(children) => {
                if children.len() < 2 {
                    return Err(LogicError::MalformedExpression {
                        text: self.to_string(),
                        reason: "operator with fewer than two operands".into(),
                    });
                }
                children.iter().try_for_each(|c| c.validate(steps))
            }
        }
    }

    /// Evaluates children strictly in order: AND stops at the first false
    /// child, OR at the first true one. An `Err` from `eval` stops the whole
    /// evaluation and yields `false` together with the cause.
    pub fn evaluate_lazy<E>(&self, eval: &mut dyn FnMut(u32) -> Result<bool, E>) -> LazyOutcome<E> {
        match self.eval_inner(eval) {
            Ok(value) => LazyOutcome { value, aborted: None },
            Err(cause) => LazyOutcome {
                value: false,
                aborted: Some(cause),
            },
        }
    }

    fn eval_inner<E>(&self, eval: &mut dyn FnMut(u32) -> Result<bool, E>) -> Result<bool, E> {
        match self {
            LogicExpr::Leaf(id) => eval(*id),
            LogicExpr::And(children) => {
                for child in children {
                    if !child.eval_inner(eval)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            LogicExpr::Or(children) => {
                for child in children {
                    if child.eval_inner(eval)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    /// Rewrites the tree as a schedule of single-operator layers. Every
    /// compound node below the root becomes a layer bound to a fresh id
    /// above the largest step id, in post-order; the last layer is the root.
    pub fn layer_split(&self) -> Vec<Layer> {
        let mut next = self.max_step() + 1;
        let mut layers = Vec::new();
        let root = self.lower(&mut next, &mut layers);
        layers.push(Layer { binds: None, expr: root });
        layers
    }

    fn lower(&self, next: &mut u32, layers: &mut Vec<Layer>) -> LogicExpr {
        let rebuild = |children: &[LogicExpr], next: &mut u32, layers: &mut Vec<Layer>| -> Vec<LogicExpr> {
            children
                .iter()
                .map(|child| match child {
                    LogicExpr::Leaf(id) => LogicExpr::Leaf(*id),
                    compound => {
                        let expr = compound.lower(next, layers);
                        let id = *next;
                        *next += 1;
                        layers.push(Layer { binds: Some(id), expr });
                        LogicExpr::Leaf(id)
                    }
                })
                .collect()
        };
        match self {
            LogicExpr::Leaf(id) => LogicExpr::Leaf(*id),
            LogicExpr::And(children) => LogicExpr::And(rebuild(children, next, layers)),
            LogicExpr::Or(children) => LogicExpr::Or(rebuild(children, next, layers)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LazyOutcome<E> {
    pub value: bool,
    pub aborted: Option<E>,
}

/// One homogeneous step of a split schedule. `binds` names the synthetic
/// step that holds this layer's result; the final layer binds nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub binds: Option<u32>,
    pub expr: LogicExpr,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.binds {
            Some(id) => write!(f, "Step {id} = {}", self.expr),
            None => write!(f, "{}", self.expr),
        }
    }
}

/// Evaluates a schedule from [`LogicExpr::layer_split`] lazily: the final
/// layer drives evaluation and synthetic ids are computed on first reference,
/// so short-circuiting behaves exactly as on the original tree.
pub fn evaluate_layers_lazy<E>(layers: &[Layer], eval: &mut dyn FnMut(u32) -> Result<bool, E>) -> LazyOutcome<E> {
    let Some(root) = layers.last() else {
        return LazyOutcome {
            value: false,
            aborted: None,
        };
    };
    let bound: BTreeMap<u32, &LogicExpr> = layers
        .iter()
        .filter_map(|l| l.binds.map(|id| (id, &l.expr)))
        .collect();
    let mut memo: BTreeMap<u32, bool> = BTreeMap::new();

    fn resolve<E>(
        id: u32,
        bound: &BTreeMap<u32, &LogicExpr>,
        memo: &mut BTreeMap<u32, bool>,
        eval: &mut dyn FnMut(u32) -> Result<bool, E>,
    ) -> Result<bool, E> {
        let Some(expr) = bound.get(&id) else {
            return eval(id);
        };
        if let Some(value) = memo.get(&id) {
            return Ok(*value);
        }
        let value = expr.eval_inner(&mut |leaf| resolve(leaf, bound, memo, eval))?;
        memo.insert(id, value);
        Ok(value)
    }

    match root.expr.eval_inner(&mut |leaf| resolve(leaf, &bound, &mut memo, eval)) {
        Ok(value) => LazyOutcome { value, aborted: None },
        Err(cause) => LazyOutcome {
            value: false,
            aborted: Some(cause),
        },
    }
}

impl fmt::Display for LogicExpr {
    /// Canonical form: every compound node except the root is parenthesized.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_node(expr: &LogicExpr, root: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let (children, op) = match expr {
                LogicExpr::Leaf(id) => return write!(f, "Step {id}"),
                LogicExpr::And(children) => (children, " AND "),
                LogicExpr::Or(children) => (children, " OR "),
            };
            if !root {
                f.write_str("(")?;
            }
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    f.write_str(op)?;
                }
                write_node(child, false, f)?;
            }
            if !root {
                f.write_str(")")?;
            }
            Ok(())
        }
        write_node(self, true, f)
    }
}

pub fn format_logic(expr: &LogicExpr) -> String {
    expr.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    Step(u32),
    And,
    Or,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            chars.next();
            tokens.push(Token::Open);
        } else if c == ')' {
            chars.next();
            tokens.push(Token::Close);
        } else if c.is_ascii_alphabetic() {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if !c.is_ascii_alphabetic() {
                    break;
                }
                end = i + c.len_utf8();
                chars.next();
            }
            let word = text[start..end].to_ascii_uppercase();
            match word.as_str() {
                "AND" => tokens.push(Token::And),
                "OR" => tokens.push(Token::Or),
                "STEP" => {
                    while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
                        chars.next();
                    }
                    let mut digits = String::new();
                    while let Some(&(_, c)) = chars.peek() {
                        if !c.is_ascii_digit() {
                            break;
                        }
                        digits.push(c);
                        chars.next();
                    }
                    let id: u32 = digits
                        .parse()
                        .map_err(|_| format!("`Step` at offset {start} is not followed by a step number"))?;
                    if id == 0 {
                        return Err("step numbers start at 1".into());
                    }
                    tokens.push(Token::Step(id));
                }
                _ => return Err(format!("unknown token `{}`", &text[start..end])),
            }
        } else {
            return Err(format!("unexpected character `{c}` at offset {start}"));
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<LogicExpr, String> {
        let mut parts = vec![self.disj()?];
        while self.peek() == Some(Token::And) {
            self.pos += 1;
            parts.push(self.disj()?);
        }
        Ok(LogicExpr::join(parts, LogicExpr::And))
    }

    fn disj(&mut self) -> Result<LogicExpr, String> {
        let mut parts = vec![self.atom()?];
        while self.peek() == Some(Token::Or) {
            self.pos += 1;
            parts.push(self.atom()?);
        }
        Ok(LogicExpr::join(parts, LogicExpr::Or))
    }

    fn atom(&mut self) -> Result<LogicExpr, String> {
        let token = self.peek().ok_or("expression ends early")?;
        self.pos += 1;
        match token {
            Token::Step(id) => Ok(LogicExpr::Leaf(id)),
            Token::Open => {
                let inner = self.expr()?;
                if self.peek() != Some(Token::Close) {
                    return Err("unbalanced parentheses".into());
                }
                self.pos += 1;
                Ok(inner)
            }
            other => Err(format!("expected a step or `(`, found {other:?}")),
        }
    }
}

/// Parses the text after an `Execution Order:` prefix. Trailing text after a
/// complete expression is rejected.
pub fn parse_logic(text: &str) -> Result<LogicExpr, LogicError> {
    let malformed = |reason: String| LogicError::MalformedExpression {
        text: text.to_string(),
        reason,
    };
    let tokens = tokenize(text).map_err(malformed)?;
    if tokens.is_empty() {
        return Err(malformed("empty expression".into()));
    }
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr().map_err(malformed)?;
    if parser.pos != parser.tokens.len() {
        return Err(malformed(format!(
            "unexpected trailing {:?}",
            parser.tokens[parser.pos]
        )));
    }
    Ok(expr)
}
