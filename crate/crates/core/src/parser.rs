//! Text format for factored MDPs.
//!
//! ```text
//! ; comments run to end of line
//! (variables C P)
//! (action fix
//!   (C (C (true (1)) (false (0.9))))
//!   (P (0.5)))
//! (reward (C (true (10)) (false (0))))
//! (discount 0.9)
//! ```
//!
//! A CPT `(X tree)` gives the probability that `X` is true after the
//! action. Variables an action leaves out keep their current value.

use std::collections::btree_map::Entry;
use std::collections::HashSet;
use std::fmt::{self, Write};

use thiserror::Error;

use crate::diagram::{AddNode, DiagramError, DiagramRef, DiagramStore, VarId};
use crate::mdp::{persistence_cpt, ActionSpec, MdpSpec};
use crate::scalar::Scalar;

/// Byte range `start..end` of the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        SourceSpan { start, end }
    }

    /// 1-based line and column of `start` within `text`.
    pub fn line_col(&self, text: &str) -> (usize, usize) {
        let before = &text[..self.start.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
        (line, col)
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("second CPT for `{0}` in the same action")]
    DuplicateCpt(String),
    #[error("action `{0}` defined twice")]
    DuplicateAction(String),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(String),
    #[error("discount {0} outside [0, 1)")]
    DiscountOutOfRange(String),
    #[error("value `{0}` is not a finite decimal")]
    BadNumber(String),
    #[error(transparent)]
    Diagram(DiagramError),
}

#[derive(Error, Debug, Clone, PartialEq)]
#[error("{kind} at bytes {span}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: SourceSpan) -> Self {
        ParseError { kind, span }
    }

    fn syntax(msg: impl Into<String>, span: SourceSpan) -> Self {
        Self::new(ParseErrorKind::Syntax(msg.into()), span)
    }

    /// Message with a `line:col` prefix, for terminal output.
    pub fn render(&self, text: &str) -> String {
        let (line, col) = self.span.line_col(text);
        format!("{line}:{col}: {}", self.kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok<'_>, SourceSpan)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b';' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                out.push((Tok::Open, SourceSpan::new(i, i + 1)));
                i += 1;
            }
            b')' => {
                out.push((Tok::Close, SourceSpan::new(i, i + 1)));
                i += 1;
            }
            _ if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !matches!(bytes[i], b'(' | b')' | b';') {
                    i += 1;
                }
                let atom = &text[start..i];
                if !atom.is_ascii() {
                    // keep the span on a char boundary
                    let end = start + atom.chars().next().map_or(1, char::len_utf8);
                    return Err(ParseError::syntax("non-ASCII input", SourceSpan::new(start, end)));
                }
                out.push((Tok::Atom(atom), SourceSpan::new(start, i)));
            }
        }
    }
    out.push((Tok::End, SourceSpan::new(text.len(), text.len())));
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn is_decimal(s: &str) -> bool {
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], Some(&s[i + 1..])),
        None => (s, None),
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    let digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = digits(int) && digits(frac) && !(int.is_empty() && frac.is_empty());
    let exponent_ok = exponent.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && digits(e)
    });
    mantissa_ok && exponent_ok
}

const KEYWORDS: [&str; 7] = ["variables", "action", "reward", "discount", "true", "false", "inf"];

struct Parser<'a, 's, T: Scalar> {
    toks: Vec<(Tok<'a>, SourceSpan)>,
    pos: usize,
    store: &'s mut DiagramStore<T>,
    declared: Vec<(String, VarId)>,
}

#[derive(Clone, Copy)]
enum LeafRule {
    Probability,
    Reward,
}

impl<'a, 's, T: Scalar> Parser<'a, 's, T> {
    fn peek(&self) -> (Tok<'a>, SourceSpan) {
        self.toks[self.pos]
    }

    fn peek2(&self) -> Tok<'a> {
        self.toks.get(self.pos + 1).map_or(Tok::End, |t| t.0)
    }

    fn next(&mut self) -> (Tok<'a>, SourceSpan) {
        let t = self.toks[self.pos];
        if t.0 != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn open(&mut self, what: &str) -> Result<SourceSpan, ParseError> {
        match self.next() {
            (Tok::Open, span) => Ok(span),
            (_, span) => Err(ParseError::syntax(format!("expected `(` to start {what}"), span)),
        }
    }

    fn close(&mut self, what: &str) -> Result<SourceSpan, ParseError> {
        match self.next() {
            (Tok::Close, span) => Ok(span),
            (_, span) => Err(ParseError::syntax(format!("expected `)` to end {what}"), span)),
        }
    }

    fn atom(&mut self, what: &str) -> Result<(&'a str, SourceSpan), ParseError> {
        match self.next() {
            (Tok::Atom(a), span) => Ok((a, span)),
            (_, span) => Err(ParseError::syntax(format!("expected {what}"), span)),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<SourceSpan, ParseError> {
        match self.next() {
            (Tok::Atom(a), span) if a == kw => Ok(span),
            (_, span) => Err(ParseError::syntax(format!("expected `{kw}`"), span)),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(&'a str, SourceSpan), ParseError> {
        let (a, span) = self.atom(what)?;
        if !is_ident(a) || KEYWORDS.contains(&a) {
            return Err(ParseError::syntax(format!("`{a}` is not a valid {what}"), span));
        }
        Ok((a, span))
    }

    fn number(&mut self) -> Result<(T, &'a str, SourceSpan), ParseError> {
        let (a, span) = self.atom("a number")?;
        let bad = || ParseError::new(ParseErrorKind::BadNumber(a.to_string()), span);
        if !is_decimal(a) {
            return Err(bad());
        }
        let v = T::parse_literal(a).filter(|v| v.finite()).ok_or_else(bad)?;
        Ok((v, a, span))
    }

    fn lookup(&self, name: &str, span: SourceSpan) -> Result<VarId, ParseError> {
        self.declared
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .ok_or_else(|| ParseError::new(ParseErrorKind::UnknownVariable(name.to_string()), span))
    }

    fn diagram_err(e: DiagramError, span: SourceSpan) -> ParseError {
        ParseError::new(ParseErrorKind::Diagram(e), span)
    }

    fn spec(&mut self) -> Result<MdpSpec, ParseError> {
        self.variables()?;
        let mut actions: Vec<ActionSpec> = Vec::new();
        while self.peek().0 == Tok::Open && self.peek2() == Tok::Atom("action") {
            let (action, span) = self.action()?;
            if actions.iter().any(|a| a.name == action.name) {
                return Err(ParseError::new(ParseErrorKind::DuplicateAction(action.name), span));
            }
            actions.push(action);
        }
        if actions.is_empty() {
            return Err(ParseError::syntax("expected at least one action", self.peek().1));
        }

        self.open("the reward")?;
        self.keyword("reward")?;
        let reward = self.tree(LeafRule::Reward)?;
        self.close("the reward")?;

        self.open("the discount")?;
        self.keyword("discount")?;
        let (discount, text, span) = self.number()?;
        let discount = discount.as_f64();
        if !(0.0..1.0).contains(&discount) {
            return Err(ParseError::new(ParseErrorKind::DiscountOutOfRange(text.to_string()), span));
        }
        self.close("the discount")?;

        let (tok, span) = self.peek();
        if tok != Tok::End {
            return Err(ParseError::syntax("unexpected input after the discount", span));
        }

        let mut variables: Vec<VarId> = self.declared.iter().map(|&(_, v)| v).collect();
        variables.sort_unstable();
        Ok(MdpSpec { variables, actions, reward, discount })
    }

    fn variables(&mut self) -> Result<(), ParseError> {
        self.open("the variable list")?;
        self.keyword("variables")?;
        while let (Tok::Atom(_), _) = self.peek() {
            let (name, span) = self.ident("variable name")?;
            if self.declared.iter().any(|(n, _)| n == name) {
                return Err(ParseError::new(ParseErrorKind::DuplicateVariable(name.into()), span));
            }
            let var = match self.store.var(name) {
                Ok(v) => v,
                Err(_) => self.store.declare_var(name).map_err(|e| Self::diagram_err(e, span))?,
            };
            self.declared.push((name.to_string(), var));
        }
        if self.declared.is_empty() {
            return Err(ParseError::syntax("expected at least one variable", self.peek().1));
        }
        self.close("the variable list")?;
        Ok(())
    }

    fn action(&mut self) -> Result<(ActionSpec, SourceSpan), ParseError> {
        self.open("an action")?;
        self.keyword("action")?;
        let (name, name_span) = self.ident("action name")?;
        let mut action = ActionSpec::new(name);
        while self.peek().0 == Tok::Open {
            self.open("a CPT")?;
            let (var_name, span) = self.ident("variable name")?;
            let var = self.lookup(var_name, span)?;
            let cpt = self.tree(LeafRule::Probability)?;
            self.close("the CPT")?;
            if action.cpts.insert(var, cpt).is_some() {
                return Err(ParseError::new(ParseErrorKind::DuplicateCpt(var_name.into()), span));
            }
        }
        if action.cpts.is_empty() {
            return Err(ParseError::syntax("expected at least one CPT", self.peek().1));
        }
        self.close("the action")?;
        for &(_, var) in &self.declared {
            if let Entry::Vacant(slot) = action.cpts.entry(var) {
                slot.insert(persistence_cpt(self.store, var).map_err(|e| Self::diagram_err(e, name_span))?);
            }
        }
        Ok((action, name_span))
    }

    fn tree(&mut self, rule: LeafRule) -> Result<DiagramRef, ParseError> {
        self.open("a tree")?;
        let (head, span) = match self.peek() {
            (Tok::Atom(a), span) => (a, span),
            (_, span) => return Err(ParseError::syntax("expected a variable or a number", span)),
        };
        let node = if is_ident(head) && !KEYWORDS.contains(&head) {
            self.next();
            let var = self.lookup(head, span)?;
            self.open("the true branch")?;
            self.keyword("true")?;
            let hi = self.tree(rule)?;
            self.close("the true branch")?;
            self.open("the false branch")?;
            self.keyword("false")?;
            let lo = self.tree(rule)?;
            self.close("the false branch")?;
            self.store.ite(var, hi, lo).map_err(|e| Self::diagram_err(e, span))?
        } else {
            let (v, text, span) = self.number()?;
            if matches!(rule, LeafRule::Probability) && !(v >= T::zero() && v <= T::one()) {
                return Err(ParseError::new(ParseErrorKind::ProbabilityOutOfRange(text.to_string()), span));
            }
            self.store.mk_terminal(v).map_err(|e| Self::diagram_err(e, span))?
        };
        self.close("the tree")?;
        Ok(node)
    }
}

/// Parse `text`, building its diagrams in `store`. Variables already
/// declared in `store` under the same name are reused.
pub fn parse<T: Scalar>(text: &str, store: &mut DiagramStore<T>) -> Result<MdpSpec, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, store, declared: Vec::new() };
    p.spec()
}

/// Render `spec` in the text format. Each diagram is unfolded into a
/// decision tree following the variable ordering, so shared subgraphs
/// are written once per path.
pub fn emit<T: Scalar>(store: &DiagramStore<T>, spec: &MdpSpec) -> Result<String, DiagramError> {
    let mut out = String::new();
    out.push_str("(variables");
    for &v in &spec.variables {
        let _ = write!(out, " {}", store.base_name(v));
    }
    out.push_str(")\n");

    let mut seen = HashSet::new();
    for action in &spec.actions {
        if !seen.insert(&action.name) {
            continue;
        }
        let _ = writeln!(out, "(action {}", action.name);
        for (&var, &cpt) in &action.cpts {
            let _ = write!(out, "  ({} ", store.base_name(var));
            write_tree(store, cpt, 4, &mut out)?;
            out.push_str(")\n");
        }
        out.push_str(")\n");
    }
    out.push_str("(reward ");
    write_tree(store, spec.reward, 2, &mut out)?;
    out.push_str(")\n");
    let _ = writeln!(out, "(discount {})", spec.discount.literal());
    Ok(out)
}

fn write_tree<T: Scalar>(
    store: &DiagramStore<T>,
    f: DiagramRef,
    indent: usize,
    out: &mut String,
) -> Result<(), DiagramError> {
    match store.node(f)? {
        AddNode::Terminal(v) => {
            let _ = write!(out, "({})", v.literal());
        }
        AddNode::Internal { var, then_child, else_child } => {
            let pad = " ".repeat(indent);
            let _ = write!(out, "({}\n{pad}(true ", store.base_name(var));
            write_tree(store, then_child, indent + 2, out)?;
            let _ = write!(out, ")\n{pad}(false ");
            write_tree(store, else_child, indent + 2, out)?;
            out.push_str("))");
        }
    }
    Ok(())
}
