//! Small expression DSL for problem data.
//!
//! Variables: `t`, delayed state slots `x0..xN` (vector-valued, indexed as
//! `x0[2]`; a bare `x0` means `x0[0]`), control `a`, direction `w`.
//! Operators `+ - * / ^` (with `^` right-associative and binding tighter than
//! unary minus), functions `sin cos exp log abs sqrt min max step`.
//! `step(t0)` is the characteristic function of `(t0, T]` evaluated at the
//! current `t`.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
    Step,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            "step" => Func::Step,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    /// Kink-producing primitives disable analytic-gradient paths.
    fn smooth(self) -> bool {
        !matches!(self, Func::Abs | Func::Min | Func::Max | Func::Step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub enum Node {
    Num(f64),
    Time(Span),
    /// Delayed state slot `x<k>[i]`.
    State { slot: usize, index: usize, span: Span },
    Control { index: usize, span: Span },
    Direction { index: usize, span: Span },
    Unary(Box<Node>, Span),
    Binary { op: BinOp, lhs: Box<Node>, rhs: Box<Node>, span: Span },
    Call { func: Func, args: Vec<Node>, span: Span },
}

/// A parsed expression together with its source text. The source is kept
/// verbatim so scenario serialization round-trips exactly.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    root: Node,
}

/// Evaluation bindings. Roles that do not expose a variable leave the slice
/// empty; referencing it is rejected during scenario validation.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv<'a> {
    pub t: f64,
    pub states: &'a [&'a [f64]],
    pub control: &'a [f64],
    pub direction: &'a [f64],
}

impl<'a> EvalEnv<'a> {
    pub fn time_only(t: f64) -> EvalEnv<'a> {
        EvalEnv { t, states: &[], control: &[], direction: &[] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VarUsage {
    pub time: bool,
    /// Highest referenced state slot, if any, and highest component index.
    pub max_state_slot: Option<usize>,
    pub max_state_index: Option<usize>,
    pub max_control_index: Option<usize>,
    pub max_direction_index: Option<usize>,
}

impl Expression {
    pub fn parse(text: &str) -> Result<Expression> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.parse_expr()?;
        if p.pos != p.tokens.len() {
            let tok = &p.tokens[p.pos];
            return Err(Error::Parse {
                line: tok.span.line,
                col: tok.span.col,
                message: format!("unexpected token `{}`", tok.kind),
            });
        }
        Ok(Expression { source: text.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn constant(value: f64) -> Expression {
        Expression { source: format!("{value}"), root: Node::Num(value) }
    }

    pub fn eval(&self, env: &EvalEnv) -> Result<f64> {
        let v = eval_node(&self.root, env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::eval(env.t, format!("`{}` evaluated to a non-finite value", self.source)))
        }
    }

    /// True when no kink-producing primitive appears anywhere in the tree.
    pub fn is_smooth(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Num(_) | Node::Time(_) | Node::State { .. } | Node::Control { .. } | Node::Direction { .. } => true,
                Node::Unary(inner, _) => walk(inner),
                Node::Binary { lhs, rhs, .. } => walk(lhs) && walk(rhs),
                Node::Call { func, args, .. } => func.smooth() && args.iter().all(walk),
            }
        }
        walk(&self.root)
    }

    pub fn usage(&self) -> VarUsage {
        let mut u = VarUsage::default();
        fn walk(n: &Node, u: &mut VarUsage) {
            match n {
                Node::Num(_) => {}
                Node::Time(_) => u.time = true,
                Node::State { slot, index, .. } => {
                    u.max_state_slot = Some(u.max_state_slot.map_or(*slot, |s| s.max(*slot)));
                    u.max_state_index = Some(u.max_state_index.map_or(*index, |s| s.max(*index)));
                }
                Node::Control { index, .. } => {
                    u.max_control_index = Some(u.max_control_index.map_or(*index, |s| s.max(*index)));
                }
                Node::Direction { index, .. } => {
                    u.max_direction_index = Some(u.max_direction_index.map_or(*index, |s| s.max(*index)));
                }
                Node::Unary(inner, _) => walk(inner, u),
                Node::Binary { lhs, rhs, .. } => {
                    walk(lhs, u);
                    walk(rhs, u);
                }
                Node::Call { func, args, .. } => {
                    // step() reads the clock even though t is not written out.
                    if *func == Func::Step {
                        u.time = true;
                    }
                    for a in args {
                        walk(a, u);
                    }
                }
            }
        }
        walk(&self.root, &mut u);
        u
    }
}

fn eval_node(node: &Node, env: &EvalEnv) -> Result<f64> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Time(_) => env.t,
        Node::State { slot, index, span } => {
            let state = env.states.get(*slot).ok_or_else(|| {
                Error::eval(env.t, format!("{}:{}: state slot x{slot} not bound here", span.line, span.col))
            })?;
            *state.get(*index).ok_or_else(|| {
                Error::eval(env.t, format!("{}:{}: x{slot}[{index}] out of range", span.line, span.col))
            })?
        }
        Node::Control { index, span } => *env.control.get(*index).ok_or_else(|| {
            Error::eval(env.t, format!("{}:{}: a[{index}] not bound here", span.line, span.col))
        })?,
        Node::Direction { index, span } => *env.direction.get(*index).ok_or_else(|| {
            Error::eval(env.t, format!("{}:{}: w[{index}] not bound here", span.line, span.col))
        })?,
        Node::Unary(inner, _) => -eval_node(inner, env)?,
        Node::Binary { op, lhs, rhs, span } => {
            let a = eval_node(lhs, env)?;
            let b = eval_node(rhs, env)?;
            let v = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            };
            if !v.is_finite() {
                return Err(Error::eval(
                    env.t,
                    format!("{}:{}: operation produced a non-finite value", span.line, span.col),
                ));
            }
            v
        }
        Node::Call { func, args, span } => {
            let a0 = eval_node(&args[0], env)?;
            let v = match func {
                Func::Sin => a0.sin(),
                Func::Cos => a0.cos(),
                Func::Exp => a0.exp(),
                Func::Log => a0.ln(),
                Func::Abs => a0.abs(),
                Func::Sqrt => a0.sqrt(),
                Func::Min => a0.min(eval_node(&args[1], env)?),
                Func::Max => a0.max(eval_node(&args[1], env)?),
                Func::Step => {
                    if env.t > a0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            if !v.is_finite() {
                return Err(Error::eval(
                    env.t,
                    format!("{}:{}: function produced a non-finite value", span.line, span.col),
                ));
            }
            v
        }
    })
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(v) => write!(f, "{v}"),
            TokKind::Ident(s) => write!(f, "{s}"),
            TokKind::Plus => write!(f, "+"),
            TokKind::Minus => write!(f, "-"),
            TokKind::Star => write!(f, "*"),
            TokKind::Slash => write!(f, "/"),
            TokKind::Caret => write!(f, "^"),
            TokKind::LParen => write!(f, "("),
            TokKind::RParen => write!(f, ")"),
            TokKind::LBracket => write!(f, "["),
            TokKind::RBracket => write!(f, "]"),
            TokKind::Comma => write!(f, ","),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    span: Span,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    if text.trim().is_empty() {
        return Err(Error::Parse { line: 1, col: 1, message: "empty expression".into() });
    }
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let advance = |i: &mut usize, col: &mut usize| {
            *i += 1;
            *col += 1;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(&mut i, &mut col),
            '+' => {
                out.push(Token { kind: TokKind::Plus, span });
                advance(&mut i, &mut col);
            }
            '-' => {
                out.push(Token { kind: TokKind::Minus, span });
                advance(&mut i, &mut col);
            }
            '*' => {
                out.push(Token { kind: TokKind::Star, span });
                advance(&mut i, &mut col);
            }
            '/' => {
                out.push(Token { kind: TokKind::Slash, span });
                advance(&mut i, &mut col);
            }
            '^' => {
                out.push(Token { kind: TokKind::Caret, span });
                advance(&mut i, &mut col);
            }
            '(' => {
                out.push(Token { kind: TokKind::LParen, span });
                advance(&mut i, &mut col);
            }
            ')' => {
                out.push(Token { kind: TokKind::RParen, span });
                advance(&mut i, &mut col);
            }
            '[' => {
                out.push(Token { kind: TokKind::LBracket, span });
                advance(&mut i, &mut col);
            }
            ']' => {
                out.push(Token { kind: TokKind::RBracket, span });
                advance(&mut i, &mut col);
            }
            ',' => {
                out.push(Token { kind: TokKind::Comma, span });
                advance(&mut i, &mut col);
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent suffix
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lexeme: String = chars[start..i].iter().collect();
                let value: f64 = lexeme.parse().map_err(|_| Error::Parse {
                    line: span.line,
                    col: span.col,
                    message: format!("malformed number `{lexeme}`"),
                })?;
                col += i - start;
                out.push(Token { kind: TokKind::Num(value), span });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let lexeme: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(Token { kind: TokKind::Ident(lexeme), span });
            }
            other => {
                return Err(Error::Parse {
                    line: span.line,
                    col: span.col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser. Precedence: ^ > unary - > * / > + -, left-associative except ^.

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokKind, what: &str) -> Result<Span> {
        match self.bump() {
            Some(tok) if tok.kind == kind => Ok(tok.span),
            Some(tok) => Err(Error::Parse {
                line: tok.span.line,
                col: tok.span.col,
                message: format!("expected {what}, found `{}`", tok.kind),
            }),
            None => Err(self.eof(what)),
        }
    }

    fn eof(&self, what: &str) -> Error {
        let span = self.tokens.last().map(|t| t.span).unwrap_or(Span { line: 1, col: 1 });
        Error::Parse { line: span.line, col: span.col, message: format!("expected {what}, found end of input") }
    }

    fn parse_expr(&mut self) -> Result<Node> {
        let mut lhs = self.parse_term()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokKind::Plus => BinOp::Add,
                TokKind::Minus => BinOp::Sub,
                _ => break,
            };
            let span = tok.span;
            self.bump();
            let rhs = self.parse_term()?;
            lhs = Node::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<Node> {
        let mut lhs = self.parse_unary()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokKind::Star => BinOp::Mul,
                TokKind::Slash => BinOp::Div,
                _ => break,
            };
            let span = tok.span;
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Node::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Node> {
        if let Some(tok) = self.peek() {
            if tok.kind == TokKind::Minus {
                let span = tok.span;
                self.bump();
                let inner = self.parse_unary()?;
                return Ok(Node::Unary(Box::new(inner), span));
            }
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Node> {
        let base = self.parse_atom()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokKind::Caret {
                let span = tok.span;
                self.bump();
                // Right-associative; exponent admits unary minus (2^-3).
                let exp = self.parse_unary()?;
                return Ok(Node::Binary { op: BinOp::Pow, lhs: Box::new(base), rhs: Box::new(exp), span });
            }
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Node> {
        let tok = self.bump().ok_or_else(|| self.eof("an expression"))?;
        match tok.kind {
            TokKind::Num(v) => Ok(Node::Num(v)),
            TokKind::LParen => {
                let inner = self.parse_expr()?;
                self.expect(TokKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokKind::Ident(name) => self.parse_ident(name, tok.span),
            other => Err(Error::Parse {
                line: tok.span.line,
                col: tok.span.col,
                message: format!("expected an expression, found `{other}`"),
            }),
        }
    }

    fn parse_ident(&mut self, name: String, span: Span) -> Result<Node> {
        if let Some(func) = Func::from_name(&name) {
            self.expect(TokKind::LParen, "`(`")?;
            let mut args = vec![self.parse_expr()?];
            while matches!(self.peek().map(|t| &t.kind), Some(TokKind::Comma)) {
                self.bump();
                args.push(self.parse_expr()?);
            }
            self.expect(TokKind::RParen, "`)`")?;
            if args.len() != func.arity() {
                return Err(Error::Parse {
                    line: span.line,
                    col: span.col,
                    message: format!("{name} takes {} argument(s), got {}", func.arity(), args.len()),
                });
            }
            return Ok(Node::Call { func, args, span });
        }
        if name == "t" {
            return Ok(Node::Time(span));
        }
        if name == "a" || name == "w" {
            let index = self.parse_optional_index()?;
            return Ok(if name == "a" {
                Node::Control { index, span }
            } else {
                Node::Direction { index, span }
            });
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(slot) = rest.parse::<usize>() {
                let index = self.parse_optional_index()?;
                return Ok(Node::State { slot, index, span });
            }
        }
        Err(Error::Parse {
            line: span.line,
            col: span.col,
            message: format!("unknown identifier `{name}`"),
        })
    }

    fn parse_optional_index(&mut self) -> Result<usize> {
        if matches!(self.peek().map(|t| &t.kind), Some(TokKind::LBracket)) {
            self.bump();
            let tok = self.bump().ok_or_else(|| self.eof("an index"))?;
            let idx = match tok.kind {
                TokKind::Num(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
                other => {
                    return Err(Error::Parse {
                        line: tok.span.line,
                        col: tok.span.col,
                        message: format!("expected a nonnegative integer index, found `{other}`"),
                    })
                }
            };
            self.expect(TokKind::RBracket, "`]`")?;
            Ok(idx)
        } else {
            Ok(0)
        }
    }
}
