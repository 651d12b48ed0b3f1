//! Model-file parser.
//!
//! ```text
//! dims <n> <q> <m> <p>
//! f1 = <expr>
//! ...
//! h1 = <expr>
//! ```
//!
//! `#` starts a comment. Expressions use `+ - * /`, integer powers `^k`,
//! unary minus, and `sin cos exp tanh sqrt`.

use crate::error::ModelError;
use crate::model::expr::{BinaryOp, Expr, UnaryOp, Var};
use crate::model::system::{Dims, SystemSpec};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn lex(src: &str, line: usize, col0: usize) -> Result<Vec<Token>, ModelError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = col0 + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, column });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ModelError::Syntax {
                line,
                column,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                column,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
            continue;
        }
        return Err(ModelError::Syntax {
            line,
            column,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::End,
        column: col0 + chars.len(),
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    line: usize,
    dims: &'a Dims,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn column(&self) -> usize {
        self.toks[self.pos].column
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ModelError {
        ModelError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ModelError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::unary(UnaryOp::Neg, self.unary()?))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ModelError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let k = self.integer_exponent()?;
        Ok(Expr::powi(base, k))
    }

    fn integer_exponent(&mut self) -> Result<i32, ModelError> {
        let parenthesized = *self.peek() == Tok::LParen;
        if parenthesized {
            self.bump();
        }
        let sign = match self.peek() {
            Tok::Minus => {
                self.bump();
                -1
            }
            Tok::Plus => {
                self.bump();
                1
            }
            _ => 1,
        };
        let k = match self.peek().clone() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                self.bump();
                sign * v as i32
            }
            _ => return Err(self.error("exponent must be an integer literal")),
        };
        if parenthesized {
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(k)
    }

    fn atom(&mut self) -> Result<Expr, ModelError> {
        let column = self.column();
        match self.bump().tok {
            Tok::Num(v) => Ok(Expr::constant(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(op) = UnaryOp::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::unary(op, arg));
                }
                self.variable(&name, column).map(Expr::var)
            }
            Tok::End => Err(ModelError::Syntax {
                line: self.line,
                column,
                message: "unexpected end of expression".into(),
            }),
            other => Err(ModelError::Syntax {
                line: self.line,
                column,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn variable(&self, name: &str, column: usize) -> Result<Var, ModelError> {
        let unknown = || ModelError::Syntax {
            line: self.line,
            column,
            message: format!("unknown identifier `{name}`"),
        };
        let mut chars = name.chars();
        let prefix = chars.next().ok_or_else(unknown)?;
        let digits = chars.as_str();
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(unknown());
        }
        let k: usize = digits.parse().map_err(|_| unknown())?;
        let (limit, make): (usize, fn(usize) -> Var) = match prefix {
            'x' => (self.dims.n, Var::x),
            'u' => (self.dims.q, Var::u),
            'd' => (self.dims.m, Var::d),
            _ => return Err(unknown()),
        };
        if k == 0 || k > limit {
            return Err(ModelError::UndeclaredVariable {
                line: self.line,
                column,
                name: name.to_string(),
            });
        }
        Ok(make(k - 1))
    }
}

/// Parse a standalone expression against the given dimensions.
pub fn parse_expr(src: &str, dims: &Dims) -> Result<Expr, ModelError> {
    parse_expr_at(src, dims, 1, 1)
}

fn parse_expr_at(src: &str, dims: &Dims, line: usize, col0: usize) -> Result<Expr, ModelError> {
    let toks = lex(src, line, col0)?;
    let mut p = Parser {
        toks,
        pos: 0,
        line,
        dims,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_dims(body: &str, line: usize) -> Result<Dims, ModelError> {
    let syntax = |message: String| ModelError::Syntax {
        line,
        column: 1,
        message,
    };
    let mut words = body.split_whitespace();
    if words.next() != Some("dims") {
        return Err(syntax("first line must be `dims n q m p`".into()));
    }
    let vals: Vec<usize> = words
        .map(|w| {
            w.parse::<usize>()
                .map_err(|_| syntax(format!("`{w}` is not a non-negative integer")))
        })
        .collect::<Result<_, _>>()?;
    if vals.len() != 4 {
        return Err(syntax(format!("`dims` needs 4 integers, got {}", vals.len())));
    }
    let dims = Dims {
        n: vals[0],
        q: vals[1],
        m: vals[2],
        p: vals[3],
    };
    if dims.n == 0 || dims.p == 0 {
        return Err(ModelError::DimensionMismatch(
            "state and output dimensions must be at least 1".into(),
        ));
    }
    Ok(dims)
}

/// Parse a model file into a [`SystemSpec`] named `model`.
pub fn parse_model(text: &str) -> Result<SystemSpec, ModelError> {
    parse_model_named(text, "model")
}

pub fn parse_model_named(text: &str, name: &str) -> Result<SystemSpec, ModelError> {
    let mut dims: Option<Dims> = None;
    let mut f: Vec<Option<Expr>> = Vec::new();
    let mut h: Vec<Option<Expr>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let Some(dims) = dims.as_ref() else {
            let parsed = parse_dims(body, line)?;
            f = vec![None; parsed.n];
            h = vec![None; parsed.p];
            dims = Some(parsed);
            continue;
        };
        let eq = body.find('=').ok_or_else(|| ModelError::Syntax {
            line,
            column: 1,
            message: "expected `f<i> = <expr>` or `h<j> = <expr>`".into(),
        })?;
        let lhs = body[..eq].trim();
        let lhs_col = body.find(lhs).unwrap_or(0) + 1;
        let (slots, kind) = match lhs.chars().next() {
            Some('f') => (&mut f, 'f'),
            Some('h') => (&mut h, 'h'),
            _ => {
                return Err(ModelError::Syntax {
                    line,
                    column: lhs_col,
                    message: format!("left-hand side `{lhs}` must be f<i> or h<j>"),
                })
            }
        };
        let k: usize = lhs[1..].parse().map_err(|_| ModelError::Syntax {
            line,
            column: lhs_col,
            message: format!("malformed left-hand side `{lhs}`"),
        })?;
        if k == 0 || k > slots.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "line {line}: `{lhs}` exceeds declared {} count {}",
                kind,
                slots.len()
            )));
        }
        if slots[k - 1].is_some() {
            return Err(ModelError::DimensionMismatch(format!(
                "line {line}: `{lhs}` defined twice"
            )));
        }
        let expr = parse_expr_at(&body[eq + 1..], dims, line, eq + 2)?;
        slots[k - 1] = Some(expr);
    }

    let dims = dims.ok_or_else(|| ModelError::Syntax {
        line: 1,
        column: 1,
        message: "empty model file".into(),
    })?;
    let collect = |slots: Vec<Option<Expr>>, kind: char| -> Result<Vec<Expr>, ModelError> {
        slots
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                e.ok_or_else(|| {
                    ModelError::DimensionMismatch(format!("missing definition of {kind}{}", i + 1))
                })
            })
            .collect()
    };
    let f = collect(f, 'f')?;
    let h = collect(h, 'h')?;
    SystemSpec::new(name, dims, f, h)
}
