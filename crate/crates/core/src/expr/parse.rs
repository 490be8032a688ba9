use super::{Expr, Func, Var, VarGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| Error::Parse { offset: start, message: format!("bad number '{s}'") })?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let rest = &text[i..];
            let len: usize = rest
                .char_indices()
                .take_while(|(_, ch)| ch.is_alphanumeric() || *ch == '_')
                .map(|(_, ch)| ch.len_utf8())
                .sum();
            out.push((start, Tok::Ident(text[i..i + len].to_string())));
            i += len;
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => return Err(Error::Parse { offset: start, message: format!("unexpected character '{c}'") }),
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

fn variable(name: &str) -> Option<Var> {
    let (group, rest) = if let Some(r) = name.strip_prefix("theta") {
        (VarGroup::Theta, r)
    } else if let Some(r) = name.strip_prefix('θ') {
        (VarGroup::Theta, r)
    } else if let Some(r) = name.strip_prefix('x') {
        (VarGroup::X, r)
    } else if let Some(r) = name.strip_prefix('u') {
        (VarGroup::U, r)
    } else if let Some(r) = name.strip_prefix('w') {
        (VarGroup::W, r)
    } else {
        return None;
    };
    let rest = rest.strip_prefix('_').unwrap_or(rest);
    let index = if rest.is_empty() { 0 } else { rest.parse().ok()? };
    Some(Var { group, index })
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { offset: self.offset(), message: msg.into() })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::Mul(lhs.into(), rhs.into()) } else { Expr::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(self.unary()?.into()));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.power_rhs()?;
            return Ok(Expr::Pow(base.into(), exp.into()));
        }
        Ok(base)
    }

    fn power_rhs(&mut self) -> Result<Expr> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(self.power_rhs()?.into()));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.pos += 1;
                if let Some(Tok::LParen) = self.peek() {
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "log" | "ln" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        _ => return Err(Error::Parse { offset: at, message: format!("unknown function '{name}'") }),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    if let Some(Tok::Comma) = self.peek() {
                        return self.err(format!("arity mismatch: '{name}' takes one argument"));
                    }
                    self.expect_rparen()?;
                    return Ok(Expr::Func(func, arg.into()));
                }
                match variable(&name) {
                    Some(v) => Ok(Expr::Var(v)),
                    None => Err(Error::Parse { offset: at, message: format!("unknown identifier '{name}'") }),
                }
            }
            _ => self.err("expected a number, variable, function or '('"),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err("expected ')'"),
        }
    }
}

/// Parses DSL text such as `0.25*u0^4 - x0*u0 + exp(x0^4)`.
pub fn parse_expression(text: &str) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(Error::Parse { offset: 0, message: "empty expression".into() });
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}
