//! Pratt parser for the expression grammar.
//!
//! Binding strength, loosest first: `+ -`, `* /`, unary `-`/`+`, `^`.
//! `^` is right-associative and its right operand must fold to a constant.

use super::{Expr, ExprError, Func, Node, Variables};

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

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, start));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(syntax(start, format!("unexpected character `{ch}`")));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

const UNARY_BP: u8 = 5;

fn infix_bp(tok: &Tok) -> Option<(u8, u8)> {
    match tok {
        Tok::Plus | Tok::Minus => Some((1, 2)),
        Tok::Star | Tok::Slash => Some((3, 4)),
        Tok::Caret => Some((8, 7)),
        _ => None,
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a Variables,
}

impl Parser<'_> {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if t.0 != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        let (tok, off) = self.bump();
        if tok == want {
            Ok(())
        } else {
            Err(syntax(
                off,
                format!("expected {}, found {}", want.describe(), tok.describe()),
            ))
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Node, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let (tok, _) = self.peek().clone();
            let Some((lbp, rbp)) = infix_bp(&tok) else {
                break;
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs_offset = self.peek().1;
            let rhs = self.expr(rbp)?;
            lhs = match tok {
                Tok::Plus => Node::Add(Box::new(lhs), Box::new(rhs)),
                Tok::Minus => Node::Sub(Box::new(lhs), Box::new(rhs)),
                Tok::Star => Node::Mul(Box::new(lhs), Box::new(rhs)),
                Tok::Slash => Node::Div(Box::new(lhs), Box::new(rhs)),
                Tok::Caret => Node::Pow(Box::new(lhs), self.fold_exponent(rhs, rhs_offset)?),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn fold_exponent(&self, node: Node, offset: usize) -> Result<f64, ExprError> {
        let expr = Expr::from_parts(node, self.vars.names.clone());
        if !expr.is_constant() {
            return Err(syntax(offset, "exponent must be a constant"));
        }
        let point = vec![0.0; expr.nvars()];
        expr.eval(&point)
            .map_err(|_| syntax(offset, "exponent does not evaluate to a finite number"))
    }

    fn prefix(&mut self) -> Result<Node, ExprError> {
        let (tok, off) = self.bump();
        match tok {
            Tok::Num(x) => Ok(Node::Const(x)),
            Tok::Minus => match self.expr(UNARY_BP)? {
                Node::Const(c) => Ok(Node::Const(-c)),
                inner => Ok(Node::Neg(Box::new(inner))),
            },
            Tok::Plus => self.expr(UNARY_BP),
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().0 == Tok::LParen {
                    if let Some(func) = Func::from_name(&name) {
                        self.bump();
                        let arg = self.expr(0)?;
                        self.expect(Tok::RParen)?;
                        return Ok(Node::Call(func, Box::new(arg)));
                    }
                }
                match self.vars.lookup(&name) {
                    Some(i) => Ok(Node::Var(i)),
                    None if Func::from_name(&name).is_some() => {
                        Err(syntax(off, format!("function `{name}` needs an argument")))
                    }
                    None => Err(ExprError::UnknownVariable(name)),
                }
            }
            other => Err(syntax(
                off,
                format!("expected operand, found {}", other.describe()),
            )),
        }
    }
}

/// Parse against an explicit variable table (which may carry aliases).
pub fn parse_with(source: &str, vars: &Variables) -> Result<Expr, ExprError> {
    let toks = lex(source)?;
    let mut parser = Parser { toks, pos: 0, vars };
    let root = parser.expr(0)?;
    let (tok, off) = parser.bump();
    if tok != Tok::End {
        return Err(syntax(
            off,
            format!(
                "expected operator or end of input, found {}",
                tok.describe()
            ),
        ));
    }
    Ok(Expr::from_parts(root, vars.names.clone()))
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn eval(src: &str, q: f64, p: f64) -> f64 {
        parse(src, &["q", "p"]).unwrap().eval(&[q, p]).unwrap()
    }

    #[test]
    fn malformed_operator_sequence() {
        let err = parse("q +* p", &["q", "p"]).unwrap_err();
        assert!(
            matches!(err, ExprError::Syntax { offset: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn undeclared_identifier() {
        assert_eq!(
            parse("x+1", &["q", "p"]).unwrap_err(),
            ExprError::UnknownVariable("x".into())
        );
    }

    #[test]
    fn empty_and_unbalanced() {
        assert!(matches!(
            parse("", &["q"]).unwrap_err(),
            ExprError::Syntax { offset: 0, .. }
        ));
        assert!(matches!(
            parse("(q+1", &["q"]).unwrap_err(),
            ExprError::Syntax { offset: 4, .. }
        ));
        assert!(matches!(
            parse("q)", &["q"]).unwrap_err(),
            ExprError::Syntax { offset: 1, .. }
        ));
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("-q^2", 3.0, 0.0), -9.0);
        assert_eq!(eval("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(eval("1 + 2*3 - 4/2", 0.0, 0.0), 5.0);
        assert_eq!(eval("q^-2", 2.0, 0.0), 0.25);
        assert_eq!(eval("2*-q", 2.0, 0.0), -4.0);
        assert_eq!(eval("8 - 3 - 2", 0.0, 0.0), 3.0);
        assert_eq!(eval("8 / 4 / 2", 0.0, 0.0), 1.0);
    }

    #[test]
    fn exponent_must_be_constant() {
        let err = parse("q^p", &["q", "p"]).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 2, .. }));
        assert_eq!(eval("q^(1/2)", 4.0, 0.0), 2.0);
    }

    #[test]
    fn functions_and_scientific_literals() {
        assert!((eval("exp(ln(q)) + sqrt(p)", 2.0, 9.0) - 5.0).abs() < 1e-15);
        assert_eq!(eval("1.5e2 + .5", 0.0, 0.0), 150.5);
        assert!(parse("exp", &["q"]).is_err());
    }

    #[test]
    fn aliases_resolve() {
        let vars = Variables::new(&["q", "p"]).unwrap().with_alias("q1", "q");
        let e = parse_with("q1 + q", &vars).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0]).unwrap(), 4.0);
        assert_eq!(e.to_string(), "(q + q)");
    }
}
