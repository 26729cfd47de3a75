//! Recursive-descent parser for the expression grammar.

use super::{BinOp, Expr, ExprError, Func, Result};

/// Names allowed in an expression: coordinates `x1..x{dim}` and declared parameters.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub dim: usize,
    pub params: Vec<String>,
}

impl Scope {
    pub fn new(dim: usize, params: &[&str]) -> Self {
        Self { dim, params: params.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: bool },
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut integer = true;
                if i < bytes.len() && bytes[i] == b'.' {
                    integer = false;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        integer = false;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &lx.src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ExprError::Syntax { offset: start, message: format!("bad number '{text}'") })?;
                lx.toks.push((Tok::Num { value, integer }, start));
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..i].to_string()), start));
            } else if b"+-*/^(),".contains(&c) {
                lx.toks.push((Tok::Sym(c as char), i));
                i += 1;
            } else {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax { offset: i, message: format!("unexpected character '{ch}'") });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: Option<&'s Scope>,
}

/// Parse with coordinates `x<k>` (k ≥ 1) and every other identifier taken as a parameter.
pub fn parse(src: &str) -> Result<Expr> {
    run(src, None)
}

/// Parse and check every identifier against `scope`.
pub fn parse_in(src: &str, scope: &Scope) -> Result<Expr> {
    run(src, Some(scope))
}

fn run(src: &str, scope: Option<&Scope>) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(ExprError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let toks = Lexer::run(src)?;
    let mut p = Parser { toks, pos: 0, scope };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::Sym(',') => Err(ExprError::Syntax { offset: p.offset(), message: "unexpected ','".into() }),
        t => Err(ExprError::Syntax { offset: p.offset(), message: format!("unexpected {}", describe(t)) }),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num { .. } => "number".into(),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::End => "end of input".into(),
    }
}

fn coordinate_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }
    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }
    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if !matches!(t.0, Tok::End) {
            self.pos += 1;
        }
        t
    }
    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Tok::Sym(s) if *s == c => {
                self.bump();
                Ok(())
            }
            t => Err(ExprError::Syntax { offset: self.offset(), message: format!("expected '{c}', found {}", describe(t)) }),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Tok::Sym('-')) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.pow()
    }

    fn pow(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !matches!(self.peek(), Tok::Sym('^')) {
            return Ok(base);
        }
        self.bump();
        let off = self.offset();
        match self.bump().0 {
            Tok::Num { value, integer: true } if value <= u32::MAX as f64 => Ok(Expr::PowInt(Box::new(base), value as u32)),
            Tok::Num { .. } => Err(ExprError::Syntax { offset: off, message: "exponent literal must be an integer".into() }),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(Expr::Pow(Box::new(base), Box::new(e)))
            }
            t => Err(ExprError::Syntax {
                offset: off,
                message: format!("expected integer or '(' after '^', found {}", describe(&t)),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, off) = self.bump();
        match tok {
            Tok::Num { value, .. } => Ok(Expr::Num(value)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    if matches!(self.peek(), Tok::Sym(',')) {
                        return Err(ExprError::Arity { func: name, offset: self.offset() });
                    }
                    self.expect(')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.resolve(name, off)
            }
            t => Err(ExprError::Syntax { offset: off, message: format!("unexpected {}", describe(&t)) }),
        }
    }

    fn resolve(&self, name: String, offset: usize) -> Result<Expr> {
        match (coordinate_index(&name), self.scope) {
            (Some(i), None) => Ok(Expr::Coord(i)),
            (Some(i), Some(s)) if i < s.dim => Ok(Expr::Coord(i)),
            (_, Some(s)) if s.params.contains(&name) => Ok(Expr::Param(name)),
            (None, None) => Ok(Expr::Param(name)),
            _ => Err(ExprError::UnknownIdentifier { name, offset }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_catalog_style_inputs() {
        assert!(parse("x1^2*ln(x1)").is_ok());
        let s = Scope::new(3, &["a1", "w"]);
        let e = parse_in("a1/x1^2 + w*x1^2", &s).unwrap();
        assert_eq!(e.params(), vec!["a1".to_string(), "w".to_string()]);
    }

    #[test]
    fn error_offsets() {
        assert_eq!(parse("ln("), Err(ExprError::Syntax { offset: 3, message: "unexpected end of input".into() }));
        assert!(matches!(parse("x1 +* 2"), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("ln(x1, x2)"), Err(ExprError::Arity { offset: 5, .. })));
        assert!(matches!(parse("x1^2.5"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse("x1 $"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse(""), Err(ExprError::Syntax { offset: 0, .. })));
        let s = Scope::new(2, &["a"]);
        assert_eq!(parse_in("a + x3", &s), Err(ExprError::UnknownIdentifier { name: "x3".into(), offset: 4 }));
        assert!(matches!(parse_in("b", &s), Err(ExprError::UnknownIdentifier { .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("-x1^2").unwrap();
        assert_eq!(e, Expr::Neg(Box::new(Expr::PowInt(Box::new(Expr::Coord(0)), 2))));
        let e = parse("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(&[], &Default::default()).unwrap(), -4.0);
        let e = parse("8 / 4 / 2").unwrap();
        assert_eq!(e.eval(&[], &Default::default()).unwrap(), 1.0);
        let e = parse("2 + 3 * 4 ^ 2").unwrap();
        assert_eq!(e.eval(&[], &Default::default()).unwrap(), 50.0);
    }

    #[test]
    fn print_parse_roundtrip() {
        for src in [
            "x1^2*ln(x1)",
            "a1/x1^2 + w*x1^2",
            "-(x1 + x2)*3",
            "1 - (2 - 3)",
            "(x1^2)^3",
            "x2^(x1 - 1)",
            "--x1",
            "sqrt(exp(x1)/cos(x2)) - -sin(0.125)",
            "1e-7*x1",
        ] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
