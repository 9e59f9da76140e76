//! Arithmetic expressions in the variables `t`, `x`, `y`.
//!
//! Grammar: literals, `+ - * / ^`, unary minus and the functions
//! `sin cos exp sqrt tanh`. `^` binds tightest, then unary minus, then
//! `* /`, then `+ -`; every binary operator associates to the left, so
//! `2^3^2 = (2^3)^2 = 64`. Printing emits the minimal parentheses needed
//! for `parse(print(e))` to return `e` exactly.

use crate::error::ExprError;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    T,
    X,
    Y,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
        }
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

impl BinOp {
    fn glyph(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            Token::End => Ok(e),
            tok => Err(ExprError::Syntax {
                offset: p.offset(),
                message: format!("unexpected `{tok}`"),
            }),
        }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(e) => -e.eval(t, x, y),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(t, x, y), r.eval(t, x, y));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(t, x, y)),
        }
    }

    /// Variables occurring in the expression.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.vars().contains(&v)
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Bin(op, ..) => op.precedence(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.precedence() < min;
        if wrap {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Var(v) => write!(f, "{}", v.name())?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, PREC_NEG)?;
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                l.fmt_prec(f, p)?;
                write!(f, " {} ", op.glyph())?;
                // Left associativity: an equal-precedence right child needs parens.
                r.fmt_prec(f, p + 1)?;
            }
            Expr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if wrap {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Op(c) => write!(f, "{c}"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
            Token::Comma => write!(f, ","),
            Token::End => write!(f, "end of input"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push((Token::Op(c), i));
                i += 1;
            }
            '(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            ',' => {
                out.push((Token::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // Optional exponent part, only if followed by digits.
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
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("bad number `{text}`"),
                })?;
                out.push((Token::Num(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Token::Ident(src[start..i].to_string()), start));
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push((Token::End, src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Op('+') => BinOp::Add,
                Token::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Op('*') => BinOp::Mul,
                Token::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Token::Op('-')) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.atom()?;
        while matches!(self.peek(), Token::Op('^')) {
            self.bump();
            let rhs = self.atom()?;
            lhs = Expr::Bin(BinOp::Pow, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Ident(name) => match name.as_str() {
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                _ => {
                    if let Some(func) = Func::from_name(&name) {
                        self.call(func, &name, offset)
                    } else {
                        Err(ExprError::UnknownIdentifier { name, offset })
                    }
                }
            },
            Token::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            tok => Err(ExprError::Syntax {
                offset,
                message: format!("expected expression, found `{tok}`"),
            }),
        }
    }

    fn call(&mut self, func: Func, name: &str, offset: usize) -> Result<Expr, ExprError> {
        if !matches!(self.peek(), Token::LParen) {
            return Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected `(` after `{name}`"),
            });
        }
        self.bump();
        if matches!(self.peek(), Token::RParen) {
            self.bump();
            return Err(ExprError::ArityMismatch {
                name: name.to_string(),
                got: 0,
                offset,
            });
        }
        let arg = self.expr()?;
        let mut extra = 0;
        while matches!(self.peek(), Token::Comma) {
            self.bump();
            self.expr()?;
            extra += 1;
        }
        self.expect_rparen()?;
        if extra > 0 {
            return Err(ExprError::ArityMismatch {
                name: name.to_string(),
                got: 1 + extra,
                offset,
            });
        }
        Ok(Expr::Call(func, Box::new(arg)))
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if matches!(self.peek(), Token::RParen) {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected `)`, found `{}`", self.peek()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eval(src: &str, t: f64, x: f64, y: f64) -> f64 {
        Expr::parse(src).unwrap().eval(t, x, y)
    }

    #[test]
    fn evaluates_basic_arithmetic() {
        let v = eval(
            "1 + 0.3*sin(x)*sin(y)",
            0.0,
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
        );
        assert_relative_eq!(v, 1.3, epsilon = 1e-15);
    }

    #[test]
    fn exp_of_minus_t_at_one() {
        assert_eq!(eval("exp(-t)", 1.0, 0.0, 0.0), 0.36787944117144233);
    }

    #[test]
    fn caret_is_left_associative() {
        assert_eq!(eval("2 ^ 3 ^ 2", 0.0, 0.0, 0.0), 64.0);
    }

    #[test]
    fn unary_minus_binds_looser_than_caret() {
        assert_eq!(eval("-2^2", 0.0, 0.0, 0.0), -4.0);
    }

    #[test]
    fn precedence_of_products_and_sums() {
        assert_eq!(eval("2 + 3 * 4", 0.0, 0.0, 0.0), 14.0);
        assert_eq!(eval("2 * 3 + 4 / 2", 0.0, 0.0, 0.0), 8.0);
        assert_eq!(eval("10 - 4 - 3", 0.0, 0.0, 0.0), 3.0);
    }

    #[test]
    fn syntax_error_reports_offset() {
        match Expr::parse("1 + * 2") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_reports_name_and_offset() {
        match Expr::parse("sin(q)") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "q");
                assert_eq!(offset, 4);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn arity_mismatch_detected() {
        match Expr::parse("sin(x, y)") {
            Err(ExprError::ArityMismatch { name, got, .. }) => {
                assert_eq!(name, "sin");
                assert_eq!(got, 2);
            }
            other => panic!("expected arity mismatch, got {other:?}"),
        }
        assert!(matches!(
            Expr::parse("sqrt()"),
            Err(ExprError::ArityMismatch { got: 0, .. })
        ));
    }

    #[test]
    fn scientific_notation_and_identifier_e_are_distinguished() {
        assert_eq!(eval("2e-3", 0.0, 0.0, 0.0), 0.002);
        assert_eq!(eval("1.5E+2", 0.0, 0.0, 0.0), 150.0);
        // A bare exponent marker is not part of the number, so `e` is left
        // over as a stray identifier.
        assert!(matches!(Expr::parse("2e"), Err(ExprError::Syntax { offset: 1, .. })));
        assert!(matches!(
            Expr::parse("2*e"),
            Err(ExprError::UnknownIdentifier { offset: 2, .. })
        ));
    }

    #[test]
    fn vars_are_collected() {
        let e = Expr::parse("sin(x) * exp(-t) + 1").unwrap();
        let vars = e.vars();
        assert!(vars.contains(&Var::T));
        assert!(vars.contains(&Var::X));
        assert!(!vars.contains(&Var::Y));
    }

    #[test]
    fn print_parse_round_trip_is_exact() {
        for src in [
            "1 + 0.3*sin(x)*sin(y)",
            "-(x*y) + 2^3^2",
            "(1+x)^2 / (1 - tanh(t))",
            "sqrt(x^2 + y^2) - exp(-(t^2))",
            "-x^2",
            "2 - -3",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_string();
            let reparsed = Expr::parse(&printed).unwrap();
            assert_eq!(e, reparsed, "round trip failed for `{src}` -> `{printed}`");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_expr() -> impl Strategy<Value = Expr> {
            let leaf = prop_oneof![
                (0.0..100.0f64).prop_map(Expr::Num),
                Just(Expr::Var(Var::T)),
                Just(Expr::Var(Var::X)),
                Just(Expr::Var(Var::Y)),
            ];
            leaf.prop_recursive(4, 32, 2, |inner| {
                prop_oneof![
                    (inner.clone(), inner.clone(), 0..5usize).prop_map(|(l, r, op)| {
                        let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][op];
                        Expr::Bin(op, Box::new(l), Box::new(r))
                    }),
                    inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                    (inner, 0..5usize).prop_map(|(e, f)| {
                        let f = [Func::Sin, Func::Cos, Func::Exp, Func::Sqrt, Func::Tanh][f];
                        Expr::Call(f, Box::new(e))
                    }),
                ]
            })
        }

        proptest! {
            #[test]
            fn printed_form_reparses_to_same_tree(e in arb_expr()) {
                let printed = e.to_string();
                let reparsed = Expr::parse(&printed).unwrap();
                prop_assert_eq!(e, reparsed);
            }
        }
    }
}
