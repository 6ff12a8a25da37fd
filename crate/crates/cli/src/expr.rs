//! Arithmetic expressions over named variables, used for inline coefficient
//! functions in configuration files.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, the functions `exp`,
//! `log`, `sqrt`, `abs`, the constants `pi` and `e`, and any names bound at
//! compile time. `^` is right-associative and binds tighter than unary minus.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub source: String,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in expression '{}': {}", self.source, self.message)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(vars);
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                }
            }
        }
    }

    /// Folds subtrees without variables.
    fn fold(self) -> Node {
        match self {
            Node::Neg(a) => match a.fold() {
                Node::Num(v) => Node::Num(-v),
                a => Node::Neg(Box::new(a)),
            },
            Node::Bin(op, a, b) => match (a.fold(), b.fold()) {
                (Node::Num(x), Node::Num(y)) => Node::Num(Node::Bin(op, Box::new(Node::Num(x)), Box::new(Node::Num(y))).eval(&[])),
                (a, b) => Node::Bin(op, Box::new(a), Box::new(b)),
            },
            Node::Call(f, a) => match a.fold() {
                Node::Num(x) => Node::Num(Node::Call(f, Box::new(Node::Num(x))).eval(&[])),
                a => Node::Call(f, Box::new(a)),
            },
            n => n,
        }
    }
}

/// A compiled expression in a fixed list of variables.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Arc<Node>,
    arity: usize,
}

impl Expr {
    /// Compiles `src` with free variables `vars` (in call order) and named
    /// constants.
    pub fn compile(src: &str, vars: &[&str], constants: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            src,
            tokens,
            pos: 0,
            vars,
            constants,
        };
        let node = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(p.error(format!("unexpected {}", p.tokens[p.pos])));
        }
        Ok(Expr {
            root: Arc::new(node.fold()),
            arity: vars.len(),
        })
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        debug_assert_eq!(vars.len(), self.arity);
        self.root.eval(vars)
    }

    /// The value when the expression has no variables left after folding.
    pub fn constant(&self) -> Option<f64> {
        match *self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }
}

/// Evaluates a closed expression.
pub fn eval_constant(src: &str, constants: &BTreeMap<String, f64>) -> Result<f64, ExprError> {
    let e = Expr::compile(src, &[], constants)?;
    Ok(e.eval(&[]))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "name '{s}'"),
            Tok::Op(c) => write!(f, "'{c}'"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Tok>, ExprError> {
    let err = |message: String| ExprError {
        source: src.to_string(),
        message,
    };
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let text = &src[start..i];
            let v = text.parse().map_err(|_| err(format!("bad number '{text}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[start..i].to_string()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(err(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Tok>,
    pos: usize,
    vars: &'a [&'a str],
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn error(&self, message: String) -> ExprError {
        ExprError {
            source: self.src.to_string(),
            message,
        }
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of input".into()));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Op('(') => {
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Op(c) => Err(self.error(format!("unexpected '{c}'"))),
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "exp" => Some(Func::Exp),
                    "log" | "ln" => Some(Func::Log),
                    "sqrt" => Some(Func::Sqrt),
                    "abs" => Some(Func::Abs),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect('(')?;
                    let arg = self.sum()?;
                    self.expect(')')?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                if let Some(v) = self.constants.get(&name) {
                    return Ok(Node::Num(*v));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    "inf" => Ok(Node::Num(f64::INFINITY)),
                    _ => Err(self.error(format!("unknown name '{name}'"))),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64) -> f64 {
        Expr::compile(src, &["x"], &BTreeMap::new()).unwrap().eval(&[x])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0), -4.0);
        assert_eq!(ev("2 ^ -1", 0.0), 0.5);
        assert_eq!(ev("(1 - x) / 2 - 1", 3.0), -2.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
    }

    #[test]
    fn functions_constants_and_scientific_notation() {
        assert!((ev("exp(log(x)) + sqrt(abs(-4))", 2.5) - 4.5).abs() < 1e-15);
        assert_eq!(ev("1.5e-3 * 2E2", 0.0), 0.3);
        assert_eq!(ev("pi", 0.0), std::f64::consts::PI);
        let c = BTreeMap::from([("mu".to_string(), 0.05)]);
        let e = Expr::compile("-mu * x * (1 - x)", &["x"], &c).unwrap();
        assert!((e.eval(&[0.5]) + 0.0125).abs() < 1e-17);
    }

    #[test]
    fn closed_expressions_fold() {
        let e = Expr::compile("2 * (3 + 1)", &["x"], &BTreeMap::new()).unwrap();
        assert_eq!(e.constant(), Some(8.0));
        assert_eq!(Expr::compile("x * 0", &["x"], &BTreeMap::new()).unwrap().constant(), None);
    }

    #[test]
    fn errors_are_reported() {
        for bad in ["1 +", "foo(x)", "x $ 2", "(x", "x y", "sqrt x"] {
            let err = Expr::compile(bad, &["x"], &BTreeMap::new()).unwrap_err();
            assert_eq!(err.source, bad);
        }
        let err = Expr::compile("z + 1", &["x"], &BTreeMap::new()).unwrap_err();
        assert!(err.message.contains("'z'"));
    }
}
