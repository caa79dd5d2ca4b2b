//! Generic expression trees read back from the s-expression rendering.
//!
//! This evaluator walks the tree node by node and shares no code with
//! [`TirExpr::eval`](crate::expr::TirExpr::eval), which makes it a useful
//! cross-check for the structured evaluator.

use crate::error::TirError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Tree<T> {
    Const(T),
    Var(usize),
    Unary(String, Box<Tree<T>>),
    Binary(char, Box<Tree<T>>, Box<Tree<T>>),
}

impl<T: Scalar> Tree<T> {
    pub fn node_count(&self) -> usize {
        match self {
            Tree::Const(_) | Tree::Var(_) => 1,
            Tree::Unary(_, a) => 1 + a.node_count(),
            Tree::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        match self {
            Tree::Const(c) => *c,
            Tree::Var(i) => x[*i],
            Tree::Unary(f, a) => {
                let v = a.eval(x);
                match f.as_str() {
                    "sin" => v.sin(),
                    "cos" => v.cos(),
                    "tan" => v.tan(),
                    "tanh" => v.tanh(),
                    "atan" => v.atan(),
                    "log" => v.ln(),
                    "exp" => v.exp(),
                    "sqrt" => v.sqrt(),
                    _ => T::nan(),
                }
            }
            Tree::Binary(op, a, b) => {
                let (l, r) = (a.eval(x), b.eval(x));
                match op {
                    '+' => l + r,
                    '-' => l - r,
                    '*' => l * r,
                    '/' => l / r,
                    // exponents are integral in every tree we print
                    '^' => match r.to_i32() {
                        Some(k) if T::from_i32(k) == Some(r) => l.powi(k),
                        _ => l.powf(r),
                    },
                    _ => T::nan(),
                }
            }
        }
    }
}

const UNARY: [&str; 8] = ["sin", "cos", "tan", "tanh", "atan", "log", "exp", "sqrt"];

fn tokenize(src: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in src.char_indices() {
        match c {
            '(' | ')' => {
                if let Some(s) = start.take() {
                    out.push(&src[s..i]);
                }
                out.push(&src[i..i + 1]);
            }
            c if c.is_whitespace() => {
                if let Some(s) = start.take() {
                    out.push(&src[s..i]);
                }
            }
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(s) = start {
        out.push(&src[s..]);
    }
    out
}

struct Parser<'a> {
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<&'a str, TirError> {
        let t = self
            .toks
            .get(self.pos)
            .copied()
            .ok_or_else(|| TirError::Parse("unexpected end of expression".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_close(&mut self) -> Result<(), TirError> {
        match self.next()? {
            ")" => Ok(()),
            t => Err(TirError::Parse(format!("expected ')', found '{t}'"))),
        }
    }

    fn tree<T: Scalar>(&mut self) -> Result<Tree<T>, TirError> {
        match self.next()? {
            "(" => {
                let head = self.next()?;
                let node = match head {
                    "+" | "-" | "*" | "/" | "^" => {
                        let a = self.tree()?;
                        let b = self.tree()?;
                        Tree::Binary(head.chars().next().unwrap(), Box::new(a), Box::new(b))
                    }
                    f if UNARY.contains(&f) => Tree::Unary(f.to_string(), Box::new(self.tree()?)),
                    other => return Err(TirError::Parse(format!("unknown operator '{other}'"))),
                };
                self.expect_close()?;
                Ok(node)
            }
            ")" => Err(TirError::Parse("unexpected ')'".into())),
            atom => atom_tree(atom),
        }
    }
}

fn atom_tree<T: Scalar>(atom: &str) -> Result<Tree<T>, TirError> {
    if let Some(idx) = atom.strip_prefix('x') {
        return idx
            .parse()
            .map(Tree::Var)
            .map_err(|_| TirError::Parse(format!("bad variable '{atom}'")));
    }
    T::from_str_radix(atom, 10)
        .map(Tree::Const)
        .map_err(|_| TirError::Parse(format!("bad number '{atom}'")))
}

/// Parses the s-expression syntax produced by `to_text(Style::SExpr)`.
pub fn parse<T: Scalar>(src: &str) -> Result<Tree<T>, TirError> {
    let mut p = Parser {
        toks: tokenize(src),
        pos: 0,
    };
    let tree = p.tree()?;
    if p.pos != p.toks.len() {
        return Err(TirError::Parse(format!("trailing input at token {}", p.pos)));
    }
    Ok(tree)
}
