use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::FormulaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Grasp,
    Release,
}

/// An atomic proposition: `grasp(i)` or `release(i, j)`.
///
/// Object and region numbers are 1-based, as written in formulas. Use
/// [`Predicate::object_index`] for the 0-based index into belief and world
/// vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub kind: ActionKind,
    pub object: u32,
    pub region: Option<u32>,
}

impl Predicate {
    pub fn grasp(object: u32) -> Self {
        Self { kind: ActionKind::Grasp, object, region: None }
    }

    pub fn release(object: u32, region: u32) -> Self {
        Self { kind: ActionKind::Release, object, region: Some(region) }
    }

    pub fn object_index(&self) -> usize {
        self.object as usize - 1
    }

    pub fn region_index(&self) -> Option<usize> {
        self.region.map(|r| r as usize - 1)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.region) {
            (ActionKind::Grasp, _) => write!(f, "grasp({})", self.object),
            (ActionKind::Release, Some(r)) => write!(f, "release({},{})", self.object, r),
            (ActionKind::Release, None) => write!(f, "release({},?)", self.object),
        }
    }
}

/// A set of predicates that hold simultaneously.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Symbol(BTreeSet<Predicate>);

impl Symbol {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn singleton(p: Predicate) -> Self {
        Self(BTreeSet::from([p]))
    }

    pub fn contains(&self, p: &Predicate) -> bool {
        self.0.contains(p)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Predicate> {
        self.0.iter()
    }

    /// The single predicate of a singleton symbol.
    pub fn only(&self) -> Option<Predicate> {
        if self.0.len() == 1 {
            self.0.iter().next().copied()
        } else {
            None
        }
    }

    /// A robot with one gripper executes at most one action at a time, so
    /// any two distinct predicates conflict.
    pub fn is_feasible(&self) -> bool {
        self.0.len() <= 1
    }
}

impl FromIterator<Predicate> for Symbol {
    fn from_iter<T: IntoIterator<Item = Predicate>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}

/// Negation-free, next-free LTL.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LtlFormula {
    True,
    Atom(Predicate),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Eventually(Box<LtlFormula>),
    Always(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
}

impl LtlFormula {
    pub fn atom(p: Predicate) -> Self {
        LtlFormula::Atom(p)
    }

    pub fn and(a: Self, b: Self) -> Self {
        LtlFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Self, b: Self) -> Self {
        LtlFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn eventually(a: Self) -> Self {
        LtlFormula::Eventually(Box::new(a))
    }

    pub fn always(a: Self) -> Self {
        LtlFormula::Always(Box::new(a))
    }

    pub fn until(a: Self, b: Self) -> Self {
        LtlFormula::Until(Box::new(a), Box::new(b))
    }

    /// Atomic propositions mentioned by the formula.
    pub fn predicates(&self) -> BTreeSet<Predicate> {
        let mut out = BTreeSet::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates(&self, out: &mut BTreeSet<Predicate>) {
        match self {
            LtlFormula::True => {}
            LtlFormula::Atom(p) => {
                out.insert(*p);
            }
            LtlFormula::Eventually(a) | LtlFormula::Always(a) => a.collect_predicates(out),
            LtlFormula::And(a, b) | LtlFormula::Or(a, b) | LtlFormula::Until(a, b) => {
                a.collect_predicates(out);
                b.collect_predicates(out);
            }
        }
    }

    pub fn has_always(&self) -> bool {
        match self {
            LtlFormula::True | LtlFormula::Atom(_) => false,
            LtlFormula::Always(_) => true,
            LtlFormula::Eventually(a) => a.has_always(),
            LtlFormula::And(a, b) | LtlFormula::Or(a, b) | LtlFormula::Until(a, b) => a.has_always() || b.has_always(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            LtlFormula::True | LtlFormula::Atom(_) => 0,
            LtlFormula::Eventually(a) | LtlFormula::Always(a) => 1 + a.depth(),
            LtlFormula::And(a, b) | LtlFormula::Or(a, b) | LtlFormula::Until(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            LtlFormula::Until(..) => 0,
            LtlFormula::Or(..) => 1,
            LtlFormula::And(..) => 2,
            LtlFormula::Eventually(_) | LtlFormula::Always(_) => 3,
            LtlFormula::True | LtlFormula::Atom(_) => 4,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, sub: &LtlFormula, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({sub})")
    } else {
        write!(f, "{sub}")
    }
}

impl fmt::Display for LtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            LtlFormula::True => f.write_str("true"),
            LtlFormula::Atom(a) => write!(f, "{a}"),
            LtlFormula::Eventually(a) => {
                f.write_str("F ")?;
                write_operand(f, a, a.precedence() < 3)
            }
            LtlFormula::Always(a) => {
                f.write_str("G ")?;
                write_operand(f, a, a.precedence() < 3)
            }
            LtlFormula::Until(a, b) => {
                write_operand(f, a, a.precedence() <= p)?;
                f.write_str(" U ")?;
                write_operand(f, b, b.precedence() < p)
            }
            LtlFormula::And(a, b) | LtlFormula::Or(a, b) => {
                write_operand(f, a, a.precedence() < p)?;
                f.write_str(if p == 2 { " & " } else { " | " })?;
                write_operand(f, b, b.precedence() <= p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(u32),
    LParen,
    RParen,
    Comma,
    Amp,
    Pipe,
    Bang,
}

fn lex(input: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            c if c.is_ascii_whitespace() => i += 1,
            '(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            ',' => {
                out.push((start, Tok::Comma));
                i += 1;
            }
            '!' => {
                out.push((start, Tok::Bang));
                i += 1;
            }
            '&' | '|' => {
                i += 1;
                if i < bytes.len() && bytes[i] as char == c {
                    i += 1;
                }
                out.push((start, if c == '&' { Tok::Amp } else { Tok::Pipe }));
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = input[start..i]
                    .parse()
                    .map_err(|_| FormulaError::Syntax { pos: start, msg: "number out of range".into() })?;
                out.push((start, Tok::Num(n)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(input[start..i].to_string())));
            }
            other => return Err(FormulaError::Syntax { pos: start, msg: format!("unexpected character `{other}`") }),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FormulaError> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn number(&mut self) -> Result<u32, FormulaError> {
        match self.peek() {
            Some(Tok::Num(n)) if *n >= 1 => {
                let n = *n;
                self.at += 1;
                Ok(n)
            }
            Some(Tok::Num(_)) => self.error("indices start at 1"),
            _ => self.error("expected a number"),
        }
    }

    fn until(&mut self) -> Result<LtlFormula, FormulaError> {
        let lhs = self.or()?;
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "U") {
            self.at += 1;
            let rhs = self.until()?;
            return Ok(LtlFormula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<LtlFormula, FormulaError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.at += 1;
            let rhs = self.and()?;
            lhs = LtlFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<LtlFormula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = LtlFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<LtlFormula, FormulaError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Bang) => Err(FormulaError::NegationExcluded { pos }),
            Some(Tok::Ident(s)) if s == "X" => Err(FormulaError::NextExcluded { pos }),
            Some(Tok::Ident(s)) if s == "F" => {
                self.at += 1;
                Ok(LtlFormula::eventually(self.unary()?))
            }
            Some(Tok::Ident(s)) if s == "G" => {
                self.at += 1;
                Ok(LtlFormula::always(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<LtlFormula, FormulaError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.at += 1;
                let inner = self.until()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match name.as_str() {
                    "true" => Ok(LtlFormula::True),
                    "grasp" => {
                        self.expect(Tok::LParen, "`(`")?;
                        let i = self.number()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(LtlFormula::Atom(Predicate::grasp(i)))
                    }
                    "release" => {
                        self.expect(Tok::LParen, "`(`")?;
                        let i = self.number()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let j = self.number()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(LtlFormula::Atom(Predicate::release(i, j)))
                    }
                    "U" => Err(FormulaError::Syntax { pos, msg: "`U` needs a left operand".into() }),
                    _ => Err(FormulaError::UnknownPredicate { pos, name }),
                }
            }
            Some(_) => self.error("expected a formula"),
            None => self.error("unexpected end of input"),
        }
    }
}

/// Parses the textual formula grammar:
///
/// ```text
/// until := or [ "U" until ]
/// or    := and { "|" and }
/// and   := unary { "&" unary }
/// unary := "F" unary | "G" unary | primary
/// prim  := "(" until ")" | "true" | grasp(i) | release(i,j)
/// ```
///
/// `!` and `X` are recognized only to report that they are outside the
/// supported fragment.
pub fn parse_formula(input: &str) -> Result<LtlFormula, FormulaError> {
    let toks = lex(input)?;
    let mut p = Parser { toks, at: 0, end: input.len() };
    let f = p.until()?;
    if p.at != p.toks.len() {
        return p.error("trailing input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let f = parse_formula("grasp(1) | grasp(2) & grasp(3)").unwrap();
        assert_eq!(
            f,
            LtlFormula::or(
                LtlFormula::atom(Predicate::grasp(1)),
                LtlFormula::and(LtlFormula::atom(Predicate::grasp(2)), LtlFormula::atom(Predicate::grasp(3)))
            )
        );
        let u = parse_formula("grasp(1) U grasp(2) U grasp(3)").unwrap();
        assert!(matches!(&u, LtlFormula::Until(_, r) if matches!(**r, LtlFormula::Until(..))));
        let e = parse_formula("F grasp(1) & grasp(2)").unwrap();
        assert!(matches!(e, LtlFormula::And(..)));
    }

    #[test]
    fn excluded_operators_report_position() {
        assert_eq!(parse_formula("F !grasp(1)"), Err(FormulaError::NegationExcluded { pos: 2 }));
        assert_eq!(parse_formula("grasp(1) & X grasp(2)"), Err(FormulaError::NextExcluded { pos: 11 }));
    }

    #[test]
    fn unknown_predicate() {
        assert!(matches!(parse_formula("F push(1)"), Err(FormulaError::UnknownPredicate { pos: 2, .. })));
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["", "F", "grasp(0)", "release(1)", "(grasp(1)", "grasp(1) grasp(2)", "U grasp(1)"] {
            assert!(parse_formula(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn printing_round_trips() {
        for s in [
            "F (grasp(1) & F release(1,2))",
            "G F grasp(1)",
            "(grasp(1) U grasp(2)) U grasp(3)",
            "grasp(1) & (grasp(2) | grasp(3))",
            "F (grasp(1) U release(1,1)) | true",
        ] {
            let f = parse_formula(s).unwrap();
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f, "{s}");
        }
    }

    #[test]
    fn symbol_feasibility() {
        assert!(Symbol::empty().is_feasible());
        assert!(Symbol::singleton(Predicate::grasp(1)).is_feasible());
        let s: Symbol = [Predicate::grasp(1), Predicate::release(1, 1)].into_iter().collect();
        assert!(!s.is_feasible());
        assert_eq!(s.to_string(), "{grasp(1), release(1,1)}");
    }
}
