//! Expression grammar and the system-definition file format.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := ('+' | '-')? factor ('*' factor)*
//! factor := base ('^' integer)?
//! base   := integer ('/' integer)? | ident | '(' expr ')'
//! ```
//!
//! Multiplication is always explicit. A system file looks like
//!
//! ```text
//! affine
//! name: example
//! states: x1, x2
//! inputs: 1
//! f: [x2, 0]
//! g1: [0, 1]
//! h: [x1]
//! ```

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::model::AffineSystem;
use crate::symbolic::{is_reserved_name, Polynomial, Sym, SymbolNames};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error("undeclared identifier '{0}'")]
    UndeclaredIdentifier(String),
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
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
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "number '{n}'"),
            Tok::Ident(s) => write!(f, "identifier '{s}'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::Comma => f.write_str("','"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

/// Byte offset to 1-based line and column.
fn locate(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    resolve: &'a dyn Fn(&str) -> Option<Sym>,
}

fn lex(src: &str, start: usize, end: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut i = start;
    let mut out = Vec::new();
    while i < end {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let at = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '0'..='9' => {
                while i < end && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                out.push((Tok::Int(src[at..i].parse().expect("digits")), at));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < end && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                while i < end && bytes[i] == b'\'' {
                    i += 1;
                }
                out.push((Tok::Ident(src[at..i].to_string()), at));
                continue;
            }
            _ => {
                let ch = src[at..].chars().next().unwrap_or('?');
                let (line, col) = locate(src, at);
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnexpectedChar(ch),
                });
            }
        };
        out.push((tok, at));
        i += 1;
    }
    out.push((Tok::End, end));
    Ok(out)
}

impl<'a> Parser<'a> {
    fn new(
        src: &'a str,
        start: usize,
        end: usize,
        resolve: &'a dyn Fn(&str) -> Option<Sym>,
    ) -> Result<Self, ParseError> {
        Ok(Parser {
            src,
            toks: lex(src, start, end)?,
            pos: 0,
            resolve,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, offset: usize, kind: ParseErrorKind) -> ParseError {
        let (line, col) = locate(self.src, offset);
        ParseError { line, col, kind }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        self.error_at(
            self.offset(),
            ParseErrorKind::Unexpected {
                expected: expected.to_string(),
                found: self.peek().to_string(),
            },
        )
    }

    fn expect(&mut self, t: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let negate = match self.peek() {
            Tok::Minus => {
                self.bump();
                true
            }
            Tok::Plus => {
                self.bump();
                false
            }
            _ => false,
        };
        let mut acc = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            acc = &acc * &self.factor()?;
        }
        Ok(if negate { -acc } else { acc })
    }

    fn factor(&mut self) -> Result<Polynomial, ParseError> {
        let base = self.base()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let at = self.offset();
            match self.bump() {
                Tok::Int(e) => {
                    let e: u32 = e.try_into().map_err(|_| {
                        self.error_at(at, ParseErrorKind::Invalid("exponent too large".into()))
                    })?;
                    Ok(base.pow(e))
                }
                _ => {
                    self.pos -= 1;
                    Err(self.unexpected("a nonnegative integer exponent"))
                }
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Polynomial, ParseError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                if *self.peek() == Tok::Slash {
                    self.bump();
                    let dat = self.offset();
                    match self.bump() {
                        Tok::Int(d) if !d.is_zero() => {
                            Ok(Polynomial::constant(BigRational::new(n, d)))
                        }
                        Tok::Int(_) => Err(self.error_at(
                            dat,
                            ParseErrorKind::Invalid("zero denominator".into()),
                        )),
                        _ => {
                            self.pos -= 1;
                            Err(self.unexpected("an integer denominator"))
                        }
                    }
                } else {
                    Ok(Polynomial::constant(BigRational::from_integer(n)))
                }
            }
            Tok::Ident(name) => {
                self.bump();
                match (self.resolve)(&name) {
                    Some(s) => Ok(Polynomial::var(s)),
                    None => Err(self.error_at(at, ParseErrorKind::UndeclaredIdentifier(name))),
                }
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            _ => Err(self.unexpected("a number, identifier or '('")),
        }
    }

    fn vector(&mut self) -> Result<Vec<Polynomial>, ParseError> {
        self.expect(Tok::LBracket, "'['")?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RBracket {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBracket => {
                    self.bump();
                    return Ok(out);
                }
                _ => return Err(self.unexpected("',' or ']'")),
            }
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }
}

/// Parses a single expression; identifiers are looked up through `resolve`.
pub fn parse_expression(
    text: &str,
    resolve: &dyn Fn(&str) -> Option<Sym>,
) -> Result<Polynomial, ParseError> {
    let mut p = Parser::new(text, 0, text.len(), resolve)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parses an expression over the given state names plus the reserved families
/// (`u1'`, `y2''`, `t`).
pub fn parse_with_names(text: &str, names: &SymbolNames) -> Result<Polynomial, ParseError> {
    parse_expression(text, &|s| names.resolve(s))
}

/// Parses a polynomial in the time symbol `t` only.
pub fn parse_time_polynomial(text: &str) -> Result<Polynomial, ParseError> {
    parse_expression(text, &|s| (s == "t").then_some(Sym::Time))
}

struct Entry {
    key: String,
    key_at: usize,
    value_start: usize,
    value_end: usize,
}

fn blank_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        match line.find('#') {
            Some(i) => {
                out.push_str(&line[..i]);
                for ch in line[i..].chars() {
                    if ch == '\n' {
                        out.push('\n');
                    } else {
                        // keep byte offsets stable
                        out.extend(std::iter::repeat_n(' ', ch.len_utf8()));
                    }
                }
            }
            None => out.push_str(line),
        }
    }
    out
}

fn error_at(src: &str, offset: usize, kind: ParseErrorKind) -> ParseError {
    let (line, col) = locate(src, offset);
    ParseError { line, col, kind }
}

fn bracket_balance(s: &str) -> i64 {
    s.chars().fold(0, |acc, c| match c {
        '[' => acc + 1,
        ']' => acc - 1,
        _ => acc,
    })
}

/// Parses a system-definition file.
pub fn parse_system(text: &str) -> Result<AffineSystem, ParseError> {
    let src = blank_comments(text);
    let mut lines: Vec<(usize, &str)> = Vec::new();
    let mut offset = 0;
    for line in src.split_inclusive('\n') {
        lines.push((offset, line));
        offset += line.len();
    }

    let mut idx = 0;
    let next_nonblank = |idx: &mut usize| {
        while *idx < lines.len() && lines[*idx].1.trim().is_empty() {
            *idx += 1;
        }
    };
    next_nonblank(&mut idx);
    if idx >= lines.len() || lines[idx].1.trim() != "affine" {
        let at = lines.get(idx).map_or(src.len(), |l| l.0 + leading_ws(l.1));
        return Err(error_at(
            &src,
            at,
            ParseErrorKind::Invalid("expected header 'affine'".into()),
        ));
    }
    idx += 1;

    let mut entries: Vec<Entry> = Vec::new();
    loop {
        next_nonblank(&mut idx);
        if idx >= lines.len() {
            break;
        }
        let (start, line) = lines[idx];
        let key_at = start + leading_ws(line);
        let Some(colon) = line.find(':') else {
            return Err(error_at(
                &src,
                key_at,
                ParseErrorKind::Invalid("expected 'key: value'".into()),
            ));
        };
        let key = line[..colon].trim().to_string();
        let value_start = start + colon + 1;
        let mut value_end = start + line.len();
        let mut balance = bracket_balance(&line[colon + 1..]);
        idx += 1;
        while balance > 0 && idx < lines.len() {
            let (s, l) = lines[idx];
            balance += bracket_balance(l);
            value_end = s + l.len();
            idx += 1;
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(error_at(
                &src,
                key_at,
                ParseErrorKind::Invalid(format!("duplicate key '{key}'")),
            ));
        }
        entries.push(Entry {
            key,
            key_at,
            value_start,
            value_end,
        });
    }

    let find = |k: &str| entries.iter().find(|e| e.key == k);
    let missing = |k: &str| {
        error_at(
            &src,
            src.len(),
            ParseErrorKind::Invalid(format!("missing key '{k}'")),
        )
    };

    for e in &entries {
        let known = matches!(e.key.as_str(), "name" | "states" | "inputs" | "f" | "h")
            || e
                .key
                .strip_prefix('g')
                .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
        if !known {
            return Err(error_at(
                &src,
                e.key_at,
                ParseErrorKind::Invalid(format!("unknown key '{}'", e.key)),
            ));
        }
    }

    let name = find("name").map(|e| src[e.value_start..e.value_end].trim().to_string());

    let states_entry = find("states").ok_or_else(|| missing("states"))?;
    let states = parse_name_list(&src, states_entry)?;
    let names = SymbolNames::new(states.clone());

    let inputs_entry = find("inputs").ok_or_else(|| missing("inputs"))?;
    let no_resolve = |_: &str| None;
    let mut ip = Parser::new(
        &src,
        inputs_entry.value_start,
        inputs_entry.value_end,
        &no_resolve,
    )?;
    let at = ip.offset();
    let m = match ip.bump() {
        Tok::Int(v) if v > BigInt::zero() => usize::try_from(v).map_err(|_| {
            error_at(&src, at, ParseErrorKind::Invalid("input count too large".into()))
        })?,
        _ => {
            ip.pos = 0;
            return Err(ip.unexpected("a positive input count"));
        }
    };
    ip.finish()?;

    let resolve = |s: &str| {
        states
            .iter()
            .position(|n| n == s)
            .map(Sym::state)
    };
    let n = states.len();
    let vector = |key: &str, len: Option<usize>| -> Result<Vec<Polynomial>, ParseError> {
        let e = find(key).ok_or_else(|| missing(key))?;
        let mut p = Parser::new(&src, e.value_start, e.value_end, &resolve)?;
        let at = p.offset();
        let v = p.vector()?;
        p.finish()?;
        if let Some(len) = len {
            if v.len() != len {
                return Err(error_at(
                    &src,
                    at,
                    ParseErrorKind::Dimension(format!(
                        "{key} has {} entries, expected {len}",
                        v.len()
                    )),
                ));
            }
        }
        Ok(v)
    };

    let f = vector("f", Some(n))?;
    let mut g = Vec::with_capacity(m);
    for i in 1..=m {
        g.push(vector(&format!("g{i}"), Some(n))?);
    }
    for e in &entries {
        if let Some(d) = e.key.strip_prefix('g') {
            if let Ok(i) = d.parse::<usize>() {
                if i == 0 || i > m {
                    return Err(error_at(
                        &src,
                        e.key_at,
                        ParseErrorKind::Dimension(format!(
                            "input column '{}' but the system has {m} inputs",
                            e.key
                        )),
                    ));
                }
            }
        }
    }
    let h = vector("h", None)?;
    if h.is_empty() {
        let e = find("h").expect("parsed above");
        return Err(error_at(
            &src,
            e.value_start,
            ParseErrorKind::Dimension("h must have at least one entry".into()),
        ));
    }

    Ok(AffineSystem {
        name,
        names,
        f,
        g,
        h,
    })
}

fn leading_ws(s: &str) -> usize {
    s.len() - s.trim_start().len()
}

fn parse_name_list(src: &str, e: &Entry) -> Result<Vec<String>, ParseError> {
    let none = |_: &str| None;
    let mut p = Parser::new(src, e.value_start, e.value_end, &none)?;
    let mut out: Vec<String> = Vec::new();
    loop {
        let at = p.offset();
        match p.bump() {
            Tok::Ident(name) => {
                if name.contains('\'') || is_reserved_name(&name) {
                    return Err(error_at(
                        src,
                        at,
                        ParseErrorKind::Invalid(format!("'{name}' is a reserved name")),
                    ));
                }
                if out.contains(&name) {
                    return Err(error_at(
                        src,
                        at,
                        ParseErrorKind::Invalid(format!("state '{name}' declared twice")),
                    ));
                }
                out.push(name);
            }
            _ => {
                p.pos -= 1;
                return Err(p.unexpected("a state name"));
            }
        }
        match p.peek() {
            Tok::Comma => {
                p.bump();
            }
            Tok::End => return Ok(out),
            _ => return Err(p.unexpected("',' or end of line")),
        }
    }
}

/// Renders a system in the file format accepted by [`parse_system`].
pub fn write_system(sys: &AffineSystem) -> String {
    let names = &sys.names;
    let vec = |v: &[Polynomial]| {
        format!(
            "[{}]",
            v.iter()
                .map(|p| p.fmt_with(names))
                .collect::<Vec<_>>()
                .join(", ")
        )
    };
    let mut out = String::from("affine\n");
    if let Some(name) = &sys.name {
        out.push_str(&format!("name: {name}\n"));
    }
    out.push_str(&format!("states: {}\n", names.states().join(", ")));
    out.push_str(&format!("inputs: {}\n", sys.m()));
    out.push_str(&format!("f: {}\n", vec(&sys.f)));
    for (i, col) in sys.g.iter().enumerate() {
        out.push_str(&format!("g{}: {}\n", i + 1, vec(col)));
    }
    out.push_str(&format!("h: {}\n", vec(&sys.h)));
    out
}

/// Parses an assignment of rational values such as `x1=1/2, x2=-3`.
pub fn parse_point(
    text: &str,
    names: &SymbolNames,
) -> Result<BTreeMap<Sym, BigRational>, ParseError> {
    let mut out = BTreeMap::new();
    let mut offset = 0;
    for part in text.split(',') {
        let at = offset;
        offset += part.len() + 1;
        let Some((k, v)) = part.split_once('=') else {
            return Err(error_at(
                text,
                at,
                ParseErrorKind::Invalid("expected name=value".into()),
            ));
        };
        let sym = names.resolve(k.trim()).ok_or_else(|| {
            error_at(
                text,
                at,
                ParseErrorKind::UndeclaredIdentifier(k.trim().to_string()),
            )
        })?;
        let val = parse_expression(v, &|_| None)?;
        let c = val.constant_value().expect("no symbols resolve");
        out.insert(sym, c);
    }
    Ok(out)
}
