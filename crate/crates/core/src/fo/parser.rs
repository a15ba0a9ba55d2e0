//! Recursive-descent parser for the query syntax.
//!
//! ```text
//! formula  := disj ( "->" formula )?
//! disj     := conj ( "|" conj )*
//! conj     := unary ( "&" unary )*
//! unary    := "!" unary | ("exists" | "forall") var "." formula | primary
//! primary  := "(" formula ")" | Rel "(" terms? ")" | term "=" term
//! term     := var | integer | 'string'
//! ```

use thiserror::Error;

use super::ast::{Formula, Term};
use crate::database::Schema;
use crate::universe::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at position {position}")]
pub struct ParseError {
    /// Byte offset into the input.
    pub position: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Var(String),
    Rel(String),
    Int(u64),
    Str(String),
    Exists,
    Forall,
    LParen,
    RParen,
    Comma,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Equals,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Var(v) => format!("variable {v}"),
            Tok::Rel(r) => format!("relation {r}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Exists => "'exists'".into(),
            Tok::Forall => "'forall'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Dot => "'.'".into(),
            Tok::Bang => "'!'".into(),
            Tok::Amp => "'&'".into(),
            Tok::Pipe => "'|'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Equals => "'='".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn err<T>(position: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        position,
        message: message.into(),
    })
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            '!' => Some(Tok::Bang),
            '&' => Some(Tok::Amp),
            '|' => Some(Tok::Pipe),
            '=' => Some(Tok::Equals),
            _ => None,
        };
        if let Some(t) = single {
            chars.next();
            out.push((t, pos));
            continue;
        }
        if c == '-' {
            chars.next();
            match chars.next() {
                Some((_, '>')) => out.push((Tok::Arrow, pos)),
                _ => return err(pos, "expected '->'"),
            }
            continue;
        }
        if c == '\'' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some((_, '\'')) => break,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, e)) => s.push(e),
                        None => return err(text.len(), "unterminated string"),
                    },
                    Some((_, ch)) => s.push(ch),
                    None => return err(text.len(), "unterminated string"),
                }
            }
            out.push((Tok::Str(s), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let mut end = pos;
            while let Some(&(i, d)) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                end = i + d.len_utf8();
                chars.next();
            }
            let n = text[pos..end].parse::<u64>().map_err(|_| ParseError {
                position: pos,
                message: "integer constant out of range".into(),
            })?;
            out.push((Tok::Int(n), pos));
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut end = pos;
            while let Some(&(i, d)) = chars.peek() {
                if !(d.is_ascii_alphanumeric() || d == '_') {
                    break;
                }
                end = i + d.len_utf8();
                chars.next();
            }
            let word = &text[pos..end];
            let tok = match word {
                "exists" => Tok::Exists,
                "forall" => Tok::Forall,
                w if c.is_ascii_lowercase() => Tok::Var(w.to_string()),
                w => Tok::Rel(w.to_string()),
            };
            out.push((tok, pos));
            continue;
        }
        return err(pos, format!("unexpected character {c:?}"));
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    schema: Option<&'s Schema>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if t != Tok::End {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            err(
                self.pos(),
                format!(
                    "expected {}, found {}",
                    want.describe(),
                    self.peek().describe()
                ),
            )
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            lhs = Formula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Exists | Tok::Forall => {
                let universal = self.bump() == Tok::Forall;
                let var = match self.bump() {
                    Tok::Var(v) => v,
                    other => {
                        self.at -= usize::from(other != Tok::End);
                        return err(
                            self.pos(),
                            format!("expected variable, found {}", other.describe()),
                        );
                    }
                };
                self.expect(Tok::Dot)?;
                let body = self.formula()?;
                Ok(if universal {
                    Formula::forall(&var, body)
                } else {
                    Formula::exists(&var, body)
                })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Rel(name) => {
                let start = self.pos();
                self.bump();
                self.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    args.push(self.term()?);
                    while *self.peek() == Tok::Comma {
                        let comma = self.pos();
                        self.bump();
                        match self.term() {
                            Ok(t) => args.push(t),
                            Err(e) => {
                                return err(
                                    comma,
                                    format!("dangling ',' in argument list ({})", e.message),
                                )
                            }
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                if let Some(schema) = self.schema {
                    match schema.arity(&name) {
                        None => return err(start, format!("unknown relation {name}")),
                        Some(a) if a != args.len() => {
                            return err(
                                start,
                                format!(
                                    "relation {name} has arity {a}, got {} arguments",
                                    args.len()
                                ),
                            )
                        }
                        Some(_) => {}
                    }
                }
                Ok(Formula::Atom {
                    relation: name,
                    args,
                })
            }
            _ => {
                let lhs = self.term()?;
                self.expect(Tok::Equals)?;
                let rhs = self.term()?;
                Ok(Formula::Eq(lhs, rhs))
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Var(v) => Ok(Term::Var(v)),
            Tok::Int(n) => Ok(Term::Const(Value::Nat(n))),
            Tok::Str(s) => Ok(Term::Const(Value::Str(s))),
            other => {
                self.at -= usize::from(other != Tok::End);
                err(pos, format!("expected term, found {}", other.describe()))
            }
        }
    }
}

/// Parses `text` and checks relation names and arities against `schema`.
pub fn parse(text: &str, schema: &Schema) -> Result<Formula, ParseError> {
    parse_with(text, Some(schema))
}

/// Parses without a schema check.
pub fn parse_unchecked(text: &str) -> Result<Formula, ParseError> {
    parse_with(text, None)
}

fn parse_with(text: &str, schema: Option<&Schema>) -> Result<Formula, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        schema,
    };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return err(p.pos(), format!("unexpected {}", p.peek().describe()));
    }
    Ok(f)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fo::ast::Term;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema::new([
            ("R".to_string(), 1),
            ("S".to_string(), 1),
            ("T".to_string(), 2),
        ])
        .unwrap()
    }

    #[test]
    fn parse_examples() {
        let f = parse("exists x. R(x)", &schema()).unwrap();
        assert_eq!(
            f,
            Formula::exists("x", Formula::atom("R", vec![Term::var("x")]))
        );

        let f = parse("R(x) & !S(x)", &schema()).unwrap();
        assert_eq!(
            f,
            Formula::and(
                Formula::atom("R", vec![Term::var("x")]),
                Formula::not(Formula::atom("S", vec![Term::var("x")]))
            )
        );
        assert_eq!(f.free_vars(), vec!["x".to_string()]);

        let e = parse("exists x. R(x,", &schema()).unwrap_err();
        assert_eq!(e.position, 13);
        assert!(e.message.contains("dangling"));
    }

    #[test]
    fn errors() {
        assert!(parse("Q(x)", &schema())
            .unwrap_err()
            .message
            .contains("unknown relation"));
        assert!(parse("T(x)", &schema())
            .unwrap_err()
            .message
            .contains("arity"));
        assert!(parse("R(x) R(y)", &schema()).is_err());
        assert!(parse("exists . R(x)", &schema()).is_err());
        assert!(parse("x - y", &schema()).is_err());
        assert!(parse("R('abc)", &schema()).is_err());
        assert!(parse("", &schema()).is_err());
    }

    #[test]
    fn precedence() {
        let f = parse_unchecked("!A() & B() | C() -> D() -> E()").unwrap();
        let a = || Formula::atom("A", vec![]);
        let atom = |n: &str| Formula::atom(n, vec![]);
        assert_eq!(
            f,
            Formula::implies(
                Formula::or(Formula::and(Formula::not(a()), atom("B")), atom("C")),
                Formula::implies(atom("D"), atom("E"))
            )
        );
        let q = parse_unchecked("R(x) & exists y. S(y) | T(y)").unwrap();
        assert_eq!(
            q,
            Formula::and(
                Formula::atom("R", vec![Term::var("x")]),
                Formula::exists(
                    "y",
                    Formula::or(
                        Formula::atom("S", vec![Term::var("y")]),
                        Formula::atom("T", vec![Term::var("y")])
                    )
                )
            )
        );
    }

    #[test]
    fn constants_and_equality() {
        let f = parse("T(x, 7) & x = 'a\\'b'", &schema()).unwrap();
        assert_eq!(f.constants(), [Value::Nat(7), Value::str("a'b")].into());
        assert_eq!(parse_unchecked(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn analysis_examples() {
        let a = parse("exists x. R(x)", &schema()).unwrap().analyze();
        assert_eq!((a.rank, a.constants.len(), a.free_vars.len()), (1, 0, 0));
        let a = parse("exists x. forall y. (R(x) | x = y)", &schema())
            .unwrap()
            .analyze();
        assert_eq!((a.rank, a.constants.len(), a.free_vars.len()), (2, 0, 0));
        let a = parse("T(x, 7)", &schema()).unwrap().analyze();
        assert_eq!(a.rank, 0);
        assert_eq!(a.constants, [Value::Nat(7)].into());
        assert_eq!(a.free_vars, vec!["x".to_string()]);
    }

    pub(crate) fn arb_formula() -> impl Strategy<Value = Formula> {
        let term = prop_oneof![
            prop::sample::select(vec!["x", "y", "z"]).prop_map(Term::var),
            (1u64..4).prop_map(|n| Term::Const(Value::Nat(n))),
            prop::sample::select(vec!["a", "it's"]).prop_map(|s| Term::Const(Value::str(s))),
        ];
        let leaf = prop_oneof![
            term.clone().prop_map(|t| Formula::atom("R", vec![t])),
            (term.clone(), term.clone()).prop_map(|(a, b)| Formula::atom("T", vec![a, b])),
            (term.clone(), term).prop_map(|(a, b)| Formula::Eq(a, b)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                (prop::sample::select(vec!["x", "y"]), inner.clone())
                    .prop_map(|(v, a)| Formula::exists(v, a)),
                (prop::sample::select(vec!["x", "y"]), inner)
                    .prop_map(|(v, a)| Formula::forall(v, a)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(f in arb_formula()) {
            let text = f.to_string();
            prop_assert_eq!(parse(&text, &schema()).unwrap(), f, "{}", text);
        }
    }
}
