//! Text syntax for group-ring elements.
//!
//! ```text
//! expr   := ['+' | '-'] term (('+' | '-') term)*
//! term   := factor (['*'] factor)*
//! factor := atom ['^' ['-'] INT]
//! atom   := INT | IDENT | '(' expr ')'
//! ```
//!
//! `IDENT` is a generator label; `e` and `1` denote the identity.
//! Negative exponents are only allowed on single group elements, e.g.
//! `x^-1 + 2 - x` over `Z` or `a*b - 1` over `F_2`.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{GroupRingElement, GroupRingMatrix};
use crate::error::{Error, ParseError, Result};
use crate::group::GroupSpec;

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
    group: &'a Arc<GroupSpec>,
}

type PResult<T> = std::result::Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn err<T>(&self, at: usize, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::new(self.input, at, msg))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> PResult<GroupRingElement> {
        let mut acc = GroupRingElement::zero(self.group.clone());
        let mut sign = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                -1
            }
            Some(b'+') => {
                self.pos += 1;
                1
            }
            _ => 1,
        };
        loop {
            let t = self.term()?;
            let t = if sign < 0 { t.neg() } else { t };
            acc = acc.add(&t).expect("same group");
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    sign = 1;
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -1;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn starts_factor(&mut self) -> bool {
        matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_' || c == b'(')
    }

    fn term(&mut self) -> PResult<GroupRingElement> {
        let mut acc = self.factor()?;
        loop {
            if self.peek() == Some(b'*') {
                self.pos += 1;
                let f = self.factor()?;
                acc = acc.mul(&f).expect("same group");
            } else if self.starts_factor() {
                let f = self.factor()?;
                acc = acc.mul(&f).expect("same group");
            } else {
                return Ok(acc);
            }
        }
    }

    fn integer(&mut self) -> PResult<(usize, &'a str)> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(start, "expected an integer");
        }
        Ok((start, &self.input[start..self.pos]))
    }

    fn factor(&mut self) -> PResult<GroupRingElement> {
        let atom_start = {
            self.skip_ws();
            self.pos
        };
        let atom = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(atom);
        }
        self.pos += 1;
        let negative = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let (at, digits) = self.integer()?;
        let k: i64 = match digits.parse() {
            Ok(k) if k <= 1_000_000 => k,
            _ => return self.err(at, "exponent too large"),
        };
        let k = if negative { -k } else { k };
        // a single group element with coefficient 1 may be raised to any power
        let mut terms = atom.terms();
        if let (Some((g, c)), None) = (terms.next(), terms.next()) {
            if c.is_one() {
                let g = self.group.pow(g, k).expect("element of this group");
                return Ok(GroupRingElement::monomial(self.group.clone(), g, BigInt::one()));
            }
        }
        if k < 0 {
            return self.err(
                atom_start,
                "negative exponent on an element that is not a group element",
            );
        }
        if k > 64 {
            return self.err(at, "exponent too large for a ring element");
        }
        Ok(atom.pow(k as u32).expect("same group"))
    }

    fn atom(&mut self) -> PResult<GroupRingElement> {
        let start = {
            self.skip_ws();
            self.pos
        };
        match self.bytes.get(self.pos).copied() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err(self.pos, "expected `)`");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => {
                let (_, digits) = self.integer()?;
                let value: BigInt = digits.parse().expect("digits");
                if value.is_zero() {
                    return Ok(GroupRingElement::zero(self.group.clone()));
                }
                Ok(GroupRingElement::monomial(
                    self.group.clone(),
                    self.group.identity(),
                    value,
                ))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = &self.input[start..self.pos];
                let g = match self.group.generator_index(name) {
                    Some(i) => self.group.generator(i).expect("valid index"),
                    None if name == "e" => self.group.identity(),
                    None => {
                        return self.err(
                            start,
                            format!(
                                "unknown generator `{name}` (generators: {})",
                                self.group.generator_labels().join(", ")
                            ),
                        )
                    }
                };
                Ok(GroupRingElement::monomial(self.group.clone(), g, BigInt::one()))
            }
            Some(_) => self.err(start, "unexpected character"),
            None => self.err(start, "unexpected end of input"),
        }
    }
}

/// Parses an integer group-ring element.
pub fn parse_element(group: &Arc<GroupSpec>, input: &str) -> Result<GroupRingElement> {
    let mut p = Parser {
        input,
        bytes: input.as_bytes(),
        pos: 0,
        group,
    };
    let value = p.expr()?;
    if p.peek().is_some() {
        return Err(ParseError::new(input, p.pos, "unexpected trailing input").into());
    }
    Ok(value)
}

/// Parses a matrix given as rows of element strings.
pub fn parse_matrix<S: AsRef<str>>(group: &Arc<GroupSpec>, rows: &[Vec<S>]) -> Result<GroupRingMatrix> {
    let parsed = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|s| parse_element(group, s.as_ref()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if parsed.is_empty() {
        return Err(Error::Dimension("matrix has no rows".into()));
    }
    GroupRingMatrix::from_rows(group.clone(), parsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;

    fn z() -> Arc<GroupSpec> {
        Arc::new(GroupSpec::free_abelian(1).unwrap())
    }

    #[test]
    fn parses_laurent_polynomial() {
        let g = z();
        let f = parse_element(&g, "x^-1 + 2 - x").unwrap();
        assert_eq!(f.coefficient(&GroupElement::Abelian(vec![-1])), BigInt::from(1));
        assert_eq!(f.coefficient(&GroupElement::Abelian(vec![0])), BigInt::from(2));
        assert_eq!(f.coefficient(&GroupElement::Abelian(vec![1])), BigInt::from(-1));
        assert_eq!(f.to_string(), "x^-1 + 2 - x");
    }

    #[test]
    fn parses_free_group_words() {
        let g = Arc::new(GroupSpec::free(2).unwrap());
        let f = parse_element(&g, "a*b - 1").unwrap();
        assert_eq!(f.coefficient(&GroupElement::Word(vec![1, 2])), BigInt::from(1));
        let h = parse_element(&g, "2a + 3b^-1").unwrap();
        assert_eq!(h.to_string(), "2*a + 3*b^-1");
        let sq = parse_element(&g, "(a - 1)^2").unwrap();
        assert_eq!(sq, parse_element(&g, "a^2 - 2a + e").unwrap());
    }

    #[test]
    fn caret_points_at_the_error() {
        let g = z();
        let err = parse_element(&g, "x + y").unwrap_err();
        let Error::Parse(p) = err else {
            panic!("expected parse error")
        };
        assert_eq!(p.position, 4);
        assert!(p.caret().ends_with("    ^"));
        assert!(p.to_string().contains("unknown generator `y`"));
    }

    #[test]
    fn rejects_bad_input() {
        let g = z();
        for bad in ["", "x +", "(x - 1", "x ^ ", "(x + 1)^-1", "x $ 1", "x )"] {
            assert!(parse_element(&g, bad).is_err(), "accepted {bad:?}");
        }
    }
}
