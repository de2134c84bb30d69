use thiserror::Error;

use super::Formula;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos, msg: msg.into() })
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'0') => {
                self.pos += 1;
                Ok(Formula::zero())
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(Formula::one())
            }
            Some(b'~') => {
                self.pos += 1;
                Ok(Formula::neg(&self.formula()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut parts = vec![self.formula()?];
                loop {
                    match self.peek() {
                        Some(b'|') => {
                            self.pos += 1;
                            parts.push(self.formula()?);
                        }
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return self.err("expected '|' or ')'"),
                    }
                }
                if parts.len() < 2 {
                    return self.err("a parenthesised disjunction needs at least two parts");
                }
                Ok(Formula::or(parts))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(Formula::var(name))
            }
            Some(c) => self.err(format!("unexpected character {:?}", c as char)),
        }
    }
}

/// Parses `F ::= 0 | 1 | ident | ~F | (F|F...)` into canonical merged form.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let f = p.formula()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(f)
}
