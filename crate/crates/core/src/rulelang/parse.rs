use super::ast::{Factor, ProductTerm, RuleExpr, Sign, Var};
use super::RuleError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(v) => format!("integer {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn syntax(position: usize, message: impl Into<String>) -> RuleError {
    RuleError::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, RuleError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => toks.push((Tok::Plus, start)),
            b'-' => toks.push((Tok::Minus, start)),
            b'*' => toks.push((Tok::Star, start)),
            b'(' => toks.push((Tok::LParen, start)),
            b')' => toks.push((Tok::RParen, start)),
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let value = text[start..i]
                    .parse::<i64>()
                    .map_err(|_| syntax(start, "integer literal too large"))?;
                toks.push((Tok::Int(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        }
        i += 1;
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_end_message(&self, what: &str) -> RuleError {
        match self.peek() {
            Some(t) => syntax(
                self.offset(),
                format!("expected {what}, found {}", t.describe()),
            ),
            None => syntax(self.end, format!("expected {what}, found end of input")),
        }
    }

    fn variable(&mut self) -> Result<(Var, usize), RuleError> {
        match self.next() {
            Some((Tok::Ident(name), at)) => name
                .parse::<Var>()
                .map(|v| (v, at))
                .map_err(|_| RuleError::UnknownVariable { name, position: at }),
            Some((t, at)) => Err(syntax(
                at,
                format!("expected variable, found {}", t.describe()),
            )),
            None => Err(syntax(self.end, "expected variable, found end of input")),
        }
    }

    fn factor(&mut self) -> Result<Factor, RuleError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Factor::Const(v))
            }
            Some(Tok::Ident(_)) => {
                let (var, _) = self.variable()?;
                Ok(Factor::var(var))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let (var, at) = self.variable()?;
                let negative = match self.next() {
                    Some((Tok::Plus, _)) => false,
                    Some((Tok::Minus, _)) => true,
                    Some((t, p)) => {
                        return Err(syntax(
                            p,
                            format!("expected `+` or `-`, found {}", t.describe()),
                        ))
                    }
                    None => {
                        return Err(syntax(self.end, "expected `+` or `-`, found end of input"))
                    }
                };
                let magnitude = match self.next() {
                    Some((Tok::Int(v), _)) => v,
                    Some((t, p)) => {
                        return Err(syntax(
                            p,
                            format!("expected integer, found {}", t.describe()),
                        ))
                    }
                    None => return Err(syntax(self.end, "expected integer, found end of input")),
                };
                match self.next() {
                    Some((Tok::RParen, _)) => {}
                    Some((t, p)) => {
                        return Err(syntax(p, format!("expected `)`, found {}", t.describe())))
                    }
                    None => return Err(syntax(self.end, "expected `)`, found end of input")),
                }
                let offset = if negative { -magnitude } else { magnitude };
                if offset != 0 && var.is_spike() {
                    return Err(RuleError::SpikeOffset { var, position: at });
                }
                Ok(Factor::offset(var, offset))
            }
            _ => Err(self.expect_end_message("factor")),
        }
    }

    fn term(&mut self, sign: Sign) -> Result<ProductTerm, RuleError> {
        let start = self.offset();
        let mut factors = vec![self.factor()?];
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        if factors.iter().filter(|f| f.is_weight()).count() > 1 {
            return Err(RuleError::MultipleWeights { position: start });
        }
        Ok(ProductTerm { sign, factors })
    }

    fn expr(&mut self) -> Result<Vec<ProductTerm>, RuleError> {
        let first_sign = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Sign::Minus
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                Sign::Plus
            }
            _ => Sign::Plus,
        };
        let mut terms = vec![self.term(first_sign)?];
        loop {
            let sign = match self.peek() {
                Some(Tok::Plus) => Sign::Plus,
                Some(Tok::Minus) => Sign::Minus,
                None => break,
                Some(_) => return Err(self.expect_end_message("`+`, `-`, `*` or end of input")),
            };
            self.pos += 1;
            terms.push(self.term(sign)?);
        }
        Ok(terms)
    }
}

/// Parses a sum-of-products rule.
pub fn parse_rule(text: &str) -> Result<RuleExpr, RuleError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(syntax(0, "empty rule"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let terms = p.expr()?;
    Ok(RuleExpr::with_source(terms, text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rulelang::{KEYS_RULE, VALUES_RULE};

    #[test]
    fn keys_rule_structure() {
        let r = parse_rule(KEYS_RULE).unwrap();
        assert_eq!(
            r.terms(),
            &[
                ProductTerm {
                    sign: Sign::Plus,
                    factors: vec![
                        Factor::Const(2),
                        Factor::var(Var::Y0),
                        Factor::offset(Var::X1, -64)
                    ],
                },
                ProductTerm {
                    sign: Sign::Minus,
                    factors: vec![Factor::var(Var::Y0), Factor::var(Var::W)],
                },
            ]
        );
    }

    #[test]
    fn values_rule_has_three_terms() {
        let r = parse_rule(VALUES_RULE).unwrap();
        assert_eq!(r.terms().len(), 3);
        assert_eq!(r.terms()[2].factors.len(), 3);
        assert!(r.terms()[1..].iter().all(|t| t.sign == Sign::Minus));
    }

    #[test]
    fn double_weight_rejected() {
        assert_eq!(
            parse_rule("w * w").unwrap_err(),
            RuleError::MultipleWeights { position: 0 }
        );
        assert!(matches!(
            parse_rule("x0 * y2 - y0 * w * (w - 1)").unwrap_err(),
            RuleError::MultipleWeights { position: 10 }
        ));
    }

    #[test]
    fn errors_carry_positions() {
        let cases: &[(&str, usize)] = &[
            ("", 0),
            ("x0 *", 4),
            ("x0 + + y0", 5),
            ("z9 * y0", 0),
            ("(x1 - 64", 8),
            ("(x1 * 64)", 4),
            ("x1 y0", 3),
            ("2 * y0 $", 7),
            ("(x0 - 1) * y1", 1),
            ("(3 - 1)", 1),
        ];
        for (text, pos) in cases {
            let err = parse_rule(text).unwrap_err();
            assert_eq!(err.position(), Some(*pos), "{text:?}: {err}");
        }
    }

    #[test]
    fn render_examples() {
        assert_eq!(parse_rule("5").unwrap().render(), "5");
        assert_eq!(parse_rule(KEYS_RULE).unwrap().render(), KEYS_RULE);
        assert_eq!(parse_rule(VALUES_RULE).unwrap().render(), VALUES_RULE);
        assert_eq!(
            parse_rule("  -x1*(y1+3)  ").unwrap().render(),
            "- x1 * (y1 + 3)"
        );
    }
}
