//! Tokenizer for Apricot source text.

use crate::diag::{Diagnostic, Span};

/// Reserved words; never identifiers.
pub const KEYWORDS: &[&str] = &[
    "System", "Plant", "Controller", "Dynamic", "Assignment", "ParallelAssignment",
    "SequentialAssignment", "Real", "Integer", "Boolean", "real", "integer", "boolean",
    "Constant", "Requires", "Constraint", "Invariant", "Condition", "Continuous", "Discrete",
    "Composition", "Init", "Interface", "new", "this", "in", "and", "or", "xor", "Skip", "True",
    "False", "null", "Inf", "start", "Return", "Class",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Identifier,
    Keyword,
    IntegerLiteral,
    RealLiteral,
    Punct,
    Operator,
    Comment,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.kind == kind && self.lexeme == lexeme
    }
}

const PUNCT: &[char] = &['(', ')', '{', '}', '[', ']', ',', ';', '.', ':'];
const TWO_CHAR_OPS: &[&str] = &["==", "!=", "<=", ">=", "||"];
const ONE_CHAR_OPS: &[char] = &['+', '-', '*', '/', '<', '>', '=', '!'];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, start: (usize, u32, u32)) -> Span {
        Span::new(start.1, start.2, start.0, self.pos - start.0)
    }
}

/// Maximal-munch tokenization. Comments are kept as `Comment` tokens; the token
/// list always ends with an `Eof` token.
pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut c = Cursor { src: source, pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(ch) = c.peek() {
        let start = (c.pos, c.line, c.col);
        if ch.is_whitespace() {
            c.bump();
            continue;
        }
        if ch == '/' && c.peek_at(1) == Some('/') {
            while let Some(x) = c.peek() {
                if x == '\n' {
                    break;
                }
                c.bump();
            }
            out.push(tok(TokenKind::Comment, source, &c, start));
            continue;
        }
        if ch == '/' && c.peek_at(1) == Some('*') {
            c.bump();
            c.bump();
            let mut closed = false;
            while let Some(x) = c.bump() {
                if x == '*' && c.peek() == Some('/') {
                    c.bump();
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(Diagnostic::error(
                    "lex.unterminated_comment",
                    Span::new(start.1, start.2, start.0, 2),
                    "unterminated block comment",
                )
                .expecting(["*/"]));
            }
            out.push(tok(TokenKind::Comment, source, &c, start));
            continue;
        }
        if ch.is_ascii_alphabetic() {
            while c.peek().is_some_and(|x| x.is_ascii_alphanumeric()) {
                c.bump();
            }
            let text = &source[start.0..c.pos];
            let kind = if is_keyword(text) { TokenKind::Keyword } else { TokenKind::Identifier };
            out.push(tok(kind, source, &c, start));
            continue;
        }
        if ch.is_ascii_digit() {
            while c.peek().is_some_and(|x| x.is_ascii_digit()) {
                c.bump();
            }
            let mut real = false;
            if c.peek() == Some('.') && c.peek_at(1).is_some_and(|x| x.is_ascii_digit()) {
                real = true;
                c.bump();
                while c.peek().is_some_and(|x| x.is_ascii_digit()) {
                    c.bump();
                }
            }
            if matches!(c.peek(), Some('e' | 'E')) {
                let sign = matches!(c.peek_at(1), Some('+' | '-'));
                let digit_at = if sign { 2 } else { 1 };
                if c.peek_at(digit_at).is_some_and(|x| x.is_ascii_digit()) {
                    real = true;
                    for _ in 0..digit_at {
                        c.bump();
                    }
                    while c.peek().is_some_and(|x| x.is_ascii_digit()) {
                        c.bump();
                    }
                }
            }
            if c.peek().is_some_and(|x| x.is_ascii_alphabetic()) {
                return Err(Diagnostic::error(
                    "lex.bad_number",
                    c.span_from(start),
                    "identifier may not start with a digit",
                )
                .expecting(["number"]));
            }
            let kind = if real { TokenKind::RealLiteral } else { TokenKind::IntegerLiteral };
            out.push(tok(kind, source, &c, start));
            continue;
        }
        if let Some(two) = source.get(c.pos..c.pos + 2) {
            if TWO_CHAR_OPS.contains(&two) {
                c.bump();
                c.bump();
                out.push(tok(TokenKind::Operator, source, &c, start));
                continue;
            }
        }
        if ONE_CHAR_OPS.contains(&ch) {
            c.bump();
            out.push(tok(TokenKind::Operator, source, &c, start));
            continue;
        }
        if PUNCT.contains(&ch) {
            c.bump();
            out.push(tok(TokenKind::Punct, source, &c, start));
            continue;
        }
        c.bump();
        return Err(Diagnostic::error(
            "lex.illegal_character",
            c.span_from(start),
            format!("illegal character `{ch}`"),
        )
        .expecting(["identifier", "number", "operator", "punctuation"]));
    }
    out.push(Token {
        kind: TokenKind::Eof,
        lexeme: String::new(),
        span: Span::new(c.line, c.col, c.pos, 0),
    });
    Ok(out)
}

fn tok(kind: TokenKind, src: &str, c: &Cursor<'_>, start: (usize, u32, u32)) -> Token {
    Token { kind, lexeme: src[start.0..c.pos].to_string(), span: c.span_from(start) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.lexeme)).collect()
    }

    #[test]
    fn dot_call() {
        use TokenKind::*;
        let k = kinds("dot(height,1)");
        assert_eq!(
            k,
            vec![
                (Identifier, "dot".into()),
                (Punct, "(".into()),
                (Identifier, "height".into()),
                (Punct, ",".into()),
                (IntegerLiteral, "1".into()),
                (Punct, ")".into()),
                (Eof, "".into()),
            ]
        );
    }

    #[test]
    fn line_comment_is_one_token() {
        let k = kinds("//maybe not necessary");
        assert_eq!(k[0], (TokenKind::Comment, "//maybe not necessary".into()));
        assert_eq!(k.len(), 2);
    }

    #[test]
    fn real_literal() {
        assert_eq!(kinds("9.8")[0], (TokenKind::RealLiteral, "9.8".into()));
        assert_eq!(kinds("1e-3")[0], (TokenKind::RealLiteral, "1e-3".into()));
        // `1..*` in requirement multiplicities is integer, dot, dot, star
        let k = kinds("1..*");
        assert_eq!(k[0].0, TokenKind::IntegerLiteral);
        assert_eq!(k[1].1, ".");
    }

    #[test]
    fn keywords_and_operators() {
        let k = kinds("god.CompIR || ball.CompMJ; x != y");
        assert!(k.contains(&(TokenKind::Operator, "||".into())));
        assert!(k.contains(&(TokenKind::Operator, "!=".into())));
        assert_eq!(kinds("Inf")[0].0, TokenKind::Keyword);
    }

    #[test]
    fn errors() {
        assert_eq!(tokenize("a $ b").unwrap_err().rule, "lex.illegal_character");
        assert_eq!(tokenize("/* open").unwrap_err().rule, "lex.unterminated_comment");
    }

    proptest! {
        #[test]
        fn spans_are_ordered_and_inside(src in "[a-z0-9 +*/(){};.,=<>\n-]{0,80}") {
            if let Ok(toks) = tokenize(&src) {
                let mut last_end = 0;
                for t in &toks {
                    prop_assert!(t.span.offset >= last_end);
                    prop_assert!(t.span.end() <= src.len());
                    prop_assert_eq!(&src[t.span.offset..t.span.end()], t.lexeme.as_str());
                    last_end = t.span.end();
                }
            }
        }
    }
}
