//! Source spans and diagnostics shared by the parser and the analyzer.

use std::fmt;

/// Position of a syntax element in the (concatenated) source text. Lines and
/// columns are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    /// Byte offset of the first character.
    pub offset: usize,
    /// Length in bytes.
    pub len: usize,
}

impl Span {
    pub fn new(line: u32, col: u32, offset: usize, len: usize) -> Self {
        Span { line, col, offset, len }
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// One parser or analyzer finding. `rule` is a stable dotted identifier such as
/// `cardinality.controllers` or `syntax.expected`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub rule: String,
    pub span: Span,
    pub message: String,
    /// Tokens or grammar rules the parser expected at `span`.
    pub expected: Vec<String>,
}

/// Parser diagnostics use the common shape; `expected` is always populated for errors.
pub type ParseDiagnostic = Diagnostic;

impl Diagnostic {
    pub fn error(rule: impl Into<String>, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            rule: rule.into(),
            span,
            message: message.into(),
            expected: Vec::new(),
        }
    }

    pub fn warning(rule: impl Into<String>, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, ..Diagnostic::error(rule, span, message) }
    }

    pub fn expecting(mut self, expected: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.expected = expected.into_iter().map(Into::into).collect();
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Maps lines of the concatenated compilation unit back to input files.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    files: Vec<(String, u32, u32)>,
}

impl SourceMap {
    pub fn single(name: impl Into<String>, text: &str) -> Self {
        let mut m = SourceMap::default();
        m.push(name, text);
        m
    }

    /// Registers a file whose text is appended to the unit, one newline separated.
    pub fn push(&mut self, name: impl Into<String>, text: &str) {
        let start = self.files.last().map(|f| f.1 + f.2).unwrap_or(1);
        let lines = text.lines().count().max(1) as u32;
        self.files.push((name.into(), start, lines));
    }

    /// File name and local line for a global line number.
    pub fn locate(&self, line: u32) -> (&str, u32) {
        for (name, start, count) in &self.files {
            if line >= *start && line < start + count {
                return (name, line - start + 1);
            }
        }
        match self.files.last() {
            Some((name, start, _)) => (name, line.saturating_sub(*start) + 1),
            None => ("<input>", line),
        }
    }

    /// Renders `file:line:col: severity: [rule] message`.
    pub fn render(&self, d: &Diagnostic, color: bool) -> String {
        let (file, line) = self.locate(d.span.line);
        let sev = if color {
            match d.severity {
                Severity::Error => "\x1b[31merror\x1b[0m".to_string(),
                Severity::Warning => "\x1b[33mwarning\x1b[0m".to_string(),
            }
        } else {
            d.severity.to_string()
        };
        let mut s = format!("{file}:{line}:{}: {sev}: [{}] {}", d.span.col, d.rule, d.message);
        if !d.expected.is_empty() {
            s.push_str(&format!(" (expected {})", d.expected.join(", ")));
        }
        s
    }

    /// One JSON object per diagnostic.
    pub fn render_json(&self, d: &Diagnostic) -> String {
        let (file, line) = self.locate(d.span.line);
        serde_json::json!({
            "rule": d.rule,
            "severity": d.severity.to_string(),
            "file": file,
            "line": line,
            "col": d.span.col,
            "message": d.message,
            "expected": d.expected,
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_map_locates_concatenated_files() {
        let mut m = SourceMap::default();
        m.push("a.apr", "x\ny\n");
        m.push("b.apr", "z\n");
        assert_eq!(m.locate(1), ("a.apr", 1));
        assert_eq!(m.locate(2), ("a.apr", 2));
        assert_eq!(m.locate(3), ("b.apr", 1));
    }

    #[test]
    fn render_format() {
        let m = SourceMap::single("ball.apr", "a\nb\n");
        let d = Diagnostic::error("cardinality.controllers", Span::new(2, 5, 0, 1), "no controller");
        assert_eq!(m.render(&d, false), "ball.apr:2:5: error: [cardinality.controllers] no controller");
    }
}
