//! Parsing entry point and byte-offset/line bookkeeping shared by the
//! analyzer, the instrumenter and the statement index.

use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::text_size::TextSize;
use rustpython_parser::Parse;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

/// Parses `source` as a module body.
pub fn parse_suite(source: &str) -> Result<ast::Suite, SyntaxError> {
    ast::Suite::parse(source, "<snippet>").map_err(|err| {
        let index = LineIndex::new(source);
        SyntaxError {
            line: index.line_of(err.offset.to_usize()),
            message: err.error.to_string(),
        }
    })
}

/// Maps byte offsets to 1-based line numbers.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(
            source
                .bytes()
                .enumerate()
                .filter(|(_, b)| *b == b'\n')
                .map(|(i, _)| i + 1),
        );
        LineIndex { starts }
    }

    pub fn line_of(&self, offset: usize) -> usize {
        match self.starts.binary_search(&offset) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    pub fn line_start(&self, line: usize) -> usize {
        self.starts[line - 1]
    }

    pub fn line_count(&self) -> usize {
        self.starts.len()
    }
}

pub(crate) fn start_of<T: Ranged>(node: &T) -> usize {
    node.start().to_usize()
}

pub(crate) fn end_of<T: Ranged>(node: &T) -> usize {
    node.end().to_usize()
}

pub(crate) fn offset(size: TextSize) -> usize {
    size.to_usize()
}

/// Byte offset just past the `:` that closes a compound statement header.
///
/// `header_start` is where the header begins and `body_start` where the first
/// body statement begins; the colon is the last one outside comments and
/// string literals in between.
pub(crate) fn header_colon_end(source: &str, header_start: usize, body_start: usize) -> Option<usize> {
    use rustpython_parser::{lexer::lex_starts_at, Mode, Tok};

    let region = &source[header_start..body_start];
    let mut last = None;
    for token in lex_starts_at(region, Mode::Module, TextSize::from(header_start as u32)) {
        match token {
            Ok((Tok::Colon, range)) => last = Some(offset(range.end())),
            Ok(_) => {}
            // The region ends mid-statement when the body shares the header
            // line; everything up to that point has already been seen.
            Err(_) => break,
        }
    }
    last
}

/// Start offset of the decorator block (the `@`) of a decorated definition,
/// or `stmt_start` when there are no decorators.
pub(crate) fn decorated_start(source: &str, stmt_start: usize, decorators: &[ast::Expr]) -> usize {
    match decorators.first() {
        Some(first) => {
            let expr_start = start_of(first);
            source[..expr_start].rfind('@').unwrap_or(expr_start)
        }
        None => stmt_start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_index_maps_offsets() {
        let index = LineIndex::new("a = 1\nb = 2\n\nc = 3");
        assert_eq!(index.line_of(0), 1);
        assert_eq!(index.line_of(5), 1);
        assert_eq!(index.line_of(6), 2);
        assert_eq!(index.line_of(12), 3);
        assert_eq!(index.line_of(13), 4);
        assert_eq!(index.line_count(), 4);
    }

    #[test]
    fn colon_search_skips_comments_and_strings() {
        let src = "if d[':'] and x: # note: here\n    pass\n";
        let suite = parse_suite(src).unwrap();
        let ast::Stmt::If(stmt) = &suite[0] else { panic!() };
        let end = header_colon_end(src, start_of(&suite[0]), start_of(&stmt.body[0])).unwrap();
        assert_eq!(&src[..end], "if d[':'] and x:");
    }

    #[test]
    fn colon_search_on_single_line_compound() {
        let src = "while x: x -= 1\n";
        let suite = parse_suite(src).unwrap();
        let ast::Stmt::While(stmt) = &suite[0] else { panic!() };
        let end = header_colon_end(src, 0, start_of(&stmt.body[0])).unwrap();
        assert_eq!(&src[..end], "while x:");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = parse_suite("x = 1\ny = (\n").unwrap_err();
        assert!(err.line >= 2, "{err:?}");
    }
}
