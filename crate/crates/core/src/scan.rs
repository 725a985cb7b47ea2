//! Lightweight lexical scanning of Python and C++ source: enough to find
//! statement boundaries and keywords outside strings and comments.

/// Byte mask marking which bytes of a C/C++ source are code (not inside a
/// string literal, character literal, or comment).
pub(crate) fn cpp_code_mask(src: &str) -> Vec<bool> {
    let b = src.as_bytes();
    let mut mask = vec![true; b.len()];
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'/' if b.get(i + 1) == Some(&b'/') => {
                let start = i;
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                mask[start..i].fill(false);
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(b.len());
                mask[start..i].fill(false);
            }
            q @ (b'"' | b'\'') => {
                let start = i;
                i += 1;
                while i < b.len() && b[i] != q && b[i] != b'\n' {
                    if b[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i = (i + 1).min(b.len());
                mask[start..i].fill(false);
            }
            _ => i += 1,
        }
    }
    mask
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// Byte offsets where `word` occurs as a whole identifier in code.
pub(crate) fn find_word(src: &str, mask: &[bool], word: &str) -> Vec<usize> {
    let b = src.as_bytes();
    let w = word.as_bytes();
    let mut hits = Vec::new();
    if w.is_empty() || b.len() < w.len() {
        return hits;
    }
    for i in 0..=b.len() - w.len() {
        if &b[i..i + w.len()] == w
            && mask[i]
            && (i == 0 || !is_ident(b[i - 1]))
            && (i + w.len() == b.len() || !is_ident(b[i + w.len()]))
        {
            hits.push(i);
        }
    }
    hits
}

/// Location of a C++ `main` definition: byte offset where its declaration
/// starts, of the opening brace, and one past the closing brace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MainSpan {
    pub start: usize,
    pub open: usize,
    pub end: usize,
}

pub(crate) fn find_cpp_main(src: &str) -> Option<MainSpan> {
    let mask = cpp_code_mask(src);
    let b = src.as_bytes();
    for pos in find_word(src, &mask, "main") {
        let mut j = pos + 4;
        while j < b.len() && b[j].is_ascii_whitespace() {
            j += 1;
        }
        if b.get(j) != Some(&b'(') {
            continue;
        }
        // Declaration begins at the start of the line holding the return type.
        let start = src[..pos].rfind('\n').map_or(0, |n| n + 1);
        let mut k = j;
        while k < b.len() && !(mask[k] && (b[k] == b'{' || b[k] == b';')) {
            k += 1;
        }
        if k >= b.len() || b[k] == b';' {
            continue;
        }
        let open = k;
        let close = matching_brace(b, &mask, open)?;
        return Some(MainSpan {
            start,
            open,
            end: close + 1,
        });
    }
    None
}

fn matching_brace(b: &[u8], mask: &[bool], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for k in open..b.len() {
        if !mask[k] {
            continue;
        }
        match b[k] {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

/// Removes the `main` definition from a C++ program, if present.
pub(crate) fn strip_cpp_main(src: &str) -> String {
    match find_cpp_main(src) {
        Some(span) => format!("{}{}", &src[..span.start], &src[span.end..]),
        None => src.to_owned(),
    }
}

const BLOCK_KEYWORDS: [&str; 8] = ["for", "while", "if", "else", "do", "switch", "try", "catch"];

fn leading_word(s: &str) -> &str {
    let s = s.trim_start();
    let end = s
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(s.len());
    &s[..end]
}

/// Splits a C++ block body into top-level statements. A statement ends at a
/// `;` outside any parentheses or braces, or at the closing brace of a
/// control-flow block that is not continued by `else`, `catch`, or a
/// `do ... while`. Each returned statement keeps its original text.
pub(crate) fn cpp_statements(body: &str) -> Vec<String> {
    let mask = cpp_code_mask(body);
    let b = body.as_bytes();
    let mut statements = Vec::new();
    let mut start = 0;
    let mut depth: i64 = 0;
    let mut i = 0;
    while i < b.len() {
        if mask[i] {
            match b[i] {
                b'(' | b'{' | b'[' => depth += 1,
                b')' | b']' => depth -= 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let stmt = &body[start..=i];
                        let head = leading_word(stmt);
                        let is_block = head.is_empty() && stmt.trim_start().starts_with('{')
                            || BLOCK_KEYWORDS.contains(&head);
                        let next = leading_word(&body[i + 1..]);
                        let continued = matches!(next, "else" | "catch") || (head == "do" && next == "while");
                        if is_block && !continued {
                            push_statement(&mut statements, stmt);
                            start = i + 1;
                        }
                    }
                }
                b';' if depth == 0 => {
                    push_statement(&mut statements, &body[start..=i]);
                    start = i + 1;
                }
                b'#' if depth == 0 && body[start..i].trim().is_empty() => {
                    // Preprocessor line.
                    let end = body[i..].find('\n').map_or(b.len(), |n| i + n);
                    push_statement(&mut statements, &body[start..end]);
                    start = end;
                    i = end;
                    continue;
                }
                _ => {}
            }
        }
        i += 1;
    }
    push_statement(&mut statements, &body[start..]);
    statements
}

fn push_statement(out: &mut Vec<String>, text: &str) {
    let trimmed = text.trim_matches(|c| c == '\n' || c == '\r');
    if trimmed.trim().is_empty() {
        return;
    }
    // Keep a leading comment attached to the statement but drop blank lines.
    let cleaned: Vec<&str> = trimmed.lines().filter(|l| !l.trim().is_empty()).collect();
    out.push(cleaned.join("\n"));
}

/// One logical Python line: physical lines joined by open brackets, open
/// triple-quoted strings, or backslash continuations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LogicalLine {
    /// Indentation (in columns) of the first physical line.
    pub indent: usize,
    pub text: String,
    /// Text with string contents and comments blanked out.
    pub code: String,
}

impl LogicalLine {
    pub fn is_blank(&self) -> bool {
        self.code.trim().is_empty()
    }
}

/// Splits Python source into logical lines (comments-only and blank lines
/// are kept as blank logical lines so that original text survives).
pub(crate) fn python_logical_lines(src: &str) -> Vec<LogicalLine> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut code = String::new();
    let mut depth = 0i64;
    let mut in_string: Option<(char, bool)> = None;
    let mut chars = src.chars().peekable();
    let mut continued = false;

    let flush = |text: &mut String, code: &mut String, out: &mut Vec<LogicalLine>| {
        let first = text.lines().next().unwrap_or("");
        let indent = first.len() - first.trim_start().len();
        out.push(LogicalLine {
            indent,
            text: std::mem::take(text),
            code: std::mem::take(code),
        });
    };

    while let Some(c) = chars.next() {
        if let Some((q, triple)) = in_string {
            text.push(c);
            code.push(if c == '\n' { '\n' } else { ' ' });
            if c == '\\' {
                if let Some(n) = chars.next() {
                    text.push(n);
                    code.push(if n == '\n' { '\n' } else { ' ' });
                }
                continue;
            }
            if c == q {
                if !triple {
                    in_string = None;
                    code.pop();
                    code.push(q);
                } else if chars.peek() == Some(&q) {
                    let mut ahead = chars.clone();
                    ahead.next();
                    if ahead.peek() == Some(&q) {
                        chars.next();
                        chars.next();
                        text.push(q);
                        text.push(q);
                        code.push(' ');
                        code.push(' ');
                        in_string = None;
                    }
                }
            } else if c == '\n' && !triple {
                // Unterminated single-quoted string: end it at the line break.
                in_string = None;
                text.pop();
                code.pop();
                flush(&mut text, &mut code, &mut out);
                depth = 0;
            }
            continue;
        }
        match c {
            '#' => {
                text.push(c);
                code.push(' ');
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    text.push(n);
                    code.push(' ');
                    chars.next();
                }
            }
            '\'' | '"' => {
                text.push(c);
                code.push(c);
                let mut ahead = chars.clone();
                if ahead.next() == Some(c) && ahead.next() == Some(c) {
                    chars.next();
                    chars.next();
                    text.push(c);
                    text.push(c);
                    code.push(' ');
                    code.push(' ');
                    in_string = Some((c, true));
                } else {
                    in_string = Some((c, false));
                }
            }
            '(' | '[' | '{' => {
                depth += 1;
                text.push(c);
                code.push(c);
            }
            ')' | ']' | '}' => {
                depth = (depth - 1).max(0);
                text.push(c);
                code.push(c);
            }
            '\\' if chars.peek() == Some(&'\n') => {
                text.push(c);
                code.push(' ');
                continued = true;
            }
            '\n' => {
                if depth > 0 || continued {
                    text.push(c);
                    code.push(c);
                    continued = false;
                } else {
                    flush(&mut text, &mut code, &mut out);
                }
            }
            _ => {
                text.push(c);
                code.push(c);
            }
        }
    }
    if !text.is_empty() {
        flush(&mut text, &mut code, &mut out);
    }
    out
}

/// True when `code` contains `word` as a whole identifier.
pub(crate) fn contains_word(code: &str, word: &str) -> bool {
    let mask = vec![true; code.len()];
    !find_word(code, &mask, word).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_hides_strings_and_comments() {
        let src = r#"int a = 1; // assert(x)
const char* s = "assert(y)"; /* assert */ assert(z);"#;
        let mask = cpp_code_mask(src);
        let hits = find_word(src, &mask, "assert");
        assert_eq!(hits.len(), 1);
        assert_eq!(&src[hits[0]..hits[0] + 9], "assert(z)");
    }

    #[test]
    fn finds_and_strips_main() {
        let src = "#include <cstdio>\nint f(){return 1;}\nint main() {\n  if (1) { puts(\"}\"); }\n  return 0;\n}\nint g;\n";
        let span = find_cpp_main(src).unwrap();
        assert_eq!(&src[span.start..span.start + 10], "int main()");
        assert_eq!(strip_cpp_main(src), "#include <cstdio>\nint f(){return 1;}\n\nint g;\n");
        assert_eq!(strip_cpp_main("int f();"), "int f();");
    }

    #[test]
    fn cpp_statement_boundaries() {
        let body = r#"
    vector<int> a = {1, 2, 3};
    assert (f(a) == 3);
    for (int i = 0; i < 3; i++) {
        assert(g(i));
    }
    if (x) { y(); } else { z(); }
    do { k++; } while (k < 3);
    { int scoped = 1; }
    return 0;
"#;
        let stmts = cpp_statements(body);
        assert_eq!(stmts.len(), 7, "{stmts:#?}");
        assert_eq!(stmts[0].trim(), "vector<int> a = {1, 2, 3};");
        assert!(stmts[2].trim_start().starts_with("for"));
        assert!(stmts[3].contains("else"));
        assert!(stmts[4].contains("while (k < 3);"));
        assert_eq!(stmts[6].trim(), "return 0;");
    }

    #[test]
    fn python_logical_lines_join_brackets_and_strings() {
        let src = "x = [1,\n     2]\ns = '''a\nb'''\ny = 1 + \\\n    2\n# assert comment\nassert 'assert' == 'x'\n";
        let lines = python_logical_lines(src);
        let texts: Vec<&str> = lines.iter().map(|l| l.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "x = [1,\n     2]",
                "s = '''a\nb'''",
                "y = 1 + \\\n    2",
                "# assert comment",
                "assert 'assert' == 'x'"
            ]
        );
        assert!(lines[3].is_blank());
        assert!(contains_word(&lines[4].code, "assert"));
        assert!(!contains_word(&lines[1].code, "assert"));
    }

    #[test]
    fn python_indent_recorded() {
        let lines = python_logical_lines("def f():\n    return 1\n");
        assert_eq!(lines[0].indent, 0);
        assert_eq!(lines[1].indent, 4);
    }
}
