//! Recursive-descent parser for the supported query subset:
//! `let $v := E return E`, child paths (`./a/b`, `a/b`, `$v/a`, `.`),
//! `sum(E)`, parenthesized expressions and direct element constructors with
//! `{E}` interpolation.

use super::xml::{is_xml_name, resolve_entity};
use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStart {
    Context,
    Variable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Let {
        var: String,
        bound: Box<Expr>,
        body: Box<Expr>,
    },
    /// Child steps from the context item or a variable; no steps means the
    /// start itself.
    Path { start: PathStart, steps: Vec<String> },
    Sum(Box<Expr>),
    Element(Constructor),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constructor {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub content: Vec<Content>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Content {
    Text(String),
    Element(Constructor),
    Enclosed(Expr),
}

/// A parsed query. Every variable reference is bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryExpr {
    pub root: Expr,
}

impl std::str::FromStr for QueryExpr {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_query(s)
    }
}

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "for", "where", "order", "if", "some", "every", "typeswitch", "declare", "element", "attribute", "text",
    "document", "comment",
];

pub fn parse_query(text: &str) -> Result<QueryExpr, QueryError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        scope: Vec::new(),
    };
    p.skip_ws()?;
    if p.at_end() {
        return Err(p.error("empty query"));
    }
    let root = p.expr()?;
    p.skip_ws()?;
    if !p.at_end() {
        return Err(p.error(format!("unexpected {}", p.describe_next())));
    }
    Ok(QueryExpr { root })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    scope: Vec<String>,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> QueryError {
        QueryError::Syntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek2(&self) -> Option<char> {
        self.rest().chars().nth(1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn describe_next(&self) -> String {
        match self.peek() {
            None => "end of query".into(),
            Some(_) => {
                let snippet: String = self.rest().chars().take(12).collect();
                format!("{snippet:?}")
            }
        }
    }

    /// Skips whitespace and `(: ... :)` comments.
    fn skip_ws(&mut self) -> Result<(), QueryError> {
        loop {
            let trimmed = self.rest().trim_start();
            self.pos = self.src.len() - trimmed.len();
            if !trimmed.starts_with("(:") {
                return Ok(());
            }
            let start = self.pos;
            let mut depth = 0usize;
            loop {
                if self.rest().starts_with("(:") {
                    depth += 1;
                    self.pos += 2;
                } else if self.rest().starts_with(":)") {
                    depth -= 1;
                    self.pos += 2;
                    if depth == 0 {
                        break;
                    }
                } else if self.bump().is_none() {
                    self.pos = start;
                    return Err(self.error("unterminated comment"));
                }
            }
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), QueryError> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`, found {}", self.describe_next())))
        }
    }

    fn name(&mut self) -> Option<&'a str> {
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_alphabetic() || c == '_'
            } else {
                c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '\u{B7}')
            };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        if end == 0 {
            return None;
        }
        let name = &rest[..end];
        debug_assert!(is_xml_name(name));
        self.pos += end;
        Some(name)
    }

    fn keyword_ahead(&self, word: &str) -> bool {
        let rest = self.rest();
        rest.starts_with(word)
            && rest[word.len()..]
                .chars()
                .next()
                .is_none_or(|c| !(c.is_alphanumeric() || matches!(c, '_' | '-' | '.')))
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        self.skip_ws()?;
        if self.keyword_ahead("let") {
            return self.let_expr();
        }
        self.primary()
    }

    fn let_expr(&mut self) -> Result<Expr, QueryError> {
        self.pos += 3;
        self.skip_ws()?;
        self.expect("$")?;
        let var = self.name().ok_or_else(|| self.error("expected a variable name after `$`"))?.to_string();
        self.skip_ws()?;
        self.expect(":=")?;
        let bound = self.expr()?;
        self.skip_ws()?;
        if self.rest().starts_with(',') {
            return Err(self.error("multiple bindings in one `let` are not supported"));
        }
        if !self.keyword_ahead("return") {
            return Err(self.error(format!("expected `return`, found {}", self.describe_next())));
        }
        self.pos += "return".len();
        self.scope.push(var.clone());
        let body = self.expr();
        self.scope.pop();
        Ok(Expr::Let {
            var,
            bound: Box::new(bound),
            body: Box::new(body?),
        })
    }

    fn primary(&mut self) -> Result<Expr, QueryError> {
        match self.peek() {
            None => Err(self.error("unexpected end of query")),
            Some('(') => {
                self.bump();
                let inner = self.expr()?;
                self.skip_ws()?;
                self.expect(")")?;
                Ok(inner)
            }
            Some('$') => {
                let at = self.pos;
                self.bump();
                let var = self.name().ok_or_else(|| self.error("expected a variable name after `$`"))?.to_string();
                if !self.scope.contains(&var) {
                    return Err(QueryError::UnboundVariable { name: var, position: at });
                }
                let steps = self.steps()?;
                Ok(Expr::Path {
                    start: PathStart::Variable(var),
                    steps,
                })
            }
            Some('<') => {
                if !self.peek2().is_some_and(|c| c.is_alphabetic() || c == '_') {
                    return Err(self.error(format!("unexpected {}", self.describe_next())));
                }
                Ok(Expr::Element(self.constructor()?))
            }
            Some('.') => {
                self.bump();
                match self.peek() {
                    Some('.') => Err(self.error("parent steps are not supported")),
                    Some('/') => {
                        let steps = self.steps()?;
                        Ok(Expr::Path {
                            start: PathStart::Context,
                            steps,
                        })
                    }
                    _ => Ok(Expr::Path {
                        start: PathStart::Context,
                        steps: Vec::new(),
                    }),
                }
            }
            Some('/') => Err(self.error("absolute paths are not supported")),
            Some(c) if c.is_alphabetic() || c == '_' => {
                let at = self.pos;
                let name = self.name().expect("name start checked").to_string();
                let after = self.pos;
                self.skip_ws()?;
                if self.peek() == Some('(') && !self.rest().starts_with("(:") {
                    if name != "sum" {
                        self.pos = at;
                        return Err(self.error(format!("unsupported function `{name}`")));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.skip_ws()?;
                    self.expect(")")?;
                    return Ok(Expr::Sum(Box::new(arg)));
                }
                self.pos = after;
                if UNSUPPORTED_KEYWORDS.contains(&name.as_str()) && self.next_is_expression_keyword_follow() {
                    self.pos = at;
                    return Err(self.error(format!("unsupported expression `{name}`")));
                }
                let mut steps = vec![name];
                steps.extend(self.steps()?);
                Ok(Expr::Path {
                    start: PathStart::Context,
                    steps,
                })
            }
            Some(_) => Err(self.error(format!("unexpected {}", self.describe_next()))),
        }
    }

    /// True when a keyword-looking name is followed by what would start its
    /// clause (`for $x`, `if (`...), as opposed to being an element step.
    fn next_is_expression_keyword_follow(&self) -> bool {
        let rest = self.rest().trim_start();
        rest.starts_with('$') || rest.starts_with('(') || rest.starts_with('{')
    }

    fn steps(&mut self) -> Result<Vec<String>, QueryError> {
        let mut steps = Vec::new();
        while self.peek() == Some('/') {
            self.bump();
            match self.peek() {
                Some('/') => return Err(self.error("descendant steps are not supported")),
                Some('@') => return Err(self.error("attribute steps are not supported")),
                Some('*') => return Err(self.error("wildcard steps are not supported")),
                _ => {}
            }
            let step = self.name().ok_or_else(|| self.error("expected an element name after `/`"))?;
            steps.push(step.to_string());
        }
        if self.peek() == Some('[') {
            return Err(self.error("predicates are not supported"));
        }
        Ok(steps)
    }

    fn reference(&mut self, into: &mut String) -> Result<(), QueryError> {
        let end = self.rest().find(';').ok_or_else(|| self.error("unterminated entity reference"))?;
        let name = &self.rest()[1..end];
        let c = resolve_entity(name).ok_or_else(|| self.error(format!("unknown entity reference &{name};")))?;
        into.push(c);
        self.pos += end + 1;
        Ok(())
    }

    fn constructor(&mut self) -> Result<Constructor, QueryError> {
        self.expect("<")?;
        let name = self.name().ok_or_else(|| self.error("expected an element name"))?.to_string();
        let mut attributes: Vec<(String, String)> = Vec::new();
        loop {
            let before = self.pos;
            self.skip_tag_ws();
            match self.peek() {
                Some('/') => {
                    self.expect("/>")?;
                    return Ok(Constructor {
                        name,
                        attributes,
                        content: Vec::new(),
                    });
                }
                Some('>') => {
                    self.bump();
                    break;
                }
                Some(_) if self.pos > before => {
                    let attr = self.name().ok_or_else(|| self.error("expected an attribute name"))?.to_string();
                    if attributes.iter().any(|(k, _)| *k == attr) {
                        return Err(self.error(format!("duplicate attribute `{attr}`")));
                    }
                    self.skip_tag_ws();
                    self.expect("=")?;
                    self.skip_tag_ws();
                    let value = self.attribute_value()?;
                    attributes.push((attr, value));
                }
                _ => return Err(self.error(format!("malformed start tag <{name}>"))),
            }
        }

        let mut content = Vec::new();
        let mut text = String::new();
        let flush = |text: &mut String, content: &mut Vec<Content>| {
            if !text.trim().is_empty() {
                content.push(Content::Text(std::mem::take(text)));
            }
            text.clear();
        };
        loop {
            match self.peek() {
                None => return Err(self.error(format!("unclosed element constructor <{name}>"))),
                Some('<') if self.peek2() == Some('/') => {
                    flush(&mut text, &mut content);
                    self.pos += 2;
                    let close = self.name().unwrap_or_default();
                    if close != name {
                        return Err(self.error(format!("end tag </{close}> does not match <{name}>")));
                    }
                    self.skip_tag_ws();
                    self.expect(">")?;
                    return Ok(Constructor {
                        name,
                        attributes,
                        content,
                    });
                }
                Some('<') => {
                    if !self.peek2().is_some_and(|c| c.is_alphabetic() || c == '_') {
                        return Err(self.error("only element constructors may appear as markup"));
                    }
                    flush(&mut text, &mut content);
                    content.push(Content::Element(self.constructor()?));
                }
                Some('{') if self.peek2() == Some('{') => {
                    self.pos += 2;
                    text.push('{');
                }
                Some('}') if self.peek2() == Some('}') => {
                    self.pos += 2;
                    text.push('}');
                }
                Some('}') => return Err(self.error("unmatched `}` in element content")),
                Some('{') => {
                    flush(&mut text, &mut content);
                    self.bump();
                    let inner = self.expr()?;
                    self.skip_ws()?;
                    self.expect("}")?;
                    content.push(Content::Enclosed(inner));
                }
                Some('&') => self.reference(&mut text)?,
                Some(c) => {
                    self.bump();
                    text.push(c);
                }
            }
        }
    }

    fn skip_tag_ws(&mut self) {
        while self.peek().is_some_and(|c| matches!(c, ' ' | '\t' | '\r' | '\n')) {
            self.bump();
        }
    }

    fn attribute_value(&mut self) -> Result<String, QueryError> {
        let quote = match self.bump() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(self.error("expected a quoted attribute value")),
        };
        let mut value = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated attribute value")),
                Some(c) if c == quote => {
                    if self.peek2() == Some(quote) {
                        self.pos += 2;
                        value.push(quote);
                        continue;
                    }
                    self.bump();
                    return Ok(value);
                }
                Some('{') if self.peek2() == Some('{') => {
                    self.pos += 2;
                    value.push('{');
                }
                Some('}') if self.peek2() == Some('}') => {
                    self.pos += 2;
                    value.push('}');
                }
                Some('{') | Some('}') => return Err(self.error("enclosed expressions in attributes are not supported")),
                Some('<') => return Err(self.error("`<` in attribute value")),
                Some('&') => self.reference(&mut value)?,
                Some(c) => {
                    self.bump();
                    value.push(c);
                }
            }
        }
    }
}
