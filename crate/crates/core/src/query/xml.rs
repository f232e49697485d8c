//! XML tree model with one canonical serialization.
//!
//! Whitespace-only text is dropped on parse, empty elements serialize as
//! `<e/>`, attributes keep source order. Comments, processing instructions,
//! CDATA sections and document type declarations are rejected.

use std::fmt;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("XML error at byte {position}: {message}")]
pub struct XmlError {
    pub position: u64,
    pub message: String,
}

impl XmlError {
    fn new(position: u64, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum XmlNode {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Element {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            attributes: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push((name.into(), value.into()));
        self
    }

    pub fn with_child(mut self, child: impl Into<XmlNode>) -> Self {
        self.children.push(child.into());
        self
    }

    pub fn with_text(self, text: impl Into<String>) -> Self {
        self.with_child(XmlNode::Text(text.into()))
    }

    /// Child elements called `name`, in document order.
    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter_map(move |c| match c {
            XmlNode::Element(e) if e.name == name => Some(e),
            _ => None,
        })
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(XmlNode::as_element)
    }

    /// Concatenated text of all descendants.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        collect_text(&self.children, &mut out);
        out
    }

    /// Merges adjacent text children and drops whitespace-only ones, the
    /// shape every parsed tree already has.
    pub fn normalize(&mut self) {
        let mut merged: Vec<XmlNode> = Vec::with_capacity(self.children.len());
        for child in self.children.drain(..) {
            match (merged.last_mut(), child) {
                (Some(XmlNode::Text(prev)), XmlNode::Text(t)) => prev.push_str(&t),
                (_, child) => merged.push(child),
            }
        }
        merged.retain(|c| !matches!(c, XmlNode::Text(t) if t.trim().is_empty()));
        self.children = merged;
    }
}

fn collect_text(nodes: &[XmlNode], out: &mut String) {
    for n in nodes {
        match n {
            XmlNode::Text(t) => out.push_str(t),
            XmlNode::Element(e) => collect_text(&e.children, out),
        }
    }
}

impl From<Element> for XmlNode {
    fn from(e: Element) -> Self {
        XmlNode::Element(e)
    }
}

impl XmlNode {
    pub fn text(s: impl Into<String>) -> Self {
        XmlNode::Text(s.into())
    }

    pub fn as_element(&self) -> Option<&Element> {
        match self {
            XmlNode::Element(e) => Some(e),
            XmlNode::Text(_) => None,
        }
    }

    /// Text content: the text itself, or all descendant text of an element.
    pub fn string_value(&self) -> String {
        match self {
            XmlNode::Text(t) => t.clone(),
            XmlNode::Element(e) => e.text_content(),
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        write_node(self, &mut out);
        out
    }
}

impl fmt::Display for XmlNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

pub fn serialize_xml(node: &XmlNode) -> String {
    node.serialize()
}

/// Serializes a node sequence back to back.
pub fn serialize_nodes(nodes: &[XmlNode]) -> String {
    let mut out = String::new();
    for n in nodes {
        write_node(n, &mut out);
    }
    out
}

fn write_node(node: &XmlNode, out: &mut String) {
    match node {
        XmlNode::Text(t) => escape_into(t, out, false),
        XmlNode::Element(e) => {
            out.push('<');
            out.push_str(&e.name);
            for (k, v) in &e.attributes {
                out.push(' ');
                out.push_str(k);
                out.push_str("=\"");
                escape_into(v, out, true);
                out.push('"');
            }
            if e.children.is_empty() {
                out.push_str("/>");
                return;
            }
            out.push('>');
            for c in &e.children {
                write_node(c, out);
            }
            out.push_str("</");
            out.push_str(&e.name);
            out.push('>');
        }
    }
}

pub(crate) fn escape_into(s: &str, out: &mut String, attribute: bool) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

/// XML Name without namespace colons.
pub fn is_xml_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '\u{B7}'))
}

pub(crate) fn resolve_entity(name: &str) -> Option<char> {
    match name {
        "lt" => Some('<'),
        "gt" => Some('>'),
        "amp" => Some('&'),
        "apos" => Some('\''),
        "quot" => Some('"'),
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix('x') {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse().ok()?,
            };
            char::from_u32(code).filter(|&c| c != '\0')
        }
    }
}

fn start_element(start: &BytesStart<'_>, pos: u64) -> Result<Element, XmlError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|_| XmlError::new(pos, "element name is not UTF-8"))?
        .to_string();
    if !is_xml_name(&name) {
        return Err(XmlError::new(pos, format!("invalid element name {name:?}")));
    }
    let mut element = Element::new(name);
    for attr in start.attributes() {
        let attr = attr.map_err(|e| XmlError::new(pos, e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|_| XmlError::new(pos, "attribute name is not UTF-8"))?;
        if !is_xml_name(key) {
            return Err(XmlError::new(pos, format!("invalid attribute name {key:?}")));
        }
        let value = attr.unescape_value().map_err(|e| XmlError::new(pos, e.to_string()))?;
        element.attributes.push((key.to_string(), value.into_owned()));
    }
    Ok(element)
}

/// Parses a sequence of top-level elements and text.
pub fn parse_fragment(input: impl AsRef<[u8]>) -> Result<Vec<XmlNode>, XmlError> {
    let text = std::str::from_utf8(input.as_ref()).map_err(|e| XmlError::new(e.valid_up_to() as u64, "input is not UTF-8"))?;
    let mut reader = Reader::from_str(text);
    let mut top: Vec<XmlNode> = Vec::new();
    let mut stack: Vec<Element> = Vec::new();
    let mut seen_content = false;

    fn push(stack: &mut [Element], top: &mut Vec<XmlNode>, node: XmlNode) {
        match stack.last_mut() {
            Some(parent) => parent.children.push(node),
            None => top.push(node),
        }
    }
    fn push_text(stack: &mut [Element], top: &mut Vec<XmlNode>, s: &str) {
        let siblings = match stack.last_mut() {
            Some(parent) => &mut parent.children,
            None => top,
        };
        match siblings.last_mut() {
            Some(XmlNode::Text(prev)) => prev.push_str(s),
            _ => siblings.push(XmlNode::Text(s.to_string())),
        }
    }

    loop {
        let pos = reader.buffer_position();
        let event = reader.read_event().map_err(|e| XmlError::new(pos, e.to_string()))?;
        match event {
            Event::Start(start) => {
                stack.push(start_element(&start, pos)?);
                seen_content = true;
            }
            Event::Empty(start) => {
                let e = start_element(&start, pos)?;
                push(&mut stack, &mut top, e.into());
                seen_content = true;
            }
            Event::End(_) => {
                let mut done = stack.pop().ok_or_else(|| XmlError::new(pos, "unmatched end tag"))?;
                done.normalize();
                push(&mut stack, &mut top, done.into());
            }
            Event::Text(t) => {
                let s = t.decode().map_err(|e| XmlError::new(pos, e.to_string()))?;
                if !s.is_empty() {
                    push_text(&mut stack, &mut top, &s);
                    seen_content |= !s.trim().is_empty();
                }
            }
            Event::GeneralRef(r) => {
                let name = r.decode().map_err(|e| XmlError::new(pos, e.to_string()))?;
                let c = resolve_entity(&name).ok_or_else(|| XmlError::new(pos, format!("unknown entity &{name};")))?;
                push_text(&mut stack, &mut top, c.encode_utf8(&mut [0; 4]));
                seen_content = true;
            }
            Event::Decl(_) if !seen_content && stack.is_empty() && top.iter().all(|n| matches!(n, XmlNode::Text(t) if t.trim().is_empty())) => {}
            Event::Decl(_) => return Err(XmlError::new(pos, "XML declaration not at start")),
            Event::CData(_) => return Err(XmlError::new(pos, "CDATA sections are not supported")),
            Event::Comment(_) => return Err(XmlError::new(pos, "comments are not supported")),
            Event::PI(_) => return Err(XmlError::new(pos, "processing instructions are not supported")),
            Event::DocType(_) => return Err(XmlError::new(pos, "document type declarations are not supported")),
            Event::Eof => break,
        }
    }
    if let Some(open) = stack.last() {
        return Err(XmlError::new(text.len() as u64, format!("unclosed element <{}>", open.name)));
    }
    let mut root = Element::new("");
    root.children = top;
    root.normalize();
    Ok(root.children)
}

/// Parses a document with exactly one root element.
pub fn parse_xml(input: impl AsRef<[u8]>) -> Result<XmlNode, XmlError> {
    let nodes = parse_fragment(input)?;
    let mut iter = nodes.into_iter();
    match (iter.next(), iter.next()) {
        (Some(root @ XmlNode::Element(_)), None) => Ok(root),
        (None, _) => Err(XmlError::new(0, "no root element")),
        _ => Err(XmlError::new(0, "content outside the root element")),
    }
}
