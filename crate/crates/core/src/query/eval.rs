use std::fmt;

use super::decimal::Decimal;
use super::parser::{Constructor, Content, Expr, PathStart, QueryExpr};
use super::xml::{serialize_nodes, Element, XmlNode};
use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Node(XmlNode),
    Number(Decimal),
}

/// An evaluation result: a flat sequence of items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Value(pub Vec<Item>);

impl Value {
    pub fn items(&self) -> &[Item] {
        &self.0
    }

    /// Item serializations back to back; numbers in minimal decimal form.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for item in &self.0 {
            match item {
                Item::Node(n) => out.push_str(&serialize_nodes(std::slice::from_ref(n))),
                Item::Number(d) => out.push_str(&d.to_string()),
            }
        }
        out
    }

    /// Items as nodes; numbers become text nodes.
    pub fn into_nodes(self) -> Vec<XmlNode> {
        self.0
            .into_iter()
            .map(|item| match item {
                Item::Node(n) => n,
                Item::Number(d) => XmlNode::Text(d.to_string()),
            })
            .collect()
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

struct Env<'a> {
    context: &'a XmlNode,
    vars: Vec<(&'a str, Value)>,
}

impl Env<'_> {
    fn lookup(&self, name: &str) -> Result<&Value, QueryError> {
        self.vars
            .iter()
            .rev()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| QueryError::UnboundVariable {
                name: name.to_string(),
                position: 0,
            })
    }
}

pub fn evaluate(query: &QueryExpr, context: &XmlNode) -> Result<Value, QueryError> {
    let mut env = Env {
        context,
        vars: Vec::new(),
    };
    eval(&query.root, &mut env)
}

fn eval<'a>(expr: &'a Expr, env: &mut Env<'a>) -> Result<Value, QueryError> {
    match expr {
        Expr::Let { var, bound, body } => {
            let value = eval(bound, env)?;
            env.vars.push((var, value));
            let result = eval(body, env);
            env.vars.pop();
            result
        }
        Expr::Path { start, steps } => {
            let mut current: Vec<&XmlNode> = match start {
                PathStart::Context => vec![env.context],
                PathStart::Variable(v) => {
                    let value = env.lookup(v)?;
                    if steps.is_empty() {
                        return Ok(value.clone());
                    }
                    value
                        .0
                        .iter()
                        .map(|item| match item {
                            Item::Node(n) => Ok(n),
                            Item::Number(_) => Err(QueryError::Type(format!("path step /{} applied to a number", steps[0]))),
                        })
                        .collect::<Result<_, _>>()?
                }
            };
            for step in steps {
                current = current
                    .into_iter()
                    .filter_map(XmlNode::as_element)
                    .flat_map(|e| e.children.iter().filter(|c| matches!(c, XmlNode::Element(el) if el.name == *step)))
                    .collect();
            }
            Ok(Value(current.into_iter().cloned().map(Item::Node).collect()))
        }
        Expr::Sum(arg) => {
            let value = eval(arg, env)?;
            let mut total = Decimal::zero();
            for item in value.0 {
                let n = match item {
                    Item::Number(d) => d,
                    Item::Node(node) => {
                        let text = node.string_value();
                        text.parse()
                            .map_err(|_| QueryError::Type(format!("cannot convert {:?} to a number", text)))?
                    }
                };
                total = total + n;
            }
            Ok(Value(vec![Item::Number(total)]))
        }
        Expr::Element(c) => Ok(Value(vec![Item::Node(construct(c, env)?.into())])),
    }
}

fn construct<'a>(c: &'a Constructor, env: &mut Env<'a>) -> Result<Element, QueryError> {
    let mut element = Element::new(c.name.clone());
    element.attributes = c.attributes.clone();
    for part in &c.content {
        match part {
            Content::Text(t) => element.children.push(XmlNode::Text(t.clone())),
            Content::Element(inner) => element.children.push(construct(inner, env)?.into()),
            Content::Enclosed(e) => {
                let mut previous_atomic = false;
                for item in eval(e, env)?.0 {
                    match item {
                        Item::Node(n) => {
                            element.children.push(n);
                            previous_atomic = false;
                        }
                        Item::Number(d) => {
                            let sep = if previous_atomic { " " } else { "" };
                            element.children.push(XmlNode::Text(format!("{sep}{d}")));
                            previous_atomic = true;
                        }
                    }
                }
            }
        }
    }
    element.normalize();
    Ok(element)
}
