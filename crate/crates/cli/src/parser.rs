//! Parser for the `.msg` specification format.
//!
//! ```text
//! spec     := bmsc* graph ;
//! bmsc     := "bmsc" NAME "{" "processes" ID+ ";" msgdecl* order* "}" ;
//! msgdecl  := "msg" ID ":" ID "->" ID "label" ID ";" ;
//! order    := "order" ID ":" ( "!"ID | "?"ID )+ ";" ;
//! graph    := "graph" NAME "{" "init" ID ";" "final" ID ";" nodedecl* edge* "}" ;
//! nodedecl := "node" ID ":" (NAME | "empty") ";" ;
//! edge     := ID "->" ID ";" ;
//! ```
//!
//! `//` starts a line comment. When an `order` clause is omitted for a
//! process, its events follow message declaration order. Explicit orders are
//! the only way to express crossing messages.

use msgsynth_core::bmsc::{Bmsc, BmscBuilder, OrderItem};
use msgsynth_core::graph::{MsgGraph, NodeId};
use std::collections::BTreeMap;
use std::fmt;

/// A located parse or semantic diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Parsed specification: the named charts and the graph, plus enough source
/// structure to print a canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSpec {
    pub charts: BTreeMap<String, Bmsc>,
    pub graph: MsgGraph,
    pub graph_name: String,
    /// Chart name labelling each node; `None` for the builtin empty chart.
    pub node_labels: BTreeMap<NodeId, Option<String>>,
    /// Message names per chart, by declaration index.
    pub message_names: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Ident(&'a str),
    LBrace,
    RBrace,
    Semi,
    Colon,
    Arrow,
    Bang,
    Question,
}

impl fmt::Display for Tok<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::Semi => f.write_str("';'"),
            Tok::Colon => f.write_str("':'"),
            Tok::Arrow => f.write_str("'->'"),
            Tok::Bang => f.write_str("'!'"),
            Tok::Question => f.write_str("'?'"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

type Spanned<'a> = (Tok<'a>, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self, n: usize) {
        for c in self.src[self.pos..self.pos + n].chars() {
            if c == '\n' {
                self.line += 1;
                self.column = 1;
            } else {
                self.column += 1;
            }
        }
        self.pos += n;
    }

    fn tokens(mut self) -> Result<Vec<Spanned<'a>>, Diagnostic> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let rest = &self.src[self.pos..];
            let c = rest.chars().next().unwrap();
            if c.is_whitespace() {
                self.bump(c.len_utf8());
                continue;
            }
            if rest.starts_with("//") {
                let end = rest.find('\n').unwrap_or(rest.len());
                self.bump(end);
                continue;
            }
            let (line, column) = (self.line, self.column);
            if rest.starts_with("->") {
                out.push((Tok::Arrow, line, column));
                self.bump(2);
                continue;
            }
            let simple = match c {
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                ';' => Some(Tok::Semi),
                ':' => Some(Tok::Colon),
                '!' => Some(Tok::Bang),
                '?' => Some(Tok::Question),
                _ => None,
            };
            if let Some(tok) = simple {
                out.push((tok, line, column));
                self.bump(1);
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let end = rest
                    .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                    .unwrap_or(rest.len());
                out.push((Tok::Ident(&rest[..end]), line, column));
                self.bump(end);
                continue;
            }
            return Err(Diagnostic {
                line,
                column,
                message: format!("unexpected character '{c}'"),
            });
        }
        Ok(out)
    }
}

struct Parser<'a> {
    tokens: Vec<Spanned<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Spanned<'a>> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|(_, l, c)| (*l, *c)).unwrap_or_else(|| {
            self.tokens
                .last()
                .map(|(_, l, c)| (*l, *c + 1))
                .unwrap_or((1, 1))
        })
    }

    fn fail(&self, message: impl Into<String>) -> Diagnostic {
        let (line, column) = self.here();
        Diagnostic {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<Spanned<'a>, Diagnostic> {
        let tok = self
            .peek()
            .copied()
            .ok_or_else(|| self.fail(format!("expected {what}, found end of input")))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: Tok<'_>) -> Result<(), Diagnostic> {
        let (tok, line, column) = self.next(&format!("{want}"))?;
        if core::mem::discriminant(&tok) == core::mem::discriminant(&want)
            && (!matches!(want, Tok::Ident(_)) || tok == want)
        {
            Ok(())
        } else {
            Err(Diagnostic {
                line,
                column,
                message: format!("expected {want}, found {tok}"),
            })
        }
    }

    fn ident(&mut self, what: &str) -> Result<(&'a str, usize, usize), Diagnostic> {
        match self.next(what)? {
            (Tok::Ident(s), l, c) => Ok((s, l, c)),
            (tok, line, column) => Err(Diagnostic {
                line,
                column,
                message: format!("expected {what}, found {tok}"),
            }),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), Diagnostic> {
        let (s, line, column) = self.ident(&format!("'{kw}'"))?;
        if s == kw {
            Ok(())
        } else {
            Err(Diagnostic {
                line,
                column,
                message: format!("expected '{kw}', found '{s}'"),
            })
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some((Tok::Ident(s), _, _)) if *s == kw)
    }
}

/// Parse a specification source into named charts and a graph. All
/// diagnostics carry line and column; semantic checks include chart and graph
/// invariants.
pub fn parse(source: &str) -> Result<ParsedSpec, Vec<Diagnostic>> {
    let tokens = Lexer::new(source).tokens().map_err(|d| vec![d])?;
    let mut p = Parser { tokens, pos: 0 };
    let mut diagnostics = Vec::new();

    let mut charts: BTreeMap<String, Bmsc> = BTreeMap::new();
    let mut message_names: BTreeMap<String, Vec<String>> = BTreeMap::new();
    while p.at_keyword("bmsc") {
        match parse_bmsc(&mut p) {
            Ok((name, loc, bmsc, names)) => match charts.entry(name.clone()) {
                std::collections::btree_map::Entry::Occupied(_) => {
                    diagnostics.push(Diagnostic {
                        line: loc.0,
                        column: loc.1,
                        message: format!("chart '{name}' is declared twice"),
                    });
                }
                std::collections::btree_map::Entry::Vacant(slot) => {
                    // Chart invariants, located at the declaration.
                    for v in bmsc.validate() {
                        diagnostics.push(Diagnostic {
                            line: loc.0,
                            column: loc.1,
                            message: format!("chart '{name}': {v}"),
                        });
                    }
                    message_names.insert(name, names);
                    slot.insert(bmsc);
                }
            },
            Err(d) => return Err(push_and(diagnostics, d)),
        }
    }

    let (graph, graph_name, graph_loc, node_labels) = match parse_graph(&mut p, &charts) {
        Ok(g) => g,
        Err(d) => return Err(push_and(diagnostics, d)),
    };
    if let Some((tok, line, column)) = p.peek() {
        diagnostics.push(Diagnostic {
            line: *line,
            column: *column,
            message: format!("expected end of input, found {tok}"),
        });
    }
    for v in graph.validate() {
        diagnostics.push(Diagnostic {
            line: graph_loc.0,
            column: graph_loc.1,
            message: format!("graph '{graph_name}': {v}"),
        });
    }

    if diagnostics.is_empty() {
        Ok(ParsedSpec {
            charts,
            graph,
            graph_name,
            node_labels,
            message_names,
        })
    } else {
        Err(diagnostics)
    }
}

fn push_and(mut list: Vec<Diagnostic>, d: Diagnostic) -> Vec<Diagnostic> {
    list.push(d);
    list
}

type ChartParse = (String, (usize, usize), Bmsc, Vec<String>);

fn parse_bmsc(p: &mut Parser<'_>) -> Result<ChartParse, Diagnostic> {
    p.keyword("bmsc")?;
    let (name, line, column) = p.ident("chart name")?;
    p.expect(Tok::LBrace)?;
    p.keyword("processes")?;

    let mut builder = BmscBuilder::new();
    let mut processes: Vec<String> = Vec::new();
    while let Some((Tok::Ident(s), ..)) = p.peek() {
        processes.push((*s).to_owned());
        builder = builder.process(*s);
        p.pos += 1;
    }
    if processes.is_empty() {
        return Err(p.fail("expected at least one process name"));
    }
    p.expect(Tok::Semi)?;

    let mut names: Vec<String> = Vec::new();
    let mut directions: Vec<(String, String)> = Vec::new();
    while p.at_keyword("msg") {
        p.keyword("msg")?;
        let (mname, mline, mcol) = p.ident("message name")?;
        if names.iter().any(|n| n == mname) {
            return Err(Diagnostic {
                line: mline,
                column: mcol,
                message: format!("message '{mname}' is declared twice"),
            });
        }
        p.expect(Tok::Colon)?;
        let (from, fline, fcol) = p.ident("sender process")?;
        p.expect(Tok::Arrow)?;
        let (to, tline, tcol) = p.ident("receiver process")?;
        p.keyword("label")?;
        let (label, ..) = p.ident("message label")?;
        p.expect(Tok::Semi)?;
        if !processes.iter().any(|q| q == from) {
            return Err(Diagnostic {
                line: fline,
                column: fcol,
                message: format!("process '{from}' is not declared in chart '{name}'"),
            });
        }
        if !processes.iter().any(|q| q == to) {
            return Err(Diagnostic {
                line: tline,
                column: tcol,
                message: format!("process '{to}' is not declared in chart '{name}'"),
            });
        }
        names.push(mname.to_owned());
        directions.push((from.to_owned(), to.to_owned()));
        builder = builder.message(from, to, label);
    }

    let mut ordered: Vec<String> = Vec::new();
    while p.at_keyword("order") {
        p.keyword("order")?;
        let (proc_name, oline, ocol) = p.ident("process name")?;
        if !processes.iter().any(|q| q == proc_name) {
            return Err(Diagnostic {
                line: oline,
                column: ocol,
                message: format!("process '{proc_name}' is not declared in chart '{name}'"),
            });
        }
        if ordered.iter().any(|q| q == proc_name) {
            return Err(Diagnostic {
                line: oline,
                column: ocol,
                message: format!("duplicate order clause for process '{proc_name}'"),
            });
        }
        ordered.push(proc_name.to_owned());
        p.expect(Tok::Colon)?;
        let mut items = Vec::new();
        loop {
            let dir = match p.peek() {
                Some((Tok::Bang, ..)) => true,
                Some((Tok::Question, ..)) => false,
                _ => break,
            };
            p.pos += 1;
            let (mname, mline, mcol) = p.ident("message name")?;
            let idx = names.iter().position(|n| n == mname).ok_or(Diagnostic {
                line: mline,
                column: mcol,
                message: format!("message '{mname}' is not declared in chart '{name}'"),
            })?;
            let owner = if dir {
                &directions[idx].0
            } else {
                &directions[idx].1
            };
            if owner != proc_name {
                return Err(Diagnostic {
                    line: mline,
                    column: mcol,
                    message: format!(
                        "event '{}{mname}' does not belong to process '{proc_name}'",
                        if dir { '!' } else { '?' }
                    ),
                });
            }
            items.push(if dir {
                OrderItem::Send(idx)
            } else {
                OrderItem::Receive(idx)
            });
        }
        if items.is_empty() {
            return Err(p.fail("expected at least one '!msg' or '?msg' event"));
        }
        p.expect(Tok::Semi)?;
        builder = builder.order(proc_name, items);
    }
    p.expect(Tok::RBrace)?;

    let bmsc = builder.build().map_err(|e| Diagnostic {
        line,
        column,
        message: format!("chart '{name}': {e}"),
    })?;
    Ok((name.to_owned(), (line, column), bmsc, names))
}

type GraphParse = (
    MsgGraph,
    String,
    (usize, usize),
    BTreeMap<NodeId, Option<String>>,
);

fn parse_graph(
    p: &mut Parser<'_>,
    charts: &BTreeMap<String, Bmsc>,
) -> Result<GraphParse, Diagnostic> {
    p.keyword("graph")?;
    let (name, line, column) = p.ident("graph name")?;
    p.expect(Tok::LBrace)?;
    p.keyword("init")?;
    let (init, ..) = p.ident("initial node")?;
    p.expect(Tok::Semi)?;
    p.keyword("final")?;
    let (terminal, ..) = p.ident("terminal node")?;
    p.expect(Tok::Semi)?;

    let mut graph = MsgGraph::new(init, terminal);
    let mut node_labels = BTreeMap::new();
    while p.at_keyword("node") {
        p.keyword("node")?;
        let (node, nline, ncol) = p.ident("node name")?;
        if graph.contains_node(&NodeId::new(node)) {
            return Err(Diagnostic {
                line: nline,
                column: ncol,
                message: format!("node '{node}' is declared twice"),
            });
        }
        p.expect(Tok::Colon)?;
        let (label, lline, lcol) = p.ident("chart name or 'empty'")?;
        p.expect(Tok::Semi)?;
        if label == "empty" {
            graph.add_node(node, Bmsc::empty::<_, &str>([]));
            node_labels.insert(NodeId::new(node), None);
        } else {
            let chart = charts.get(label).ok_or(Diagnostic {
                line: lline,
                column: lcol,
                message: format!("chart '{label}' is not declared"),
            })?;
            graph.add_node(node, chart.clone());
            node_labels.insert(NodeId::new(node), Some(label.to_owned()));
        }
    }
    while let Some((Tok::Ident(_), ..)) = p.peek() {
        let (from, fline, fcol) = p.ident("edge source")?;
        p.expect(Tok::Arrow)?;
        let (to, tline, tcol) = p.ident("edge target")?;
        p.expect(Tok::Semi)?;
        if !graph.contains_node(&NodeId::new(from)) {
            return Err(Diagnostic {
                line: fline,
                column: fcol,
                message: format!("node '{from}' is not declared"),
            });
        }
        if !graph.contains_node(&NodeId::new(to)) {
            return Err(Diagnostic {
                line: tline,
                column: tcol,
                message: format!("node '{to}' is not declared"),
            });
        }
        graph.add_edge(from, to);
    }
    p.expect(Tok::RBrace)?;
    Ok((graph, name.to_owned(), (line, column), node_labels))
}
