//! Penman reader.
//!
//! Supports the subset of Penman notation produced by AMR parsers:
//! `(var / concept :role target ...)` where a target is a nested node, a
//! reference to a variable defined elsewhere in the graph, a quoted string,
//! or a bare constant. Surface alignments (`~e.3`) are dropped and comment
//! lines are ignored except for `# ::id`.

use std::collections::{HashMap, HashSet};

use super::{AmrEdge, AmrError, AmrGraph, AmrNode};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
    Meta(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
}

fn strip_alignment(s: &str) -> &str {
    match s.find('~') {
        Some(0) | None => s,
        Some(k) => &s[..k],
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, AmrError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut line = 1;
    while let Some(&(start, c)) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                let mut end = text.len();
                while let Some(&(k, c)) = chars.peek() {
                    if c == '\n' {
                        end = k;
                        break;
                    }
                    chars.next();
                }
                let comment = &text[start + 1..end];
                if let Some(pos) = comment.find("::id") {
                    let rest = &comment[pos + 4..];
                    let rest = match rest.find(" ::") {
                        Some(k) => &rest[..k],
                        None => rest,
                    };
                    out.push(Spanned {
                        tok: Tok::Meta(rest.trim().to_string()),
                        line,
                    });
                }
            }
            '(' => {
                chars.next();
                out.push(Spanned {
                    tok: Tok::Open,
                    line,
                });
            }
            ')' => {
                chars.next();
                out.push(Spanned {
                    tok: Tok::Close,
                    line,
                });
            }
            '/' => {
                chars.next();
                out.push(Spanned {
                    tok: Tok::Slash,
                    line,
                });
            }
            '"' => {
                let open_line = line;
                chars.next();
                let mut value = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '\\' => {
                            if let Some((_, esc)) = chars.next() {
                                value.push(esc);
                            }
                        }
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\n' => {
                            line += 1;
                            value.push(c);
                        }
                        _ => value.push(c),
                    }
                }
                if !closed {
                    return Err(AmrError::Syntax {
                        line: open_line,
                        message: "unterminated string literal".into(),
                    });
                }
                // Alignments may trail a closing quote: "Spain"~e.4
                if let Some(&(_, '~')) = chars.peek() {
                    while let Some(&(_, c)) = chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' {
                            break;
                        }
                        chars.next();
                    }
                }
                out.push(Spanned {
                    tok: Tok::Str(value),
                    line: open_line,
                });
            }
            _ => {
                let mut end = text.len();
                while let Some(&(k, c)) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '"') || (c == '/' && k > start)
                    {
                        end = k;
                        break;
                    }
                    chars.next();
                }
                let raw = &text[start..end];
                let tok = if let Some(role) = raw.strip_prefix(':') {
                    let role = strip_alignment(role);
                    if role.is_empty() {
                        return Err(AmrError::Syntax {
                            line,
                            message: "empty role name".into(),
                        });
                    }
                    Tok::Role(role.to_string())
                } else {
                    Tok::Sym(strip_alignment(raw).to_string())
                };
                out.push(Spanned { tok, line });
            }
        }
    }
    Ok(out)
}

/// Bare symbols of the form `p`, `p2`, `ii`, `xv12` are variable references;
/// anything else (`-`, `imperative`, `1998`) is a constant.
fn looks_like_variable(s: &str) -> bool {
    let letters = s.chars().take_while(|c| c.is_ascii_lowercase()).count();
    (1..=2).contains(&letters) && s[letters..].chars().all(|c| c.is_ascii_digit())
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    defined: HashSet<String>,
    seen: HashMap<String, usize>,
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    referenced: Vec<String>,
    next_const: usize,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Spanned]) -> Self {
        Self {
            toks,
            pos: 0,
            defined: HashSet::new(),
            seen: HashMap::new(),
            nodes: Vec::new(),
            edges: Vec::new(),
            referenced: Vec::new(),
            next_const: 0,
        }
    }

    fn last_line(&self) -> usize {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| t.line)
            .unwrap_or(1)
    }

    fn next(&mut self) -> Option<&'a Spanned> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn unbalanced(&self) -> AmrError {
        AmrError::UnbalancedParens {
            line: self.last_line(),
        }
    }

    fn syntax(&self, line: usize, message: impl Into<String>) -> AmrError {
        AmrError::Syntax {
            line,
            message: message.into(),
        }
    }

    fn fresh_const_id(&mut self) -> String {
        loop {
            let id = format!("_c{}", self.next_const);
            self.next_const += 1;
            if !self.defined.contains(&id) {
                return id;
            }
        }
    }

    fn push_const(&mut self, concept: String) -> String {
        let id = self.fresh_const_id();
        self.nodes.push(AmrNode {
            id: id.clone(),
            concept,
        });
        id
    }

    /// Parses a node whose `(` has already been consumed; returns its variable.
    fn node(&mut self, open_line: usize) -> Result<String, AmrError> {
        let var = match self.next() {
            Some(Spanned {
                tok: Tok::Sym(v), ..
            }) => v.clone(),
            Some(Spanned {
                tok: Tok::Close,
                line,
            }) => {
                return Err(self.syntax(*line, "empty node"));
            }
            Some(t) => return Err(self.syntax(t.line, "expected a variable after '('")),
            None => return Err(self.unbalanced()),
        };
        if self.seen.contains_key(&var) {
            return Err(AmrError::DuplicateVariableDefinition {
                var,
                line: open_line,
            });
        }
        self.seen.insert(var.clone(), open_line);
        match self.next() {
            Some(Spanned {
                tok: Tok::Slash, ..
            }) => {}
            Some(t) => {
                return Err(self.syntax(t.line, format!("expected '/' after variable {var:?}")))
            }
            None => return Err(self.unbalanced()),
        }
        let concept = match self.next() {
            Some(Spanned {
                tok: Tok::Sym(c) | Tok::Str(c),
                ..
            }) if !c.is_empty() => c.clone(),
            Some(t) => return Err(self.syntax(t.line, format!("missing concept for {var:?}"))),
            None => return Err(self.unbalanced()),
        };
        self.nodes.push(AmrNode {
            id: var.clone(),
            concept,
        });

        loop {
            let Some(t) = self.next() else {
                return Err(self.unbalanced());
            };
            match &t.tok {
                Tok::Close => return Ok(var),
                Tok::Role(rel) => {
                    let rel = rel.clone();
                    let role_line = t.line;
                    // Reserve the slot so edges stay in pre-order.
                    let slot = self.edges.len();
                    self.edges.push(AmrEdge {
                        src: var.clone(),
                        rel: rel.clone(),
                        dst: String::new(),
                    });
                    let dst = match self.next() {
                        Some(Spanned {
                            tok: Tok::Open,
                            line,
                        }) => self.node(*line)?,
                        Some(Spanned {
                            tok: Tok::Str(s), ..
                        }) => self.push_const(s.clone()),
                        Some(Spanned {
                            tok: Tok::Sym(s),
                            line,
                        }) => {
                            if self.defined.contains(s) || looks_like_variable(s) {
                                if *s == var {
                                    return Err(AmrError::SelfLoop {
                                        var: var.clone(),
                                        line: *line,
                                    });
                                }
                                self.referenced.push(s.clone());
                                s.clone()
                            } else {
                                self.push_const(s.clone())
                            }
                        }
                        Some(Spanned {
                            tok: Tok::Close, ..
                        })
                        | Some(Spanned {
                            tok: Tok::Role(_), ..
                        }) => {
                            return Err(self.syntax(role_line, format!("role :{rel} has no target")))
                        }
                        Some(t) => return Err(self.syntax(t.line, "unexpected token")),
                        None => return Err(self.unbalanced()),
                    };
                    self.edges[slot].dst = dst;
                }
                Tok::Meta(_) => return Err(self.syntax(t.line, "metadata inside a graph")),
                _ => return Err(self.syntax(t.line, "expected a role or ')'")),
            }
        }
    }
}

/// Parses a token range holding exactly one graph.
fn parse_graph(toks: &[Spanned], question_id: &str, doc_id: &str) -> Result<AmrGraph, AmrError> {
    let mut defined = HashSet::new();
    for w in toks.windows(2) {
        if let (Tok::Open, Tok::Sym(v)) = (&w[0].tok, &w[1].tok) {
            defined.insert(v.clone());
        }
    }
    let mut p = Parser::new(toks);
    p.defined = defined;
    match p.next() {
        Some(Spanned {
            tok: Tok::Open,
            line,
        }) => {
            p.node(*line)?;
        }
        Some(Spanned {
            tok: Tok::Close,
            line,
        }) => return Err(AmrError::UnbalancedParens { line: *line }),
        Some(t) => return Err(p.syntax(t.line, "expected '('")),
        None => return Err(AmrError::EmptyGraph),
    }
    if let Some(t) = p.next() {
        return Err(match t.tok {
            Tok::Close => AmrError::UnbalancedParens { line: t.line },
            _ => p.syntax(t.line, "trailing content after graph"),
        });
    }
    for var in &p.referenced {
        if !p.seen.contains_key(var) {
            return Err(AmrError::DanglingReentrancy { var: var.clone() });
        }
    }
    let graph = AmrGraph {
        question_id: question_id.to_string(),
        doc_id: doc_id.to_string(),
        nodes: p.nodes,
        edges: p.edges,
    };
    graph.validate().map_err(|v| AmrError::Syntax {
        line: 1,
        message: v.to_string(),
    })?;
    Ok(graph)
}

/// Parses a single Penman graph.
pub fn parse_penman(text: &str, question_id: &str, doc_id: &str) -> Result<AmrGraph, AmrError> {
    let toks: Vec<Spanned> = lex(text)?
        .into_iter()
        .filter(|t| !matches!(t.tok, Tok::Meta(_)))
        .collect();
    parse_graph(&toks, question_id, doc_id)
}

/// A graph read from a multi-graph Penman file.
#[derive(Debug, Clone, PartialEq)]
pub struct PenmanBlock {
    /// Value of the preceding `# ::id` line, if any.
    pub meta_id: Option<String>,
    pub graph: AmrGraph,
}

/// Splits `text` into top-level graphs and parses each one.
///
/// A block's ids come from its `# ::id` comment: `::id <question_id>
/// <doc_id>` sets both, `::id <doc_id>` keeps `default_question_id`. Blocks
/// without metadata are named `<default_question_id>-<k>`.
pub fn parse_penman_blocks(
    text: &str,
    default_question_id: &str,
) -> Result<Vec<PenmanBlock>, AmrError> {
    let toks = lex(text)?;
    let mut blocks = Vec::new();
    let mut meta: Option<String> = None;
    let mut i = 0;
    while i < toks.len() {
        match &toks[i].tok {
            Tok::Meta(m) => {
                meta = Some(m.clone());
                i += 1;
            }
            Tok::Open => {
                let mut depth = 0usize;
                let mut j = i;
                while j < toks.len() {
                    match toks[j].tok {
                        Tok::Open => depth += 1,
                        Tok::Close => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                if j == toks.len() {
                    return Err(AmrError::UnbalancedParens { line: toks[i].line });
                }
                let k = blocks.len();
                let (qid, did) = match meta.as_deref().map(str::split_whitespace) {
                    Some(mut parts) => match (parts.next(), parts.next()) {
                        (Some(q), Some(d)) => (q.to_string(), d.to_string()),
                        (Some(d), None) => (default_question_id.to_string(), d.to_string()),
                        _ => (
                            default_question_id.to_string(),
                            format!("{default_question_id}-{k}"),
                        ),
                    },
                    None => (
                        default_question_id.to_string(),
                        format!("{default_question_id}-{k}"),
                    ),
                };
                let inner: Vec<Spanned> = toks[i..=j]
                    .iter()
                    .filter(|t| !matches!(t.tok, Tok::Meta(_)))
                    .cloned()
                    .collect();
                let graph = parse_graph(&inner, &qid, &did)?;
                blocks.push(PenmanBlock {
                    meta_id: meta.take(),
                    graph,
                });
                i = j + 1;
            }
            Tok::Close => return Err(AmrError::UnbalancedParens { line: toks[i].line }),
            _ => {
                return Err(AmrError::Syntax {
                    line: toks[i].line,
                    message: "content outside of a graph".into(),
                })
            }
        }
    }
    Ok(blocks)
}

fn is_plain_symbol(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with(':')
        && !s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"' | '/' | '~' | '#'))
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders a graph as Penman, rooted at its first node.
///
/// Returns `None` when some node is not reachable from the root along edge
/// direction, or when a node id cannot be written as a Penman variable.
pub fn to_penman(graph: &AmrGraph) -> Option<String> {
    let root = graph.nodes.first()?;
    let mut out_edges: HashMap<&str, Vec<&AmrEdge>> = HashMap::new();
    let mut in_degree: HashMap<&str, usize> = HashMap::new();
    for e in &graph.edges {
        out_edges.entry(e.src.as_str()).or_default().push(e);
        *in_degree.entry(e.dst.as_str()).or_default() += 1;
    }
    // Parser-synthesized constants with a single parent are written back as
    // literals; everything else becomes a `(var / concept)` node.
    let literal: HashSet<&str> = graph
        .nodes
        .iter()
        .filter(|n| {
            n.id.starts_with("_c")
                && !out_edges.contains_key(n.id.as_str())
                && in_degree.get(n.id.as_str()) == Some(&1)
        })
        .map(|n| n.id.as_str())
        .collect();
    if graph
        .nodes
        .iter()
        .any(|n| !literal.contains(n.id.as_str()) && !is_plain_symbol(&n.id))
    {
        return None;
    }
    let concept: HashMap<&str, &str> = graph
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.concept.as_str()))
        .collect();

    struct Writer<'g> {
        out_edges: HashMap<&'g str, Vec<&'g AmrEdge>>,
        concept: HashMap<&'g str, &'g str>,
        literal: HashSet<&'g str>,
        written: HashSet<&'g str>,
        s: String,
    }
    impl<'g> Writer<'g> {
        fn emit(&mut self, id: &'g str) {
            self.written.insert(id);
            let c = self.concept[id];
            if self.literal.contains(id) {
                self.s.push_str(&quote(c));
                return;
            }
            self.s.push('(');
            self.s.push_str(id);
            self.s.push_str(" / ");
            if is_plain_symbol(c) {
                self.s.push_str(c);
            } else {
                self.s.push_str(&quote(c));
            }
            let edges = self.out_edges.get(id).cloned().unwrap_or_default();
            for e in edges {
                self.s.push_str(" :");
                self.s.push_str(&e.rel);
                self.s.push(' ');
                if self.written.contains(e.dst.as_str()) {
                    self.s.push_str(&e.dst);
                } else {
                    self.emit(e.dst.as_str());
                }
            }
            self.s.push(')');
        }
    }
    let mut w = Writer {
        out_edges,
        concept,
        literal,
        written: HashSet::new(),
        s: String::new(),
    };
    w.emit(root.id.as_str());
    (w.written.len() == graph.nodes.len()).then_some(w.s)
}
