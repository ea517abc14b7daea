//! Graph-to-text and text-to-graph layers.
//!
//! A graph is written as a line-oriented node list and edge list:
//!
//! ```text
//! graph area 400 x 400 m, start A is node 0, charging station C is node 7
//! node 0: start at (12.34, 56.78), task 0 MB
//! node 1: monitor at (3.00, 4.00), task 10 MB
//! edge (0,1): 5.00 m
//! ```
//!
//! Coordinates and distances carry two decimals; task sizes and area use the
//! shortest exact decimal form. Lines that match none of the three prefixes
//! are ignored by [`parse_graph`], so a whole rendered prompt parses back to
//! the graph it was built from.
//!
//! Model replies are read by a small tokenizer that looks for node
//! references (`A`, `C`, numeric ids, `node3`/`M3` style tokens) and a
//! validator that classifies what it finds.

use serde::Serialize;
use std::fmt;

use crate::graph::{NetworkGraph, Node, NodeKind};

/// Prompt template with `{preamble}`, `{node_block}`, `{edge_block}` and
/// `{objective}` placeholders.
pub const PROMPT_TEMPLATE: &str = include_str!("../templates/route_prompt.txt");

/// First line of [`PROMPT_TEMPLATE`]; bump together with the template.
pub const TEMPLATE_VERSION: &str = "[route-prompt v1]";

/// Label used for the start node in prompts and replies.
pub const START_LABEL: &str = "A";
/// Label used for the charging station in prompts and replies.
pub const CHARGE_LABEL: &str = "C";

/// Largest disagreement between a stated edge length and the positions
/// before the parser warns. Two-decimal rounding alone accounts for 0.005 m.
pub const DISTANCE_TOLERANCE_M: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Repairable,
    Fatal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    Malformed,
    MissingArea,
    MissingNode,
    DuplicateNode,
    InvalidGraph,
    UnknownNode,
    DistanceMismatch,
    IncompleteEdges,
    DuplicateVisit,
    MissingReturn,
    MissingCharge,
    ExtraCharge,
    OperatorVisit,
    MissingMonitors,
    TooFewMonitors,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// 1-based line number, when the issue is tied to one line.
    pub line: Option<usize>,
    pub severity: Severity,
    pub code: IssueCode,
    pub message: String,
}

impl Diagnostic {
    fn new(line: Option<usize>, severity: Severity, code: IssueCode, message: impl Into<String>) -> Self {
        Self { line, severity, code, message: message.into() }
    }

    pub fn is_fatal(&self) -> bool {
        self.severity == Severity::Fatal
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Repairable => "repairable",
            Severity::Fatal => "fatal",
        };
        match self.line {
            Some(l) => write!(f, "line {l}: {sev}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

/// Canonical text form of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphText {
    pub preamble: String,
    pub node_lines: Vec<String>,
    pub edge_lines: Vec<String>,
    pub objective_clause: String,
}

impl GraphText {
    /// Preamble, node lines and edge lines, newline-terminated. These are the
    /// bytes that identify a graph.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.preamble).chain(&self.node_lines).chain(&self.edge_lines) {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Fills [`PROMPT_TEMPLATE`].
    pub fn render_prompt(&self) -> String {
        PROMPT_TEMPLATE
            .replace("{preamble}", &self.preamble)
            .replace("{node_block}", &self.node_lines.join("\n"))
            .replace("{edge_block}", &self.edge_lines.join("\n"))
            .replace("{objective}", &self.objective_clause)
    }
}

impl fmt::Display for GraphText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

pub fn serialize_graph(graph: &NetworkGraph) -> GraphText {
    let (w, h) = graph.area();
    let preamble = format!(
        "graph area {w} x {h} m, start {START_LABEL} is node {}, charging station {CHARGE_LABEL} is node {}",
        graph.start(),
        graph.charge()
    );
    let node_lines = graph
        .nodes()
        .iter()
        .map(|n| format!("node {}: {} at ({:.2}, {:.2}), task {} MB", n.id, n.kind.as_str(), n.x, n.y, n.task_mb))
        .collect();
    let mut edge_lines = Vec::new();
    for a in 0..graph.len() {
        for b in (a + 1)..graph.len() {
            edge_lines.push(format!("edge ({a},{b}): {:.2} m", graph.distance(a, b)));
        }
    }
    let objective_clause = format!(
        "Visit every monitor node exactly once, starting and ending at {START_LABEL} (node {}). \
         Stop exactly once at the charging station {CHARGE_LABEL} (node {}) to recharge fully. \
         Minimize the energy spent on flying and data collection. \
         Answer with a single line of the form: Route: {START_LABEL} -> <id> -> ... -> {CHARGE_LABEL} -> ... -> {START_LABEL}",
        graph.start(),
        graph.charge()
    );
    GraphText { preamble, node_lines, edge_lines, objective_clause }
}

/// Renders a route as the reply line the prompt asks for.
pub fn render_route_reply(route: &crate::trajectory::Route) -> String {
    let mut parts = vec![START_LABEL.to_string()];
    for (i, v) in route.visit_order().iter().enumerate() {
        if i == route.charge_slot() {
            parts.push(CHARGE_LABEL.to_string());
        }
        parts.push(v.to_string());
    }
    if route.charge_slot() == route.visit_order().len() {
        parts.push(CHARGE_LABEL.to_string());
    }
    parts.push(START_LABEL.to_string());
    format!("Route: {}", parts.join(" -> "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGraph {
    pub graph: NetworkGraph,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("graph text rejected: {}", .diagnostics.iter().filter(|d| d.is_fatal()).map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct GraphParseError {
    pub diagnostics: Vec<Diagnostic>,
}

fn parse_num(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_area(rest: &str) -> Option<(f64, f64)> {
    let dims = rest.split(',').next()?.trim().strip_suffix('m')?.trim_end();
    let (w, h) = dims.split_once(" x ")?;
    Some((parse_num(w)?, parse_num(h)?))
}

fn parse_node(rest: &str) -> Option<Node> {
    let (id, rest) = rest.split_once(':')?;
    let id: usize = id.trim().parse().ok()?;
    let (kind, rest) = rest.trim_start().split_once(" at (")?;
    let kind = NodeKind::parse(kind.trim())?;
    let (pos, rest) = rest.split_once(')')?;
    let (x, y) = pos.split_once(',')?;
    let task = rest.trim_start().strip_prefix(',')?.trim().strip_prefix("task ")?.strip_suffix("MB")?;
    Some(Node::new(id, kind, parse_num(x)?, parse_num(y)?, parse_num(task)?))
}

fn parse_edge(rest: &str) -> Option<(usize, usize, f64)> {
    let rest = rest.trim_start().strip_prefix('(')?;
    let (ids, rest) = rest.split_once(')')?;
    let (a, b) = ids.split_once(',')?;
    let d = rest.trim_start().strip_prefix(':')?.trim().strip_suffix('m')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?, parse_num(d)?))
}

/// Reads a graph back from its node and edge lines. Positions are
/// authoritative: a stated edge length that disagrees with them only
/// produces a warning.
pub fn parse_graph(text: &str) -> Result<ParsedGraph, GraphParseError> {
    let mut diags = Vec::new();
    let mut area = None;
    let mut nodes: Vec<(usize, Node)> = Vec::new();
    let mut edges: Vec<(usize, usize, usize, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("graph area ") {
            match parse_area(rest) {
                Some(a) => area = Some(a),
                None => diags.push(Diagnostic::new(
                    Some(lineno),
                    Severity::Fatal,
                    IssueCode::Malformed,
                    "malformed area line",
                )),
            }
        } else if let Some(rest) = line.strip_prefix("node ") {
            match parse_node(rest) {
                Some(n) => {
                    if nodes.iter().any(|(_, m)| m.id == n.id) {
                        diags.push(Diagnostic::new(
                            Some(lineno),
                            Severity::Fatal,
                            IssueCode::DuplicateNode,
                            format!("node {} defined twice", n.id),
                        ));
                    } else {
                        nodes.push((lineno, n));
                    }
                }
                None => diags.push(Diagnostic::new(
                    Some(lineno),
                    Severity::Fatal,
                    IssueCode::Malformed,
                    "malformed node line",
                )),
            }
        } else if let Some(rest) = line.strip_prefix("edge ") {
            match parse_edge(rest) {
                Some((a, b, d)) => edges.push((lineno, a, b, d)),
                None => diags.push(Diagnostic::new(
                    Some(lineno),
                    Severity::Fatal,
                    IssueCode::Malformed,
                    "malformed edge line",
                )),
            }
        }
    }

    if area.is_none() {
        diags.push(Diagnostic::new(None, Severity::Fatal, IssueCode::MissingArea, "no `graph area` line"));
    }
    for (kind, name) in [(NodeKind::Start, "start"), (NodeKind::Charge, "charge")] {
        if !nodes.iter().any(|(_, n)| n.kind == kind) {
            diags.push(Diagnostic::new(None, Severity::Fatal, IssueCode::MissingNode, format!("no {name} node")));
        }
    }
    for &(lineno, a, b, stated) in &edges {
        let pa = nodes.iter().find(|(_, n)| n.id == a);
        let pb = nodes.iter().find(|(_, n)| n.id == b);
        match (pa, pb) {
            (Some((_, na)), Some((_, nb))) => {
                let actual = na.distance_to(nb);
                if (actual - stated).abs() > DISTANCE_TOLERANCE_M {
                    diags.push(Diagnostic::new(
                        Some(lineno),
                        Severity::Warning,
                        IssueCode::DistanceMismatch,
                        format!("edge ({a},{b}) states {stated} m but positions give {actual:.2} m; using positions"),
                    ));
                }
            }
            _ => {
                let missing = if pa.is_none() { a } else { b };
                diags.push(Diagnostic::new(
                    Some(lineno),
                    Severity::Fatal,
                    IssueCode::UnknownNode,
                    format!("edge references unknown node id {missing}"),
                ));
            }
        }
    }

    if diags.iter().any(Diagnostic::is_fatal) {
        return Err(GraphParseError { diagnostics: diags });
    }
    let (w, h) = area.expect("checked above");
    let n = nodes.len();
    if edges.len() != n * (n - 1) / 2 {
        diags.push(Diagnostic::new(
            None,
            Severity::Warning,
            IssueCode::IncompleteEdges,
            format!("{} edge lines for {n} nodes, expected {}", edges.len(), n * (n - 1) / 2),
        ));
    }
    match NetworkGraph::new(nodes.into_iter().map(|(_, n)| n).collect(), w, h) {
        Ok(graph) => Ok(ParsedGraph { graph, diagnostics: diags }),
        Err(e) => {
            diags.push(Diagnostic::new(None, Severity::Fatal, IssueCode::InvalidGraph, e.to_string()));
            Err(GraphParseError { diagnostics: diags })
        }
    }
}

/// Route read from a reply, before repair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedRoute {
    /// Monitor ids in first-mention order, duplicates dropped.
    pub visits: Vec<usize>,
    /// Number of visits before the first charging stop, if one was named.
    pub charge_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionResponse {
    pub raw_text: String,
    pub parsed_route: Option<ParsedRoute>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DecisionResponse {
    pub fn has_fatal(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_fatal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeRef {
    Start,
    Charge,
    Id(Option<usize>),
}

fn classify_token(tok: &str) -> Option<NodeRef> {
    if tok == START_LABEL {
        return Some(NodeRef::Start);
    }
    if tok == CHARGE_LABEL {
        return Some(NodeRef::Charge);
    }
    let digits_at = tok.find(|c: char| c.is_ascii_digit())?;
    let (prefix, digits) = tok.split_at(digits_at);
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !matches!(prefix.to_ascii_lowercase().as_str(), "" | "node" | "n" | "m" | "p") {
        return None;
    }
    Some(NodeRef::Id(digits.parse().ok()))
}

fn node_refs(text: &str) -> Vec<NodeRef> {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty()).filter_map(classify_token).collect()
}

/// Picks the part of a reply that holds the route: the arrow-separated line
/// with the most node references (the last one on ties), or the whole text
/// when no line has arrows.
fn route_region(raw: &str) -> &str {
    let mut best: Option<(&str, usize)> = None;
    for line in raw.lines() {
        if line.contains("->") || line.contains('→') || line.contains("=>") {
            let count = node_refs(line).len();
            if best.is_none_or(|b| count >= b.1) {
                best = Some((line, count));
            }
        }
    }
    best.map_or(raw, |b| b.0)
}

/// Extracts a visit order from free-form model output. Never panics;
/// fatal issues leave `parsed_route` empty.
pub fn parse_route_reply(raw: &str, graph: &NetworkGraph) -> DecisionResponse {
    let mut diags = Vec::new();
    let refs = node_refs(route_region(raw));
    let n = graph.monitor_count();

    let mut visits: Vec<usize> = Vec::new();
    let mut charge_slot = None;
    for r in &refs {
        let id = match *r {
            NodeRef::Start => Some(graph.start()),
            NodeRef::Charge => Some(graph.charge()),
            NodeRef::Id(id) => id,
        };
        let Some(id) = id.filter(|&i| i < graph.len()) else {
            let shown = match r {
                NodeRef::Id(Some(i)) => i.to_string(),
                _ => "(out of range)".to_string(),
            };
            diags.push(Diagnostic::new(None, Severity::Fatal, IssueCode::UnknownNode, format!("unknown node {shown}")));
            continue;
        };
        match graph.node(id).kind {
            NodeKind::Start => {}
            NodeKind::Charge => {
                if charge_slot.is_none() {
                    charge_slot = Some(visits.len());
                } else {
                    diags.push(Diagnostic::new(
                        None,
                        Severity::Repairable,
                        IssueCode::ExtraCharge,
                        "extra charging stop ignored",
                    ));
                }
            }
            NodeKind::Operator => diags.push(Diagnostic::new(
                None,
                Severity::Repairable,
                IssueCode::OperatorVisit,
                format!("operator node {id} is not visited; dropped"),
            )),
            NodeKind::Monitor => {
                if visits.contains(&id) {
                    diags.push(Diagnostic::new(
                        None,
                        Severity::Repairable,
                        IssueCode::DuplicateVisit,
                        format!("duplicate visit of node {id}; keeping the first"),
                    ));
                } else {
                    visits.push(id);
                }
            }
        }
    }

    let named = visits.len();
    if named < n.div_ceil(2) || named == 0 {
        diags.push(Diagnostic::new(
            None,
            Severity::Fatal,
            IssueCode::TooFewMonitors,
            format!("reply names {named} of {n} monitoring points"),
        ));
    } else if named < n {
        let missing: Vec<usize> = graph.monitors().iter().copied().filter(|m| !visits.contains(m)).collect();
        diags.push(Diagnostic::new(
            None,
            Severity::Repairable,
            IssueCode::MissingMonitors,
            format!("monitoring points {missing:?} not visited"),
        ));
    }
    if charge_slot.is_none() {
        diags.push(Diagnostic::new(None, Severity::Repairable, IssueCode::MissingCharge, "no charging stop"));
    }
    if !matches!(refs.last(), Some(NodeRef::Start) | Some(NodeRef::Id(Some(0)))) {
        diags.push(Diagnostic::new(
            None,
            Severity::Repairable,
            IssueCode::MissingReturn,
            "route does not return to the start",
        ));
    }

    let fatal = diags.iter().any(Diagnostic::is_fatal);
    DecisionResponse {
        raw_text: raw.to_string(),
        parsed_route: (!fatal).then_some(ParsedRoute { visits, charge_slot }),
        diagnostics: diags,
    }
}
