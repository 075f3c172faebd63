//! Netlist file format: one `edge` line per circuit element.
//!
//! ```text
//! # comment to end of line
//! edge <name> <kind> <from:int> <to:int> <value>
//! ```
//!
//! `kind` is one of `V`, `I` (sources), `C`, `L` (storage), `R`, `G`
//! (dissipators). `value` is either a decimal literal or `{ <expr> }`.
//! A literal means a constant source for `V`/`I` and a linear law for the
//! rest (`v = q/C`, `i = phi/L`, `v = R*i`, `i = G*v`). An expression uses
//! the kind's control variable: `t` for sources, `q`, `phi`, `i`, `v` for
//! `C`, `L`, `R`, `G` respectively.
//!
//! Edge numbering equals file order; vertex ids must be the contiguous
//! range `1..n`.

use crate::error::{Error, Result};
use crate::expr::{parse_expr_at, ExprAst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    V,
    I,
    C,
    L,
    R,
    G,
}

impl ElementKind {
    pub fn from_letter(s: &str) -> Option<ElementKind> {
        Some(match s {
            "V" => ElementKind::V,
            "I" => ElementKind::I,
            "C" => ElementKind::C,
            "L" => ElementKind::L,
            "R" => ElementKind::R,
            "G" => ElementKind::G,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        match self {
            ElementKind::V => 'V',
            ElementKind::I => 'I',
            ElementKind::C => 'C',
            ElementKind::L => 'L',
            ElementKind::R => 'R',
            ElementKind::G => 'G',
        }
    }

    /// The free variable of an expression-valued law of this kind.
    pub fn law_variable(self) -> &'static str {
        match self {
            ElementKind::V | ElementKind::I => "t",
            ElementKind::C => "q",
            ElementKind::L => "phi",
            ElementKind::R => "i",
            ElementKind::G => "v",
        }
    }

    pub fn is_source(self) -> bool {
        matches!(self, ElementKind::V | ElementKind::I)
    }

    pub fn is_dissipator(self) -> bool {
        matches!(self, ElementKind::R | ElementKind::G)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Constant(f64),
    Expression(ExprAst),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementSpec {
    pub name: String,
    pub kind: ElementKind,
    /// 1-based vertex ids as written in the file.
    pub from: usize,
    pub to: usize,
    pub law: Law,
}

/// Parsed circuit: ordered elements; the vertex set is the union of
/// endpoints and must be `1..n` contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    pub elements: Vec<ElementSpec>,
}

impl CircuitSpec {
    pub fn vertex_count(&self) -> usize {
        self.elements.iter().map(|e| e.from.max(e.to)).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.elements.len()
    }

    pub fn kinds(&self) -> Vec<ElementKind> {
        self.elements.iter().map(|e| e.kind).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.elements.iter().map(|e| e.name.clone()).collect()
    }

    /// Validate structural invariants: nonempty, no self-loops, unique names,
    /// contiguous vertices, connected.
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::InvalidArgument("circuit has no elements".into()));
        }
        let mut names = std::collections::HashSet::new();
        for e in &self.elements {
            if e.from == e.to {
                return Err(Error::SelfLoop(e.name.clone()));
            }
            if !names.insert(e.name.clone()) {
                return Err(Error::DuplicateName(e.name.clone()));
            }
            if e.from == 0 || e.to == 0 {
                return Err(Error::NonContiguousVertices(0));
            }
        }
        let n = self.vertex_count();
        let mut seen = vec![false; n + 1];
        for e in &self.elements {
            seen[e.from] = true;
            seen[e.to] = true;
        }
        for v in 1..=n {
            if !seen[v] {
                return Err(Error::NonContiguousVertices(v));
            }
        }
        // connectivity by union-find
        let mut uf = UnionFind::new(n);
        for e in &self.elements {
            uf.union(e.from - 1, e.to - 1);
        }
        let root = uf.find(0);
        for v in 1..n {
            if uf.find(v) != root {
                return Err(Error::DisconnectedGraph);
            }
        }
        Ok(())
    }

    /// Render in netlist syntax (used by the random-circuit generator).
    pub fn to_netlist(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            let value = match &e.law {
                Law::Constant(c) => format!("{c}"),
                Law::Expression(ast) => {
                    format!("{{{}}}", crate::expr::print_expr(ast, e.kind.law_variable()))
                }
            };
            out.push_str(&format!(
                "edge {} {} {} {} {}\n",
                e.name,
                e.kind.letter(),
                e.from,
                e.to,
                value
            ));
        }
        out
    }
}

/// Minimal union-find used by connectivity checks and Kruskal's algorithm.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if x and y were already connected.
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        self.parent[ry] = rx;
        true
    }
}

/// Parse netlist text. Elements keep file order; that order fixes the edge
/// numbering used everywhere downstream.
pub fn parse_netlist(text: &str) -> Result<CircuitSpec> {
    let mut elements = Vec::new();
    for (lineno0, raw) in text.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        elements.push(parse_edge_line(line, lineno)?);
    }
    let spec = CircuitSpec { elements };
    if spec.elements.is_empty() {
        return Err(Error::Syntax { line: 1, col: 1, msg: "no elements in netlist".into() });
    }
    spec.validate()?;
    Ok(spec)
}

fn parse_edge_line(line: &str, lineno: usize) -> Result<ElementSpec> {
    let err = |col: usize, msg: String| Error::Syntax { line: lineno, col, msg };
    // split into 6 fields, tracking 1-based columns; the value field may be a
    // brace-delimited expression containing spaces
    let bytes = line.as_bytes();
    let mut fields: Vec<(usize, String)> = Vec::new(); // (col, text)
    let mut k = 0;
    while k < bytes.len() {
        while k < bytes.len() && (bytes[k] == b' ' || bytes[k] == b'\t') {
            k += 1;
        }
        if k >= bytes.len() {
            break;
        }
        let start = k;
        if bytes[k] == b'{' {
            let mut depth = 0;
            let mut end = None;
            while k < bytes.len() {
                match bytes[k] {
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(k);
                            k += 1;
                            break;
                        }
                    }
                    _ => {}
                }
                k += 1;
            }
            let Some(end) = end else {
                return Err(err(start + 1, "unterminated `{` expression".into()));
            };
            fields.push((start + 1, line[start..=end].to_string()));
        } else {
            while k < bytes.len() && bytes[k] != b' ' && bytes[k] != b'\t' {
                k += 1;
            }
            fields.push((start + 1, line[start..k].to_string()));
        }
    }
    if fields.len() != 6 {
        return Err(err(
            1,
            format!(
                "expected `edge <name> <kind> <from> <to> <value>`, found {} fields",
                fields.len()
            ),
        ));
    }
    if fields[0].1 != "edge" {
        return Err(err(fields[0].0, format!("expected `edge`, found `{}`", fields[0].1)));
    }
    let name = fields[1].1.clone();
    let kind = ElementKind::from_letter(&fields[2].1)
        .ok_or_else(|| err(fields[2].0, format!("unknown kind `{}`", fields[2].1)))?;
    let from: usize = fields[3]
        .1
        .parse()
        .map_err(|_| err(fields[3].0, format!("bad vertex id `{}`", fields[3].1)))?;
    let to: usize = fields[4]
        .1
        .parse()
        .map_err(|_| err(fields[4].0, format!("bad vertex id `{}`", fields[4].1)))?;
    let (vcol, vtext) = (fields[5].0, fields[5].1.as_str());
    let law = if let Some(inner) = vtext.strip_prefix('{') {
        let inner = inner.strip_suffix('}').unwrap_or(inner);
        let ast = parse_expr_at(inner, kind.law_variable(), lineno, vcol + 1)?;
        Law::Expression(ast)
    } else {
        let c: f64 =
            vtext.parse().map_err(|_| err(vcol, format!("bad numeric value `{vtext}`")))?;
        if !c.is_finite() {
            return Err(err(vcol, format!("non-finite value `{vtext}`")));
        }
        Law::Constant(c)
    };
    Ok(ElementSpec { name, kind, from, to, law })
}
