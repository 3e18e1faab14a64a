//! The double-edge normal factor graph data model.
//!
//! Every edge joins exactly two factor slots (a factor may appear twice, which
//! makes a self-loop). A double edge carries a variable pair `(x, x')` over a
//! shared alphabet; a single edge carries one variable `y`.
//!
//! A factor with double ports `d_1..d_k` and single ports `s_1..s_m` (each in
//! port order) stores a tensor of shape
//! `[a(d_1)..a(d_k), a(d_1)..a(d_k), a(s_1)..a(s_m)]`: the x-block, then the
//! x'-block, then the y-block. For every fixed `y`, grouping the x-axes as rows
//! and the x'-axes as columns must give a PSD matrix.

mod json;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{hermitian_eig, hermiticity_deviation, ComplexTensor, HermitianView, C64};

pub use json::{load_graph, parse_graph, save_graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Single,
    Double,
}

impl EdgeKind {
    /// Number of distinct values an assignment of this edge can take.
    pub fn states(self, alphabet: usize) -> usize {
        match self {
            EdgeKind::Single => alphabet,
            EdgeKind::Double => alphabet * alphabet,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Single => "single",
            EdgeKind::Double => "double",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    pub kind: EdgeKind,
    pub alphabet: usize,
    pub ends: [String; 2],
}

impl Edge {
    pub fn new(id: impl Into<String>, kind: EdgeKind, alphabet: usize, a: impl Into<String>, b: impl Into<String>) -> Self {
        Self { id: id.into(), kind, alphabet, ends: [a.into(), b.into()] }
    }

    pub fn double(id: impl Into<String>, alphabet: usize, a: impl Into<String>, b: impl Into<String>) -> Self {
        Self::new(id, EdgeKind::Double, alphabet, a, b)
    }

    pub fn single(id: impl Into<String>, alphabet: usize, a: impl Into<String>, b: impl Into<String>) -> Self {
        Self::new(id, EdgeKind::Single, alphabet, a, b)
    }

    pub fn is_self_loop(&self) -> bool {
        self.ends[0] == self.ends[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub id: String,
    /// Edge ids in port order.
    pub ports: Vec<String>,
    pub data: ComplexTensor,
}

impl Factor {
    pub fn new(id: impl Into<String>, ports: Vec<String>, data: ComplexTensor) -> Self {
        Self { id: id.into(), ports, data }
    }
}

/// Where a port's variables live in its factor's tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortAxes {
    Double { x: usize, x_prime: usize, alphabet: usize },
    Single { y: usize, alphabet: usize },
}

impl PortAxes {
    pub fn alphabet(self) -> usize {
        match self {
            PortAxes::Double { alphabet, .. } | PortAxes::Single { alphabet, .. } => alphabet,
        }
    }

    pub fn states(self) -> usize {
        match self {
            PortAxes::Double { alphabet, .. } => alphabet * alphabet,
            PortAxes::Single { alphabet, .. } => alphabet,
        }
    }
}

/// One side of an edge: the factor and which of its ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PortRef {
    pub factor: usize,
    pub port: usize,
}

/// Resolved edge-port incidence of a structurally valid graph.
#[derive(Clone, Debug)]
pub struct Wiring {
    /// `edge_ends[e][k]` is the port at end `k` of edge `e`.
    pub edge_ends: Vec<[PortRef; 2]>,
    /// `port_edges[f][p]` is `(edge, end)` for port `p` of factor `f`.
    pub port_edges: Vec<Vec<(usize, usize)>>,
    /// Axis layout of each factor's ports.
    pub layouts: Vec<Vec<PortAxes>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ZeroAlphabet { edge: String },
    DanglingEndpoint { edge: String, factor: String },
    UnknownPort { factor: String, edge: String },
    IncidenceMismatch { edge: String, factor: String, as_endpoint: usize, as_port: usize },
    ShapeMismatch { factor: String, expected: Vec<usize>, found: Vec<usize> },
    NotHermitian { factor: String, y_assignment: Vec<usize>, deviation: f64 },
    NotPsd { factor: String, y_assignment: Vec<usize>, min_eigenvalue: f64 },
    Negative { factor: String, index: Vec<usize>, value: C64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroAlphabet { edge } => write!(f, "edge `{edge}` has alphabet 0"),
            Violation::DanglingEndpoint { edge, factor } => {
                write!(f, "edge `{edge}` names nonexistent factor `{factor}`")
            }
            Violation::UnknownPort { factor, edge } => {
                write!(f, "factor `{factor}` has a port on nonexistent edge `{edge}`")
            }
            Violation::IncidenceMismatch { edge, factor, as_endpoint, as_port } => write!(
                f,
                "edge `{edge}` lists factor `{factor}` {as_endpoint} time(s) but the factor has {as_port} port(s) on it"
            ),
            Violation::ShapeMismatch { factor, expected, found } => {
                write!(f, "factor `{factor}` has shape {found:?}, expected {expected:?}")
            }
            Violation::NotHermitian { factor, y_assignment, deviation } => write!(
                f,
                "factor `{factor}` at y = {y_assignment:?} is not Hermitian (deviation {deviation:e})"
            ),
            Violation::NotPsd { factor, y_assignment, min_eigenvalue } => write!(
                f,
                "factor `{factor}` at y = {y_assignment:?} is not PSD (min eigenvalue {min_eigenvalue:e})"
            ),
            Violation::Negative { factor, index, value } => {
                write!(f, "factor `{factor}` has non-negative-real violation {value} at {index:?}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeNfg {
    edges: Vec<Edge>,
    factors: Vec<Factor>,
    edge_pos: HashMap<String, usize>,
    factor_pos: HashMap<String, usize>,
}

impl DeNfg {
    /// Assembles a graph. Only duplicate ids are rejected here; everything else
    /// is checked by [`validate_structure`] and [`validate_psd`].
    pub fn new(edges: Vec<Edge>, factors: Vec<Factor>) -> Result<Self> {
        let mut edge_pos = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if edge_pos.insert(e.id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate edge id `{}`", e.id)));
            }
        }
        let mut factor_pos = HashMap::with_capacity(factors.len());
        for (i, f) in factors.iter().enumerate() {
            if factor_pos.insert(f.id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate factor id `{}`", f.id)));
            }
        }
        Ok(Self { edges, factors, edge_pos, factor_pos })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn edge_index(&self, id: &str) -> Result<usize> {
        self.edge_pos.get(id).copied().ok_or_else(|| Error::UnknownEdge(id.to_string()))
    }

    pub fn factor_index(&self, id: &str) -> Result<usize> {
        self.factor_pos.get(id).copied().ok_or_else(|| Error::UnknownFactor(id.to_string()))
    }

    pub fn edge(&self, id: &str) -> Result<&Edge> {
        Ok(&self.edges[self.edge_index(id)?])
    }

    pub fn factor(&self, id: &str) -> Result<&Factor> {
        Ok(&self.factors[self.factor_index(id)?])
    }

    /// Port axis layout of a factor, derived from the kinds and alphabets of
    /// its edges. Fails if a port names an unknown edge.
    pub fn port_layout(&self, factor: &Factor) -> Result<Vec<PortAxes>> {
        let edges = factor
            .ports
            .iter()
            .map(|id| self.edge(id))
            .collect::<Result<Vec<_>>>()?;
        let k = edges.iter().filter(|e| e.kind == EdgeKind::Double).count();
        let mut next_double = 0;
        let mut next_single = 2 * k;
        Ok(edges
            .iter()
            .map(|e| match e.kind {
                EdgeKind::Double => {
                    let axes = PortAxes::Double { x: next_double, x_prime: next_double + k, alphabet: e.alphabet };
                    next_double += 1;
                    axes
                }
                EdgeKind::Single => {
                    let axes = PortAxes::Single { y: next_single, alphabet: e.alphabet };
                    next_single += 1;
                    axes
                }
            })
            .collect())
    }

    pub fn expected_shape(&self, factor: &Factor) -> Result<Vec<usize>> {
        let layout = self.port_layout(factor)?;
        let mut shape = vec![0; layout.iter().map(|p| if matches!(p, PortAxes::Double { .. }) { 2 } else { 1 }).sum()];
        for p in layout {
            match p {
                PortAxes::Double { x, x_prime, alphabet } => {
                    shape[x] = alphabet;
                    shape[x_prime] = alphabet;
                }
                PortAxes::Single { y, alphabet } => shape[y] = alphabet,
            }
        }
        Ok(shape)
    }

    /// Resolves ports to edge ends. Fails with the structural violations if
    /// the graph is not structurally valid.
    pub fn wiring(&self) -> Result<Wiring> {
        let violations = validate_structure(self);
        if !violations.is_empty() {
            return Err(Error::Structure(violations));
        }
        let unset = PortRef { factor: usize::MAX, port: usize::MAX };
        let mut edge_ends = vec![[unset; 2]; self.edges.len()];
        let mut port_edges: Vec<Vec<(usize, usize)>> =
            self.factors.iter().map(|f| vec![(0, 0); f.ports.len()]).collect();
        for (fi, f) in self.factors.iter().enumerate() {
            for (pi, eid) in f.ports.iter().enumerate() {
                let ei = self.edge_pos[eid];
                let edge = &self.edges[ei];
                let end = if edge.ends[0] == f.id && edge_ends[ei][0] == unset { 0 } else { 1 };
                edge_ends[ei][end] = PortRef { factor: fi, port: pi };
                port_edges[fi][pi] = (ei, end);
            }
        }
        let layouts = self.factors.iter().map(|f| self.port_layout(f)).collect::<Result<_>>()?;
        Ok(Wiring { edge_ends, port_edges, layouts })
    }

    /// Graph diameter in edges (longest shortest path between factors);
    /// `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let n = self.factors.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (self.factor_pos.get(&e.ends[0]), self.factor_pos.get(&e.ends[1])) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut best = 0;
        for s in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if dist.contains(&usize::MAX) {
                return None;
            }
            best = best.max(*dist.iter().max().unwrap_or(&0));
        }
        Some(best)
    }

    /// True if the graph is connected and has no cycles (including
    /// self-loops and parallel edges).
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.factors.len() && self.diameter().is_some()
    }
}

/// Structural invariants: alphabets, endpoint and port references, two-way
/// incidence, and tensor shapes.
pub fn validate_structure(g: &DeNfg) -> Vec<Violation> {
    let mut out = Vec::new();
    for e in &g.edges {
        if e.alphabet == 0 {
            out.push(Violation::ZeroAlphabet { edge: e.id.clone() });
        }
        for end in &e.ends {
            if !g.factor_pos.contains_key(end) && !out.iter().any(|v| matches!(v, Violation::DanglingEndpoint { edge, factor } if edge == &e.id && factor == end)) {
                out.push(Violation::DanglingEndpoint { edge: e.id.clone(), factor: end.clone() });
            }
        }
    }
    let mut ports_ok = true;
    for f in &g.factors {
        for eid in &f.ports {
            if !g.edge_pos.contains_key(eid) {
                out.push(Violation::UnknownPort { factor: f.id.clone(), edge: eid.clone() });
                ports_ok = false;
            }
        }
    }
    for e in &g.edges {
        let mut names: Vec<&String> = e.ends.iter().collect();
        for f in &g.factors {
            if f.ports.contains(&e.id) && !names.contains(&&f.id) {
                names.push(&f.id);
            }
        }
        for name in names {
            if !g.factor_pos.contains_key(name) {
                continue;
            }
            let as_endpoint = e.ends.iter().filter(|x| *x == name).count();
            let as_port = g.factors[g.factor_pos[name]].ports.iter().filter(|p| **p == e.id).count();
            if as_endpoint != as_port {
                out.push(Violation::IncidenceMismatch { edge: e.id.clone(), factor: name.clone(), as_endpoint, as_port });
            }
        }
    }
    if ports_ok {
        for f in &g.factors {
            if let Ok(expected) = g.expected_shape(f) {
                if expected != f.data.shape() {
                    out.push(Violation::ShapeMismatch {
                        factor: f.id.clone(),
                        expected,
                        found: f.data.shape().to_vec(),
                    });
                }
            }
        }
    }
    out
}

/// The x-vs-x' matrix of a factor for a fixed assignment of its single ports.
/// Rows and columns enumerate the joint double-port assignment row-major in
/// port order.
pub fn factor_matrix(g: &DeNfg, factor: &Factor, y_assignment: &[usize]) -> Result<ComplexTensor> {
    let layout = g.port_layout(factor)?;
    let expected = g.expected_shape(factor)?;
    if expected != factor.data.shape() {
        return Err(Error::Shape(format!(
            "factor `{}` has shape {:?}, expected {expected:?}",
            factor.id,
            factor.data.shape()
        )));
    }
    let singles: Vec<usize> = layout
        .iter()
        .filter_map(|p| match p {
            PortAxes::Single { alphabet, .. } => Some(*alphabet),
            _ => None,
        })
        .collect();
    if y_assignment.len() != singles.len() {
        return Err(Error::InvalidArgument(format!(
            "factor `{}` has {} single port(s), got {} y value(s)",
            factor.id,
            singles.len(),
            y_assignment.len()
        )));
    }
    let mut y_offset = 0;
    for (&y, &a) in y_assignment.iter().zip(&singles) {
        if y >= a {
            return Err(Error::InvalidArgument(format!("y value {y} out of range for alphabet {a}")));
        }
        y_offset = y_offset * a + y;
    }
    let y_len: usize = singles.iter().product();
    let dim: usize = expected[..expected.len() - singles.len()].iter().product::<usize>();
    let n = (dim as f64).sqrt().round() as usize;
    // x-block and x'-block have the same size, and row-major order puts the
    // y-block last, so entry (row, col) sits at (row * n + col) * y_len + y.
    let data = factor.data.data();
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            out.push(data[(row * n + col) * y_len + y_offset]);
        }
    }
    Ok(ComplexTensor::from_parts(vec![n, n], out))
}

pub fn factor_matrix_view(g: &DeNfg, factor: &Factor, y_assignment: &[usize], tol: f64) -> Result<HermitianView> {
    HermitianView::new(factor_matrix(g, factor, y_assignment)?, tol)
}

/// All assignments of a list of alphabets, row-major.
pub(crate) fn assignments(alphabets: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = alphabets.iter().product();
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; alphabets.len()];
        for k in (0..alphabets.len()).rev() {
            idx[k] = flat % alphabets[k];
            flat /= alphabets[k];
        }
        idx
    })
}

/// Checks every factor against the PSD condition: per y-assignment the
/// x-vs-x' matrix must pass `psd_check`, and factors without double ports
/// must take only non-negative real values. Expects a structurally valid graph;
/// factors whose shape is wrong are skipped.
pub fn validate_psd(g: &DeNfg, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for f in &g.factors {
        let Ok(layout) = g.port_layout(f) else { continue };
        if g.expected_shape(f).ok().as_deref() != Some(f.data.shape()) {
            continue;
        }
        let has_double = layout.iter().any(|p| matches!(p, PortAxes::Double { .. }));
        if !has_double {
            let scale = f.data.max_abs();
            for (flat, z) in f.data.data().iter().enumerate() {
                if z.im.abs() > tol * scale || z.re < -tol * scale {
                    let index = assignments(f.data.shape()).nth(flat).unwrap_or_default();
                    out.push(Violation::Negative { factor: f.id.clone(), index, value: *z });
                }
            }
            continue;
        }
        let singles: Vec<usize> = layout
            .iter()
            .filter_map(|p| match p {
                PortAxes::Single { alphabet, .. } => Some(*alphabet),
                _ => None,
            })
            .collect();
        for y in assignments(&singles) {
            let Ok(m) = factor_matrix(g, f, &y) else { continue };
            let Ok(deviation) = hermiticity_deviation(&m) else { continue };
            if deviation > tol * m.max_abs() {
                out.push(Violation::NotHermitian { factor: f.id.clone(), y_assignment: y, deviation });
                continue;
            }
            let view = HermitianView::new(m, tol).expect("hermiticity checked above");
            match hermitian_eig(&view) {
                Ok(eig) => {
                    let spread = eig.eigenvalues.iter().fold(1.0f64, |a, l| a.max(l.abs()));
                    let min = *eig.eigenvalues.last().unwrap_or(&0.0);
                    if min < -tol * spread {
                        out.push(Violation::NotPsd { factor: f.id.clone(), y_assignment: y, min_eigenvalue: min });
                    }
                }
                Err(_) => out.push(Violation::NotPsd { factor: f.id.clone(), y_assignment: y, min_eigenvalue: f64::NAN }),
            }
        }
    }
    out
}

/// Nonzero entries of a factor tensor, each tagged with the per-port value
/// code (`x * a + x'` for double ports, `y` for single ports).
#[derive(Clone, Debug)]
pub(crate) struct FactorTable {
    pub ports: usize,
    pub values: Vec<C64>,
    /// `codes[k * ports + p]` is port `p`'s code for entry `k`.
    pub codes: Vec<u32>,
    /// Number of distinct codes per port.
    pub port_states: Vec<usize>,
    /// Tensor offset contributed by each (port, code).
    pub offsets: Vec<Vec<usize>>,
}

impl FactorTable {
    pub fn build(factor: &Factor, layout: &[PortAxes]) -> Self {
        let shape = factor.data.shape();
        let strides = crate::tensor::strides_of(shape);
        let ports = layout.len();
        let offsets: Vec<Vec<usize>> = layout
            .iter()
            .map(|p| match *p {
                PortAxes::Double { x, x_prime, alphabet } => (0..alphabet * alphabet)
                    .map(|c| (c / alphabet) * strides[x] + (c % alphabet) * strides[x_prime])
                    .collect(),
                PortAxes::Single { y, alphabet } => (0..alphabet).map(|c| c * strides[y]).collect(),
            })
            .collect();
        let mut values = Vec::new();
        let mut codes = Vec::new();
        let mut idx = vec![0usize; shape.len()];
        for &z in factor.data.data() {
            if z != C64::new(0.0, 0.0) {
                values.push(z);
                for p in layout {
                    codes.push(match *p {
                        PortAxes::Double { x, x_prime, alphabet } => (idx[x] * alphabet + idx[x_prime]) as u32,
                        PortAxes::Single { y, .. } => idx[y] as u32,
                    });
                }
            }
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self { ports, values, codes, port_states: layout.iter().map(|p| p.states()).collect(), offsets }
    }

    pub fn entry_codes(&self, k: usize) -> &[u32] {
        &self.codes[k * self.ports..(k + 1) * self.ports]
    }
}

/// Wiring plus compiled factor tables.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    pub wiring: Wiring,
    pub tables: Vec<FactorTable>,
}

impl Compiled {
    pub fn new(g: &DeNfg) -> Result<Self> {
        let wiring = g.wiring()?;
        let tables = g.factors.iter().zip(&wiring.layouts).map(|(f, l)| FactorTable::build(f, l)).collect();
        Ok(Self { wiring, tables })
    }
}
