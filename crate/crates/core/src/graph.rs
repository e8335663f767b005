//! Finite weighted graphs `G = (V, E, μ, w)`, vertex functions, μ-integration
//! and the classical (measure-normalised) graph Laplacian.
//!
//! Vertices are dense 0-based indices. Edge weights live in a dense `n × n`
//! matrix where a zero entry means "no edge"; the fractional kernel built on
//! top of this is dense anyway, so nothing is gained from sparse storage.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::{Deref, DerefMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::sum::{csum, CompensatedSum};

/// A real value per vertex, indexed like the owning [`Graph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexFunction(Vec<f64>);

impl VertexFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `‖self − other‖∞`. Panics if the lengths differ.
    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        assert_eq!(self.0.len(), other.len());
        self.0
            .iter()
            .zip(other)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Deref for VertexFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for VertexFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for VertexFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// One violated graph invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphIssue {
    TooFewVertices { n: usize },
    NonPositiveMeasure { vertex: usize, mu: f64 },
    NonPositiveWeight { x: usize, y: usize, w: f64 },
    AsymmetricWeight { x: usize, y: usize, w_xy: f64, w_yx: f64 },
    SelfLoop { vertex: usize, w: f64 },
    /// Connected components (vertex index lists) when more than one exists.
    Disconnected { components: Vec<Vec<usize>> },
}

impl fmt::Display for GraphIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphIssue::TooFewVertices { n } => write!(f, "TooFewVertices: n = {n}, need at least 2"),
            GraphIssue::NonPositiveMeasure { vertex, mu } => {
                write!(f, "NonPositiveMeasure: mu({vertex}) = {mu}")
            }
            GraphIssue::NonPositiveWeight { x, y, w } => {
                write!(f, "NonPositiveWeight: w({x},{y}) = {w}")
            }
            GraphIssue::AsymmetricWeight { x, y, w_xy, w_yx } => {
                write!(f, "AsymmetricWeight: w({x},{y}) = {w_xy} but w({y},{x}) = {w_yx}")
            }
            GraphIssue::SelfLoop { vertex, w } => write!(f, "SelfLoop: w({vertex},{vertex}) = {w}"),
            GraphIssue::Disconnected { components } => {
                write!(f, "Disconnected: {} components", components.len())?;
                for c in components {
                    write!(f, " {c:?}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<GraphIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// A finite weighted graph. Construction only checks shapes; call
/// [`Graph::validate`] (or [`Graph::validated`]) before doing analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    mu: Vec<f64>,
    weights: DMatrix<f64>,
    labels: Vec<String>,
}

impl Graph {
    /// Builds a graph from a measure vector and a dense weight matrix
    /// (zero = no edge). Entries are taken verbatim, so asymmetric or
    /// negative matrices are representable and reported by `validate`.
    pub fn from_weight_matrix(mu: Vec<f64>, weights: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if weights.nrows() != n || weights.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: weights.nrows().max(weights.ncols()),
            });
        }
        let labels = (0..n).map(|i| i.to_string()).collect();
        Ok(Self { mu, weights, labels })
    }

    /// Builds a graph from undirected edges `(x, y, w)`. Each edge is stored in
    /// both orientations.
    pub fn from_edges(mu: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = mu.len();
        let mut weights = DMatrix::zeros(n, n);
        for &(x, y, w) in edges {
            if x >= n || y >= n {
                return Err(Error::Parse(format!("edge ({x},{y}) references a vertex outside 0..{n}")));
            }
            weights[(x, y)] = w;
            weights[(y, x)] = w;
        }
        Self::from_weight_matrix(mu, weights)
    }

    /// Convenience: `from_edges` followed by validation.
    pub fn validated(mu: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let g = Self::from_edges(mu, edges)?;
        g.ensure_valid()?;
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len(self.n(), labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    /// Complete graph on `n` vertices with unit measure and unit weights.
    pub fn complete(n: usize) -> Self {
        let mut w = DMatrix::from_element(n, n, 1.0);
        w.fill_diagonal(0.0);
        Self::from_weight_matrix(vec![1.0; n], w).expect("square by construction")
    }

    /// Path `0 - 1 - … - (n−1)` with unit measure and unit weights.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(vec![1.0; n], &edges).expect("indices in range")
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[(x, y)]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Weighted degree `Σ_y w_xy`.
    pub fn degree(&self, x: usize) -> f64 {
        csum(self.weights.row(x).iter().copied())
    }

    /// Undirected edges `(x, y, w)` with `x < y`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                let w = self.weights[(x, y)];
                if w != 0.0 {
                    out.push((x, y, w));
                }
            }
        }
        out
    }

    pub fn volume(&self) -> f64 {
        csum(self.mu.iter().copied())
    }

    /// Checks every graph invariant and lists all violations.
    pub fn validate(&self) -> ValidationReport {
        let n = self.n();
        let mut issues = Vec::new();
        if n < 2 {
            issues.push(GraphIssue::TooFewVertices { n });
        }
        for (vertex, &mu) in self.mu.iter().enumerate() {
            if !(mu > 0.0 && mu.is_finite()) {
                issues.push(GraphIssue::NonPositiveMeasure { vertex, mu });
            }
        }
        for x in 0..n {
            let w = self.weights[(x, x)];
            if w != 0.0 {
                issues.push(GraphIssue::SelfLoop { vertex: x, w });
            }
            for y in x + 1..n {
                let (w_xy, w_yx) = (self.weights[(x, y)], self.weights[(y, x)]);
                if w_xy == 0.0 && w_yx == 0.0 {
                    continue;
                }
                if w_xy != w_yx {
                    issues.push(GraphIssue::AsymmetricWeight { x, y, w_xy, w_yx });
                }
                for (a, b, w) in [(x, y, w_xy), (y, x, w_yx)] {
                    if w != 0.0 && !(w > 0.0 && w.is_finite()) {
                        issues.push(GraphIssue::NonPositiveWeight { x: a, y: b, w });
                    }
                }
            }
        }
        let components = self.components();
        if components.len() > 1 {
            issues.push(GraphIssue::Disconnected { components });
        }
        ValidationReport { issues }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(report))
        }
    }

    /// Connected components by breadth-first search over nonzero entries.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(x) = queue.pop_front() {
                for y in 0..n {
                    if !seen[y] && (self.weights[(x, y)] != 0.0 || self.weights[(y, x)] != 0.0) {
                        seen[y] = true;
                        comp.push(y);
                        queue.push_back(y);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// `∫_V f dμ = Σ_x f(x) μ(x)`, compensated.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        check_len(self.n(), f.len())?;
        Ok(csum(f.iter().zip(&self.mu).map(|(f, m)| f * m)))
    }

    /// `⟨f, g⟩_μ = Σ_x f(x) g(x) μ(x)`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len(self.n(), f.len())?;
        check_len(self.n(), g.len())?;
        Ok(csum(f.iter().zip(g).zip(&self.mu).map(|((f, g), m)| f * g * m)))
    }

    /// `(−Δu)(x) = (1/μ(x)) Σ_{y~x} w_xy (u(x) − u(y))`.
    pub fn laplacian_apply(&self, u: &[f64]) -> Result<VertexFunction> {
        let n = self.n();
        check_len(n, u.len())?;
        let out = (0..n)
            .map(|x| {
                let mut acc = CompensatedSum::new();
                for y in 0..n {
                    let w = self.weights[(x, y)];
                    if y != x && w != 0.0 {
                        acc.add(w * (u[x] - u[y]));
                    }
                }
                acc.value() / self.mu[x]
            })
            .collect();
        Ok(VertexFunction(out))
    }

    /// Matrix of `−Δ`: `A[x][x] = deg_w(x)/μ(x)`, `A[x][y] = −w_xy/μ(x)`.
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                self.degree(x) / self.mu[x]
            } else {
                -self.weights[(x, y)] / self.mu[x]
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_graph()
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            vertices: self
                .labels
                .iter()
                .zip(&self.mu)
                .map(|(id, &mu)| VertexRecord { id: id.clone(), mu })
                .collect(),
            edges: self
                .edges()
                .into_iter()
                .map(|(x, y, w)| EdgeRecord {
                    u: self.labels[x].clone(),
                    v: self.labels[y].clone(),
                    w,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serialises")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexRecord {
    id: String,
    mu: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    u: String,
    v: String,
    w: f64,
}

impl GraphFile {
    fn into_graph(self) -> Result<Graph> {
        let mut index = HashMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if index.insert(v.id.as_str(), i).is_some() {
                return Err(Error::Parse(format!("duplicate vertex id {:?}", v.id)));
            }
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Parse(format!("edge references unknown vertex {id:?}")))
        };
        let mut seen = HashSet::new();
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let (x, y) = (lookup(&e.u)?, lookup(&e.v)?);
            if x == y {
                return Err(Error::Parse(format!("self-loop at vertex {:?}", e.u)));
            }
            if !seen.insert((x.min(y), x.max(y))) {
                return Err(Error::Parse(format!("duplicate edge {:?} - {:?}", e.u, e.v)));
            }
            if e.w == 0.0 {
                return Err(Error::Parse(format!("edge {:?} - {:?} has zero weight", e.u, e.v)));
            }
            edges.push((x, y, e.w));
        }
        let mu = self.vertices.iter().map(|v| v.mu).collect();
        let labels = self.vertices.into_iter().map(|v| v.id).collect();
        Graph::from_edges(mu, &edges)?.with_labels(labels)
    }
}
