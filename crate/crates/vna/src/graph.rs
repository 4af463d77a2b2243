//! Classifier for free algebras of weighted directed graphs.
//!
//! A graph carries an edge involution `op` with reciprocal weights
//! `mu(e) mu(e^op) = 1`. A deterministic spanning tree fixes a vertex
//! functional; the loop group is generated by the potential-normalized
//! weights of a cycle basis; vertices whose outgoing weight sum falls below
//! 1 keep an atom, and everything else is the Araki-Woods factor of the
//! loop group.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::algebra::Violation;
use crate::rat::PosRat;
use crate::ratio_group::{GroupKind, RatioGroup};

/// A finite directed graph with edge involution and reciprocal weighting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    by_id: BTreeMap<String, usize>,
    vertex_index: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub mu: PosRat,
    pub op: String,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("invalid graph: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("unknown edge {0:?}")]
    UnknownEdge(String),
    #[error("every loop has weight 1; the classification needs a nontrivial loop group")]
    TrivialLoopGroup,
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The classification data of a weighted graph algebra.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphClassification {
    /// Edges whose weight matches the potential ratio of their endpoints; a
    /// maximal subgraph in which every loop has weight 1.
    pub trace_subgraph: BTreeSet<String>,
    /// The vertex functional.
    pub potentials: BTreeMap<String, PosRat>,
    pub loop_group: RatioGroup,
    /// Vertices keeping an atom, with its mass.
    pub atoms: BTreeMap<String, PosRat>,
    pub diffuse_mass: PosRat,
    /// Modular eigenvalue of each edge.
    pub eigenvalues: BTreeMap<String, PosRat>,
}

impl GraphClassification {
    pub fn total_potential(&self) -> BigRational {
        self.potentials
            .values()
            .fold(BigRational::zero(), |acc, p| acc + p.as_ratio())
    }

    pub fn mass_is_conserved(&self) -> bool {
        let atoms = self
            .atoms
            .values()
            .fold(BigRational::zero(), |acc, a| acc + a.as_ratio());
        self.diffuse_mass.as_ratio() + &atoms == self.total_potential()
    }
}

impl WeightedGraph {
    /// Builds a graph, checking the involution, reciprocity, and
    /// connectivity invariants; all violations are reported together.
    pub fn new(vertices: Vec<String>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut violations = Vec::new();
        let mut vertex_index = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if vertex_index.insert(v.clone(), i).is_some() {
                violations.push(Violation {
                    path: format!("vertices[{i}]"),
                    message: format!("duplicate vertex {v:?}"),
                });
            }
        }
        if vertices.is_empty() {
            violations.push(Violation {
                path: "vertices".into(),
                message: "graph needs at least one vertex".into(),
            });
        }
        let mut by_id = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                violations.push(Violation {
                    path: format!("edges[{i}]"),
                    message: format!("duplicate edge id {:?}", e.id),
                });
            }
        }
        for (i, e) in edges.iter().enumerate() {
            for (field, v) in [("src", &e.src), ("dst", &e.dst)] {
                if !vertex_index.contains_key(v) {
                    violations.push(Violation {
                        path: format!("edges[{i}].{field}"),
                        message: format!("unknown vertex {v:?}"),
                    });
                }
            }
            match by_id.get(&e.op) {
                None => violations.push(Violation {
                    path: format!("edges[{i}].op"),
                    message: format!("unknown opposite edge {:?}", e.op),
                }),
                Some(&j) => {
                    let o = &edges[j];
                    if o.op != e.id {
                        violations.push(Violation {
                            path: format!("edges[{i}].op"),
                            message: format!(
                                "op is not an involution: {} -> {} -> {}",
                                e.id, e.op, o.op
                            ),
                        });
                    }
                    if o.src != e.dst || o.dst != e.src {
                        violations.push(Violation {
                            path: format!("edges[{i}].op"),
                            message: "opposite edge must reverse source and target".into(),
                        });
                    }
                    if !(&e.mu * &o.mu).is_one() {
                        violations.push(Violation {
                            path: format!("edges[{i}].mu"),
                            message: format!(
                                "weights must be reciprocal: mu({}) mu({}) = {}",
                                e.id,
                                o.id,
                                &e.mu * &o.mu
                            ),
                        });
                    }
                }
            }
        }
        let graph = WeightedGraph {
            vertices,
            edges,
            by_id,
            vertex_index,
        };
        if violations.is_empty() && !graph.is_connected() {
            violations.push(Violation {
                path: "edges".into(),
                message: "graph must be connected".into(),
            });
        }
        if violations.is_empty() {
            Ok(graph)
        } else {
            Err(GraphError::Invalid(violations))
        }
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: &str) -> Result<&Edge, GraphError> {
        self.by_id
            .get(id)
            .map(|&i| &self.edges[i])
            .ok_or_else(|| GraphError::UnknownEdge(id.to_string()))
    }

    fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([self.vertices[0].clone()]);
        seen.insert(self.vertices[0].clone());
        while let Some(v) = queue.pop_front() {
            for e in &self.edges {
                if e.src == v && seen.insert(e.dst.clone()) {
                    queue.push_back(e.dst.clone());
                }
            }
        }
        seen.len() == self.vertices.len()
    }

    /// Outgoing edges of `v`, sorted by edge id.
    fn outgoing(&self, v: &str) -> Vec<&Edge> {
        let mut out: Vec<&Edge> = self.edges.iter().filter(|e| e.src == v).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// One representative per unordered `{e, e^op}` pair, sorted by id.
    fn edge_pairs(&self) -> Vec<&Edge> {
        let mut out: Vec<&Edge> = self.edges.iter().filter(|e| e.id <= e.op).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}

/// The vertex functional from a deterministic breadth-first spanning tree
/// (lowest edge id first): the root gets `root_mass` and potentials
/// propagate along tree edges by their weights. Returns the maximal trace
/// subgraph (all edges whose weight equals the potential ratio of their
/// endpoints) together with the potentials.
pub fn trace_subgraph(
    g: &WeightedGraph,
    root: &str,
    root_mass: &PosRat,
) -> Result<(BTreeSet<String>, BTreeMap<String, PosRat>), GraphError> {
    let potentials = potentials_with_priority(g, root, root_mass, |e| e.id.clone())?;
    let mut subgraph = BTreeSet::new();
    for e in g.edges() {
        if &potentials[&e.src] * &e.mu == potentials[&e.dst] {
            subgraph.insert(e.id.clone());
        }
    }
    Ok((subgraph, potentials))
}

/// Potentials from a breadth-first spanning tree whose edge scan order is
/// controlled by `priority` (used by tests to vary the tree choice).
pub fn potentials_with_priority(
    g: &WeightedGraph,
    root: &str,
    root_mass: &PosRat,
    priority: impl Fn(&Edge) -> String,
) -> Result<BTreeMap<String, PosRat>, GraphError> {
    if !g.vertex_index.contains_key(root) {
        return Err(GraphError::UnknownVertex(root.to_string()));
    }
    let mut potentials = BTreeMap::new();
    potentials.insert(root.to_string(), root_mass.clone());
    let mut queue = VecDeque::from([root.to_string()]);
    while let Some(v) = queue.pop_front() {
        let mut out = g.outgoing(&v);
        out.sort_by_key(|e| priority(e));
        for e in out {
            if !potentials.contains_key(&e.dst) {
                let p = &potentials[&v] * &e.mu;
                potentials.insert(e.dst.clone(), p);
                queue.push_back(e.dst.clone());
            }
        }
    }
    debug_assert_eq!(potentials.len(), g.vertices().len(), "graph is connected");
    Ok(potentials)
}

/// The modular eigenvalue of an edge: `mu(e)` times the potential ratio of
/// its source over its target. Edges inside the trace subgraph have
/// eigenvalue 1.
pub fn edge_eigenvalue(
    g: &WeightedGraph,
    potentials: &BTreeMap<String, PosRat>,
    id: &str,
) -> Result<PosRat, GraphError> {
    let e = g.edge(id)?;
    Ok(&(&e.mu * &potentials[&e.src]) / &potentials[&e.dst])
}

/// The group of loop weights: generated by the potential-normalized weight
/// of one representative per edge pair, a cycle-basis generating set for
/// all loop weights. Tree edges contribute 1 and drop out.
pub fn loop_group(
    g: &WeightedGraph,
    potentials: &BTreeMap<String, PosRat>,
) -> Result<RatioGroup, GraphError> {
    let mut gens = Vec::new();
    for e in g.edge_pairs() {
        gens.push(&(&e.mu * &potentials[&e.src]) / &potentials[&e.dst]);
    }
    Ok(RatioGroup::generate(&gens))
}

/// Classifies the graph algebra: Araki-Woods factor of the loop group, plus
/// one atom at each vertex whose outgoing weight sum falls below 1, of mass
/// `potential(v) (1 - sum)`. Errors when the loop group is trivial.
pub fn classify_graph(
    g: &WeightedGraph,
    root: &str,
    root_mass: &PosRat,
) -> Result<GraphClassification, GraphError> {
    let (subgraph, potentials) = trace_subgraph(g, root, root_mass)?;
    let group = loop_group(g, &potentials)?;
    if group.is_trivial() {
        return Err(GraphError::TrivialLoopGroup);
    }
    let mut atoms = BTreeMap::new();
    for v in g.vertices() {
        let out_sum = g
            .outgoing(v)
            .iter()
            .fold(BigRational::zero(), |acc, e| acc + e.mu.as_ratio());
        if let Ok(deficit) = PosRat::from_ratio(BigRational::from_integer(1.into()) - out_sum) {
            atoms.insert(v.clone(), &potentials[v] * &deficit);
        }
    }
    let total = potentials
        .values()
        .fold(BigRational::zero(), |acc, p| acc + p.as_ratio());
    let atom_mass = atoms
        .values()
        .fold(BigRational::zero(), |acc, a| acc + a.as_ratio());
    let diffuse_mass = PosRat::from_ratio(total - atom_mass)
        .expect("atoms never exhaust the vertex functional");
    let mut eigenvalues = BTreeMap::new();
    for e in g.edges() {
        eigenvalues.insert(e.id.clone(), edge_eigenvalue(g, &potentials, &e.id)?);
    }
    let c = GraphClassification {
        trace_subgraph: subgraph,
        potentials,
        loop_group: group,
        atoms,
        diffuse_mass,
        eigenvalues,
    };
    debug_assert!(c.mass_is_conserved());
    Ok(c)
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDoc {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub mu: String,
    pub op: String,
}

/// Parses and validates a raw graph document.
pub fn validate_graph(doc: &GraphDoc) -> Result<WeightedGraph, GraphError> {
    let mut violations = Vec::new();
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.iter().enumerate() {
        match e.mu.parse::<PosRat>() {
            Ok(mu) => edges.push(Edge {
                id: e.id.clone(),
                src: e.src.clone(),
                dst: e.dst.clone(),
                mu,
                op: e.op.clone(),
            }),
            Err(err) => violations.push(Violation {
                path: format!("edges[{i}].mu"),
                message: err.to_string(),
            }),
        }
    }
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    WeightedGraph::new(doc.vertices.clone(), edges)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphClassificationDoc {
    pub diffuse: GraphDiffuseDoc,
    pub atoms: BTreeMap<String, String>,
    pub potentials: BTreeMap<String, String>,
    pub eigenvalues: BTreeMap<String, String>,
    pub trace_subgraph: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDiffuseDoc {
    pub generators: Vec<String>,
    pub mass: String,
    #[serde(rename = "type")]
    pub connes_type: String,
}

impl GraphClassification {
    pub fn connes_label(&self) -> String {
        match self.loop_group.kind() {
            GroupKind::Trivial => String::new(),
            GroupKind::Cyclic(l) => format!("III_\u{3bb}:{l}"),
            GroupKind::HigherRank => "III_1".to_string(),
        }
    }

    pub fn to_doc(&self) -> GraphClassificationDoc {
        GraphClassificationDoc {
            diffuse: GraphDiffuseDoc {
                generators: self
                    .loop_group
                    .generators()
                    .iter()
                    .map(|g| g.to_string())
                    .collect(),
                mass: self.diffuse_mass.to_string(),
                connes_type: self.connes_label(),
            },
            atoms: self
                .atoms
                .iter()
                .map(|(v, m)| (v.clone(), m.to_string()))
                .collect(),
            potentials: self
                .potentials
                .iter()
                .map(|(v, m)| (v.clone(), m.to_string()))
                .collect(),
            eigenvalues: self
                .eigenvalues
                .iter()
                .map(|(e, m)| (e.clone(), m.to_string()))
                .collect(),
            trace_subgraph: self.trace_subgraph.iter().cloned().collect(),
        }
    }
}
