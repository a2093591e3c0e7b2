//! Finite weighted node sets standing in for a finite measure space.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Atom,
    /// A quadrature cell of a nonatomic region.
    NonatomicSample,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Atom => "atom",
            NodeKind::NonatomicSample => "nonatomic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureNode {
    pub id: String,
    pub weight: f64,
    pub kind: NodeKind,
}

impl MeasureNode {
    pub fn new(id: impl Into<String>, weight: f64, kind: NodeKind) -> Self {
        MeasureNode {
            id: id.into(),
            weight,
            kind,
        }
    }

    pub fn atom(id: impl Into<String>, weight: f64) -> Self {
        Self::new(id, weight, NodeKind::Atom)
    }

    pub fn nonatomic(id: impl Into<String>, weight: f64) -> Self {
        Self::new(id, weight, NodeKind::NonatomicSample)
    }

    pub fn is_atom(&self) -> bool {
        self.kind == NodeKind::Atom
    }
}

/// Ordered node list with cached total mass. A space with zero nodes only
/// arises as one side of [`MeasureSpace::partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpace {
    nodes: Vec<MeasureNode>,
    total_mass: f64,
}

impl MeasureSpace {
    pub fn new(nodes: Vec<MeasureNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput(
                "measure space needs at least one node".into(),
            ));
        }
        Self::build(nodes)
    }

    fn build(nodes: Vec<MeasureNode>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &nodes {
            if !(n.weight > 0.0 && n.weight.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "node {} has non-positive weight {}",
                    n.id, n.weight
                )));
            }
            if !seen.insert(n.id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate node id {}", n.id)));
            }
        }
        let total_mass = nodes.iter().map(|n| n.weight).sum();
        Ok(MeasureSpace { nodes, total_mass })
    }

    /// Equal-weight space of `count` nodes of one kind with ids `t1, t2, ...`.
    pub fn uniform(count: usize, total_mass: f64, kind: NodeKind) -> Result<Self> {
        let w = total_mass / count as f64;
        Self::new(
            (1..=count)
                .map(|i| MeasureNode::new(format!("t{i}"), w, kind))
                .collect(),
        )
    }

    pub fn empty() -> Self {
        MeasureSpace {
            nodes: Vec::new(),
            total_mass: 0.0,
        }
    }

    pub fn nodes(&self) -> &[MeasureNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.nodes.iter().all(|n| n.is_atom())
    }

    /// Splits into (atomic part, nonatomic part); either may be empty.
    pub fn partition(&self) -> (MeasureSpace, MeasureSpace) {
        let (a, na): (Vec<_>, Vec<_>) = self.nodes.iter().cloned().partition(|n| n.is_atom());
        (
            Self::build(a).expect("subset of a valid space"),
            Self::build(na).expect("subset of a valid space"),
        )
    }

    /// Concatenates two disjoint spaces (the inverse of `partition` up to order).
    pub fn merge(&self, other: &MeasureSpace) -> Result<MeasureSpace> {
        let mut nodes = self.nodes.clone();
        nodes.extend(other.nodes.iter().cloned());
        if nodes.is_empty() {
            return Ok(MeasureSpace::empty());
        }
        Self::build(nodes)
    }

    /// Same nodes with every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<MeasureSpace> {
        Self::build(
            self.nodes
                .iter()
                .map(|n| MeasureNode::new(n.id.clone(), n.weight * factor, n.kind))
                .collect(),
        )
    }
}

/// One scalar per node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeScalarField {
    values: BTreeMap<String, f64>,
}

impl NodeScalarField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(space: &MeasureSpace, c: f64) -> Self {
        let mut f = Self::new();
        for n in space.nodes() {
            f.set(&n.id, c);
        }
        f
    }

    /// Values listed in node order of `space`.
    pub fn from_values(space: &MeasureSpace, values: &[f64]) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DomainMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                space.len()
            )));
        }
        let mut f = Self::new();
        for (n, v) in space.nodes().iter().zip(values) {
            f.set(&n.id, *v);
        }
        Ok(f)
    }

    pub fn set(&mut self, id: &str, value: f64) {
        self.values.insert(id.to_string(), value);
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Values in node order of `space`.
    pub fn values_on(&self, space: &MeasureSpace) -> Result<Vec<f64>> {
        space
            .nodes()
            .iter()
            .map(|n| {
                self.get(&n.id)
                    .ok_or_else(|| Error::DomainMismatch(format!("no value for node {}", n.id)))
            })
            .collect()
    }

    pub fn max(&self) -> f64 {
        self.values.values().fold(0.0f64, |m, v| m.max(*v))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.values().all(|v| *v >= 0.0)
    }

    pub fn linear_combination(a: f64, f: &Self, b: f64, g: &Self) -> Self {
        let mut out = Self::new();
        for (k, v) in &f.values {
            let w = g.values.get(k).copied().unwrap_or(0.0);
            out.values.insert(k.clone(), a * v + b * w);
        }
        for (k, w) in &g.values {
            out.values.entry(k.clone()).or_insert(b * w);
        }
        out
    }
}

/// Σ_i weight_i · value_i over the nodes of `space`.
pub fn integrate(field: &NodeScalarField, space: &MeasureSpace) -> Result<f64> {
    let vals = field.values_on(space)?;
    Ok(space
        .nodes()
        .iter()
        .zip(vals)
        .map(|(n, v)| weighted_value(n.weight, v))
        .sum())
}

/// `w·v` with `0·∞ = 0` (only positive weights occur, so this is just a guard).
fn weighted_value(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}
