//! Decomposition graph: problem nodes, sibling dependency edges and status transitions.
//!
//! Sub-problem identifiers are only unique per decomposition step (every level
//! restarts at `P-1`), so internal ids are the parent path joined with `/`,
//! e.g. `P-2/P-1`. The root carries the reserved id `ROOT`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROOT_ID: &str = "ROOT";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProblemId(String);

impl ProblemId {
    pub fn root() -> Self {
        ProblemId(ROOT_ID.to_string())
    }

    /// Local sibling id `P-<k>`.
    pub fn local(k: usize) -> Self {
        ProblemId(format!("P-{k}"))
    }

    /// Wraps an arbitrary id string. Empty strings are rejected.
    pub fn new(value: impl Into<String>) -> Option<Self> {
        let value = value.into();
        if value.trim().is_empty() {
            None
        } else {
            Some(ProblemId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == ROOT_ID
    }

    /// Last path segment, i.e. the id the model used for this node.
    pub fn local_part(&self) -> &str {
        self.0.rsplit('/').next().unwrap_or(&self.0)
    }

    /// Internal id of a child with the given local id.
    pub fn child(&self, local: &ProblemId) -> ProblemId {
        if self.is_root() {
            local.clone()
        } else {
            ProblemId(format!("{}/{}", self.0, local.0))
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Unknown,
    Unit,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Pending,
    Decomposed,
    Blocked,
    Solved,
    Failed,
}

impl NodeStatus {
    fn can_transition_to(self, next: NodeStatus) -> bool {
        use NodeStatus::*;
        match (self, next) {
            (Solved | Failed, _) => false,
            (Pending, Pending) => false,
            (Pending, _) => true,
            (Blocked, Blocked) => false,
            (Blocked, _) => true,
            (Decomposed, Solved | Failed) => true,
            (Decomposed, _) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemNode {
    pub id: ProblemId,
    pub description: String,
    /// Description before dependency substitution, when it differed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_description: Option<String>,
    pub kind: NodeKind,
    pub status: NodeStatus,
    pub solution: Option<String>,
    pub children: Vec<ProblemId>,
    pub dependencies: BTreeSet<ProblemId>,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty_tag: Option<u64>,
}

impl ProblemNode {
    fn new(id: ProblemId, description: String, depth: usize) -> Self {
        ProblemNode {
            id,
            description,
            original_description: None,
            kind: NodeKind::Unknown,
            status: NodeStatus::Pending,
            solution: None,
            children: Vec::new(),
            dependencies: BTreeSet::new(),
            depth,
            class_tag: None,
            difficulty_tag: None,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == NodeStatus::Solved
    }
}

/// One proposed sub-problem, using local ids as written by the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubProblemSpec {
    pub id: ProblemId,
    pub description: String,
    pub dependencies: BTreeSet<ProblemId>,
}

impl SubProblemSpec {
    pub fn new(id: &str, description: impl Into<String>, deps: &[&str]) -> Self {
        SubProblemSpec {
            id: ProblemId(id.to_string()),
            description: description.into(),
            dependencies: deps.iter().map(|d| ProblemId(d.to_string())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(ProblemId),
    #[error("duplicate sub-problem id {0}")]
    DuplicateId(ProblemId),
    #[error("sub-problem {from} references {missing}, which is not in the decomposition")]
    DanglingDependency { from: ProblemId, missing: ProblemId },
    #[error("sub-problem {0} depends on itself")]
    SelfDependency(ProblemId),
    #[error("decomposition proposes {got} sub-problems, width is {width}")]
    WidthExceeded { got: usize, width: usize },
    #[error("decomposition has no sub-problems")]
    MalformedDecomposition,
    #[error("node {id} cannot be decomposed in kind {kind:?}")]
    NotDecomposable { id: ProblemId, kind: NodeKind },
    #[error("invalid status transition for {id}: {from:?} -> {to:?}")]
    InvalidTransition {
        id: ProblemId,
        from: NodeStatus,
        to: NodeStatus,
    },
    #[error("graph invariant violated at {id}: {reason}")]
    Invariant { id: ProblemId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acyclicity {
    Acyclic,
    Cycle(Vec<ProblemId>),
}

impl Acyclicity {
    pub fn is_acyclic(&self) -> bool {
        matches!(self, Acyclicity::Acyclic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionGraph {
    root: ProblemId,
    nodes: IndexMap<ProblemId, ProblemNode>,
    #[serde(default)]
    parents: BTreeMap<ProblemId, ProblemId>,
}

impl DecompositionGraph {
    pub fn new(root_description: impl Into<String>) -> Self {
        let root = ProblemId::root();
        let mut nodes = IndexMap::new();
        nodes.insert(
            root.clone(),
            ProblemNode::new(root.clone(), root_description.into(), 0),
        );
        DecompositionGraph {
            root,
            nodes,
            parents: BTreeMap::new(),
        }
    }

    pub fn root(&self) -> &ProblemId {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &ProblemId) -> Result<&ProblemNode, GraphError> {
        self.nodes
            .get(id)
            .ok_or_else(|| GraphError::UnknownNode(id.clone()))
    }

    pub fn node_mut(&mut self, id: &ProblemId) -> Result<&mut ProblemNode, GraphError> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| GraphError::UnknownNode(id.clone()))
    }

    /// Nodes in insertion order.
    pub fn nodes(&self) -> impl Iterator<Item = &ProblemNode> {
        self.nodes.values()
    }

    pub fn parent(&self, id: &ProblemId) -> Option<&ProblemId> {
        self.parents.get(id)
    }

    /// Ancestors from the parent up to the root.
    pub fn ancestors(&self, id: &ProblemId) -> Vec<ProblemId> {
        let mut out = Vec::new();
        let mut current = id;
        while let Some(p) = self.parents.get(current) {
            out.push(p.clone());
            current = p;
        }
        out
    }

    /// Attaches sub-problems to `parent`. Dependencies are local ids among `subs`.
    pub fn add_decomposition(
        &mut self,
        parent: &ProblemId,
        subs: Vec<SubProblemSpec>,
        width: usize,
    ) -> Result<Vec<ProblemId>, GraphError> {
        let parent_node = self.node(parent)?;
        if !matches!(parent_node.kind, NodeKind::Unknown | NodeKind::Composite) {
            return Err(GraphError::NotDecomposable {
                id: parent.clone(),
                kind: parent_node.kind,
            });
        }
        if subs.is_empty() {
            return Err(GraphError::MalformedDecomposition);
        }
        if subs.len() > width {
            return Err(GraphError::WidthExceeded {
                got: subs.len(),
                width,
            });
        }
        let mut local_ids = BTreeSet::new();
        for sub in &subs {
            if !local_ids.insert(sub.id.clone()) || sub.id.is_root() {
                return Err(GraphError::DuplicateId(sub.id.clone()));
            }
        }
        for sub in &subs {
            if sub.dependencies.contains(&sub.id) {
                return Err(GraphError::SelfDependency(sub.id.clone()));
            }
            if let Some(missing) = sub.dependencies.iter().find(|d| !local_ids.contains(*d)) {
                return Err(GraphError::DanglingDependency {
                    from: sub.id.clone(),
                    missing: missing.clone(),
                });
            }
        }
        let depth = parent_node.depth + 1;
        let mut created = Vec::with_capacity(subs.len());
        for sub in subs {
            let id = parent.child(&sub.id);
            if self.nodes.contains_key(&id) {
                return Err(GraphError::DuplicateId(id));
            }
            let mut node = ProblemNode::new(id.clone(), sub.description, depth);
            node.dependencies = sub.dependencies.iter().map(|d| parent.child(d)).collect();
            self.nodes.insert(id.clone(), node);
            self.parents.insert(id.clone(), parent.clone());
            created.push(id);
        }
        let parent_node = self.node_mut(parent)?;
        parent_node.kind = NodeKind::Composite;
        parent_node.children.extend(created.iter().cloned());
        if parent_node.status != NodeStatus::Decomposed {
            let from = parent_node.status;
            if !from.can_transition_to(NodeStatus::Decomposed) {
                return Err(GraphError::InvalidTransition {
                    id: parent.clone(),
                    from,
                    to: NodeStatus::Decomposed,
                });
            }
            parent_node.status = NodeStatus::Decomposed;
        }
        Ok(created)
    }

    pub fn set_status(&mut self, id: &ProblemId, status: NodeStatus) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if !node.status.can_transition_to(status) {
            return Err(GraphError::InvalidTransition {
                id: id.clone(),
                from: node.status,
                to: status,
            });
        }
        node.status = status;
        Ok(())
    }

    pub fn mark_unit(&mut self, id: &ProblemId) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if node.kind == NodeKind::Composite {
            return Err(GraphError::Invariant {
                id: id.clone(),
                reason: "composite node cannot become a unit".into(),
            });
        }
        node.kind = NodeKind::Unit;
        Ok(())
    }

    pub fn set_solution(&mut self, id: &ProblemId, solution: String) -> Result<(), GraphError> {
        self.set_status(id, NodeStatus::Solved)?;
        self.node_mut(id)?.solution = Some(solution);
        Ok(())
    }

    /// Replaces a node's description, remembering the first original.
    pub fn rewrite_description(
        &mut self,
        id: &ProblemId,
        description: String,
    ) -> Result<(), GraphError> {
        let node = self.node_mut(id)?;
        if node.description != description {
            if node.original_description.is_none() {
                node.original_description = Some(node.description.clone());
            }
            node.description = description;
        }
        Ok(())
    }

    /// Test hook: appends a raw child edge without any validation.
    #[doc(hidden)]
    pub fn inject_child_edge(&mut self, parent: &ProblemId, child: &ProblemId) {
        if let Some(node) = self.nodes.get_mut(parent) {
            node.children.push(child.clone());
            node.kind = NodeKind::Composite;
        }
    }

    /// Test hook: appends a raw dependency edge without any validation.
    #[doc(hidden)]
    pub fn inject_dependency(&mut self, node: &ProblemId, dependency: &ProblemId) {
        if let Some(n) = self.nodes.get_mut(node) {
            n.dependencies.insert(dependency.clone());
        }
    }

    /// Depth-first search over child and "depends on" edges. Returns the first
    /// cycle found as the id path that closes it.
    pub fn check_acyclic(&self) -> Acyclicity {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let mut marks: HashMap<&ProblemId, Mark> =
            self.nodes.keys().map(|k| (k, Mark::White)).collect();

        fn successors<'a>(node: &'a ProblemNode) -> impl Iterator<Item = &'a ProblemId> {
            node.dependencies.iter().chain(node.children.iter())
        }

        for start in self.nodes.keys() {
            if marks[start] != Mark::White {
                continue;
            }
            // explicit stack of (node, successor cursor)
            let mut path: Vec<&ProblemId> = vec![start];
            let mut cursors: Vec<usize> = vec![0];
            marks.insert(start, Mark::Grey);
            while let Some(&current) = path.last() {
                let cursor = cursors.last_mut().expect("cursor per path entry");
                let next = self
                    .nodes
                    .get(current)
                    .and_then(|n| successors(n).nth(*cursor));
                *cursor += 1;
                match next {
                    Some(next) => match marks.get(next).copied() {
                        Some(Mark::White) => {
                            marks.insert(next, Mark::Grey);
                            path.push(next);
                            cursors.push(0);
                        }
                        Some(Mark::Grey) => {
                            let pos = path.iter().position(|p| *p == next).unwrap_or(0);
                            return Acyclicity::Cycle(
                                path[pos..].iter().map(|p| (*p).clone()).collect(),
                            );
                        }
                        // black, or dangling ids (reported by audit)
                        _ => {}
                    },
                    None => {
                        marks.insert(current, Mark::Black);
                        path.pop();
                        cursors.pop();
                    }
                }
            }
        }
        Acyclicity::Acyclic
    }

    /// Verifies the structural invariants of every node.
    pub fn audit(&self) -> Result<(), GraphError> {
        let violation = |id: &ProblemId, reason: &str| GraphError::Invariant {
            id: id.clone(),
            reason: reason.to_string(),
        };
        for node in self.nodes.values() {
            if node.is_solved() != node.solution.is_some() {
                return Err(violation(&node.id, "solved status and solution disagree"));
            }
            if node.kind == NodeKind::Unit && !node.children.is_empty() {
                return Err(violation(&node.id, "unit node has children"));
            }
            for child in &node.children {
                let child_node = self.node(child)?;
                if child_node.depth != node.depth + 1 {
                    return Err(violation(child, "depth is not parent depth + 1"));
                }
                if self.parents.get(child) != Some(&node.id) {
                    return Err(violation(child, "child edge does not match parent link"));
                }
                if node.is_solved() && !child_node.is_solved() {
                    return Err(violation(&node.id, "solved composite has unsolved child"));
                }
            }
            let parent = self.parents.get(&node.id);
            for dep in &node.dependencies {
                self.node(dep)?;
                if self.parents.get(dep) != parent || parent.is_none() {
                    return Err(violation(&node.id, "dependency is not a sibling"));
                }
            }
        }
        if let Acyclicity::Cycle(path) = self.check_acyclic() {
            return Err(violation(&path[0], "cycle in decomposition graph"));
        }
        Ok(())
    }

    /// Graphviz rendering: solid child edges, dashed dependency edges,
    /// fill color by status.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph decomposition {\n");
        out.push_str("  node [shape=box, style=filled, fontname=\"Helvetica\"];\n");
        for node in self.nodes.values() {
            let color = match node.status {
                NodeStatus::Solved => "palegreen",
                NodeStatus::Failed => "lightcoral",
                _ => "lightgray",
            };
            let mut label = format!("{}\\n{}", node.id, escape_dot(&node.description));
            if let Some(solution) = &node.solution {
                label.push_str("\\n=> ");
                label.push_str(&escape_dot(solution));
            }
            out.push_str(&format!(
                "  \"{}\" [label=\"{}\", fillcolor={}];\n",
                node.id, label, color
            ));
        }
        for node in self.nodes.values() {
            for child in &node.children {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [style=solid];\n",
                    node.id, child
                ));
            }
        }
        for node in self.nodes.values() {
            for dep in &node.dependencies {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [style=dashed, constraint=false];\n",
                    dep, node.id
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(ch),
        }
    }
    out
}
