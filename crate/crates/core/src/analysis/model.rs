use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::benchmarks::Problem;
use crate::graph::{DecompositionGraph, NodeKind, ProblemId};

/// Success probabilities of the three steps for one (class, difficulty) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTriple {
    pub phi_d: f64,
    pub phi_u: f64,
    pub phi_m: f64,
}

impl StepTriple {
    pub fn new(phi_d: f64, phi_u: f64, phi_m: f64) -> Self {
        StepTriple { phi_d, phi_u, phi_m }
    }

    pub fn uniform(p: f64) -> Self {
        StepTriple::new(p, p, p)
    }

    fn clamped(self) -> Self {
        StepTriple::new(clamp01(self.phi_d), clamp01(self.phi_u), clamp01(self.phi_m))
    }
}

pub fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Step accuracies as functions of problem class and difficulty.
pub trait StepAccuracies: Sync {
    fn at(&self, class: &str, n: u64) -> StepTriple;

    /// Clamped to [0, 1].
    fn eval(&self, class: &str, n: u64) -> StepTriple {
        self.at(class, n).clamped()
    }
}

impl StepAccuracies for StepTriple {
    fn at(&self, _class: &str, _n: u64) -> StepTriple {
        *self
    }
}

/// Per-cell table with a fallback for unlisted cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableAccuracies {
    pub cells: BTreeMap<(String, u64), StepTriple>,
    pub default: StepTriple,
}

impl TableAccuracies {
    pub fn new(default: StepTriple) -> Self {
        TableAccuracies {
            cells: BTreeMap::new(),
            default,
        }
    }

    pub fn with(mut self, class: &str, n: u64, triple: StepTriple) -> Self {
        self.cells.insert((class.to_string(), n), triple);
        self
    }
}

impl StepAccuracies for TableAccuracies {
    fn at(&self, class: &str, n: u64) -> StepTriple {
        self.cells
            .get(&(class.to_string(), n))
            .copied()
            .unwrap_or(self.default)
    }
}

pub struct FnAccuracies<F>(pub F);

impl<F: Fn(&str, u64) -> StepTriple + Sync> StepAccuracies for FnAccuracies<F> {
    fn at(&self, class: &str, n: u64) -> StepTriple {
        (self.0)(class, n)
    }
}

/// A decomposition tree annotated with class and difficulty. Leaves are
/// unit problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeNode {
    pub class: String,
    pub n: u64,
    pub children: Vec<ShapeNode>,
}

impl ShapeNode {
    pub fn unit(class: &str, n: u64) -> Self {
        ShapeNode {
            class: class.to_string(),
            n,
            children: Vec::new(),
        }
    }

    pub fn composite(class: &str, n: u64, children: Vec<ShapeNode>) -> Self {
        ShapeNode {
            class: class.to_string(),
            n,
            children,
        }
    }

    /// Complete `width`-ary tree of the given depth; difficulty is divided
    /// evenly (rounding up) at each level.
    pub fn full(class: &str, n: u64, width: usize, depth: usize) -> Self {
        if depth == 0 || width == 0 {
            return ShapeNode::unit(class, n);
        }
        let child_n = n.div_ceil(width as u64).max(1);
        ShapeNode::composite(
            class,
            n,
            (0..width).map(|_| ShapeNode::full(class, child_n, width, depth - 1)).collect(),
        )
    }

    pub fn is_unit(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of model steps: one per unit, two (decompose, merge) per composite.
    pub fn step_count(&self) -> usize {
        if self.is_unit() {
            1
        } else {
            2 + self.children.iter().map(ShapeNode::step_count).sum::<usize>()
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(ShapeNode::node_count).sum::<usize>()
    }

    pub fn leaves(&self) -> Vec<&ShapeNode> {
        if self.is_unit() {
            vec![self]
        } else {
            self.children.iter().flat_map(ShapeNode::leaves).collect()
        }
    }

    /// Shape induced by a solved graph: the class comes from parsing each
    /// node's description, the difficulty is its item count.
    pub fn from_graph(graph: &DecompositionGraph) -> ShapeNode {
        fn build(graph: &DecompositionGraph, id: &ProblemId) -> ShapeNode {
            let node = graph.node(id).expect("children resolve");
            let (class, n) = match Problem::parse(&node.description) {
                Some(p) => (p.class_name().to_string(), p.items().len() as u64),
                None => (node.class_tag.clone().unwrap_or_else(|| "unknown".into()), 0),
            };
            let children = if node.kind == NodeKind::Composite {
                node.children.iter().map(|c| build(graph, c)).collect()
            } else {
                Vec::new()
            };
            ShapeNode { class, n, children }
        }
        build(graph, graph.root())
    }
}

/// Expected end-to-end accuracy: φ_d·φ_m·Π(child term) for composites,
/// where a unit child contributes φ_u and a composite child recurses.
/// A unit root is worth its φ_u.
pub fn phi_rdd_closed_form(shape: &ShapeNode, acc: &dyn StepAccuracies) -> f64 {
    let t = acc.eval(&shape.class, shape.n);
    if shape.is_unit() {
        return t.phi_u;
    }
    shape
        .children
        .iter()
        .map(|c| phi_rdd_closed_form(c, acc))
        .fold(t.phi_d * t.phi_m, |a, b| a * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_unit_children() {
        let shape = ShapeNode::composite("c", 10, vec![ShapeNode::unit("c", 5), ShapeNode::unit("c", 5)]);
        let acc = StepTriple::new(0.9, 0.95, 0.9);
        assert!((phi_rdd_closed_form(&shape, &acc) - 0.731025).abs() < 1e-12);
        assert_eq!(phi_rdd_closed_form(&shape, &StepTriple::uniform(1.0)), 1.0);
    }

    #[test]
    fn unit_root_is_phi_u() {
        assert_eq!(phi_rdd_closed_form(&ShapeNode::unit("c", 3), &StepTriple::new(0.1, 0.7, 0.2)), 0.7);
    }

    #[test]
    fn outputs_are_clamped() {
        let acc = FnAccuracies(|_: &str, _| StepTriple::new(1.5, -0.2, f64::NAN));
        let t = acc.eval("c", 1);
        assert_eq!((t.phi_d, t.phi_u, t.phi_m), (1.0, 0.0, 0.0));
    }

    #[test]
    fn full_shape_counts() {
        let s = ShapeNode::full("c", 16, 2, 2);
        assert_eq!(s.node_count(), 7);
        assert_eq!(s.step_count(), 2 * 3 + 4);
        assert_eq!(s.leaves().len(), 4);
        assert_eq!(s.children[0].children[0].n, 4);
    }
}
