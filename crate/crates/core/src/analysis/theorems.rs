use serde::{Deserialize, Serialize};

use super::model::{phi_rdd_closed_form, ShapeNode, StepAccuracies};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCheck {
    /// Child indices from the root.
    pub path: Vec<usize>,
    pub class: String,
    pub n: u64,
    pub phi_u: f64,
    pub is_unit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    /// φ_d·φ_m > φ_u at the root.
    pub cond1: bool,
    /// Every unit problem in the tree is strictly easier than the root.
    pub cond2: bool,
    pub phi_d_phi_m: f64,
    pub phi_u_root: f64,
    pub phi_rdd: f64,
    /// Unit problems with φ_u ≤ φ_u(root).
    pub violations: Vec<NodeCheck>,
    /// The same comparison over every non-root node, composite ones included.
    /// Not a necessary condition: a composite child may be hard to solve
    /// directly yet easy to solve by decomposition.
    pub every_node_cond2: bool,
}

impl TheoremReport {
    pub fn desideratum(&self) -> bool {
        self.phi_rdd > self.phi_u_root
    }
}

pub fn check_theorem_conditions(shape: &ShapeNode, acc: &dyn StepAccuracies) -> TheoremReport {
    let root = acc.eval(&shape.class, shape.n);
    let phi_d_phi_m = root.phi_d * root.phi_m;
    let mut all = Vec::new();
    collect(shape, acc, &mut Vec::new(), &mut all);
    let non_root = &all[1..];
    let violations: Vec<NodeCheck> = if shape.is_unit() {
        all.iter().filter(|c| c.phi_u <= root.phi_u).cloned().collect()
    } else {
        non_root
            .iter()
            .filter(|c| c.is_unit && c.phi_u <= root.phi_u)
            .cloned()
            .collect()
    };
    TheoremReport {
        cond1: phi_d_phi_m > root.phi_u,
        cond2: violations.is_empty(),
        phi_d_phi_m,
        phi_u_root: root.phi_u,
        phi_rdd: phi_rdd_closed_form(shape, acc),
        violations,
        every_node_cond2: !shape.is_unit() && non_root.iter().all(|c| c.phi_u > root.phi_u),
    }
}

fn collect(node: &ShapeNode, acc: &dyn StepAccuracies, path: &mut Vec<usize>, out: &mut Vec<NodeCheck>) {
    out.push(NodeCheck {
        path: path.clone(),
        class: node.class.clone(),
        n: node.n,
        phi_u: acc.eval(&node.class, node.n).phi_u,
        is_unit: node.is_unit(),
    });
    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        collect(child, acc, path, out);
        path.pop();
    }
}
