#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows whose bin is `<= bin` go left during training.
        bin: usize,
        /// Raw-value equivalent of `bin`: `value <= threshold` goes left.
        threshold: f64,
        missing_left: bool,
        /// Loss reduction of the split (never below `gamma_min_gain`).
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, missing_left, left, right, .. } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() { *missing_left } else { v <= *threshold };
                    idx = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Renumbers nodes so the arena is stored in pre-order.
    pub(crate) fn into_preorder(self) -> Self {
        let order = self.preorder();
        let mut new_index = vec![0usize; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| match self.nodes[old].clone() {
                Node::Split { feature, bin, threshold, missing_left, gain, left, right } => Node::Split {
                    feature,
                    bin,
                    threshold,
                    missing_left,
                    gain,
                    left: new_index[left],
                    right: new_index[right],
                },
                leaf => leaf,
            })
            .collect();
        Self { nodes }
    }

    /// Node indices in pre-order (node, left subtree, right subtree).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            out.push(i);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}
