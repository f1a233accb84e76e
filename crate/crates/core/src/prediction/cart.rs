use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    /// Cost-complexity pruning strength; 0 disables pruning.
    pub ccp_alpha: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            ccp_alpha: 0.0,
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

/// Go left when `x[feature] <= threshold`. The threshold is the largest
/// training value on the left, so ordering-preserving feature transforms
/// yield the same partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Training rows per class reaching this node.
    pub counts: [usize; 2],
    pub split: Option<Split>,
}

impl Node {
    fn total(&self) -> usize {
        self.counts[0] + self.counts[1]
    }

    fn majority(&self) -> usize {
        usize::from(self.counts[1] > self.counts[0])
    }
}

/// Binary gini classification tree stored as an arena rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub width: usize,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    params: CartParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let mut c = [0; 2];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    /// Best (feature, threshold, left rows) by weighted gini; first wins ties.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64, Vec<usize>)> {
        let total = self.counts(rows);
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, usize)> = None;
        let mut order = rows.to_vec();
        let mut best_order = Vec::new();
        for feature in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[[a, feature]].total_cmp(&self.x[[b, feature]]));
            let mut left = [0usize; 2];
            for i in 0..n - 1 {
                left[self.y[order[i]]] += 1;
                let here = self.x[[order[i], feature]];
                let next = self.x[[order[i + 1], feature]];
                if here == next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = (i + 1) as f64 * gini(left) + (n - i - 1) as f64 * gini(right);
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, feature, i + 1));
                    best_order.clone_from(&order);
                }
            }
        }
        let (_, feature, cut) = best?;
        let threshold = self.x[[best_order[cut - 1], feature]];
        Some((feature, threshold, best_order[..cut].to_vec()))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node {
            counts,
            split: None,
        });
        let pure = counts[0] == 0 || counts[1] == 0;
        let deep = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || deep || rows.len() < 2 {
            return id;
        }
        if let Some((feature, threshold, mut left_rows)) = self.best_split(&rows) {
            left_rows.sort_unstable();
            let right_rows: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|r| left_rows.binary_search(r).is_err())
                .collect();
            let left = self.grow(left_rows, depth + 1);
            let right = self.grow(right_rows, depth + 1);
            self.nodes[id].split = Some(Split {
                feature,
                threshold,
                left,
                right,
            });
        }
        id
    }
}

impl Tree {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], params: &CartParams) -> Result<Tree> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::shape(x.nrows(), y.len()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c > 1) {
            return Err(Error::Range {
                what: "label",
                detail: format!("{bad} is not a binary class"),
            });
        }
        if !(params.ccp_alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ccp_alpha must be >= 0, got {}",
                params.ccp_alpha
            )));
        }
        let mut grower = Grower {
            x,
            y,
            params: *params,
            nodes: Vec::new(),
        };
        grower.grow((0..x.nrows()).collect(), 0);
        let mut tree = Tree {
            nodes: grower.nodes,
            width: x.ncols(),
        };
        if params.ccp_alpha > 0.0 {
            tree.prune(params.ccp_alpha);
        }
        Ok(tree)
    }

    /// Minimal cost-complexity pruning: collapse the weakest link while its
    /// effective alpha does not exceed `alpha`.
    fn prune(&mut self, alpha: f64) {
        let n = self.nodes[0].total() as f64;
        loop {
            let mut weakest: Option<(f64, usize)> = None;
            for id in self.reachable() {
                if self.nodes[id].split.is_none() {
                    continue;
                }
                let (risk, leaves) = self.subtree_risk(id, n);
                let own = self.nodes[id].total() as f64 / n * gini(self.nodes[id].counts);
                let g = (own - risk) / (leaves as f64 - 1.0);
                if weakest.is_none_or(|(w, _)| g < w) {
                    weakest = Some((g, id));
                }
            }
            match weakest {
                Some((g, id)) if g <= alpha => self.nodes[id].split = None,
                _ => break,
            }
        }
        self.compact();
    }

    fn subtree_risk(&self, id: usize, n: f64) -> (f64, usize) {
        match self.nodes[id].split {
            None => (
                self.nodes[id].total() as f64 / n * gini(self.nodes[id].counts),
                1,
            ),
            Some(s) => {
                let (a, la) = self.subtree_risk(s.left, n);
                let (b, lb) = self.subtree_risk(s.right, n);
                (a + b, la + lb)
            }
        }
    }

    fn reachable(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some(s) = self.nodes[id].split {
                stack.push(s.right);
                stack.push(s.left);
            }
        }
        out
    }

    /// Drops nodes orphaned by pruning, keeping preorder numbering.
    fn compact(&mut self) {
        let order = self.reachable();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        self.nodes = order
            .iter()
            .map(|&old| {
                let mut node = self.nodes[old].clone();
                if let Some(s) = node.split.as_mut() {
                    s.left = remap[s.left];
                    s.right = remap[s.right];
                }
                node
            })
            .collect();
    }

    fn leaf(&self, x: &[f64]) -> Result<&Node> {
        if x.len() != self.width {
            return Err(Error::shape(self.width, x.len()));
        }
        let mut node = &self.nodes[0];
        while let Some(s) = node.split {
            node = if x[s.feature] <= s.threshold {
                &self.nodes[s.left]
            } else {
                &self.nodes[s.right]
            };
        }
        Ok(node)
    }

    /// Majority class of the reached leaf (class 0 on ties) and its purity.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        let leaf = self.leaf(x)?;
        let class = leaf.majority();
        Ok((class, leaf.counts[class] as f64 / leaf.total() as f64))
    }

    pub fn depth(&self) -> usize {
        fn walk(tree: &Tree, id: usize) -> usize {
            match tree.nodes[id].split {
                None => 0,
                Some(s) => 1 + walk(tree, s.left).max(walk(tree, s.right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.reachable()
            .into_iter()
            .filter(|&id| self.nodes[id].split.is_none())
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn threshold_separable_gives_stump() {
        let x = array![[0.1], [0.4], [0.3], [0.9], [0.7], [0.8]];
        let y = [0, 0, 0, 1, 1, 1];
        let tree = Tree::fit(x.view(), &y, &CartParams::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.nodes[0].split.unwrap().threshold, 0.4);
        for (row, &label) in x.rows().into_iter().zip(&y) {
            assert_eq!(tree.predict(row.as_slice().unwrap()).unwrap(), (label, 1.0));
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let tree = Tree::fit(x.view(), &y, &CartParams::default()).unwrap();
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.leaf_count(), 4);
    }

    #[test]
    fn strong_pruning_leaves_root() {
        let x = Array2::from_shape_fn((12, 1), |(i, _)| i as f64);
        let y: Vec<usize> = (0..12).map(|i| usize::from(i % 3 == 0)).collect();
        let full = Tree::fit(x.view(), &y, &CartParams::default()).unwrap();
        assert!(full.leaf_count() > 2);
        let pruned = Tree::fit(
            x.view(),
            &y,
            &CartParams {
                ccp_alpha: 1.0,
                ..CartParams::default()
            },
        )
        .unwrap();
        assert_eq!(pruned.nodes.len(), 1);
        assert_eq!(pruned.predict(&[3.0]).unwrap(), (0, 8.0 / 12.0));
    }

    #[test]
    fn pruning_is_monotone_in_alpha() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<usize> = (0..30).map(|i| usize::from((i * 5) % 7 < 3)).collect();
        let mut last = usize::MAX;
        for alpha in [0.0, 0.001, 0.01, 0.05, 0.2] {
            let t = Tree::fit(
                x.view(),
                &y,
                &CartParams {
                    ccp_alpha: alpha,
                    ..CartParams::default()
                },
            )
            .unwrap();
            assert!(t.leaf_count() <= last);
            last = t.leaf_count();
        }
    }

    #[test]
    fn max_depth_and_min_leaf() {
        let x = Array2::from_shape_fn((16, 1), |(i, _)| i as f64);
        let y: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let t = Tree::fit(
            x.view(),
            &y,
            &CartParams {
                max_depth: Some(2),
                ..CartParams::default()
            },
        )
        .unwrap();
        assert!(t.depth() <= 2);
        let t = Tree::fit(
            x.view(),
            &y,
            &CartParams {
                min_samples_leaf: 4,
                ..CartParams::default()
            },
        )
        .unwrap();
        assert!(t.leaf_count() <= 4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0], [1.0]];
        assert!(Tree::fit(x.view(), &[0], &CartParams::default()).is_err());
        assert!(Tree::fit(x.view(), &[0, 2], &CartParams::default()).is_err());
        let t = Tree::fit(x.view(), &[0, 1], &CartParams::default()).unwrap();
        assert!(t.predict(&[0.0, 1.0]).is_err());
    }
}
