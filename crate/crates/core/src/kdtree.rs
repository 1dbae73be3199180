//! Static 3-D k-d tree for fixed-radius neighbour queries.

#[derive(Debug, Clone)]
struct Node {
    lo: usize,
    hi: usize,
    axis: usize,
    split: f64,
    left: Option<usize>,
    right: Option<usize>,
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Permutation of point ids; every node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build_node(0, tree.points.len());
        }
        tree
    }

    pub fn point(&self, id: usize) -> [f64; 3] {
        self.points[id]
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            axis: 0,
            split: 0.0,
            left: None,
            right: None,
        });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        // Split the widest axis at the median.
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            for a in 0..3 {
                min[a] = min[a].min(self.points[i][a]);
                max[a] = max[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        let mid = lo + (hi - lo) / 2;
        let points = &self.points;
        self.order[lo..hi]
            .select_nth_unstable_by(mid - lo, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let split = self.points[self.order[mid]][axis];
        let left = self.build_node(lo, mid);
        let right = self.build_node(mid, hi);
        let node = &mut self.nodes[id];
        node.axis = axis;
        node.split = split;
        node.left = Some(left);
        node.right = Some(right);
        id
    }

    /// Calls `visit` with every point id whose Euclidean distance to `q` may
    /// be below `radius`. Pruning is conservative by `slack`; the caller
    /// applies its own exact predicate.
    pub fn for_each_candidate(&self, q: [f64; 3], radius: f64, slack: f64, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let reach = radius + slack;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            match (node.left, node.right) {
                (Some(l), Some(r)) => {
                    let diff = q[node.axis] - node.split;
                    // Left holds coordinates <= split, right holds >= split.
                    if diff <= reach {
                        stack.push(l);
                    }
                    if diff >= -reach {
                        stack.push(r);
                    }
                }
                _ => {
                    for &i in &self.order[node.lo..node.hi] {
                        let p = self.points[i];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                        if d2 <= reach * reach {
                            visit(i);
                        }
                    }
                }
            }
        }
    }
}
