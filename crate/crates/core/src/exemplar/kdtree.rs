//! Exact k-d tree over `f32` points with `f64` distances.

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f32,
        left: usize,
        right: usize,
    },
}

/// Splits on the dimension of largest spread at the median, down to leaves
/// of at most 16 points (or points that all coincide).
#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    dim: usize,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

impl KdTree {
    /// `points` is row-major with `dim` values per row.
    pub fn build(points: &[f32], dim: usize) -> Self {
        let n = points.len().checked_div(dim).unwrap_or(0);
        let mut tree = Self {
            dim,
            nodes: Vec::new(),
            order: (0..n).collect(),
        };
        if n > 0 {
            tree.build_node(points, 0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn build_node(&mut self, points: &[f32], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let d = self.dim;
        let coord = |row: usize, k: usize| points[row * d + k];
        let mut best = (0usize, 0.0f64);
        for k in 0..d {
            let (lo, hi) = self.order[start..end]
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(coord(r, k)), hi.max(coord(r, k)))
                });
            let spread = f64::from(hi) - f64::from(lo);
            if spread > best.1 {
                best = (k, spread);
            }
        }
        if best.1 <= 0.0 {
            return id;
        }
        let k = best.0;
        self.order[start..end]
            .sort_by(|&a, &b| coord(a, k).total_cmp(&coord(b, k)).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let value = coord(self.order[mid], k);
        let left = self.build_node(points, start, mid);
        let right = self.build_node(points, mid, end);
        self.nodes[id] = Node::Split {
            dim: k,
            value,
            left,
            right,
        };
        id
    }

    /// Row minimizing `(distance, row)` among rows not rejected by `skip`.
    pub fn nearest(
        &self,
        points: &[f32],
        query: &[f32],
        skip: impl Fn(usize) -> bool,
    ) -> Option<(f64, usize)> {
        if self.nodes.is_empty() || query.len() != self.dim {
            return None;
        }
        let mut best = None;
        self.search(0, points, query, &skip, &mut best);
        best
    }

    fn search(
        &self,
        node: usize,
        points: &[f32],
        query: &[f32],
        skip: &impl Fn(usize) -> bool,
        best: &mut Option<(f64, usize)>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &row in &self.order[start..end] {
                    if skip(row) {
                        continue;
                    }
                    let d = squared_distance(query, &points[row * self.dim..(row + 1) * self.dim]);
                    let better = match *best {
                        None => true,
                        Some((bd, br)) => d < bd || (d == bd && row < br),
                    };
                    if better {
                        *best = Some((d, row));
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let (near, far) = if query[dim] < value {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, points, query, skip, best);
                let plane = f64::from(query[dim]) - f64::from(value);
                let plane = plane * plane;
                if best.is_none_or(|(bd, _)| plane <= bd) {
                    self.search(far, points, query, skip, best);
                }
            }
        }
    }
}
