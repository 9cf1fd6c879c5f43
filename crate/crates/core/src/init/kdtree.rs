//! Static 3-d tree for exact nearest-neighbor queries.

/// Squared Euclidean distance, accumulated in a fixed order so that every
/// caller computes bit-identical values.
#[inline]
pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Nearest neighbor hit: point index and squared distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    /// Orders by distance, then by index.
    #[inline]
    fn better_than(&self, other: &Neighbor) -> bool {
        self.dist2 < other.dist2 || (self.dist2 == other.dist2 && self.index < other.index)
    }
}

#[derive(Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[[f32; 3]]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| p.map(f64::from)).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(&points, &mut order, 0, &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Closest point to `query`; ties go to the smallest index.
    pub fn nearest(&self, query: [f64; 3]) -> Option<Neighbor> {
        self.nearest_excluding(query, usize::MAX)
    }

    /// Closest point other than `exclude`.
    pub fn nearest_excluding(&self, query: [f64; 3], exclude: usize) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Neighbor { index: usize::MAX, dist2: f64::INFINITY };
        self.search(0, query, exclude, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    fn search(&self, node: usize, q: [f64; 3], exclude: usize, best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let i = i as usize;
                    if i == exclude {
                        continue;
                    }
                    let cand = Neighbor { index: i, dist2: dist2(q, self.points[i]) };
                    if cand.better_than(best) {
                        *best = cand;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, exclude, best);
                // Equal distance must still be visited: a tie may hold a smaller index.
                if diff * diff <= best.dist2 {
                    self.search(far as usize, q, exclude, best);
                }
            }
        }
    }
}

fn build_node(points: &[[f64; 3]], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|a, b| (hi[*a] - lo[*a]).total_cmp(&(hi[*b] - lo[*b])))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |a, b| {
        points[*a as usize][axis].total_cmp(&points[*b as usize][axis])
    });
    let value = points[order[mid] as usize][axis];
    // Left holds coordinates <= value, right holds >= value.
    nodes.push(Node::Split { axis: axis as u8, value, left: 0, right: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build_node(points, l, offset, nodes);
    let right = build_node(points, r, offset + mid, nodes);
    nodes[id as usize] = Node::Split { axis: axis as u8, value, left, right };
    id
}

/// Exhaustive nearest neighbor with the same tie rule as [`KdTree`].
pub fn brute_force_nearest(points: &[[f32; 3]], query: [f64; 3], exclude: usize) -> Option<Neighbor> {
    let mut best: Option<Neighbor> = None;
    for (i, p) in points.iter().enumerate() {
        if i == exclude {
            continue;
        }
        let cand = Neighbor { index: i, dist2: dist2(query, p.map(f64::from)) };
        if best.is_none_or(|b| cand.better_than(&b)) {
            best = Some(cand);
        }
    }
    best
}
