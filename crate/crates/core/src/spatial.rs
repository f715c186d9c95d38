//! Exact nearest-neighbor and radius queries over 3-D positions.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::cloud::Vec3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Static k-d tree. Query results are identical to a linear scan, with
/// equal distances resolved toward the lowest point id.
#[derive(Debug, Clone)]
pub struct NnIndex {
    /// Positions in tree order.
    points: Vec<Vec3>,
    /// Original id of each entry of `points`.
    ids: Vec<u32>,
    nodes: Vec<Node>,
    /// Inverse of `ids`.
    slot_of: Vec<u32>,
}

impl NnIndex {
    pub fn new(positions: &[Vec3]) -> Self {
        let mut ids: Vec<u32> = (0..positions.len() as u32).collect();
        let mut nodes = Vec::new();
        if !positions.is_empty() {
            build(positions, &mut ids, 0, &mut nodes);
        }
        let points = ids.iter().map(|&i| positions[i as usize]).collect();
        let mut slot_of = alloc::vec![0u32; ids.len()];
        for (slot, &id) in ids.iter().enumerate() {
            slot_of[id as usize] = slot as u32;
        }
        NnIndex { points, ids, nodes, slot_of }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest indexed point to `query` as `(id, distance)`.
    pub fn nearest(&self, query: &Vec3) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut best = Best { d2: f64::INFINITY, id: u32::MAX };
        self.search_nearest(0, query, &mut best);
        Ok((best.id as usize, best.d2.sqrt()))
    }

    /// Like [`nearest`](Self::nearest) but returns the squared distance.
    pub fn nearest_squared(&self, query: &Vec3) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut best = Best { d2: f64::INFINITY, id: u32::MAX };
        self.search_nearest(0, query, &mut best);
        Ok((best.id as usize, best.d2))
    }

    /// Ids of all points within `radius` (inclusive), ascending.
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.search_radius(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Position of the point with original id `id`.
    pub fn position(&self, id: usize) -> Vec3 {
        self.points[self.slot_of[id] as usize]
    }

    /// Number of points within `radius`, without collecting them.
    pub fn count_within(&self, query: &Vec3, radius: f64) -> usize {
        self.within_radius(query, radius).len()
    }

    fn search_nearest(&self, node: usize, q: &Vec3, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start as usize..end as usize {
                    let d2 = (self.points[k] - q).norm_squared();
                    let id = self.ids[k];
                    if d2 < best.d2 || (d2 == best.d2 && id < best.id) {
                        *best = Best { d2, id };
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_nearest(near as usize, q, best);
                // `<=` keeps equal-distance candidates with lower ids reachable.
                if diff * diff <= best.d2 {
                    self.search_nearest(far as usize, q, best);
                }
            }
        }
    }

    fn search_radius(&self, node: usize, q: &Vec3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start as usize..end as usize {
                    if (self.points[k] - q).norm_squared() <= r2 {
                        out.push(self.ids[k] as usize);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.search_radius(left as usize, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.search_radius(right as usize, q, r2, out);
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Best {
    d2: f64,
    id: u32,
}

/// Builds the subtree over `ids[..]` (a window of the global id array
/// starting at `offset`) and returns its node index.
fn build(positions: &[Vec3], ids: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let me = nodes.len();
    if ids.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + ids.len()) as u32 });
        return me as u32;
    }
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for &i in ids.iter() {
        let p = &positions[i as usize];
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let axis = (hi - lo).imax();
    if hi[axis] == lo[axis] {
        // all points coincide
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + ids.len()) as u32 });
        return me as u32;
    }
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |a, b| {
        positions[*a as usize][axis].total_cmp(&positions[*b as usize][axis])
    });
    let value = positions[ids[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_ids, right_ids) = ids.split_at_mut(mid);
    let left = build(positions, left_ids, offset, nodes);
    let right = build(positions, right_ids, offset + mid, nodes);
    nodes[me] = Node::Split { axis: axis as u8, value, left, right };
    me as u32
}
