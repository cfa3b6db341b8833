use crate::autodiff::Tensor;
use crate::ingest::UPPER_BODY_JOINTS;

use super::ModelError;

/// Anatomical edges over the canonical upper-body joints.
const UPPER_BODY_EDGES: [(&str, &str); 26] = [
    ("nose", "left_eye"),
    ("nose", "right_eye"),
    ("nose", "left_shoulder"),
    ("left_shoulder", "right_shoulder"),
    ("left_shoulder", "left_elbow"),
    ("left_elbow", "left_wrist"),
    ("right_shoulder", "right_elbow"),
    ("right_elbow", "right_wrist"),
    ("left_wrist", "left_thumb_tip"),
    ("left_wrist", "left_index_base_knuckle"),
    ("left_wrist", "left_middle_base_knuckle"),
    ("left_wrist", "left_ring_base_knuckle"),
    ("left_wrist", "left_pinky_base_knuckle"),
    ("left_index_base_knuckle", "left_index_tip_knuckle"),
    ("left_middle_base_knuckle", "left_middle_tip_knuckle"),
    ("left_ring_base_knuckle", "left_ring_tip_knuckle"),
    ("left_pinky_base_knuckle", "left_pinky_tip_knuckle"),
    ("right_wrist", "right_thumb_tip"),
    ("right_wrist", "right_index_base_knuckle"),
    ("right_wrist", "right_middle_base_knuckle"),
    ("right_wrist", "right_ring_base_knuckle"),
    ("right_wrist", "right_pinky_base_knuckle"),
    ("right_index_base_knuckle", "right_index_tip_knuckle"),
    ("right_middle_base_knuckle", "right_middle_tip_knuckle"),
    ("right_ring_base_knuckle", "right_ring_tip_knuckle"),
    ("right_pinky_base_knuckle", "right_pinky_tip_knuckle"),
];

/// Undirected joint graph with its row-normalized adjacency `D⁻¹(A + I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    adjacency: Tensor,
}

impl SkeletonGraph {
    /// The 27-joint upper-body skeleton.
    pub fn upper_body() -> SkeletonGraph {
        let index = |name: &str| UPPER_BODY_JOINTS.iter().position(|j| *j == name).expect("known joint");
        let edges = UPPER_BODY_EDGES.iter().map(|(a, b)| (index(a), index(b))).collect();
        SkeletonGraph::new(UPPER_BODY_JOINTS.iter().map(|s| s.to_string()).collect(), edges)
            .expect("built-in skeleton is valid")
    }

    pub fn new(joint_names: Vec<String>, edges: Vec<(usize, usize)>) -> Result<SkeletonGraph, ModelError> {
        let n = joint_names.len();
        if n == 0 || edges.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
            return Err(ModelError::InvalidGraph(format!("{n} nodes, edges {edges:?}")));
        }
        let mut a = Tensor::identity(n);
        for &(i, j) in &edges {
            a.data_mut()[i * n + j] = 1.0;
            a.data_mut()[j * n + i] = 1.0;
        }
        for row in a.data_mut().chunks_exact_mut(n) {
            let degree: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= degree);
        }
        Ok(SkeletonGraph {
            joint_names,
            edges,
            adjacency: a,
        })
    }

    /// Chain graph over `n` anonymous nodes, for small test models.
    pub fn chain(n: usize) -> SkeletonGraph {
        let names = (0..n).map(|i| format!("j{i}")).collect();
        SkeletonGraph::new(names, (1..n).map(|i| (i - 1, i)).collect()).expect("valid chain")
    }

    pub fn node_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(a, b) in &self.edges {
                let next = if a == u { b } else if b == u { a } else { continue };
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SkeletonGraph {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let names = perm.iter().map(|&p| self.joint_names[p].clone()).collect();
        let edges = self.edges.iter().map(|&(a, b)| (inverse[a], inverse[b])).collect();
        SkeletonGraph::new(names, edges).expect("permutation preserves validity")
    }
}
