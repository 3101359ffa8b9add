//! Foreground tunnels: the DAG of blobs linked to overlapping blobs in the
//! next frame, and its partition into lanes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::Blob;

/// Node `(frame, blob index within that frame)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub frame: usize,
    pub blob: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TunnelGraph {
    pub nodes: Vec<NodeRef>,
    /// Index of the first node of frame `t` is `frame_start[t - 1]`.
    frame_start: Vec<usize>,
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
}

impl TunnelGraph {
    pub fn node_id(&self, n: NodeRef) -> usize {
        self.frame_start[n.frame - 1] + n.blob
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn out_degree(&self, id: usize) -> usize {
        self.succ[id].len()
    }

    pub fn in_degree(&self, id: usize) -> usize {
        self.pred[id].len()
    }
}

/// Label image of one frame's blobs: 0 for background, `k + 1` for blob `k`.
pub fn label_image(blobs: &[Blob], pixel_count: usize) -> Vec<u32> {
    let mut labels = vec![0u32; pixel_count];
    for (k, b) in blobs.iter().enumerate() {
        for &p in &b.pixels {
            labels[p as usize] = k as u32 + 1;
        }
    }
    labels
}

/// Edges join blobs of consecutive frames sharing at least one pixel.
/// `blobs[t - 1]` holds the blobs of frame `t`.
pub fn build_tunnels(blobs: &[Vec<Blob>], width: u32, height: u32) -> TunnelGraph {
    let pixel_count = width as usize * height as usize;
    let mut nodes = Vec::new();
    let mut frame_start = Vec::with_capacity(blobs.len());
    for (i, fb) in blobs.iter().enumerate() {
        frame_start.push(nodes.len());
        nodes.extend((0..fb.len()).map(|k| NodeRef { frame: i + 1, blob: k }));
    }
    let pair_edges: Vec<Vec<(usize, usize)>> = (0..blobs.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let next = label_image(&blobs[i + 1], pixel_count);
            let mut edges = Vec::new();
            for (k, b) in blobs[i].iter().enumerate() {
                let mut targets: Vec<usize> = b
                    .pixels
                    .iter()
                    .filter_map(|&p| match next[p as usize] {
                        0 => None,
                        l => Some(l as usize - 1),
                    })
                    .collect();
                targets.sort_unstable();
                targets.dedup();
                edges.extend(targets.into_iter().map(|v| (k, v)));
            }
            edges
        })
        .collect();
    let mut succ = vec![Vec::new(); nodes.len()];
    let mut pred = vec![Vec::new(); nodes.len()];
    for (i, edges) in pair_edges.into_iter().enumerate() {
        for (u, v) in edges {
            let (a, b) = (frame_start[i] + u, frame_start[i + 1] + v);
            succ[a].push(b);
            pred[b].push(a);
        }
    }
    TunnelGraph {
        nodes,
        frame_start,
        succ,
        pred,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lane {
    /// Node ids, one per consecutive frame.
    pub nodes: Vec<usize>,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Maximal chains whose every edge `u → v` has out-degree(u) = 1 and
/// in-degree(v) = 1. Every node lands in exactly one lane.
pub fn partition_lanes(g: &TunnelGraph) -> Vec<Lane> {
    let internal_in = |v: usize| g.in_degree(v) == 1 && g.out_degree(g.pred[v][0]) == 1;
    let mut lanes = Vec::new();
    for start in 0..g.nodes.len() {
        if internal_in(start) {
            continue;
        }
        let mut chain = vec![start];
        let mut u = start;
        while g.out_degree(u) == 1 && g.in_degree(g.succ[u][0]) == 1 {
            u = g.succ[u][0];
            chain.push(u);
        }
        lanes.push(Lane {
            start_frame: g.nodes[start].frame,
            end_frame: g.nodes[u].frame,
            nodes: chain,
        });
    }
    lanes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::extract_blobs;
    use crate::media::BinaryMask;
    use proptest::prelude::*;

    fn frames_of(masks: &[BinaryMask]) -> Vec<Vec<Blob>> {
        masks.iter().enumerate().map(|(i, m)| extract_blobs(m, i + 1)).collect()
    }

    #[test]
    fn static_blob_is_one_chain() {
        let m = BinaryMask::from_fn(20, 20, |x, y| (5..9).contains(&x) && (5..9).contains(&y));
        let blobs = frames_of(&vec![m; 10]);
        let g = build_tunnels(&blobs, 20, 20);
        assert_eq!((g.nodes.len(), g.edge_count()), (10, 9));
        let lanes = partition_lanes(&g);
        assert_eq!(lanes.len(), 1);
        assert_eq!((lanes[0].start_frame, lanes[0].end_frame), (1, 10));
    }

    #[test]
    fn merge_has_in_degree_two() {
        let two = BinaryMask::from_fn(30, 10, |x, y| (2..5).contains(&y) && ((2..8).contains(&x) || (12..18).contains(&x)));
        let one = BinaryMask::from_fn(30, 10, |x, y| (2..5).contains(&y) && (2..18).contains(&x));
        let mut masks = vec![two; 4];
        masks.extend(vec![one; 3]);
        let g = build_tunnels(&frames_of(&masks), 30, 10);
        let merged = g.node_id(NodeRef { frame: 5, blob: 0 });
        assert_eq!(g.in_degree(merged), 2);
        let lanes = partition_lanes(&g);
        // two pre-merge lanes and one post-merge lane
        assert_eq!(lanes.len(), 3);
    }

    fn graph(n_frames: usize, per_frame: &[usize], edges: &[((usize, usize), (usize, usize))]) -> TunnelGraph {
        let mut nodes = Vec::new();
        let mut frame_start = Vec::new();
        for f in 0..n_frames {
            frame_start.push(nodes.len());
            nodes.extend((0..per_frame[f]).map(|k| NodeRef { frame: f + 1, blob: k }));
        }
        let mut g = TunnelGraph { succ: vec![vec![]; nodes.len()], pred: vec![vec![]; nodes.len()], nodes, frame_start };
        for &((f1, b1), (f2, b2)) in edges {
            let (u, v) = (g.node_id(NodeRef { frame: f1, blob: b1 }), g.node_id(NodeRef { frame: f2, blob: b2 }));
            g.succ[u].push(v);
            g.pred[v].push(u);
        }
        g
    }

    fn lane_sets(g: &TunnelGraph) -> Vec<Vec<NodeRef>> {
        let mut v: Vec<Vec<NodeRef>> = partition_lanes(g).iter().map(|l| l.nodes.iter().map(|&n| g.nodes[n]).collect()).collect();
        v.sort();
        v
    }

    #[test]
    fn lane_examples() {
        let chain = graph(3, &[1, 1, 1], &[((1, 0), (2, 0)), ((2, 0), (3, 0))]);
        assert_eq!(lane_sets(&chain).len(), 1);
        let merge = graph(2, &[2, 1], &[((1, 0), (2, 0)), ((1, 1), (2, 0))]);
        assert_eq!(lane_sets(&merge).len(), 3);
        let split = graph(2, &[1, 2], &[((1, 0), (2, 0)), ((1, 0), (2, 1))]);
        assert_eq!(lane_sets(&split).len(), 3);
    }

    fn random_masks() -> impl Strategy<Value = Vec<BinaryMask>> {
        proptest::collection::vec(
            proptest::collection::vec((0u32..14, 0u32..14, 1u32..5, 1u32..5), 0..4),
            2..20,
        )
        .prop_map(|frames| {
            frames
                .into_iter()
                .map(|rects| {
                    BinaryMask::from_fn(16, 16, |x, y| {
                        rects.iter().any(|&(rx, ry, w, h)| x >= rx && x < rx + w && y >= ry && y < ry + h)
                    })
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn edges_equal_pairwise_intersection(masks in random_masks()) {
            let blobs = frames_of(&masks);
            let g = build_tunnels(&blobs, 16, 16);
            for t in 0..blobs.len() - 1 {
                for (k, a) in blobs[t].iter().enumerate() {
                    for (j, b) in blobs[t + 1].iter().enumerate() {
                        let overlap = a.pixels.iter().any(|p| b.pixels.contains(p));
                        let u = g.node_id(NodeRef { frame: t + 1, blob: k });
                        let v = g.node_id(NodeRef { frame: t + 2, blob: j });
                        prop_assert_eq!(overlap, g.succ[u].contains(&v));
                    }
                }
            }
        }

        #[test]
        fn lanes_partition_nodes(masks in random_masks()) {
            let g = build_tunnels(&frames_of(&masks), 16, 16);
            let lanes = partition_lanes(&g);
            let mut seen = vec![0; g.nodes.len()];
            for l in &lanes {
                for w in l.nodes.windows(2) {
                    prop_assert_eq!(g.nodes[w[1]].frame, g.nodes[w[0]].frame + 1);
                    prop_assert_eq!(g.out_degree(w[0]), 1);
                    prop_assert_eq!(g.in_degree(w[1]), 1);
                }
                for &n in &l.nodes {
                    seen[n] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
