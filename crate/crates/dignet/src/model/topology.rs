//! Spatio-temporal lattice graph over a (T,H,W) feature volume.
//!
//! Node n = t*H*W + y*W + x. Edges: spatial 4-neighborhood inside a frame
//! plus temporal links between the same cell in adjacent frames. Topology
//! depends only on the dims, never on feature values.

use std::rc::Rc;

use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct GraphTopology {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    /// Symmetric adjacency lists, sorted per node.
    pub adj: Rc<Vec<Vec<usize>>>,
}

impl GraphTopology {
    pub fn build(t: usize, h: usize, w: usize) -> GraphTopology {
        assert!(t * h * w > 1, "graph needs at least two nodes");
        let idx = |tt: usize, y: usize, x: usize| tt * h * w + y * w + x;
        let mut adj = vec![Vec::new(); t * h * w];
        for tt in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let n = idx(tt, y, x);
                    if x + 1 < w {
                        adj[n].push(idx(tt, y, x + 1));
                        adj[idx(tt, y, x + 1)].push(n);
                    }
                    if y + 1 < h {
                        adj[n].push(idx(tt, y + 1, x));
                        adj[idx(tt, y + 1, x)].push(n);
                    }
                    if tt + 1 < t {
                        adj[n].push(idx(tt + 1, y, x));
                        adj[idx(tt + 1, y, x)].push(n);
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        GraphTopology { t, h, w, adj: Rc::new(adj) }
    }

    pub fn node_count(&self) -> usize {
        self.t * self.h * self.w
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    pub fn temporal_edge_count(&self) -> usize {
        self.h * self.w * self.t.saturating_sub(1)
    }

    /// Dense 0/1 adjacency mask for the attention bias.
    pub fn mask(&self) -> Rc<Array2<f64>> {
        let n = self.node_count();
        let mut m = Array2::zeros((n, n));
        for (i, list) in self.adj.iter().enumerate() {
            for &j in list {
                m[[i, j]] = 1.0;
            }
        }
        Rc::new(m)
    }
}
