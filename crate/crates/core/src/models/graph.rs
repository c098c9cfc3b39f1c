use rand::RngCore;

use super::{check_theta, Dataset, GenerativeModel, Prior, PriorComponent};
use crate::el::SummaryVector;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub(crate) const SUMMARY_SET: &str = "edges_triangles";
pub(crate) const DEFAULT_NODES: usize = 100;

/// Simple undirected graph as an edge list with `i < j` on every edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(u32, u32)>,
}

impl Graph {
    pub fn new(n_nodes: usize, mut edges: Vec<(u32, u32)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 == e.1 || e.0.max(e.1) as usize >= n_nodes {
                return Err(Error::InvalidArgument(format!("invalid edge {e:?} for {n_nodes} nodes")));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("repeated edge".into()));
        }
        Ok(Self { n_nodes, edges })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Each triangle i < j < l is counted once, from its edge (i, j), as a
    /// common neighbour above j.
    pub fn triangle_count(&self) -> u64 {
        let words = self.n_nodes.div_ceil(64);
        let mut upper = vec![0u64; self.n_nodes * words];
        for &(i, j) in &self.edges {
            let (i, j) = (i as usize, j as usize);
            upper[i * words + j / 64] |= 1 << (j % 64);
        }
        self.edges
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as usize, j as usize);
                let a = &upper[i * words..(i + 1) * words];
                let b = &upper[j * words..(j + 1) * words];
                a.iter().zip(b).map(|(x, y)| u64::from((x & y).count_ones())).sum::<u64>()
            })
            .sum()
    }
}

fn choose(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

/// G(n, p) random graph; summaries are the edge and triangle counts divided
/// by C(n, 2) and C(n, 3).
#[derive(Clone, Debug)]
pub struct ErdosRenyi {
    n_nodes: usize,
    prior: Prior,
    truth: [f64; 1],
}

impl ErdosRenyi {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 nodes, got {n_nodes}")));
        }
        Ok(Self {
            n_nodes,
            prior: Prior(vec![PriorComponent::Beta { a: 1.5, b: 1.5 }]),
            truth: [0.3],
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

impl GenerativeModel for ErdosRenyi {
    fn name(&self) -> &str {
        "erdos_renyi"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["p".into()]
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn summary_dim(&self) -> usize {
        2
    }

    fn summary_set(&self) -> &str {
        SUMMARY_SET
    }

    fn theta_truth(&self) -> Option<&[f64]> {
        Some(&self.truth)
    }

    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_theta(self, theta)?;
        let p = theta[0];
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Simulation {
                model: self.name().into(),
                reason: format!("edge probability {p} outside [0, 1]"),
            });
        }
        // One 32-bit uniform per pair, two pairs per 64-bit draw.
        let threshold = (p * 4_294_967_296.0).round() as u64;
        let mut edges = Vec::new();
        let mut spare: Option<u32> = None;
        for i in 0..self.n_nodes as u32 {
            for j in i + 1..self.n_nodes as u32 {
                let u = match spare.take() {
                    Some(u) => u,
                    None => {
                        let w = rng.next_u64();
                        spare = Some((w >> 32) as u32);
                        w as u32
                    }
                };
                if u64::from(u) < threshold {
                    edges.push((i, j));
                }
            }
        }
        Ok(Dataset::Graph(Graph {
            n_nodes: self.n_nodes,
            edges,
        }))
    }

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector> {
        let Dataset::Graph(g) = data else {
            return Err(Error::Simulation {
                model: self.name().into(),
                reason: "expected a graph".into(),
            });
        };
        let n = g.n_nodes();
        SummaryVector::new(vec![
            g.edge_count() as f64 / choose(n, 2),
            g.triangle_count() as f64 / choose(n, 3),
        ])
    }
}
