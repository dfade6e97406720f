//! Undirected weighted graphs over converter nodes and their Laplacians.
//!
//! The same type describes the physical line network (edge weight is the
//! line conductance `1/R` in siemens) and the communication network (edge
//! weight is the dimensionless gain `c_ij`). Nodes are indexed from zero.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues whose magnitude is below this fraction of `max|L|` count as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// A static, connected, undirected graph with strictly positive edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    n: usize,
    edges: Vec<Edge>,
}

impl GridTopology {
    /// Validates the edge list and checks connectivity.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(Error::validation("topology needs at least one node"));
        }
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (a, b, weight) in edges {
            if a >= n || b >= n {
                return Err(Error::validation(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::validation(format!("self-loop on node {}", a + 1)));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::validation(format!(
                    "edge ({}, {}) has non-positive weight {weight}",
                    a + 1,
                    b + 1
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::validation(format!(
                    "duplicate edge ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
            list.push(Edge { a, b, weight });
        }
        let topo = GridTopology { n, edges: list };
        topo.check_connected()?;
        Ok(topo)
    }

    /// Builds a topology from line resistances, weighting each edge by `1/R`.
    pub fn from_resistances<I>(n: usize, lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut edges = Vec::new();
        for (a, b, r) in lines {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::validation(format!(
                    "line ({}, {}) has non-positive resistance {r}",
                    a + 1,
                    b + 1
                )));
            }
            edges.push((a, b, 1.0 / r));
        }
        Self::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbours of `i` together with the connecting edge weight.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges.iter().filter_map(move |e| {
            if e.a == i {
                Some((e.b, e.weight))
            } else if e.b == i {
                Some((e.a, e.weight))
            } else {
                None
            }
        })
    }

    /// Same edge set with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.n,
            self.edges.iter().map(|e| (e.a, e.b, e.weight * factor)),
        )
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::validation("permutation length mismatch"));
        }
        Self::new(
            self.n,
            self.edges.iter().map(|e| (perm[e.a], perm[e.b], e.weight)),
        )
    }

    fn check_connected(&self) -> Result<()> {
        let mut sets = DisjointSets::new(self.n);
        for e in &self.edges {
            sets.union(e.a, e.b);
        }
        let root = sets.find(0);
        match (1..self.n).find(|&i| sets.find(i) != root) {
            Some(i) => Err(Error::Connectivity { unreachable: i + 1 }),
            None => Ok(()),
        }
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Dense weighted Laplacian `B W B^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DVector<f64>,
}

pub fn build_laplacian(topology: &GridTopology) -> LaplacianMatrix {
    let n = topology.node_count();
    let mut l = DMatrix::zeros(n, n);
    for e in topology.edges() {
        l[(e.a, e.a)] += e.weight;
        l[(e.b, e.b)] += e.weight;
        l[(e.a, e.b)] -= e.weight;
        l[(e.b, e.a)] -= e.weight;
    }
    LaplacianMatrix(l)
}

impl LaplacianMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// Eigenpairs sorted by ascending eigenvalue, with orthonormal vectors.
    ///
    /// Each vector's sign is fixed so its component sum is non-negative
    /// (first non-zero entry positive when the sum vanishes), so the null
    /// vector of a connected graph comes out as `+1/sqrt(n)`.
    pub fn spectral_decomposition(&self) -> Result<Vec<EigenPair>> {
        spectral_decomposition(&self.0)
    }

    /// Eigenvalues only, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self
            .spectral_decomposition()?
            .into_iter()
            .map(|p| p.value)
            .collect())
    }

    /// Eigenvalue zero-threshold `1e-9 * max|L|`.
    pub fn zero_threshold(&self) -> f64 {
        ZERO_EIGEN_TOL * self.max_abs().max(f64::MIN_POSITIVE)
    }
}

/// Symmetric eigensolve shared by Laplacians and other symmetrized products.
pub(crate) fn spectral_decomposition(m: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    if !m.is_square() {
        return Err(Error::numerical("eigensolve of a non-square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix contains non-finite entries"));
    }
    let eig = m.clone().symmetric_eigen();
    let mut pairs: Vec<EigenPair> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&value, col)| {
            let mut vector = col.into_owned();
            let sum: f64 = vector.iter().sum();
            let flip = if sum.abs() > 1e-12 {
                sum < 0.0
            } else {
                vector
                    .iter()
                    .find(|v| v.abs() > 1e-12)
                    .is_some_and(|v| *v < 0.0)
            };
            if flip {
                vector.neg_mut();
            }
            EigenPair { value, vector }
        })
        .collect();
    if pairs.iter().any(|p| !p.value.is_finite()) {
        return Err(Error::numerical("symmetric eigensolver returned NaN"));
    }
    pairs.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(pairs)
}

/// Smallest eigenvalue of the symmetric part `(M + M^T)/2`.
pub(crate) fn lambda_min_sym(m: &DMatrix<f64>) -> Result<f64> {
    let sym = (m + m.transpose()) * 0.5;
    Ok(spectral_decomposition(&sym)?[0].value)
}
