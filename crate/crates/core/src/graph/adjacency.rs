use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{DeciError, Result};

/// Binary directed graph; `has_edge(j, i)` means `j -> i`. The diagonal is
/// always empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    d: usize,
    bits: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            bits: vec![false; d * d],
        }
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(d);
        for &(j, i) in edges {
            g.check(j)?;
            g.check(i)?;
            if i == j {
                return Err(DeciError::InvalidData(format!("self loop on node {i}")));
            }
            g.bits[j * d + i] = true;
        }
        Ok(g)
    }

    /// From a 0/1 matrix; anything else (or a nonzero diagonal) is rejected.
    pub fn from_matrix(m: &Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(DeciError::ShapeMismatch(format!("adjacency must be square, got {r}x{c}")));
        }
        let mut g = Self::empty(r);
        for ((j, i), v) in m.indexed_iter() {
            match *v {
                x if x == 0.0 => {}
                x if x == 1.0 && i != j => g.bits[j * r + i] = true,
                x => {
                    return Err(DeciError::InvalidData(format!(
                        "adjacency entry ({j},{i}) = {x} is not a valid off-diagonal 0/1"
                    )))
                }
            }
        }
        Ok(g)
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.d, self.d), |(j, i)| if self.has_edge(j, i) { 1.0 } else { 0.0 })
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.d {
            Err(DeciError::IndexOutOfRange {
                index: i,
                nodes: self.d,
            })
        } else {
            Ok(())
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.d
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.bits[from * self.d + to]
    }

    pub fn set_edge(&mut self, from: usize, to: usize, present: bool) {
        assert!(from != to || !present, "self loop");
        self.bits[from * self.d + to] = present;
    }

    pub fn num_edges(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.d {
            for i in 0..self.d {
                if self.has_edge(j, i) {
                    out.push((j, i));
                }
            }
        }
        out
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_edge(j, i)).collect()
    }

    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.has_edge(j, i)).collect()
    }

    /// Kahn's algorithm, smallest available index first.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let d = self.d;
        let mut indeg: Vec<usize> = (0..d).map(|i| self.parents(i).len()).collect();
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..d).filter(|&i| indeg[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(Reverse(j)) = ready.pop() {
            order.push(j);
            for i in self.children(j) {
                indeg[i] -= 1;
                if indeg[i] == 0 {
                    ready.push(Reverse(i));
                }
            }
        }
        if order.len() == d {
            Ok(order)
        } else {
            Err(DeciError::CyclicGraph)
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Removes every incoming edge of the treated nodes.
    pub fn mutilate(&self, treated: &[usize]) -> Result<Self> {
        let mut g = self.clone();
        for &t in treated {
            self.check(t)?;
            for j in 0..self.d {
                g.bits[j * self.d + t] = false;
            }
        }
        Ok(g)
    }

    /// `reach[a][b]` is true when there is a directed path of length >= 1
    /// from `a` to `b`.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let d = self.d;
        let mut reach = vec![vec![false; d]; d];
        for (a, row) in reach.iter_mut().enumerate() {
            let mut stack = self.children(a);
            while let Some(v) = stack.pop() {
                if !row[v] {
                    row[v] = true;
                    stack.extend(self.children(v));
                }
            }
        }
        reach
    }

    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        self.reachability()[from][to]
    }

    /// Rows of comma-separated 0/1 entries, no header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for j in 0..self.d {
            let row: Vec<&str> = (0..self.d)
                .map(|i| if self.has_edge(j, i) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let m = read_matrix_csv(r)?;
        Self::from_matrix(&m)
    }
}

/// Headerless CSV of floats.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<Array2<f64>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut flat = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rd.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(DeciError::InvalidData("ragged matrix csv".into()));
        }
        for f in rec.iter() {
            flat.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| DeciError::InvalidData(format!("cannot parse `{f}`")))?,
            );
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), flat).map_err(|e| DeciError::InvalidData(e.to_string()))
}

pub fn write_matrix_csv<W: Write>(m: &Array2<f64>, mut w: W) -> Result<()> {
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn topological_orders() {
        assert_eq!(chain().topological_order().unwrap(), vec![0, 1, 2]);
        assert_eq!(AdjacencyMatrix::empty(3).topological_order().unwrap(), vec![0, 1, 2]);
        let g = AdjacencyMatrix::from_edges(3, &[(2, 0)]).unwrap();
        assert_eq!(g.topological_order().unwrap(), vec![1, 2, 0]);
        let cyc = AdjacencyMatrix::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(matches!(cyc.topological_order(), Err(DeciError::CyclicGraph)));
    }

    #[test]
    fn mutilation() {
        let m = chain().mutilate(&[1]).unwrap();
        assert_eq!(m.edges(), vec![(1, 2)]);
        assert_eq!(chain().mutilate(&[]).unwrap(), chain());
        let collider = AdjacencyMatrix::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(collider.mutilate(&[2]).unwrap().num_edges(), 0);
        assert!(chain().mutilate(&[5]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        chain().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0,1,0\n0,0,1\n0,0,0\n");
        assert_eq!(AdjacencyMatrix::read_csv(&buf[..]).unwrap(), chain());
    }

    #[test]
    fn rejects_diagonal_and_non_binary() {
        assert!(AdjacencyMatrix::from_matrix(&ndarray::array![[1.0, 0.0], [0.0, 0.0]]).is_err());
        assert!(AdjacencyMatrix::from_matrix(&ndarray::array![[0.0, 0.5], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn reachability_of_chain() {
        let r = chain().reachability();
        assert!(r[0][2] && r[0][1] && r[1][2]);
        assert!(!r[2][0] && !r[0][0]);
    }
}
