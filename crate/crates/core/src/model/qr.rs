//! Householder QR for tall dense blocks and a tree-reduced (TSQR) driver.

use crate::exec::{self, Exec};

/// Column-major dense matrix.
#[derive(Clone, Debug)]
pub(crate) struct ColMajor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ColMajor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    fn col_mut(&mut self, c: usize) -> &mut [f64] {
        let rows = self.rows;
        &mut self.data[c * rows..(c + 1) * rows]
    }
}

/// In-place Householder triangularization; returns the `cols × cols` upper
/// triangular factor (rows past `rows` are zero when the block is short).
pub(crate) fn householder_r(mut a: ColMajor) -> ColMajor {
    let (m, c) = (a.rows, a.cols);
    let steps = m.min(c);
    let mut v = vec![0.0; m];
    for j in 0..steps {
        let norm = a.data[j * m + j..(j + 1) * m]
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            continue;
        }
        let ajj = a.at(j, j);
        let alpha = if ajj > 0.0 { -norm } else { norm };
        let len = m - j;
        v[..len].copy_from_slice(&a.data[j * m + j..(j + 1) * m]);
        v[0] -= alpha;
        let vnorm2: f64 = v[..len].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        for col in j + 1..c {
            let column = &mut a.col_mut(col)[j..];
            let dot: f64 = column.iter().zip(&v[..len]).map(|(x, y)| x * y).sum();
            let f = dot * scale;
            for (x, y) in column.iter_mut().zip(&v[..len]) {
                *x -= f * y;
            }
        }
        a.set(j, j, alpha);
        for r in j + 1..m {
            a.set(r, j, 0.0);
        }
    }
    let mut r = ColMajor::zeros(c, c);
    for col in 0..c {
        for row in 0..=col.min(m.saturating_sub(1)) {
            if row < m {
                r.set(row, col, a.at(row, col));
            }
        }
    }
    r
}

fn stack(top: &ColMajor, bottom: &ColMajor) -> ColMajor {
    let c = top.cols;
    let rows = top.rows + bottom.rows;
    let mut out = ColMajor::zeros(rows, c);
    for col in 0..c {
        let dst = &mut out.data[col * rows..(col + 1) * rows];
        dst[..top.rows].copy_from_slice(&top.data[col * top.rows..(col + 1) * top.rows]);
        dst[top.rows..].copy_from_slice(&bottom.data[col * bottom.rows..(col + 1) * bottom.rows]);
    }
    out
}

pub(crate) const BLOCK_ROWS: usize = 2048;

/// R factor of the row-major `n × c` matrix `a`.
///
/// Blocks of [`BLOCK_ROWS`] rows are factored independently, then the R
/// factors are combined pairwise in a fixed binary tree, so the result does
/// not depend on thread scheduling.
pub(crate) fn tsqr_r(exec: Exec, a: &[f64], n: usize, c: usize) -> ColMajor {
    assert_eq!(a.len(), n * c);
    let mut level: Vec<ColMajor> = exec::map_chunks(exec, a, BLOCK_ROWS * c, |chunk| {
        let m = chunk.len() / c;
        let mut block = ColMajor::zeros(m, c);
        for (i, row) in chunk.chunks_exact(c).enumerate() {
            for (j, &x) in row.iter().enumerate() {
                block.set(i, j, x);
            }
        }
        householder_r(block)
    });
    if level.is_empty() {
        return ColMajor::zeros(c, c);
    }
    while level.len() > 1 {
        let pairs: Vec<(ColMajor, Option<ColMajor>)> = {
            let mut it = level.into_iter();
            let mut v = Vec::new();
            while let Some(a) = it.next() {
                v.push((a, it.next()));
            }
            v
        };
        level = exec::map(exec, &pairs, |(a, b)| match b {
            Some(b) => householder_r(stack(a, b)),
            None => a.clone(),
        });
    }
    level.pop().expect("non-empty")
}
