use crate::dense::Mat;
use crate::sparse::SymSparseMatrix;

#[derive(Debug, Clone, Default)]
struct Row {
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// The matrix being factored. Rows are stored in full (both triangles) as
/// sorted column lists so that dense blocks over arbitrary index sets can be
/// gathered quickly and Schur-complement fill merged in place. Removed DOFs
/// keep no entries and read as rows of the identity.
#[derive(Debug, Clone)]
pub struct LiveMatrix {
    rows: Vec<Row>,
    active: Vec<bool>,
    stamp: Vec<u32>,
    pos: Vec<u32>,
    epoch: u32,
    scratch: Row,
}

enum Merge {
    Add,
    Set,
}

impl LiveMatrix {
    pub fn from_sparse(a: &SymSparseMatrix) -> Self {
        let n = a.order();
        assert!(
            n < u32::MAX as usize,
            "matrix order exceeds 32-bit indexing"
        );
        let mut len = vec![0usize; n];
        for (i, j, _) in a.iter_lower() {
            len[i] += 1;
            if i != j {
                len[j] += 1;
            }
        }
        let mut rows: Vec<Row> = len
            .iter()
            .map(|&k| Row {
                cols: Vec::with_capacity(k),
                vals: Vec::with_capacity(k),
            })
            .collect();
        // Lower-triangle entries arrive row by row with ascending columns, so
        // every row is filled in ascending column order.
        for (i, j, v) in a.iter_lower() {
            rows[i].cols.push(j as u32);
            rows[i].vals.push(v);
            if i != j {
                rows[j].cols.push(i as u32);
                rows[j].vals.push(v);
            }
        }
        Self {
            rows,
            active: vec![true; n],
            stamp: vec![0; n],
            pos: vec![0; n],
            epoch: 0,
            scratch: Row::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.rows.len()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.order()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if !self.active[i] || !self.active[j] {
            return if i == j { 1.0 } else { 0.0 };
        }
        let row = &self.rows[i];
        match row.cols.binary_search(&(j as u32)) {
            Ok(k) => row.vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.cols.len()).sum()
    }

    pub fn bytes(&self) -> usize {
        self.nnz() * (std::mem::size_of::<u32>() + std::mem::size_of::<f64>())
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Active DOFs outside `set` with a stored coupling to some DOF of `set`,
    /// ascending.
    pub fn neighbors(&mut self, set: &[usize]) -> Vec<usize> {
        let e = self.next_epoch();
        for &i in set {
            self.stamp[i] = e;
        }
        let mut out = Vec::new();
        for &i in set {
            for &c in &self.rows[i].cols {
                let c = c as usize;
                if self.stamp[c] != e && self.active[c] {
                    self.stamp[c] = e;
                    out.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Dense copy of `A[rows, cols]`.
    pub fn block(&mut self, rows: &[usize], cols: &[usize]) -> Mat {
        let e = self.next_epoch();
        for (k, &r) in rows.iter().enumerate() {
            self.stamp[r] = e;
            self.pos[r] = k as u32;
        }
        let mut out = Mat::zeros(rows.len(), cols.len());
        for (j, &c) in cols.iter().enumerate() {
            let row = &self.rows[c];
            let dst = out.col_mut(j);
            for (&k, &v) in row.cols.iter().zip(&row.vals) {
                let k = k as usize;
                if self.stamp[k] == e {
                    dst[self.pos[k] as usize] = v;
                }
            }
        }
        out
    }

    /// Merges sorted `(cols, vals)` into row `i` through the scratch row.
    fn merge_row(&mut self, i: usize, cols: &[u32], vals: &[f64], mode: Merge) {
        let row = &mut self.rows[i];
        let combine = |old: f64, new: f64| match mode {
            Merge::Add => old + new,
            Merge::Set => new,
        };
        let out = &mut self.scratch;
        out.cols.clear();
        out.vals.clear();
        let (mut a, mut b) = (0, 0);
        while a < row.cols.len() || b < cols.len() {
            let ca = row.cols.get(a).copied().unwrap_or(u32::MAX);
            let cb = cols.get(b).copied().unwrap_or(u32::MAX);
            if ca < cb {
                out.cols.push(ca);
                out.vals.push(row.vals[a]);
                a += 1;
            } else if cb < ca {
                out.cols.push(cb);
                out.vals.push(vals[b]);
                b += 1;
            } else {
                out.cols.push(ca);
                out.vals.push(combine(row.vals[a], vals[b]));
                a += 1;
                b += 1;
            }
        }
        std::mem::swap(row, out);
    }

    /// Drops every entry of row `j` whose column is stamped with `e`.
    fn drop_stamped(&mut self, j: usize, e: u32) {
        let r = &mut self.rows[j];
        let mut keep = 0;
        for k in 0..r.cols.len() {
            if self.stamp[r.cols[k] as usize] != e {
                r.cols[keep] = r.cols[k];
                r.vals[keep] = r.vals[k];
                keep += 1;
            }
        }
        r.cols.truncate(keep);
        r.vals.truncate(keep);
    }

    /// `A[idx, idx] += d` for symmetric `d`, inserting fill as needed.
    pub fn add_block_sym(&mut self, idx: &[usize], d: &Mat) {
        assert_eq!(d.shape(), (idx.len(), idx.len()));
        let (sorted, perm) = sorted_with_perm(idx);
        let dp = d.select(&perm, &perm);
        let cols: Vec<u32> = sorted.iter().map(|&i| i as u32).collect();
        for (a, &i) in sorted.iter().enumerate() {
            self.merge_row(i, &cols, dp.col(a), Merge::Add);
        }
    }

    /// `A[rows, cols] = w` and `A[cols, rows] = wᵀ`.
    pub fn set_block_sym(&mut self, rows: &[usize], cols: &[usize], w: &Mat) {
        assert_eq!(w.shape(), (rows.len(), cols.len()));
        let (rs, rp) = sorted_with_perm(rows);
        let (cs, cp) = sorted_with_perm(cols);
        let wp = w.select(&rp, &cp);
        let wt = wp.transpose();
        let rcols: Vec<u32> = rs.iter().map(|&i| i as u32).collect();
        let ccols: Vec<u32> = cs.iter().map(|&i| i as u32).collect();
        for (a, &i) in rs.iter().enumerate() {
            self.merge_row(i, &ccols, wt.col(a), Merge::Set);
        }
        for (b, &j) in cs.iter().enumerate() {
            self.merge_row(j, &rcols, wp.col(b), Merge::Set);
        }
    }

    /// Overwrites the diagonal block over `idx` with the identity.
    pub fn set_identity(&mut self, idx: &[usize]) {
        self.set_block_sym(idx, idx, &Mat::identity(idx.len()));
    }

    /// Deletes `set` from the active matrix: its rows are cleared and every
    /// stored coupling to it is dropped, leaving identity rows behind.
    pub fn remove(&mut self, set: &[usize]) {
        self.schur_remove(set, &[], &Mat::zeros(0, 0));
    }

    /// `A[idx, idx] += d` for symmetric `d` followed by `remove(set)`, in a
    /// single pass over the affected rows. `idx` must be disjoint from `set`.
    pub fn schur_remove(&mut self, set: &[usize], idx: &[usize], d: &Mat) {
        assert_eq!(d.shape(), (idx.len(), idx.len()));
        let e = self.next_epoch();
        let done = self.next_epoch();
        for &i in set {
            self.stamp[i] = e;
        }
        if !idx.is_empty() {
            let (sorted, perm) = sorted_with_perm(idx);
            let dp = d.select(&perm, &perm);
            let cols: Vec<u32> = sorted.iter().map(|&i| i as u32).collect();
            for (a, &i) in sorted.iter().enumerate() {
                debug_assert_ne!(self.stamp[i], e, "update rows overlap the removed set");
                self.drop_stamped(i, e);
                self.merge_row(i, &cols, dp.col(a), Merge::Add);
                self.stamp[i] = done;
            }
        }
        for &i in set {
            let row = std::mem::take(&mut self.rows[i]);
            for &c in &row.cols {
                let c = c as usize;
                if self.stamp[c] == e || self.stamp[c] == done {
                    continue;
                }
                self.stamp[c] = done;
                self.drop_stamped(c, e);
            }
            self.active[i] = false;
        }
    }

    /// Full dense copy, identity on removed DOFs.
    pub fn to_dense(&self) -> Mat {
        let n = self.order();
        let mut m = Mat::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            if !self.active[i] {
                m[(i, i)] = 1.0;
                continue;
            }
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                m[(c as usize, i)] = v;
            }
        }
        m
    }

    /// Largest `|A_ij − A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                worst = worst.max((v - self.get(c as usize, i)).abs());
            }
        }
        worst
    }
}

fn sorted_with_perm(idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..idx.len()).collect();
    perm.sort_unstable_by_key(|&k| idx[k]);
    (perm.iter().map(|&k| idx[k]).collect(), perm)
}
