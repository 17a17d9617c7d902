//! Quadtree/octree cells over the grid and the per-level grouping of active
//! DOFs into cell interiors, separators (edges in 2D, faces in 3D) and the
//! lower-dimensional pieces where separators meet.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::grid::GridSpec;
use crate::{Error, Result};

/// One cell of the level-`level` tree: lattice points `lo..=hi` per axis.
/// Points on `∂Ω` (coordinate 0 or `n`) are ghosts and carry no DOF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub level: usize,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    /// DOFs strictly inside the cell.
    pub fn interior_dofs(&self, spec: &GridSpec) -> Vec<usize> {
        let mut out = Vec::new();
        let range = |d: usize| {
            if d < spec.dim {
                self.lo[d] + 1..self.hi[d]
            } else {
                0..1
            }
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    if let Some(id) = spec.dof([x, y, z]) {
                        out.push(id);
                    }
                }
            }
        }
        out
    }
}

/// Cells of every level `0..=L`; level `ℓ` has `2^{dim(L−ℓ)}` cells of side
/// `2^ℓ m`.
pub fn build_hierarchy(spec: &GridSpec) -> Vec<Vec<CellBox>> {
    (0..=spec.levels)
        .map(|level| {
            let s = spec.m << level;
            let per = spec.n / s;
            let count = per.pow(spec.dim as u32);
            (0..count)
                .map(|c| {
                    let mut lo = [0; 3];
                    let mut hi = [0; 3];
                    let mut r = c;
                    for d in 0..spec.dim {
                        lo[d] = (r % per) * s;
                        hi[d] = lo[d] + s;
                        r /= per;
                    }
                    CellBox { level, lo, hi }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DofKind {
    Interior,
    Face,
    Edge,
    Corner,
}

impl DofKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DofKind::Interior => "interior",
            DofKind::Face => "face",
            DofKind::Edge => "edge",
            DofKind::Corner => "corner",
        }
    }
}

/// Geometric kind of a lattice point relative to the level cells of side `s`.
pub fn classify_point(dim: usize, coords: [usize; 3], s: usize) -> DofKind {
    let on = (0..dim).filter(|&d| coords[d].is_multiple_of(s)).count();
    match (dim, on) {
        (_, 0) => DofKind::Interior,
        (2, 1) => DofKind::Edge,
        (3, 1) => DofKind::Face,
        (3, 2) => DofKind::Edge,
        _ => DofKind::Corner,
    }
}

/// Doubled lattice coordinates identifying the geometric piece (cell
/// interior, edge, face or corner) a point belongs to: `2k` on the plane
/// `k s`, `2k + 1` strictly between planes `k s` and `(k + 1) s`.
fn piece_key(dim: usize, coords: [usize; 3], s: usize) -> [usize; 3] {
    let mut key = [0; 3];
    for d in 0..dim {
        let c = coords[d];
        key[d] = if c.is_multiple_of(s) {
            2 * (c / s)
        } else {
            2 * (c / s) + 1
        };
    }
    key
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofGroup {
    pub kind: DofKind,
    pub level: usize,
    /// Global DOF ids, ascending.
    pub indices: Vec<usize>,
    /// Doubled lattice coordinates of the owning geometry.
    pub key: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelPartition {
    pub level: usize,
    pub interior: Vec<DofGroup>,
    /// Groups compressed at this level: edges in 2D, faces in 3D.
    pub skeleton: Vec<DofGroup>,
    /// Every non-interior group: edges and corners in 2D, faces, edges and
    /// corners in 3D.
    pub precond: Vec<DofGroup>,
}

impl LevelPartition {
    pub fn p(&self) -> usize {
        self.interior.len()
    }

    pub fn q(&self) -> usize {
        self.skeleton.len()
    }

    pub fn r(&self) -> usize {
        self.precond.len()
    }

    pub fn write_csv<W: Write>(&self, spec: &GridSpec, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dof_id", "x", "y", "z", "group_kind", "group_id"])?;
        let groups = self.interior.iter().chain(&self.precond);
        let mut rows: Vec<(usize, DofKind, usize)> = groups
            .enumerate()
            .flat_map(|(g, grp)| grp.indices.iter().map(move |&i| (i, grp.kind, g)))
            .collect();
        rows.sort_unstable();
        for (dof, kind, g) in rows {
            let c = spec.coords(dof);
            let z = if spec.dim == 3 {
                c[2].to_string()
            } else {
                String::new()
            };
            out.write_record([
                dof.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                z,
                kind.as_str().to_string(),
                g.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Groups the active DOFs entering level `level` by the geometry of the
/// level cells. Groups are ordered by their owning geometry, last axis
/// slowest.
pub fn classify_active(spec: &GridSpec, level: usize, active: &[usize]) -> Result<LevelPartition> {
    if level > spec.levels {
        return Err(Error::Config(format!(
            "level {level} exceeds tree depth {}",
            spec.levels
        )));
    }
    let s = spec.m << level;
    let mut pieces: BTreeMap<[usize; 3], (DofKind, Vec<usize>)> = BTreeMap::new();
    for &dof in active {
        if dof >= spec.num_dofs() {
            return Err(Error::Config(format!("DOF {dof} lies outside the grid")));
        }
        let c = spec.coords(dof);
        let kind = classify_point(spec.dim, c, s);
        let mut key = piece_key(spec.dim, c, s);
        key.reverse();
        pieces
            .entry(key)
            .or_insert_with(|| (kind, Vec::new()))
            .1
            .push(dof);
    }
    let mut part = LevelPartition {
        level,
        interior: Vec::new(),
        skeleton: Vec::new(),
        precond: Vec::new(),
    };
    let separator = if spec.dim == 2 {
        DofKind::Edge
    } else {
        DofKind::Face
    };
    for (mut key, (kind, mut indices)) in pieces {
        key.reverse();
        indices.sort_unstable();
        let group = DofGroup {
            kind,
            level,
            indices,
            key,
        };
        if kind == DofKind::Interior {
            part.interior.push(group);
        } else {
            if kind == separator {
                part.skeleton.push(group.clone());
            }
            part.precond.push(group);
        }
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(spec: &GridSpec) -> Vec<usize> {
        (0..spec.num_dofs()).collect()
    }

    #[test]
    fn cell_counts() {
        let g = GridSpec::new(2, 16, 4).unwrap();
        let h = build_hierarchy(&g);
        assert_eq!(h.iter().map(Vec::len).collect::<Vec<_>>(), vec![16, 4, 1]);
        let g3 = GridSpec::new(3, 8, 4).unwrap();
        assert_eq!(build_hierarchy(&g3)[0].len(), 8);
    }

    #[test]
    fn leaf_interior_count() {
        let g = GridSpec::new(2, 16, 4).unwrap();
        let h = build_hierarchy(&g);
        for cell in &h[0] {
            assert_eq!(cell.interior_dofs(&g).len(), 9);
        }
    }

    #[test]
    fn level_zero_groups_2d() {
        let g = GridSpec::new(2, 16, 4).unwrap();
        let p = classify_active(&g, 0, &all(&g)).unwrap();
        assert_eq!(p.p(), 16);
        assert!(p.interior.iter().all(|grp| grp.indices.len() == 9));
        // 3 interior lines per axis, each cut into 4 edges.
        assert_eq!(p.q(), 24);
        assert_eq!(p.r(), 24 + 9);
        let corner = g.dof([8, 8, 0]).unwrap();
        let grp = p
            .precond
            .iter()
            .find(|grp| grp.indices.contains(&corner))
            .unwrap();
        assert_eq!(grp.kind, DofKind::Corner);
        assert_eq!(grp.indices, vec![corner]);
    }

    #[test]
    fn level_zero_groups_3d() {
        let g = GridSpec::new(3, 16, 4).unwrap();
        let p = classify_active(&g, 0, &all(&g)).unwrap();
        assert_eq!(p.p(), 64);
        // Faces: 3 orientations × 3 planes × 16 patches.
        assert_eq!(p.q(), 144);
        let kinds = |k| p.precond.iter().filter(|grp| grp.kind == k).count();
        assert_eq!(kinds(DofKind::Edge), 3 * 9 * 4);
        assert_eq!(kinds(DofKind::Corner), 27);
        assert!(p.skeleton.iter().all(|grp| grp.indices.len() == 9));
    }

    #[test]
    fn partition_covers_active_once() {
        let g = GridSpec::new(3, 16, 4).unwrap();
        let active: Vec<usize> = all(&g).into_iter().filter(|i| i % 3 != 0).collect();
        for level in 0..=g.levels {
            let p = classify_active(&g, level, &active).unwrap();
            let mut seen: Vec<usize> = p
                .interior
                .iter()
                .chain(&p.precond)
                .flat_map(|grp| grp.indices.iter().copied())
                .collect();
            seen.sort_unstable();
            assert_eq!(seen, active);
        }
    }

    /// Counts closed level cells containing a point: 1 for interior points,
    /// 2 on a separator, 4 (2D) or 8 (3D) at a corner.
    fn containing_cells(cells: &[CellBox], dim: usize, c: [usize; 3]) -> usize {
        cells
            .iter()
            .filter(|b| (0..dim).all(|d| b.lo[d] <= c[d] && c[d] <= b.hi[d]))
            .count()
    }

    #[test]
    fn classification_matches_brute_force() {
        for (dim, n, m) in [(2, 32, 4), (3, 16, 4)] {
            let g = GridSpec::new(dim, n, m).unwrap();
            let h = build_hierarchy(&g);
            for (level, cells) in h.iter().enumerate() {
                let p = classify_active(&g, level, &all(&g)).unwrap();
                for grp in p.interior.iter().chain(&p.precond) {
                    for &dof in &grp.indices {
                        let c = g.coords(dof);
                        let hits = containing_cells(cells, dim, c);
                        let on = (0..dim)
                            .filter(|&d| c[d].is_multiple_of(m << level))
                            .count();
                        assert_eq!(hits, 1 << on);
                        let expect = match (dim, on) {
                            (_, 0) => DofKind::Interior,
                            (2, 1) | (3, 2) => DofKind::Edge,
                            (3, 1) => DofKind::Face,
                            _ => DofKind::Corner,
                        };
                        assert_eq!(grp.kind, expect);
                    }
                }
            }
        }
    }

    #[test]
    fn groups_are_geometrically_connected() {
        let g = GridSpec::new(2, 32, 4).unwrap();
        let p = classify_active(&g, 1, &all(&g)).unwrap();
        for grp in &p.skeleton {
            let coords: Vec<_> = grp.indices.iter().map(|&i| g.coords(i)).collect();
            let fixed = (0..2)
                .find(|&d| coords.iter().all(|c| c[d] == coords[0][d]))
                .unwrap();
            let free = 1 - fixed;
            let mut v: Vec<usize> = coords.iter().map(|c| c[free]).collect();
            v.sort_unstable();
            assert!(v.windows(2).all(|w| w[1] == w[0] + 1));
            assert_eq!(v.len(), 7);
        }
    }

    #[test]
    fn csv_dump_lists_every_dof() {
        let g = GridSpec::new(2, 8, 4).unwrap();
        let p = classify_active(&g, 0, &all(&g)).unwrap();
        let mut out = Vec::new();
        p.write_csv(&g, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + g.num_dofs());
        assert!(text.starts_with("dof_id,x,y,z,group_kind,group_id"));
    }

    #[test]
    fn out_of_range_dof_is_an_error() {
        let g = GridSpec::new(2, 8, 4).unwrap();
        assert!(classify_active(&g, 0, &[1000]).is_err());
        assert!(classify_active(&g, 5, &[0]).is_err());
    }
}
