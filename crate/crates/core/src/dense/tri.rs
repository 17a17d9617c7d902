use super::{LowerTriangular, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `op(L)⁻¹ B`
    Left,
    /// `B op(L)⁻¹`
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// Solves with a lower-triangular factor: `op(L)⁻¹ B` for [`Side::Left`] or
/// `B op(L)⁻¹` for [`Side::Right`], where `op(L)` is `L` or `Lᵀ`.
pub fn tri_solve(l: &LowerTriangular, b: &Mat, side: Side, trans: Transpose) -> Mat {
    match side {
        Side::Left => {
            assert_eq!(b.nrows(), l.order(), "tri_solve: row count mismatch");
            let mut x = b.clone();
            match trans {
                Transpose::No => l.solve_mat_in_place(&mut x),
                Transpose::Yes => l.solve_t_mat_in_place(&mut x),
            }
            x
        }
        Side::Right => {
            // B L⁻¹ = (L⁻ᵀ Bᵀ)ᵀ and B L⁻ᵀ = (L⁻¹ Bᵀ)ᵀ.
            assert_eq!(b.ncols(), l.order(), "tri_solve: column count mismatch");
            let mut x = b.transpose();
            match trans {
                Transpose::No => l.solve_t_mat_in_place(&mut x),
                Transpose::Yes => l.solve_mat_in_place(&mut x),
            }
            x.transpose()
        }
    }
}
