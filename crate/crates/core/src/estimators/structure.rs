use nalgebra::DMatrix;

/// Zeroes the off-diagonal entries of the lower-right N×N block (the block
/// that carries `−M⁻¹D`, which is diagonal in the true dynamics). Every
/// other entry is left as estimated.
pub fn threshold_structure(a_hat: &DMatrix<f64>, n_gen: usize) -> DMatrix<f64> {
    let mut out = a_hat.clone();
    for (i, j) in zeroed_by_threshold(n_gen) {
        if i < out.nrows() && j < out.ncols() {
            out[(i, j)] = 0.0;
        }
    }
    out
}

/// Entries forced to zero by [`threshold_structure`].
pub fn zeroed_by_threshold(n_gen: usize) -> impl Iterator<Item = (usize, usize)> {
    (n_gen..2 * n_gen).flat_map(move |i| {
        (n_gen..2 * n_gen)
            .filter(move |&j| j != i)
            .map(move |j| (i, j))
    })
}
