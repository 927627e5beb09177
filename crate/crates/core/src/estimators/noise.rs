use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sim::Trajectory;

/// Per-coordinate noise scale `b̂_i = sqrt((1/(T−1)) Σ_t (X_{t+1} − Â X_t)_i²)`,
/// the likelihood maximizer over a diagonal `B` once `Â` is fixed.
pub fn estimate_b(traj: &Trajectory, a_hat: &DMatrix<f64>) -> Result<DVector<f64>> {
    let dim = traj.dim();
    if a_hat.nrows() != dim || a_hat.ncols() != dim {
        return Err(Error::dimension(
            "estimate vs trajectory",
            dim,
            a_hat.nrows().max(a_hat.ncols()),
        ));
    }
    let t = traj.len();
    if t < 2 {
        return Err(Error::SampleDeficit {
            available: t,
            required: 1,
            context: "noise-scale estimation needs at least two samples".into(),
        });
    }
    let x = traj.states();
    let resid = x.columns(1, t - 1) - a_hat * x.columns(0, t - 1);
    let scale = 1.0 / (t - 1) as f64;
    Ok(DVector::from_iterator(
        dim,
        resid.row_iter().map(|r| (r.norm_squared() * scale).sqrt()),
    ))
}
