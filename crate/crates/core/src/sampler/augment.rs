//! Least-squares-guided coefficient proposals for dimension-changing moves.
//!
//! Coefficients shared by the current and proposed model are shifted by the
//! difference of the two least-squares fits; newborn coefficients are their
//! least-squares value plus a Gaussian jump. The map is a translation, so its
//! Jacobian is one, and the reverse move recovers the jump exactly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::least_squares;

/// Proposed coefficients from two least-squares fits.
///
/// `origin[i]` is the index in `current` / `old_fit` that coordinate `i` of the
/// proposal inherits from, or `None` for a newborn coordinate; newborn
/// coordinates consume `jumps` in order.
pub fn augment_shift(
    current: &[f64],
    old_fit: &[f64],
    new_fit: &[f64],
    origin: &[Option<usize>],
    jumps: &[f64],
) -> Vec<f64> {
    debug_assert_eq!(origin.len(), new_fit.len());
    let mut jumps = jumps.iter();
    origin
        .iter()
        .enumerate()
        .map(|(i, o)| match *o {
            Some(k) => current[k] + new_fit[i] - old_fit[k],
            None => jumps.next().copied().expect("one jump per newborn coordinate") + new_fit[i],
        })
        .collect()
}

/// Fits `response` on both designs and applies [`augment_shift`].
pub fn glm_augment(
    current: &[f64],
    design_old: &DMatrix<f64>,
    design_new: &DMatrix<f64>,
    response: &[f64],
    origin: &[Option<usize>],
    jumps: &[f64],
) -> Result<Vec<f64>> {
    if current.len() != design_old.ncols() || origin.len() != design_new.ncols() {
        return Err(Error::Dimension("coefficient and design widths disagree".into()));
    }
    let newborn = origin.iter().filter(|o| o.is_none()).count();
    if newborn != jumps.len() {
        return Err(Error::Dimension(format!("{newborn} newborn coordinates but {} jumps", jumps.len())));
    }
    let old_fit = least_squares(design_old, response)?;
    let new_fit = least_squares(design_new, response)?;
    Ok(augment_shift(current, old_fit.as_slice(), new_fit.as_slice(), origin, jumps))
}
