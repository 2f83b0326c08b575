//! Exhaustive (C, gamma) search scored by k-fold cross-validation.

use rayon::prelude::*;

use super::{LabeledDataset, SvmParams};
use crate::eval::{cross_validate_folds, kfold_split};
use crate::{Error, Result};

/// `C` in {2^-5, 2^-3, ..., 2^15}.
pub fn default_c_grid() -> Vec<f64> {
    (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect()
}

/// `gamma` in {2^-15, 2^-13, ..., 2^3}.
pub fn default_gamma_grid() -> Vec<f64> {
    (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub correct: usize,
    pub total: usize,
}

impl GridPoint {
    pub fn accuracy(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_gamma: f64,
    /// Cross-validation accuracy of the winner, in percent.
    pub cv_accuracy: f64,
    /// Every evaluated point, C-major in grid order.
    pub points: Vec<GridPoint>,
}

/// Scores every grid point with `folds`-fold CV on `train` (one fold
/// assignment shared by all points) and returns the most accurate pair.
/// Ties go to the smaller C, then the smaller gamma.
///
/// `base` supplies the solver settings; its `c` and `gamma` are ignored.
pub fn grid_search(
    train: &LabeledDataset,
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
    base: &SvmParams,
) -> Result<GridSearchResult> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidArgument("grids must be non-empty".into()));
    }
    let assignment = kfold_split(train.labels(), folds, seed)?;
    let pairs: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| gamma_grid.iter().map(move |&g| (c, g)))
        .collect();

    let points = pairs
        .par_iter()
        .map(|&(c, gamma)| {
            let params = SvmParams {
                c,
                gamma,
                ..base.clone()
            };
            let items = cross_validate_folds(train, &assignment, &params)?;
            let correct = items.iter().filter(|p| p.actual == p.predicted).count();
            Ok(GridPoint {
                c,
                gamma,
                correct,
                total: items.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = points
        .iter()
        .copied()
        .reduce(|best, p| {
            let better = p.correct > best.correct
                || (p.correct == best.correct
                    && (p.c < best.c || (p.c == best.c && p.gamma < best.gamma)));
            if better {
                p
            } else {
                best
            }
        })
        .expect("grid is non-empty");
    Ok(GridSearchResult {
        best_c: best.c,
        best_gamma: best.gamma,
        cv_accuracy: best.accuracy(),
        points,
    })
}
