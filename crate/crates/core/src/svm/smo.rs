//! Sequential minimal optimization for the C-SVM dual.
//!
//! Works on the minimization form `f(a) = 1/2 a'Qa - e'a` with
//! `Q_ij = y_i y_j K(x_i, x_j)`, keeping the gradient `G = Qa - e` up to
//! date. Each iteration picks the maximal KKT-violating pair
//!
//! ```text
//! i = argmax { -y_t G_t : t in I_up }     j = argmin { -y_t G_t : t in I_low }
//! ```
//!
//! and solves the two-variable subproblem analytically, clipped to the box.
//! Training stops once `-y_i G_i + y_j G_j < tol`.

use std::collections::HashMap;
use std::rc::Rc;

use super::{squared_distance, SvmParams, FULL_GRAM_MAX_ROWS, KERNEL_EVAL_BUDGET};
use crate::{Error, Result};

const TAU: f64 = 1e-12;

/// Result of one SMO run over the whole training set.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    /// One multiplier per training row, in `[0, C]`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective `sum a - 1/2 a'Qa` at `alpha`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dual objective `sum a - 1/2 a'Qa` evaluated directly.
pub fn dual_objective(xs: &[Vec<f64>], ys: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let n = xs.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alpha[j] != 0.0 {
                let k = (-gamma * squared_distance(&xs[i], &xs[j])).exp();
                quad += alpha[i] * alpha[j] * ys[i] * ys[j] * k;
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Kernel columns, either a materialized Gram matrix or an LRU column cache.
enum KernelColumns<'a> {
    Full { gram: Vec<f64>, n: usize },
    Cached(ColumnCache<'a>),
}

struct ColumnCache<'a> {
    xs: &'a [Vec<f64>],
    gamma: f64,
    capacity: usize,
    columns: HashMap<usize, (Rc<[f64]>, u64)>,
    clock: u64,
}

impl ColumnCache<'_> {
    fn get(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        let now = self.clock;
        if let Some((col, stamp)) = self.columns.get_mut(&i) {
            *stamp = now;
            return Rc::clone(col);
        }
        if self.columns.len() >= self.capacity {
            let oldest = self
                .columns
                .iter()
                .min_by_key(|(_, (_, s))| *s)
                .map(|(&k, _)| k);
            if let Some(k) = oldest {
                self.columns.remove(&k);
            }
        }
        let xi = &self.xs[i];
        let col: Rc<[f64]> = self
            .xs
            .iter()
            .map(|xt| (-self.gamma * squared_distance(xi, xt)).exp())
            .collect();
        self.columns.insert(i, (Rc::clone(&col), now));
        col
    }
}

impl<'a> KernelColumns<'a> {
    fn new(xs: &'a [Vec<f64>], gamma: f64, cache_bytes: usize) -> Self {
        let n = xs.len();
        if n <= FULL_GRAM_MAX_ROWS {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                gram[i * n + i] = 1.0;
                for j in 0..i {
                    let k = (-gamma * squared_distance(&xs[i], &xs[j])).exp();
                    gram[i * n + j] = k;
                    gram[j * n + i] = k;
                }
            }
            KernelColumns::Full { gram, n }
        } else {
            let capacity = (cache_bytes / (8 * n)).max(2);
            KernelColumns::Cached(ColumnCache {
                xs,
                gamma,
                capacity,
                columns: HashMap::new(),
                clock: 0,
            })
        }
    }

    fn with_pair<R>(&mut self, i: usize, j: usize, f: impl FnOnce(&[f64], &[f64]) -> R) -> R {
        match self {
            KernelColumns::Full { gram, n } => {
                f(&gram[i * *n..(i + 1) * *n], &gram[j * *n..(j + 1) * *n])
            }
            KernelColumns::Cached(cache) => {
                let ci = cache.get(i);
                let cj = cache.get(j);
                f(&ci, &cj)
            }
        }
    }
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Solves the dual for rows `xs` (already scaled) with labels `ys` in {+1, -1}.
///
/// Hitting the iteration cap is not an error: the last iterate is returned
/// with `converged == false`.
pub fn train_smo(xs: &[Vec<f64>], ys: &[f64], params: &SvmParams) -> Result<SmoSolution> {
    params.validate()?;
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if ys.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: ys.len(),
        });
    }
    if ys.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    if !(ys.contains(&1.0) && ys.contains(&-1.0)) {
        return Err(Error::SingleClassDataset);
    }
    let c = params.c;
    let max_iter = params
        .max_iter
        .unwrap_or_else(|| (KERNEL_EVAL_BUDGET / (2 * n)).max(1));

    let mut kernel = KernelColumns::new(xs, params.gamma, params.cache_bytes);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut last_obj = 0.0f64;

    loop {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            if in_up(ys[t], alpha[t], c) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(ys[t], alpha[t], c) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (yi, yj) = (ys[i], ys[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        kernel.with_pair(i, j, |ki, kj| {
            // K_ii = K_jj = 1 for the RBF kernel.
            let quad = (2.0 - 2.0 * ki[j]).max(TAU);
            if yi != yj {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += ys[t] * (yi * ki[t] * di + yj * kj[t] * dj);
            }
        });

        if cfg!(debug_assertions) {
            let obj = minimization_objective(&alpha, &grad);
            debug_assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "SMO objective increased from {last_obj} to {obj}"
            );
            last_obj = obj;
        }
    }

    debug_assert!(
        alpha.iter().all(|&a| (0.0..=c).contains(&a)),
        "multiplier outside [0, C]"
    );
    debug_assert!(
        alpha.iter().zip(ys).map(|(a, y)| a * y).sum::<f64>().abs() <= 1e-8,
        "equality constraint violated"
    );
    let bias = -rho(&alpha, &grad, ys, c);
    let objective = -minimization_objective(&alpha, &grad);
    Ok(SmoSolution {
        alpha,
        bias,
        objective,
        iterations,
        converged,
    })
}

fn minimization_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha
        .iter()
        .zip(grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
}

/// Offset such that `f(x) = sum a_i y_i K(x_i, x) - rho`: the mean of
/// `y_t G_t` over free multipliers, else the midpoint of the feasible range.
fn rho(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = ys[t] * grad[t];
        let upper = alpha[t] >= c;
        let lower = alpha[t] <= 0.0;
        if upper {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::rbf_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decision(xs: &[Vec<f64>], ys: &[f64], sol: &SmoSolution, gamma: f64, x: &[f64]) -> f64 {
        xs.iter()
            .zip(ys)
            .zip(&sol.alpha)
            .map(|((xi, yi), a)| a * yi * rbf_kernel(xi, x, gamma).unwrap())
            .sum::<f64>()
            + sol.bias
    }

    fn assert_feasible(sol: &SmoSolution, ys: &[f64], c: f64) {
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let eq: f64 = sol.alpha.iter().zip(ys).map(|(a, y)| a * y).sum();
        assert!(eq.abs() <= 1e-8, "sum a_i y_i = {eq}");
    }

    #[test]
    fn two_points_share_alpha() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let ys = vec![-1.0, 1.0];
        let params = SvmParams::new(1e6, 0.5);
        let sol = train_smo(&xs, &ys, &params).unwrap();
        assert!(sol.converged);
        assert!(sol.alpha[0] > 0.0 && sol.alpha[0] == sol.alpha[1]);
        assert_feasible(&sol, &ys, params.c);
        assert!(decision(&xs, &ys, &sol, 0.5, &xs[0]) < 0.0);
        assert!(decision(&xs, &ys, &sol, 0.5, &xs[1]) > 0.0);
    }

    #[test]
    fn xor_is_separated() {
        let xs = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let ys = vec![1.0, 1.0, -1.0, -1.0];
        let params = SvmParams {
            tol: 1e-10,
            ..SvmParams::new(10.0, 1.0)
        };
        let sol = train_smo(&xs, &ys, &params).unwrap();
        assert_feasible(&sol, &ys, 10.0);
        for (x, y) in xs.iter().zip(&ys) {
            assert!(decision(&xs, &ys, &sol, 1.0, x) * y > 0.0);
        }
        // By symmetry every point carries the same multiplier a, and
        // stationarity gives 1 = a (1 - e^-1)^2.
        let a = 1.0 / (1.0 - (-1f64).exp()).powi(2);
        assert!(
            sol.alpha.iter().all(|x| (x - a).abs() < 1e-6),
            "{:?}",
            sol.alpha
        );
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let xs: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> = (0..30)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let sol = train_smo(&xs, &ys, &SvmParams::new(1.0, 0.5)).unwrap();
        assert_feasible(&sol, &ys, 1.0);
        let direct = dual_objective(&xs, &ys, &sol.alpha, 0.5);
        assert!((direct - sol.objective).abs() < 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xs: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| if x[0] * x[1] > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let params = SvmParams::new(5.0, 2.0);
        let sol = train_smo(&xs, &ys, &params).unwrap();
        assert!(sol.converged);
        let mut free = 0;
        for (t, x) in xs.iter().enumerate() {
            if sol.alpha[t] > 0.0 && sol.alpha[t] < params.c {
                free += 1;
                let margin = ys[t] * decision(&xs, &ys, &sol, params.gamma, x);
                assert!((margin - 1.0).abs() <= params.tol * 10.0, "margin {margin}");
            }
        }
        assert!(free > 0);
    }

    #[test]
    fn cached_columns_match_full_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(-1.0..1.0); 3]).collect();
        let mut full = KernelColumns::new(&xs, 0.9, 1 << 20);
        let mut cached = KernelColumns::Cached(ColumnCache {
            xs: &xs,
            gamma: 0.9,
            capacity: 2,
            columns: HashMap::new(),
            clock: 0,
        });
        for (i, j) in [(0, 1), (5, 7), (0, 49), (5, 5), (1, 0)] {
            let a = full.with_pair(i, j, |ci, cj| (ci.to_vec(), cj.to_vec()));
            let b = cached.with_pair(i, j, |ci, cj| (ci.to_vec(), cj.to_vec()));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn iteration_cap_is_a_soft_failure() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> = (0..40)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let params = SvmParams {
            max_iter: Some(3),
            ..SvmParams::new(100.0, 5.0)
        };
        let sol = train_smo(&xs, &ys, &params).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert_feasible(&sol, &ys, 100.0);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> = (0..40)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let a = train_smo(&xs, &ys, &SvmParams::new(2.0, 1.5)).unwrap();
        let b = train_smo(&xs, &ys, &SvmParams::new(2.0, 1.5)).unwrap();
        assert_eq!(a, b);
    }
}
