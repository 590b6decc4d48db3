//! Coordinate descent for the L1-penalized quadratic
//! `½ βᵀ G β − cᵀ β + λ ‖β‖₁`, where `G` and `c` are the (weight-normalized)
//! Gram matrix and cross-products of a weighted least squares problem.

/// Row-major Gram matrix and cross-product vector.
#[derive(Debug, Clone)]
pub(crate) struct Quadratic {
    pub n: usize,
    pub gram: Vec<f64>,
    pub cross: Vec<f64>,
}

impl Quadratic {
    /// Smallest penalty at which the all-zero vector is optimal.
    pub fn lambda_max(&self) -> f64 {
        self.cross.iter().fold(0.0, |acc: f64, c| acc.max(c.abs()))
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Minimizes the penalized quadratic starting from `beta` (warm start).
/// Stops when no coordinate moves by more than `tol` in a full sweep.
pub(crate) fn coordinate_descent(q: &Quadratic, lambda: f64, beta: &mut [f64], tol: f64, max_sweeps: usize) {
    let n = q.n;
    // grad = G β
    let mut g = vec![0.0; n];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for i in 0..n {
                g[i] += q.gram[i * n + j] * b;
            }
        }
    }
    for _ in 0..max_sweeps {
        let mut max_step: f64 = 0.0;
        for j in 0..n {
            let gjj = q.gram[j * n + j];
            if gjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = q.cross[j] - g[j] + gjj * old;
            let new = soft_threshold(rho, lambda) / gjj;
            if new != old {
                let step = new - old;
                beta[j] = new;
                for i in 0..n {
                    g[i] += q.gram[i * n + j] * step;
                }
                max_step = max_step.max(step.abs());
            }
        }
        if max_step <= tol {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64], c: &[f64]) -> Quadratic {
        let n = d.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            gram[i * n + i] = d[i];
        }
        Quadratic {
            n,
            gram,
            cross: c.to_vec(),
        }
    }

    #[test]
    fn orthogonal_design_soft_thresholds() {
        let q = diag(&[1.0, 2.0, 1.0], &[3.0, -1.0, 0.2]);
        let mut beta = vec![0.0; 3];
        coordinate_descent(&q, 0.5, &mut beta, 1e-12, 100);
        assert_eq!(beta, vec![2.5, -0.25, 0.0]);
        assert_eq!(q.lambda_max(), 3.0);
    }

    #[test]
    fn zero_penalty_solves_the_linear_system() {
        let q = Quadratic {
            n: 2,
            gram: vec![2.0, 1.0, 1.0, 2.0],
            cross: vec![1.0, 1.0],
        };
        let mut beta = vec![0.0; 2];
        coordinate_descent(&q, 0.0, &mut beta, 1e-14, 10_000);
        assert!((beta[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((beta[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_at_lambda_max_gives_zero() {
        let q = Quadratic {
            n: 2,
            gram: vec![2.0, 0.5, 0.5, 1.0],
            cross: vec![0.7, -0.4],
        };
        let mut beta = vec![0.0; 2];
        coordinate_descent(&q, q.lambda_max(), &mut beta, 1e-12, 100);
        assert_eq!(beta, vec![0.0, 0.0]);
    }
}
