//! Dense symmetric solves for the normal equations.

/// Relative pivot threshold below which a column counts as a linear
/// combination of the columns before it.
const PIVOT_TOLERANCE: f64 = 1e-11;

/// Row-major `n × n` symmetric matrix accumulated from weighted rows.
#[derive(Debug, Clone)]
pub(crate) struct NormalEquations {
    n: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl NormalEquations {
    pub fn new(n: usize) -> Self {
        NormalEquations {
            n,
            gram: vec![0.0; n * n],
            rhs: vec![0.0; n],
        }
    }

    /// Adds `w · x xᵀ` and `w · x t`.
    pub fn add_row(&mut self, x: &[f64], target: f64, weight: f64) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let wx = weight * x[i];
            if wx == 0.0 {
                continue;
            }
            self.rhs[i] += wx * target;
            let row = &mut self.gram[i * self.n..(i + 1) * self.n];
            for (g, xj) in row.iter_mut().zip(x).skip(i) {
                *g += wx * xj;
            }
        }
    }

    /// Solves `G β = r`. On rank deficiency returns the indices of columns that
    /// are (numerically) spanned by earlier columns.
    pub fn solve(mut self) -> Result<Vec<f64>, Vec<usize>> {
        let n = self.n;
        for i in 0..n {
            for j in 0..i {
                self.gram[i * n + j] = self.gram[j * n + i];
            }
        }
        let chol = cholesky(&self.gram, n)?;
        let mut beta = chol_solve(&chol, n, &self.rhs);
        // One step of iterative refinement.
        let resid: Vec<f64> = (0..n)
            .map(|i| {
                let row = &self.gram[i * n..(i + 1) * n];
                self.rhs[i] - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let delta = chol_solve(&chol, n, &resid);
        for (b, d) in beta.iter_mut().zip(delta) {
            *b += d;
        }
        Ok(beta)
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, Vec<usize>> {
    let mut l = vec![0.0; n * n];
    let mut dependent = Vec::new();
    for j in 0..n {
        let ajj = a[j * n + j];
        let d = ajj - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if !(ajj > 0.0) || d <= PIVOT_TOLERANCE * ajj {
            dependent.push(j);
            continue;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / ljj;
        }
    }
    if dependent.is_empty() {
        Ok(l)
    } else {
        Err(dependent)
    }
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s = b[i] - (0..i).map(|k| l[i * n + k] * y[k]).sum::<f64>();
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s = y[i] - (i + 1..n).map(|k| l[k * n + i] * x[k]).sum::<f64>();
        x[i] = s / l[i * n + i];
    }
    x
}
