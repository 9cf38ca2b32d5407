//! Tridiagonal linear solves for the 1-D P1 operators.

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        SymTridiag {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Replaces row and column `i` by the identity row (Dirichlet constraint).
    pub fn pin(&mut self, i: usize) {
        self.diag[i] = 1.0;
        if i > 0 {
            self.off[i - 1] = 0.0;
        }
        if i < self.off.len() {
            self.off[i] = 0.0;
        }
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting
    /// (LAPACK `gtsv` scheme), which is stable for indefinite matrices.
    /// Returns `None` for an exactly singular pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        assert_eq!(b.len(), n);
        if n == 0 {
            return Some(Vec::new());
        }
        // a: sub, d: diag, c: super, e: second super created by pivoting
        let mut d = self.diag.clone();
        let mut c: Vec<f64> = self.off.clone();
        c.push(0.0);
        let a: Vec<f64> = self.off.clone();
        let mut e = vec![0.0; n];
        let mut x = b.to_vec();
        let mut sub = a;
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= sub[i].abs() {
                if d[i] == 0.0 {
                    return None;
                }
                let m = sub[i] / d[i];
                d[i + 1] -= m * c[i];
                x[i + 1] -= m * x[i];
                if i + 1 < n - 1 {
                    e[i] = 0.0;
                }
            } else {
                // swap rows i and i+1
                let m = d[i] / sub[i];
                d[i] = sub[i];
                let tmp = d[i + 1];
                d[i + 1] = c[i] - m * tmp;
                if i + 1 < n - 1 {
                    e[i] = c[i + 1];
                    c[i + 1] = -m * e[i];
                }
                c[i] = tmp;
                x.swap(i, i + 1);
                x[i + 1] -= m * x[i];
            }
            sub[i] = 0.0;
        }
        if d[n - 1] == 0.0 {
            return None;
        }
        x[n - 1] /= d[n - 1];
        if n > 1 {
            x[n - 2] = (x[n - 2] - c[n - 2] * x[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - c[i] * x[i + 1] - e[i] * x[i + 2]) / d[i];
        }
        Some(x)
    }
}
