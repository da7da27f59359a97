//! Symmetric matrices that are banded except for a few trailing dense
//! rows/columns ("arrowhead band"), with an in-place Cholesky solver.
//!
//! A collocation Hessian ordered node by node is banded; the free final time
//! couples to every node and lives in the border.

/// Lower triangle of a symmetric `n x n` matrix: the leading `n - border`
/// block is banded with half-bandwidth `bandwidth`, the trailing `border`
/// rows are dense.
#[derive(Debug, Clone)]
pub struct ArrowBand {
    n: usize,
    nb: usize,
    bw: usize,
    band: Vec<f64>,
    border: Vec<f64>,
}

impl ArrowBand {
    pub fn zeros(n: usize, bandwidth: usize, border: usize) -> Self {
        assert!(border <= n, "border larger than matrix");
        let nb = n - border;
        let bw = bandwidth.min(nb.saturating_sub(1));
        Self {
            n,
            nb,
            bw,
            band: vec![0.0; nb * (bw + 1)],
            border: vec![0.0; border * n],
        }
    }

    pub fn dense(n: usize) -> Self {
        Self::zeros(n, n.saturating_sub(1), 0)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn border(&self) -> usize {
        self.n - self.nb
    }

    /// Whether `(i, j)` is representable.
    pub fn holds(&self, i: usize, j: usize) -> bool {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        i < self.n && (i >= self.nb || i - j <= self.bw)
    }

    /// Add `v` to entries `(i, j)` and `(j, i)` (once when `i == j`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i >= self.nb {
            self.border[(i - self.nb) * self.n + j] += v;
            if j >= self.nb && j != i {
                self.border[(j - self.nb) * self.n + i] += v;
            }
        } else {
            assert!(i - j <= self.bw, "entry ({i}, {j}) outside half-bandwidth {}", self.bw);
            self.band[i * (self.bw + 1) + (i - j)] += v;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i >= self.nb {
            self.border[(i - self.nb) * self.n + j]
        } else if i - j <= self.bw {
            self.band[i * (self.bw + 1) + (i - j)]
        } else {
            0.0
        }
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        for i in 0..self.n {
            self.add(i, i, shift);
        }
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    /// Replace row and column `i` by the unit vector.
    pub fn pin(&mut self, i: usize) {
        let w = self.bw + 1;
        if i < self.nb {
            for d in 1..=self.bw.min(i) {
                self.band[i * w + d] = 0.0;
            }
            for p in (i + 1)..self.nb.min(i + self.bw + 1) {
                self.band[p * w + (p - i)] = 0.0;
            }
            self.band[i * w] = 1.0;
            for r in 0..(self.n - self.nb) {
                self.border[r * self.n + i] = 0.0;
            }
        } else {
            let row = i - self.nb;
            for j in 0..self.n {
                self.border[row * self.n + j] = 0.0;
            }
            for r in 0..(self.n - self.nb) {
                self.border[r * self.n + i] = 0.0;
            }
            self.border[row * self.n + i] = 1.0;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.nb {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.band[i * (self.bw + 1) + (i - j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        for r in 0..(self.n - self.nb) {
            let i = self.nb + r;
            for j in 0..self.n {
                let a = self.border[r * self.n + j];
                if j < self.nb {
                    y[i] += a * x[j];
                    y[j] += a * x[i];
                } else {
                    y[i] += a * x[j];
                }
            }
        }
        y
    }

    /// Cholesky factorization `A = L L^T`. Returns `None` when `A` is not
    /// (numerically) positive definite.
    pub fn cholesky(&self) -> Option<ArrowCholesky> {
        let tiny = 1e-14 * self.max_abs_diagonal().max(f64::MIN_POSITIVE);
        self.factor(tiny, None).map(|(f, _)| f)
    }

    /// Factor `A + E` where the diagonal `E >= 0` is nonzero only at pivots
    /// that fall below `delta`; such a pivot `p` becomes `max(|p|, delta)`.
    /// Returns the factor and the number of modified pivots.
    pub fn cholesky_modified(&self, delta: f64) -> Option<(ArrowCholesky, usize)> {
        self.factor(delta, Some(delta))
    }

    fn factor(&self, tiny: f64, modify: Option<f64>) -> Option<(ArrowCholesky, usize)> {
        let w = self.bw + 1;
        let nb = self.nb;
        let k = self.n - nb;
        let mut modified = 0usize;
        let mut pivot = |sum: f64| -> Option<f64> {
            if !sum.is_finite() {
                return None;
            }
            if sum > tiny {
                return Some(sum);
            }
            let delta = modify?;
            modified += 1;
            Some(sum.abs().max(delta))
        };

        let mut l = self.band.clone();
        for i in 0..nb {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mut sum = l[i * w + (i - j)];
                let plo = lo.max(j.saturating_sub(self.bw));
                for p in plo..j {
                    sum -= l[i * w + (i - p)] * l[j * w + (j - p)];
                }
                if i == j {
                    l[i * w] = pivot(sum)?.sqrt();
                } else {
                    l[i * w + (i - j)] = sum / l[j * w];
                }
            }
        }

        // Border rows: Y = C L^{-T}, then the Schur complement D - Y Y^T.
        let mut y = vec![0.0; k * nb];
        for r in 0..k {
            for j in 0..nb {
                let mut sum = self.border[r * self.n + j];
                for p in j.saturating_sub(self.bw)..j {
                    sum -= y[r * nb + p] * l[j * w + (j - p)];
                }
                y[r * nb + j] = sum / l[j * w];
            }
        }
        let mut s = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..=a {
                let mut v = self.border[a * self.n + nb + b];
                for p in 0..nb {
                    v -= y[a * nb + p] * y[b * nb + p];
                }
                s[a * k + b] = v;
            }
        }
        for a in 0..k {
            for b in 0..=a {
                let mut sum = s[a * k + b];
                for p in 0..b {
                    sum -= s[a * k + p] * s[b * k + p];
                }
                if a == b {
                    s[a * k + a] = pivot(sum)?.sqrt();
                } else {
                    s[a * k + b] = sum / s[b * k + b];
                }
            }
        }
        Some((ArrowCholesky { nb, k, bw: self.bw, l, y, s }, modified))
    }
}

#[derive(Debug, Clone)]
pub struct ArrowCholesky {
    nb: usize,
    k: usize,
    bw: usize,
    l: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
}

impl ArrowCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (nb, k, w) = (self.nb, self.k, self.bw + 1);
        let mut z = rhs.to_vec();
        // Forward: L_B z1 = r1.
        for i in 0..nb {
            let mut sum = z[i];
            for p in i.saturating_sub(self.bw)..i {
                sum -= self.l[i * w + (i - p)] * z[p];
            }
            z[i] = sum / self.l[i * w];
        }
        // L_S z2 = r2 - Y z1.
        for a in 0..k {
            let mut sum = z[nb + a];
            for p in 0..nb {
                sum -= self.y[a * nb + p] * z[p];
            }
            for b in 0..a {
                sum -= self.s[a * k + b] * z[nb + b];
            }
            z[nb + a] = sum / self.s[a * k + a];
        }
        // Backward: L_S^T x2 = z2.
        for a in (0..k).rev() {
            let mut sum = z[nb + a];
            for b in (a + 1)..k {
                sum -= self.s[b * k + a] * z[nb + b];
            }
            z[nb + a] = sum / self.s[a * k + a];
        }
        // L_B^T x1 = z1 - Y^T x2.
        for a in 0..k {
            let xa = z[nb + a];
            for p in 0..nb {
                z[p] -= self.y[a * nb + p] * xa;
            }
        }
        for i in (0..nb).rev() {
            let mut sum = z[i];
            for q in (i + 1)..nb.min(i + self.bw + 1) {
                sum -= self.l[q * w + (q - i)] * z[q];
            }
            z[i] = sum / self.l[i * w];
        }
        z
    }
}
