//! Small statistics helpers for Monte Carlo estimates.

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, stderr: 0.0 }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { mean, stderr: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate {
        mean,
        stderr: (var / n as f64).sqrt(),
    }
}

/// Batch-means accumulator for a stream of correlated per-slot values.
///
/// The stream is cut into `n_batches` contiguous batches of `batch_len`
/// values; the standard error is that of the batch averages.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_len: usize,
    current_sum: f64,
    current_len: usize,
    batch_means: Vec<f64>,
    total: f64,
    count: usize,
}

impl BatchMeans {
    pub fn new(n_values: usize, n_batches: usize) -> Self {
        let n_batches = n_batches.clamp(1, n_values.max(1));
        Self {
            batch_len: (n_values / n_batches).max(1),
            current_sum: 0.0,
            current_len: 0,
            batch_means: Vec::with_capacity(n_batches),
            total: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.total += x;
        self.count += 1;
        self.current_sum += x;
        self.current_len += 1;
        if self.current_len == self.batch_len {
            self.batch_means.push(self.current_sum / self.batch_len as f64);
            self.current_sum = 0.0;
            self.current_len = 0;
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Overall mean over every pushed value; standard error from complete batches.
    pub fn finish(&self) -> Estimate {
        let mean = if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        };
        let stderr = if self.batch_means.len() >= 2 {
            mean_stderr(&self.batch_means).stderr
        } else {
            f64::NAN
        };
        Estimate { mean, stderr }
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
