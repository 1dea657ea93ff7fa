//! Order-fixed floating point reductions.
//!
//! Monte Carlo statistics are accumulated per block of [`BLOCK_PATHS`] paths
//! (blocks aligned on path index, sequential inside a block) and the block
//! results are then combined by a pairwise tree over block index. Neither step
//! depends on how blocks were scheduled, so the result is bitwise identical for
//! any worker count.

/// Number of paths folded sequentially before the pairwise tree takes over.
pub const BLOCK_PATHS: usize = 1024;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Count, mean and centred sum of squares (Welford within a block, Chan et al.
/// when two blocks are merged).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    sum_sq_dev: f64,
}

impl RunningStats {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.sum_sq_dev += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let count = self.count + other.count;
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let delta = other.mean - self.mean;
        RunningStats {
            count,
            mean: self.mean + delta * (n_b / count as f64),
            sum_sq_dev: self.sum_sq_dev + other.sum_sq_dev + delta * delta * (n_a * n_b / count as f64),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; `None` with fewer than two observations.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| (self.sum_sq_dev / (self.count - 1) as f64).max(0.0))
    }

    /// Standard error of the mean; `None` with fewer than two observations.
    pub fn standard_error(&self) -> Option<f64> {
        self.sample_variance().map(|v| (v / self.count as f64).sqrt())
    }
}

/// Combine `items` with a balanced binary tree: the slice is split at its
/// midpoint recursively, so the association pattern depends only on the length.
pub fn pairwise_reduce<T: Clone>(items: &[T], merge: &impl Fn(&T, &T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (left, right) = items.split_at(n / 2);
            let l = pairwise_reduce(left, merge)?;
            let r = pairwise_reduce(right, merge)?;
            Some(merge(&l, &r))
        }
    }
}

/// Pairwise sum of a slice using [`BLOCK_PATHS`]-sized sequential leaves.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    let leaves: Vec<f64> = values.chunks(BLOCK_PATHS).map(|c| c.iter().sum()).collect();
    pairwise_reduce(&leaves, &|a: &f64, b: &f64| a + b).unwrap_or(0.0)
}
