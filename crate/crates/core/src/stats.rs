//! Small summary-statistics helpers for the Monte Carlo layers.

use serde::{Deserialize, Serialize};

/// Sample mean and standard deviation (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl MeanStd {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_iter(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut m = MeanStd::default();
        for x in xs {
            m.push(x);
        }
        m
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std() / (self.count as f64).sqrt()
        }
    }
}

/// `sqrt(a² + b²)` for independent standard errors.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Kolmogorov distance between the empirical CDF of `samples` and `cdf`.
pub fn kolmogorov_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let x = samples[i];
        let mut j = i;
        while j < samples.len() && samples[j] == x {
            j += 1;
        }
        let f = cdf(x);
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((f - below).abs()).max((at - f).abs());
        i = j;
    }
    d
}

/// True if the sequence never increases.
pub fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

pub fn non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}
