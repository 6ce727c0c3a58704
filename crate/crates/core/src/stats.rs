//! One-pass mean/variance accumulation with an associative merge.

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combine.
    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        RunningStats {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divides by n).
    pub fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    /// Sample variance (divides by n - 1).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn sample_std(&self) -> f64 {
        self.sample_variance().sqrt()
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Mean and spread of an error probability over repeated test sets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorEstimate {
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
    pub n_per_rep: usize,
}

impl ErrorEstimate {
    pub fn from_fractions(fractions: &[f64], n_per_rep: usize) -> Self {
        let s: RunningStats = fractions.iter().copied().collect();
        Self {
            mean: s.mean(),
            std: s.sample_std(),
            reps: fractions.len(),
            n_per_rep,
        }
    }

    /// Standard error of the mean. Falls back to the binomial error when the
    /// repetitions happen to agree exactly.
    pub fn standard_error(&self) -> f64 {
        let spread = self.std / (self.reps as f64).sqrt();
        let total = (self.reps * self.n_per_rep) as f64;
        let binomial = (self.mean * (1.0 - self.mean) / total).sqrt();
        spread.max(binomial)
    }
}

/// One-sided exact sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips.
pub fn sign_test_p_value(wins: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in wins..=trials {
        p += binomial(trials, k);
    }
    p / 2f64.powi(trials as i32)
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
