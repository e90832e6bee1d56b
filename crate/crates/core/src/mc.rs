//! Seeded Monte Carlo with results independent of the worker count.
//!
//! Samples are split into fixed-size batches; batch `b` draws from a
//! ChaCha8 generator seeded with the run seed on stream `b`. Batches run on
//! the ambient rayon pool and their moments are merged in batch order, so
//! the output is bitwise identical for any number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per batch (and per random stream).
pub const BATCH: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self { samples, seed }
    }
}

/// The generator for one stream of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; `NaN` below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean; `+inf` below two samples.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Runs `cfg.samples` draws of `draw`, which writes `width` values per
/// sample, and returns the moments of each value.
pub fn run<F>(cfg: McConfig, width: usize, draw: F) -> Vec<Moments>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let batches = cfg.samples.div_ceil(BATCH);
    let partial: Vec<Vec<Moments>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(cfg.seed, b);
            let len = BATCH.min(cfg.samples - b * BATCH);
            let mut moments = vec![Moments::default(); width];
            let mut buf = vec![0.0; width];
            for _ in 0..len {
                draw(&mut rng, &mut buf);
                for (m, x) in moments.iter_mut().zip(&buf) {
                    m.push(*x);
                }
            }
            moments
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for batch in &partial {
        for (t, m) in total.iter_mut().zip(batch) {
            t.merge(m);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|x| all.push(*x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..37].iter().for_each(|x| a.push(*x));
        xs[37..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-14);
    }

    #[test]
    fn independent_of_pool_size() {
        let cfg = McConfig::new(3 * BATCH + 17, 9);
        let draw = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
            out[0] = rng.random::<f64>();
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(cfg, 1, draw));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| run(cfg, 1, draw));
        assert_eq!(one, many);
        assert_eq!(one[0].count(), cfg.samples);
    }

    #[test]
    fn tiny_runs() {
        let m = run(McConfig::new(1, 0), 1, |_, out| out[0] = 2.0);
        assert_eq!(m[0].mean(), 2.0);
        assert!(m[0].stderr().is_infinite());
        assert_eq!(run(McConfig::new(0, 0), 2, |_, _| {})[1].count(), 0);
    }
}
