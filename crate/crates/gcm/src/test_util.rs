//! Deterministic random data helpers shared by the unit tests.

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal, StudentT};
use rand_xoshiro::Xoshiro256PlusPlus;

pub struct TestRng(Xoshiro256PlusPlus);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.random::<u64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

/// T i.i.d. uniform values in (-1, 1).
pub fn uniform_series(rng: &mut TestRng, t: usize) -> Vec<f64> {
    (0..t).map(|_| 2.0 * rng.next_f64() - 1.0).collect()
}

/// T i.i.d. Student-t values with `nu` degrees of freedom.
pub fn student_t_series(rng: &mut TestRng, t: usize, nu: f64) -> Vec<f64> {
    let dist = StudentT::new(nu).expect("nu > 0");
    (0..t).map(|_| dist.sample(&mut rng.0)).collect()
}

/// A shuffled integer grid 0..t: distinct values with unit minimum gap.
pub fn shuffled_grid(rng: &mut TestRng, t: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..t).map(|k| k as f64).collect();
    // Fisher-Yates
    for k in (1..t).rev() {
        let j = (rng.next_u64() % (k as u64 + 1)) as usize;
        v.swap(k, j);
    }
    v
}

/// T i.i.d. standard normal values.
pub fn gaussian_series(rng: &mut TestRng, t: usize) -> Vec<f64> {
    (0..t).map(|_| rng.normal()).collect()
}
