//! Shared helpers for unit tests: a tiny deterministic RNG and random
//! admissible cone generators.

use crate::cone::{CostMatrix, PolarSection};

/// SplitMix64; deterministic and dependency-free for test data.
pub struct TestRng(u64);

pub fn rng(seed: u64) -> TestRng {
    TestRng(seed.wrapping_add(0x9e3779b97f4a7c15))
}

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

pub fn uniform(r: &mut TestRng) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Random normalized cost matrix with rates in (0.01, 0.5].
pub fn random_costs(r: &mut TestRng, dc: usize) -> CostMatrix {
    let n = 1 + dc;
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rows[i][j] = 0.01 + uniform(r) * 0.49;
            }
        }
    }
    let c = CostMatrix::new(dc, &rows).unwrap();
    c.normalize().unwrap().0
}

pub fn random_section(r: &mut TestRng, dc: usize) -> PolarSection {
    PolarSection::build(&random_costs(r, dc)).unwrap()
}
