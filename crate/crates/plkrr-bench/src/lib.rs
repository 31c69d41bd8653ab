//! Deterministic data builders shared by the benchmark targets.

use plkrr_core::sim::{generate, DGPSpec};
use plkrr_core::PLDataset;

/// A balanced dataset with `n_total` rows split over `s` groups.
pub fn grouped(n_total: usize, s: usize, seed: u64) -> PLDataset {
    generate(&DGPSpec::heterogeneous(n_total, s, seed).expect("valid sizes"), 0)
        .expect("generation succeeds")
}

/// One synthetic group as owned buffers `(x, z, y, p)` for the group solver.
pub fn single_group(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let data = grouped(n, 1, seed);
    let g = data.group(0);
    (g.x.to_vec(), g.z.to_vec(), g.y.to_vec(), data.p())
}
