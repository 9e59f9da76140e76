//! Quantum walks over honeycomb, triangular and square lattices whose local
//! coin unitaries are compiled from a (2+1)-dimensional metric, together with
//! a continuum reference solver and a comparison harness.
//!
//! The crate is organized bottom-up:
//!
//! * [`expr`] - tiny arithmetic expression language for metric entries
//! * [`geometry`] - metrics, tetrads and the deformation field they induce
//! * [`coin`] - compilation of per-site coin unitaries from the deformation
//! * [`walk`] - the lattice walks themselves
//! * [`oracle`] - continuum evolution used as a reference
//! * [`harness`] - distances, dispersion and convergence studies

pub mod coin;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod oracle;
pub mod walk;

pub use num_complex::Complex64;

/// 2x2 complex matrix, the workhorse for spin-1/2 coins.
pub type Mat2 = nalgebra::Matrix2<Complex64>;

/// Deterministic pairwise sum; keeps rounding error at O(log n) ulps and is
/// independent of parallel partitioning because it is always run serially.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::pairwise_sum;

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(pairwise_sum(&xs), 15.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[7.5]), 7.5);
    }

    #[test]
    fn pairwise_sum_is_accurate_on_many_terms() {
        let xs = vec![0.1; 1 << 16];
        let err = (pairwise_sum(&xs) - 6553.6).abs() / 6553.6;
        assert!(err < 1e-14, "relative error {err}");
    }
}
