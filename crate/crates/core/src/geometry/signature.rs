use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::PseudoMetric;
use crate::cost::DerivativeSource;

/// `(k₊, k₀, k₋)` eigenvalue counts of `h`, and `rank = 2·rank(C)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub k_plus: usize,
    pub k_zero: usize,
    pub k_minus: usize,
    pub rank: usize,
}

impl Signature {
    /// `k₊ = k₋ = rank/2` and the counts add up to the dimension.
    pub fn is_consistent(&self, dim_x: usize, dim_y: usize) -> bool {
        self.k_plus == self.k_minus
            && self.k_plus + self.k_zero + self.k_minus == dim_x + dim_y
            && self.rank == 2 * self.k_plus
            && self.k_plus <= dim_x.min(dim_y)
    }
}

/// Relative rank threshold: 1e-8 for closed-form derivatives, 1e-5 when the
/// mixed Hessian comes from finite differences.
pub fn default_rank_tol(source: DerivativeSource) -> f64 {
    match source {
        DerivativeSource::Analytic => 1e-8,
        DerivativeSource::FiniteDifference => 1e-5,
    }
}

/// Signature of `h`. Eigenvalues with `|λ| <= tol·max(max|λ|, ½)` count as
/// zero; singular values of `C` below `tol·max(σ_max, 1)` do not count
/// towards the rank (the same cut, since the eigenvalues of `h` are `±σ/2`).
pub fn signature(m: &PseudoMetric, tol: f64) -> Signature {
    let sym = (&m.matrix + m.matrix.transpose()) * 0.5;
    let asym = (&m.matrix - &sym).amax();
    debug_assert!(asym <= 1e-10 * m.matrix.amax().max(1.0), "pseudo-metric asymmetric by {asym}");
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let lam_max = eig.amax();
    let cut = tol * lam_max.max(0.5);
    let k_plus = eig.iter().filter(|l| **l > cut).count();
    let k_minus = eig.iter().filter(|l| **l < -cut).count();
    let k_zero = eig.len() - k_plus - k_minus;

    let rank_c = if m.cross_block.is_empty() {
        0
    } else {
        let sv = m.cross_block.clone().singular_values();
        let s_cut = tol * sv.amax().max(1.0);
        sv.iter().filter(|s| **s > s_cut).count()
    };
    Signature { k_plus, k_zero, k_minus, rank: 2 * rank_c }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::cost::CostSpec;
    use crate::geometry::{hessian_h, BasePoint};

    #[test]
    fn signature_examples() {
        let b = CostSpec::named("bilinear", 2).build().unwrap();
        let h = hessian_h(&b, &BasePoint::new(&[0.1, 0.2], &[0.3, 0.4])).unwrap();
        assert_eq!(signature(&h, 1e-8), Signature { k_plus: 2, k_zero: 0, k_minus: 2, rank: 4 });

        let circ = CostSpec::named("circle_chord", 1).build().unwrap();
        let h = hessian_h(&circ, &BasePoint::new(&[0.0], &[PI / 2.0])).unwrap();
        assert_eq!(signature(&h, 1e-8), Signature { k_plus: 0, k_zero: 2, k_minus: 0, rank: 0 });
        let h = hessian_h(&circ, &BasePoint::new(&[0.0], &[0.3])).unwrap();
        assert_eq!(signature(&h, 1e-8).rank, 2);

        let zero = CostSpec { a: Some(vec![vec![0.0; 3]; 2]), ..CostSpec::named("synthetic", 1) }.build().unwrap();
        let h = hessian_h(&zero, &BasePoint::new(&[0.1, 0.2], &[0.0, 0.0, 0.5])).unwrap();
        let s = signature(&h, 1e-8);
        assert_eq!(s, Signature { k_plus: 0, k_zero: 5, k_minus: 0, rank: 0 });
        assert!(s.is_consistent(2, 3));
    }
}
