//! The gap-dynamics matrices P_k = I + U_k/6 and their spectra.
//!
//! P_k is the transition matrix of a weighted line graph with node weights
//! w = (3, 6, ..., 6, 3), so it is self-adjoint in the inner product
//! <x, y> = sum w_i x_i y_i. Conjugating by diag(w)^{1/2} gives a symmetric
//! matrix with the same eigenvalues, which cyclic Jacobi diagonalizes.

use crate::error::{CoverageError, Result};
use crate::static_law::GapVector;

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TridiagonalSystem {
    k: usize,
    /// Integer stencil U, row-major.
    stencil: Vec<i64>,
    /// P = I + U/6, row-major.
    transition: Vec<f64>,
    weights: Vec<f64>,
}

/// Row i of U_k as (column, value) pairs.
fn stencil_row(k: usize, i: usize) -> Vec<(usize, i64)> {
    let last = k - 1;
    if k == 3 && i == 1 {
        return vec![(0, 2), (1, -4), (2, 2)];
    }
    match i {
        0 => vec![(0, -4), (1, 4)],
        i if i == last => vec![(last - 1, 4), (last, -4)],
        1 => vec![(0, 2), (1, -5), (2, 3)],
        i if i == last - 1 => vec![(i - 1, 3), (i, -5), (i + 1, 2)],
        i => vec![(i - 1, 3), (i, -6), (i + 1, 3)],
    }
}

pub fn build_system(k: usize) -> Result<TridiagonalSystem> {
    if k < 3 {
        return Err(CoverageError::Domain(format!("system dimension k = {k} must be at least 3")));
    }
    let mut stencil = vec![0i64; k * k];
    for i in 0..k {
        for (j, v) in stencil_row(k, i) {
            stencil[i * k + j] = v;
        }
    }
    let transition = stencil
        .iter()
        .enumerate()
        .map(|(idx, &u)| {
            let diag = if idx / k == idx % k { 6 } else { 0 };
            (diag + u) as f64 / 6.0
        })
        .collect();
    let mut weights = vec![6.0; k];
    weights[0] = 3.0;
    weights[k - 1] = 3.0;
    Ok(TridiagonalSystem { k, stencil, transition, weights })
}

impl TridiagonalSystem {
    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn u(&self, i: usize, j: usize) -> i64 {
        self.stencil[i * self.k + j]
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.k + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// d -> P d.
    pub fn apply(&self, d: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(d.len())?;
        let k = self.k;
        Ok((0..k)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(k - 1);
                (lo..=hi).map(|j| self.p(i, j) * d[j]).sum()
            })
            .collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.k {
            return Err(CoverageError::DimensionMismatch { expected: self.k, got });
        }
        Ok(())
    }

    /// D^{1/2} P D^{-1/2}, symmetric when P is self-adjoint under the weights.
    pub fn symmetrized(&self) -> Vec<f64> {
        let k = self.k;
        let mut s = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                s[i * k + j] = (self.weights[i] / self.weights[j]).sqrt() * self.p(i, j);
            }
        }
        s
    }

    /// <x, y> = sum w_i x_i y_i.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn weighted_norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).sqrt()
    }
}

/// Eigenvalues of P in ascending order.
pub fn spectrum(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let k = sys.k;
    let s = sys.symmetrized();
    let asym = (0..k)
        .map(|i| (0..k).map(|j| (s[i * k + j] - s[j * k + i]).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if asym > SYMMETRY_TOL {
        return Err(CoverageError::Numerical(format!(
            "symmetrized transition matrix is not symmetric (residual {asym:e})"
        )));
    }
    let mut eig = jacobi_eigenvalues(s, k)?;
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations,
/// sweeping until the off-diagonal Frobenius norm drops to 1e-12.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, k: usize) -> Result<Vec<f64>> {
    if a.len() != k * k {
        return Err(CoverageError::DimensionMismatch { expected: k * k, got: a.len() });
    }
    let off_norm = |a: &[f64]| {
        let mut sum = 0.0;
        for p in 0..k {
            for q in p + 1..k {
                sum += 2.0 * a[p * k + q] * a[p * k + q];
            }
        }
        sum.sqrt()
    };

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= JACOBI_OFF_TOL {
            return Ok((0..k).map(|i| a[i * k + i]).collect());
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * k + p];
                    let arq = a[r * k + q];
                    let np = c * arp - s * arq;
                    let nq = s * arp + c * arq;
                    a[r * k + p] = np;
                    a[p * k + r] = np;
                    a[r * k + q] = nq;
                    a[q * k + r] = nq;
                }
                a[p * k + p] -= t * apq;
                a[q * k + q] += t * apq;
                a[p * k + q] = 0.0;
                a[q * k + p] = 0.0;
            }
        }
    }
    Err(CoverageError::Numerical(format!(
        "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

/// max(|lambda_2|, |lambda_k|) for an ascending spectrum whose top entry is 1.
pub fn second_modulus(ascending: &[f64]) -> f64 {
    let k = ascending.len();
    ascending[k - 2].abs().max(ascending[0].abs())
}

/// 1 - 1/(3k^2).
pub fn contraction_bound(k: usize) -> f64 {
    1.0 - 1.0 / (3.0 * (k * k) as f64)
}

/// Common limit of all gaps: <d0, 1> / <1, 1>.
pub fn predict_limit(sys: &TridiagonalSystem, d0: &GapVector) -> Result<f64> {
    sys.check_dim(d0.len())?;
    let w = sys.weights();
    let num: f64 = w.iter().zip(d0.as_slice()).map(|(w, d)| w * d).sum();
    Ok(num / w.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{AgentConfiguration, DensityField};
    use crate::rng::SplitMix64;
    use crate::static_law::{gap_vector, static_step};

    /// U_k derived independently from the mass-coordinate update: agent j
    /// moves by s_j (d_j - d_{j-1}) with s = 1/3 at the two ends and 1/2
    /// inside, and each gap is a fixed combination of adjacent moves.
    fn derived_stencil(k: usize) -> Vec<Vec<f64>> {
        let n = k - 1;
        let s = |j: usize| if j == 1 || j == n { 1.0 / 3.0 } else { 0.5 };
        let mut u = vec![vec![0.0; k]; k];
        u[0][0] -= 2.0 * s(1) * 6.0;
        u[0][1] += 2.0 * s(1) * 6.0;
        for i in 1..n {
            u[i][i + 1] += 6.0 * s(i + 1);
            u[i][i] -= 6.0 * s(i + 1);
            u[i][i] -= 6.0 * s(i);
            u[i][i - 1] += 6.0 * s(i);
        }
        u[n][n] -= 2.0 * s(n) * 6.0;
        u[n][n - 1] += 2.0 * s(n) * 6.0;
        u
    }

    #[test]
    fn displayed_matrices() {
        let s3 = build_system(3).unwrap();
        let want = [[1.0 / 3.0, 2.0 / 3.0, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.0, 2.0 / 3.0, 1.0 / 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((s3.p(i, j) - want[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!([s3.u(0, 0), s3.u(0, 1), s3.u(0, 2)], [-4, 4, 0]);
        let s4 = build_system(4).unwrap();
        assert_eq!((0..4).map(|j| s4.u(1, j)).collect::<Vec<_>>(), vec![2, -5, 3, 0]);
        let s6 = build_system(6).unwrap();
        assert_eq!((0..6).map(|j| s6.u(2, j)).collect::<Vec<_>>(), vec![0, 3, -6, 3, 0, 0]);
        assert!(build_system(2).is_err());
    }

    #[test]
    fn stencil_matches_mass_coordinate_derivation() {
        for k in 3..40 {
            let sys = build_system(k).unwrap();
            let derived = derived_stencil(k);
            for i in 0..k {
                for j in 0..k {
                    assert_eq!(sys.u(i, j) as f64, derived[i][j], "k={k} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn system_invariants() {
        for k in 3..60 {
            let sys = build_system(k).unwrap();
            let w = sys.weights();
            assert_eq!(w.iter().sum::<f64>(), 6.0 * (k - 1) as f64);
            for i in 0..k {
                let row: f64 = (0..k).map(|j| sys.p(i, j)).sum();
                assert!((row - 1.0).abs() < 1e-15);
                for j in 0..k {
                    assert!(sys.p(i, j) >= 0.0);
                    assert!((w[i] * sys.p(i, j) - w[j] * sys.p(j, i)).abs() < 1e-14);
                }
            }
            if k >= 4 {
                // Edge weights w_ij = w_i P_ij: self-loops of 1 at nodes 1, 2, k-1, k,
                // 2 on the two end edges, 3 elsewhere.
                let wij = |i: usize, j: usize| (w[i] * sys.p(i, j)).round();
                for i in 0..k {
                    let self_loop = if i <= 1 || i >= k - 2 { 1.0 } else { 0.0 };
                    assert_eq!(wij(i, i), self_loop, "k={k} node {i}");
                }
                for i in 0..k - 1 {
                    let edge = if i == 0 || i == k - 2 { 2.0 } else { 3.0 };
                    assert_eq!(wij(i, i + 1), edge);
                }
            }
        }
    }

    #[test]
    fn spectrum_k3() {
        let eig = spectrum(&build_system(3).unwrap()).unwrap();
        for (e, w) in eig.iter().zip([-1.0 / 3.0, 1.0 / 3.0, 1.0]) {
            assert!((e - w).abs() < 1e-12, "{eig:?}");
        }
    }

    #[test]
    fn top_eigenvalue_is_one_with_constant_eigenvector() {
        for k in [3, 4, 5, 17, 50] {
            let sys = build_system(k).unwrap();
            let eig = spectrum(&sys).unwrap();
            assert!((eig[k - 1] - 1.0).abs() < 1e-10);
            let ones = vec![1.0; k];
            assert!(sys.apply(&ones).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn k10_within_bound() {
        let eig = spectrum(&build_system(10).unwrap()).unwrap();
        assert!(second_modulus(&eig) <= 1.0 - 1.0 / 300.0);
    }

    #[test]
    fn jacobi_on_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut e = jacobi_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2).unwrap();
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        assert!(jacobi_eigenvalues(vec![1.0; 3], 2).is_err());
    }

    #[test]
    fn predict_limit_examples() {
        let s3 = build_system(3).unwrap();
        let d0 = GapVector::new(vec![0.4, 0.4, 0.8]);
        assert!((predict_limit(&s3, &d0).unwrap() - 0.5).abs() < 1e-15);
        let s7 = build_system(7).unwrap();
        assert!((predict_limit(&s7, &GapVector::new(vec![0.37; 7])).unwrap() - 0.37).abs() < 1e-15);
        let s6 = build_system(6).unwrap();
        assert!((predict_limit(&s6, &GapVector::new(vec![0.2; 6])).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            predict_limit(&s6, &d0),
            Err(CoverageError::DimensionMismatch { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn weighted_sum_and_rate_along_static_runs() {
        let mut rng = SplitMix64::new(21);
        for trial in 0..10 {
            let f = DensityField::random_piecewise(&mut rng, 1 + trial % 4);
            let n = 2 + (rng.next_u64() % 12) as usize;
            let sys = build_system(n + 1).unwrap();
            let eig = spectrum(&sys).unwrap();
            let rate = second_modulus(&eig);
            let mut config =
                AgentConfiguration::from_unsorted((0..n).map(|_| rng.next_f64()).collect()).unwrap();
            let d0 = gap_vector(&f, &config).unwrap();
            let c1 = predict_limit(&sys, &d0).unwrap();
            assert!((c1 - f.total_mass() / n as f64).abs() < 1e-12 * f.total_mass());
            let conserved = sys.inner(d0.as_slice(), &vec![1.0; n + 1]);
            let dev = |d: &[f64]| sys.weighted_norm(&d.iter().map(|v| v - c1).collect::<Vec<_>>());
            let e0 = dev(d0.as_slice());
            for t in 1..=300 {
                config = static_step(&f, &config).unwrap();
                let d = gap_vector(&f, &config).unwrap();
                let sum = sys.inner(d.as_slice(), &vec![1.0; n + 1]);
                assert!((sum - conserved).abs() <= 1e-12 * conserved);
                assert!(dev(d.as_slice()) <= rate.powi(t) * e0 + 1e-9);
            }
            let d = gap_vector(&f, &config).unwrap();
            if rate.powi(300) < 1e-10 {
                assert!(d.as_slice().iter().all(|v| (v - c1).abs() < 1e-8));
            }
        }
    }
}
