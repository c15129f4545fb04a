use nalgebra::DVector;
use num_complex::Complex64;

use super::lstsq::least_squares;
use super::{Result, SolverError};
use crate::signal::MeasurementMatrix;

/// Largest device count the exhaustive search accepts.
pub const ORACLE_MAX_DEVICES: usize = 20;

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub support: Vec<usize>,
    pub residual_norm: f64,
    pub supports_checked: usize,
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = (k <= n).then(|| (0..k).collect::<Vec<usize>>());
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut c = current.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if c[i] < n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                next = Some(c);
                break;
            }
        }
        Some(current)
    })
}

/// Support of size `m` with the smallest least-squares residual; the
/// lexicographically first support wins exact ties.
pub fn exhaustive_oracle(phi: &MeasurementMatrix, y: &DVector<Complex64>, m: usize) -> Result<OracleOutcome> {
    let a = phi.matrix();
    let n = a.ncols();
    if n > ORACLE_MAX_DEVICES {
        return Err(SolverError::TooLarge {
            devices: n,
            limit: ORACLE_MAX_DEVICES,
        });
    }
    if y.len() != a.nrows() {
        return Err(SolverError::Dimension(format!("y has {} entries, Phi has {} rows", y.len(), a.nrows())));
    }
    if m > n {
        return Err(SolverError::Config(format!("support size {m} exceeds {n} devices")));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut checked = 0;
    for support in combinations(n, m) {
        let r = least_squares(a, &support, y).residual_norm();
        checked += 1;
        if best.as_ref().is_none_or(|(_, b)| r < *b) {
            best = Some((support, r));
        }
    }
    let (support, residual_norm) = best.expect("at least one support");
    Ok(OracleOutcome {
        support,
        residual_norm,
        supports_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample_frame_with_variance, System};
    use nalgebra::DMatrix;
    use rand::SeedableRng;

    #[test]
    fn lexicographic_combinations() {
        let all: Vec<Vec<usize>> = combinations(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(6, 3).count(), 20);
        assert_eq!(combinations(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(2, 3).count(), 0);
    }

    #[test]
    fn full_support_gives_full_residual() {
        let sys = System::build(4, 6, 2, None, 0).unwrap();
        let y = DVector::from_fn(4, |i, _| Complex64::new(i as f64, 1.0));
        let out = exhaustive_oracle(&sys.phi, &y, 6).unwrap();
        assert_eq!(out.support, vec![0, 1, 2, 3, 4, 5]);
        let full = least_squares(sys.phi.matrix(), &out.support, &y).residual_norm();
        assert_eq!(out.residual_norm, full);
        assert_eq!(out.supports_checked, 1);
    }

    #[test]
    fn recovers_noiseless_supports() {
        let sys = System::build(4, 6, 2, None, 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for m in 1..=2 {
            for _ in 0..200 {
                let f = sample_frame_with_variance(&sys.phi, m, 0.0, &mut rng).unwrap();
                assert_eq!(exhaustive_oracle(&sys.phi, &f.y, m).unwrap().support, f.activity.support());
            }
        }
    }

    #[test]
    fn default_codebook_has_one_singular_quadruple() {
        // devices 1..=4 close a 4-cycle whose phases cancel, so any three of
        // them span the fourth and m = 3 supports inside it are ambiguous
        let sys = System::build(4, 6, 2, None, 0).unwrap();
        let a = sys.phi.matrix();
        let mut singular = Vec::new();
        for s in combinations(6, 4) {
            let sub = DMatrix::from_fn(4, 4, |r, c| a[(r, s[c])]);
            if sub.singular_values().min() < 1e-9 {
                singular.push(s);
            }
        }
        assert_eq!(singular, vec![vec![1, 2, 3, 4]]);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let f = sample_frame_with_variance(&sys.phi, 3, 0.0, &mut rng).unwrap();
            let truth = f.activity.support();
            let out = exhaustive_oracle(&sys.phi, &f.y, 3).unwrap();
            if !truth.iter().all(|n| (1..=4).contains(n)) {
                assert_eq!(out.support, truth);
            } else {
                assert!(out.residual_norm < 1e-9);
            }
        }
    }

    #[test]
    fn guard_and_dimension_errors() {
        let big = MeasurementMatrix::from_matrix(DMatrix::from_element(4, 21, Complex64::new(1.0, 0.0)));
        assert!(matches!(
            exhaustive_oracle(&big, &DVector::zeros(4), 1),
            Err(SolverError::TooLarge { .. })
        ));
        let sys = System::build(4, 6, 2, None, 0).unwrap();
        assert!(exhaustive_oracle(&sys.phi, &DVector::zeros(3), 1).is_err());
        assert!(exhaustive_oracle(&sys.phi, &DVector::zeros(4), 7).is_err());
    }
}
