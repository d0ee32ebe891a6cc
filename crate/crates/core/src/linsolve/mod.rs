//! Sparse direct solves: analyze once, factor per matrix, solve many.

mod ldl;
mod ordering;
mod sparse;

pub use ldl::{LdlFactor, SymbolicLdl, PIVOT_TOLERANCE, RESIDUAL_TOLERANCE};
pub use ordering::nested_dissection;
pub use sparse::{norm2, norm_inf, CscMatrix, Triplets};

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::sync::Arc;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn from_dense(d: &[Vec<f64>]) -> CscMatrix {
        let n = d.len();
        let mut t = Triplets::new(n, n);
        for (i, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.to_csc()
    }

    #[test]
    fn diagonal_solve_is_componentwise_division() {
        let mut t = Triplets::new(4, 4);
        let diag = [2.0, -4.0, 0.5, 10.0];
        for (i, &v) in diag.iter().enumerate() {
            t.push(i, i, v);
        }
        let f = LdlFactor::new(&t.to_csc(), &[]).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        for i in 0..4 {
            assert_eq!(x[i], [1.0, 2.0, 3.0, 4.0][i] / diag[i]);
        }
    }

    #[test]
    fn identity_pattern_has_no_fill() {
        let s = SymbolicLdl::analyze(&CscMatrix::identity(7), &[]).unwrap();
        assert_eq!(s.fill(), 0);
        let mut p = s.permutation().to_vec();
        p.sort_unstable();
        assert_eq!(p, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn random_spd_matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let mut a = vec![vec![0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    a[i][j] = (0..5).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
                }
            }
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let expected = dense_solve(a.clone(), b.clone());
            let x = LdlFactor::new(&from_dense(&a), &[]).unwrap().solve(&b).unwrap();
            for i in 0..5 {
                assert!((x[i] - expected[i]).abs() <= 1e-12, "{} vs {}", x[i], expected[i]);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(LdlFactor::new(&a, &[]), Err(crate::Error::Singular { .. })));
    }

    #[test]
    fn saddle_point_with_delayed_constraint() {
        // [[2, 0, 1], [0, 3, 1], [1, 1, 0]] has a zero diagonal in the last row.
        let a = from_dense(&[vec![2.0, 0.0, 1.0], vec![0.0, 3.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let f = LdlFactor::new(&a, &[2]).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = f.solve(&b).unwrap();
        let expected = dense_solve(a.to_dense(), b.to_vec());
        for i in 0..3 {
            assert!((x[i] - expected[i]).abs() < 1e-12);
        }
        assert_eq!(f.negative_pivots(), 1);
    }

    #[test]
    fn fill_does_not_depend_on_entry_order() {
        let n = 60;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 4.0));
            for &j in &[i + 1, i + 7, i + 13] {
                if j < n {
                    entries.push((i, j, -1.0));
                    entries.push((j, i, -1.0));
                }
            }
        }
        let build = |e: &[(usize, usize, f64)]| {
            let mut t = Triplets::new(n, n);
            for &(i, j, v) in e {
                t.push(i, j, v);
            }
            t.to_csc()
        };
        let a = build(&entries);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in (1..entries.len()).rev() {
            let j = rng.random_range(0..=k);
            entries.swap(k, j);
        }
        let b = build(&entries);
        assert!(a.same_pattern(&b));
        let fa = SymbolicLdl::analyze(&a, &[]).unwrap().fill();
        let fb = SymbolicLdl::analyze(&b, &[]).unwrap().fill();
        assert_eq!(fa, fb);
    }

    #[test]
    fn one_analysis_serves_many_factorizations() {
        let n = 30;
        let build = |shift: f64| {
            let mut t = Triplets::new(n, n);
            for i in 0..n {
                t.push(i, i, 2.0 + shift);
                if i + 1 < n {
                    t.push(i, i + 1, -1.0);
                    t.push(i + 1, i, -1.0);
                }
            }
            t.to_csc()
        };
        let symbolic = Arc::new(SymbolicLdl::analyze(&build(0.0), &[]).unwrap());
        for k in 0..10 {
            let a = build(k as f64 * 0.1);
            let f = LdlFactor::factor(symbolic.clone(), &a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let x = f.solve(&b).unwrap();
            let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
            assert!(norm_inf(&r) <= RESIDUAL_TOLERANCE * norm_inf(&b));
        }
    }

    #[test]
    fn pattern_mismatch_is_reported() {
        let symbolic = Arc::new(SymbolicLdl::analyze(&CscMatrix::identity(3), &[]).unwrap());
        let a = from_dense(&[vec![1.0, 0.5, 0.0], vec![0.5, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!(matches!(LdlFactor::factor(symbolic, &a), Err(crate::Error::PatternMismatch)));
    }

    #[test]
    fn factorization_is_deterministic() {
        let a = from_dense(&[
            vec![4.0, 1.0, 0.0, 1.0],
            vec![1.0, 3.0, 1.0, 0.0],
            vec![0.0, 1.0, -2.0, 0.5],
            vec![1.0, 0.0, 0.5, -1.0],
        ]);
        let b = [1.0, -1.0, 2.0, 0.5];
        let x1 = LdlFactor::new(&a, &[]).unwrap().solve(&b).unwrap();
        let x2 = LdlFactor::new(&a, &[]).unwrap().solve(&b).unwrap();
        assert_eq!(x1, x2);
    }
}
