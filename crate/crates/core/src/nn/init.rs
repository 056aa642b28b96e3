use rand::Rng;
use rand_distr::StandardNormal;

use super::{Architecture, NnError, ParameterSet, Tensor};

/// Random matrix with orthonormal rows (if rows ≤ cols) or columns.
///
/// Gaussian vectors are orthonormalized with two passes of modified
/// Gram-Schmidt, which keeps the residual at machine precision.
pub fn orthogonal_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor, NnError> {
    if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
        return Err(NnError::InvalidShape(shape.to_vec()));
    }
    let (rows, cols) = (shape[0], shape[1]);
    let count = rows.min(cols);
    let dim = rows.max(cols);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }

    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = if rows <= cols {
                basis[r][c]
            } else {
                basis[c][r]
            };
        }
    }
    Tensor::new(vec![rows, cols], data)
}

/// Fresh parameters for `arch`: zero biases, orthogonal (or scaled Gaussian)
/// 2-d weights.
pub fn init_network<R: Rng + ?Sized>(
    arch: &Architecture,
    orthogonal: bool,
    rng: &mut R,
) -> Result<ParameterSet, NnError> {
    let mut params = ParameterSet::new();
    for spec in arch.layers() {
        for (name, shape) in spec.tensor_shapes() {
            let t = if shape.len() == 2 {
                random_matrix(&shape, orthogonal, rng)?
            } else {
                Tensor::zeros(&shape)
            };
            params.insert(spec.layer_id, name, t);
        }
    }
    Ok(params)
}

pub(crate) fn random_matrix<R: Rng + ?Sized>(
    shape: &[usize],
    orthogonal: bool,
    rng: &mut R,
) -> Result<Tensor, NnError> {
    if orthogonal {
        orthogonal_init(shape, rng)
    } else {
        let scale = 1.0 / (shape[1] as f64).sqrt();
        let data = (0..shape[0] * shape[1])
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gram_residual(t: &Tensor) -> f64 {
        let (r, c) = (t.rows(), t.cols());
        let mut worst: f64 = 0.0;
        if r <= c {
            for i in 0..r {
                for j in 0..r {
                    let d: f64 = (0..c).map(|k| t.get(i, k) * t.get(j, k)).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((d - e).abs());
                }
            }
        } else {
            for i in 0..c {
                for j in 0..c {
                    let d: f64 = (0..r).map(|k| t.get(k, i) * t.get(k, j)).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((d - e).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn one_by_one_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = orthogonal_init(&[1, 1], &mut rng).unwrap();
        assert!((t.data()[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn square_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = orthogonal_init(&[4, 4], &mut rng).unwrap();
        assert!(gram_residual(&t) < 1e-10);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = orthogonal_init(&[5, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = orthogonal_init(&[5, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_matrix_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(orthogonal_init(&[3], &mut rng).is_err());
        assert!(orthogonal_init(&[2, 2, 2], &mut rng).is_err());
    }

    #[test]
    fn biases_start_at_zero() {
        let arch = Architecture::agent_default(5, 8, 3).unwrap();
        let p = init_network(&arch, true, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (_, name, t) in p.iter() {
            if t.shape().len() == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert_eq!(p.num_params(), arch.num_params());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn orthonormal_up_to_64(r in 1usize..=64, c in 1usize..=64, seed in any::<u64>()) {
            let t = orthogonal_init(&[r, c], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(gram_residual(&t) < 1e-10);
        }
    }
}
