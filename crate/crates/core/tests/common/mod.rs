//! Oracles shared by the integration suites. Nothing here calls into the
//! code paths it checks beyond residual evaluation.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traffic_mtl::data::WindowedDataset;
use traffic_mtl::linalg::{Matrix, Vector};
use traffic_mtl::network::{Dims, MlpParams};

pub fn random_params(seed: u64, dims: Dims) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..dims.num_params())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    MlpParams::unflatten(dims, &Vector::new(x).unwrap()).unwrap()
}

pub fn random_data(seed: u64, n: usize, m: usize, k: usize) -> WindowedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    WindowedDataset::new(
        Matrix::new(n, m, inputs).unwrap(),
        Matrix::new(n, k, targets).unwrap(),
        (0..n).collect(),
    )
    .unwrap()
}

/// Central finite-difference Jacobian of the residual vector.
pub fn fd_jacobian(p: &MlpParams, data: &WindowedDataset, h: f64) -> Vec<Vec<f64>> {
    let x = p.flatten().into_inner();
    let rows = data.len() * data.output_dim();
    let mut jac = vec![vec![0.0; x.len()]; rows];
    for c in 0..x.len() {
        let mut plus = x.clone();
        plus[c] += h;
        let mut minus = x.clone();
        minus[c] -= h;
        let ep = p.with_flat(&Vector::new(plus).unwrap()).unwrap().error_vector(data).unwrap();
        let em = p.with_flat(&Vector::new(minus).unwrap()).unwrap().error_vector(data).unwrap();
        for r in 0..rows {
            jac[r][c] = (ep[r] - em[r]) / (2.0 * h);
        }
    }
    jac
}

/// Entrywise relative error, with magnitudes below `floor` treated as `floor`.
pub fn max_relative_error(analytic: &Matrix, fd: &[Vec<f64>], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, row) in fd.iter().enumerate() {
        for (c, &f) in row.iter().enumerate() {
            let a = analytic[(r, c)];
            let denom = a.abs().max(f.abs()).max(floor);
            worst = worst.max((a - f).abs() / denom);
        }
    }
    worst
}
