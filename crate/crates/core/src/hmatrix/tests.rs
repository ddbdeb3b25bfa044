use super::*;
use crate::clustering::{build_block_partition, build_cluster_tree, Block};
use crate::fem::{assemble_system, build_dual_system, Coefficients, CooBuilder};
use crate::mesh::{generate_mesh, Domain, GradingSpec, Point2};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn identity_sparse(n: usize, scale: f64) -> SparseMatrix {
    let mut b = CooBuilder::new(n, n);
    for i in 0..n {
        b.push(i, i, scale);
    }
    b.build()
}

fn block(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, seq: usize) -> Block {
    Block {
        rows: rows.collect(),
        cols: cols.collect(),
        row_node: 0,
        col_node: 0,
        seq,
    }
}

/// Partition of an n x n square: one admissible block on `0..k` rows and
/// `k..n` cols, the rest small.
fn corner_partition(n: usize, k: usize) -> BlockPartition {
    BlockPartition::from_blocks(
        n,
        2.0,
        k.max(n - k),
        vec![block(0..k, k..n, 0)],
        vec![block(0..k, 0..k, 1), block(k..n, 0..n, 2)],
        3,
    )
    .unwrap()
}

#[test]
fn invert_scaled_identity() {
    let m = invert_dense(&identity_sparse(3, 2.0), DEFAULT_DENSE_BUDGET).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { 0.5 } else { 0.0 };
            assert!((m[(i, j)] - expected).abs() < 1e-15);
        }
    }
    let one = invert_dense(&identity_sparse(1, 4.0), DEFAULT_DENSE_BUDGET).unwrap();
    assert!((one[(0, 0)] - 0.25).abs() < 1e-15);
}

#[test]
fn invert_rejects_budget_and_singularity() {
    let a = identity_sparse(11, 1.0);
    assert!(matches!(
        invert_dense(&a, 10),
        Err(Error::DenseBudgetExceeded { n: 11, budget: 10, bytes: 968 })
    ));
    let mut b = CooBuilder::new(2, 2);
    b.push(0, 0, 1.0);
    b.push(0, 1, 1.0);
    b.push(1, 0, 1.0);
    b.push(1, 1, 1.0);
    assert!(invert_dense(&b.build(), 10).is_err());
}

#[test]
fn invert_random_spd_matches_cholesky_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 50;
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let spd = &g * g.transpose() + DMatrix::<f64>::identity(n, n) * (n as f64);
    let mut builder = CooBuilder::new(n, n);
    for i in 0..n {
        for j in 0..n {
            builder.push(i, j, spd[(i, j)]);
        }
    }
    let inverse = invert_dense(&builder.build(), DEFAULT_DENSE_BUDGET).unwrap();
    let chol = spd.clone().cholesky().expect("spd");
    for col in [0usize, 17, 49] {
        let mut e = DMatrix::zeros(n, 1);
        e[(col, 0)] = 1.0;
        let oracle = chol.solve(&e);
        for i in 0..n {
            assert!((inverse[(i, col)] - oracle[(i, 0)]).abs() < 1e-10);
        }
    }
}

#[test]
fn full_rank_compression_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 24;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let partition = corner_partition(n, 10);
    let h = compress(&m, &partition, 10).unwrap();
    assert!(h.low_rank.iter().all(|b| b.truncation_error == 0.0));
    assert_eq!(computable_bound(&h), 0.0);
    let back = reconstruct_dense(&h);
    let max_err = (&back - &m).abs().max();
    assert!(max_err <= 1e-12, "max entry error {max_err:.3e}");
}

#[test]
fn rank_one_truncation_of_diagonal_block() {
    // Single admissible 2x2 block diag(3, 1) inside a 4x4 matrix.
    let mut m = DMatrix::<f64>::zeros(4, 4);
    m[(0, 2)] = 3.0;
    m[(1, 3)] = 1.0;
    let partition = BlockPartition::from_blocks(
        4,
        2.0,
        2,
        vec![block(0..2, 2..4, 0)],
        vec![block(0..2, 0..2, 1), block(2..4, 0..4, 2)],
        4,
    )
    .unwrap();
    let h = compress(&m, &partition, 1).unwrap();
    let lr = &h.low_rank[0];
    assert_eq!(lr.rank(), 1);
    assert!((lr.truncation_error - 1.0).abs() < 1e-14);
    assert!((lr.singular_values[0] - 3.0).abs() < 1e-14);
    let reproduced = &lr.x * lr.y.transpose();
    assert!((reproduced[(0, 0)] - 3.0).abs() < 1e-13);
    assert!(reproduced[(1, 1)].abs() < 1e-13);
    // depth 4, max discarded sigma 1.0.
    assert!((computable_bound(&h) - 4.0).abs() < 1e-13);
}

#[test]
fn truncation_error_matches_independent_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows = 30;
    let cols = 20;
    let n = rows + cols;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let partition = corner_partition(n, rows);
    let r = 5;
    let h = compress(&m, &partition, r).unwrap();
    let lr = &h.low_rank[0];
    // Oracle: eigenvalues of B^T B, an algebraic route independent of the
    // factorization used by the compressor.
    let b = DMatrix::from_fn(rows, cols, |i, j| m[(i, rows + j)]);
    let mut eigs: Vec<f64> = (b.transpose() * &b).symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma6 = eigs[r].max(0.0).sqrt();
    assert!(
        (lr.truncation_error - sigma6).abs() <= 1e-10 * sigma6.max(1.0),
        "recorded {} vs oracle {}",
        lr.truncation_error,
        sigma6
    );
    // Blockwise optimality: ||B - XY^T||_2 equals the oracle sigma_{r+1}.
    let diff = &b - &lr.x * lr.y.transpose();
    let mut diff_eigs: Vec<f64> =
        (diff.transpose() * &diff).symmetric_eigenvalues().iter().copied().collect();
    diff_eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let achieved = diff_eigs[0].max(0.0).sqrt();
    assert!((achieved - sigma6).abs() <= 1e-10 * sigma6.max(1.0));
}

#[test]
fn hmatvec_identity_and_zero() {
    let n = 12;
    let m = DMatrix::<f64>::identity(n, n);
    let partition = corner_partition(n, 5);
    let h = compress(&m, &partition, 5).unwrap();
    let x: Vec<f64> = (0..n).map(|i| i as f64 - 4.0).collect();
    let y = hmatvec(&h, &x).unwrap();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-13);
    }
    let zero = vec![0.0; n];
    assert!(hmatvec(&h, &zero).unwrap().iter().all(|&v| v == 0.0));
    assert!(matches!(
        hmatvec(&h, &vec![0.0; n + 1]),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn hmatvec_matches_dense_reconstruction_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let partition = corner_partition(n, 15);
    let h = compress(&m, &partition, 7).unwrap();
    let dense = reconstruct_dense(&h);
    for _ in 0..5 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = hmatvec(&h, &x).unwrap();
        let oracle = &dense * DVector::from_column_slice(&x);
        for i in 0..n {
            assert!((y[i] - oracle[i]).abs() <= 1e-12);
        }
        let yt = hmatvec_transpose(&h, &x).unwrap();
        let oracle_t = dense.transpose() * DVector::from_column_slice(&x);
        for i in 0..n {
            assert!((yt[i] - oracle_t[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn spectral_error_known_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 30;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let partition = corner_partition(n, 12);
    // Exact copy: error zero.
    let h = compress(&m, &partition, 12).unwrap();
    let err = spectral_error(&m, &h, 50, &mut rng).unwrap();
    assert!(err.estimate <= 1e-12);
    assert!(err.frobenius <= 1e-12);
    // Rank-one difference with unit factors: spectral norm one.
    let mut m2 = m.clone();
    let u = DVector::from_fn(12, |i, _| if i == 3 { 1.0 } else { 0.0 });
    let v = DVector::from_fn(n - 12, |j, _| if j == 5 { 1.0 } else { 0.0 });
    for i in 0..12 {
        for j in 0..(n - 12) {
            m2[(i, 12 + j)] += u[i] * v[j];
        }
    }
    let err2 = spectral_error(&m2, &h, 100, &mut rng).unwrap();
    assert!((err2.estimate - 1.0).abs() < 1e-6, "estimate {}", err2.estimate);
    assert!(err2.frobenius >= err2.estimate - 1e-9);
}

#[test]
fn spectral_error_matches_dense_sigma_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 100;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let partition = corner_partition(n, 40);
    let h = compress(&m, &partition, 3).unwrap();
    let err = spectral_error(&m, &h, 300, &mut rng).unwrap();
    let diff = &m - reconstruct_dense(&h);
    let mut eigs: Vec<f64> =
        (diff.transpose() * &diff).symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma1 = eigs[0].sqrt();
    assert!(
        (err.estimate - sigma1).abs() <= 0.01 * sigma1,
        "estimate {} vs oracle {}",
        err.estimate,
        sigma1
    );
    assert!(err.frobenius >= sigma1 - 1e-12);
}

#[test]
fn memory_accounting_arithmetic() {
    // One dense 10x10 block: 800 bytes.
    let h_dense = HMatrix {
        n: 10,
        rank_bound: 1,
        depth: 1,
        low_rank: vec![],
        dense: vec![DenseBlock {
            rows: (0..10).collect(),
            cols: (0..10).collect(),
            values: DMatrix::zeros(10, 10),
        }],
    };
    assert_eq!(memory_bytes(&h_dense).factor_bytes, 800);
    // One rank-3 block on 20x30: 8 * 3 * 50 = 1200 bytes.
    let h_lr = HMatrix {
        n: 50,
        rank_bound: 3,
        depth: 1,
        low_rank: vec![LowRankBlock {
            rows: (0..20).collect(),
            cols: (20..50).collect(),
            x: DMatrix::zeros(20, 3),
            y: DMatrix::zeros(30, 3),
            singular_values: vec![0.0; 3],
            truncation_error: 0.0,
        }],
        dense: vec![],
    };
    let report = memory_bytes(&h_lr);
    assert_eq!(report.factor_bytes, 1200);
    assert_eq!(report.index_bytes, 8 * 50);
}

#[test]
fn bound_monotone_and_memory_nondecreasing_in_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 36;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let partition = corner_partition(n, 16);
    let plan = CompressionPlan::new(&m, &partition).unwrap();
    let rows = rank_sweep(&m, &plan, 1..=16, 60, &mut rng).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[1].computable_bound <= pair[0].computable_bound + 1e-15);
        assert!(pair[1].memory_bytes >= pair[0].memory_bytes);
    }
    assert_eq!(rows.last().unwrap().computable_bound, 0.0);
}

#[test]
fn experiment_csv_format() {
    let rows = vec![ExperimentRow {
        r: 3,
        computable_bound: 0.5,
        spectral_error: 0.25,
        memory_bytes: 1024,
        depth: 7,
        n_adm: 2,
        n_small: 4,
    }];
    let mut buf = Vec::new();
    write_experiment_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text,
        "r,computable_bound,spectral_error,memory_bytes,depth,n_adm,n_small\n\
         3,5.0000000000000000e-1,2.5000000000000000e-1,1024,7,2,4\n"
    );
}

#[test]
fn compression_pipeline_runs_on_a_small_fem_problem() {
    let spec = GradingSpec::new(vec![Point2::new(0.5, 0.5)], 5.0, 0.2).unwrap();
    let mesh = generate_mesh(Domain::LShape, Some(spec), None).unwrap();
    let (a, dofmap) = assemble_system(&mesh, &Coefficients::anisotropic_convection()).unwrap();
    let dual = build_dual_system(&mesh, &dofmap).unwrap();
    let tree = build_cluster_tree(&mesh, &dual, 25).unwrap();
    let partition = build_block_partition(&tree, &mesh, 2.0).unwrap();
    let inverse = invert_dense(&a, DEFAULT_DENSE_BUDGET).unwrap();
    let plan = CompressionPlan::new(&inverse, &partition).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows = rank_sweep(&inverse, &plan, [1, 4, 8, 16].into_iter(), 60, &mut rng).unwrap();
    for row in &rows {
        if row.computable_bound > 1e-13 {
            assert!(row.spectral_error <= row.computable_bound * (1.0 + 1e-6));
        } else {
            // Below the bound's numerical floor the compression is exact
            // up to the SVD backward error.
            assert!(row.spectral_error <= 1e-12, "noise floor {}", row.spectral_error);
        }
    }
    assert!(rows[0].computable_bound > 1e-13);
    assert!(rows[3].computable_bound < 1e-6 * rows[0].computable_bound);
    for pair in rows.windows(2) {
        assert!(pair[1].computable_bound <= pair[0].computable_bound);
    }
}
