use nalgebra::DMatrix;
use specmatch::workload::{bench_csv, bench_pair, run_bench, surrogate_operators, sphere_near, BenchConfig, BENCH_HEADER, RATIO_OP};

#[test]
fn surrogate_basis_is_mass_orthonormal() {
    let m = sphere_near(300).unwrap();
    let ops = surrogate_operators(&m, 20, 1).unwrap();
    let a = DMatrix::from_diagonal(&ops.mass);
    let g = ops.phi.transpose() * a * &*ops.phi;
    assert!((g - DMatrix::identity(20, 20)).amax() < 1e-10);
}

#[test]
fn bench_ops_agree_with_definitions() {
    let p = bench_pair(200, 12, 3).unwrap();
    let c = p.projection().unwrap();
    assert_eq!(c.shape(), (12, 12));
    let s = p.baseline_solver().unwrap();
    assert_eq!(s.shape(), (12, 12));
    assert_eq!(p.nn_search(&c).unwrap().len(), p.n_vertices());
    assert!(p.train_step().unwrap().is_finite());
}

#[test]
fn small_bench_reports_schema_and_ratio() {
    let cfg = BenchConfig {
        sizes: vec![150, 600],
        ks: vec![10],
        reps: 5,
        train_step_max_size: 150,
        seed: 0,
    };
    let rows = run_bench(&cfg, |_| {}).unwrap();
    let csv = bench_csv(&rows).unwrap();
    assert_eq!(csv.lines().next().unwrap(), BENCH_HEADER);
    for size in [150, 600] {
        let get = |op: &str| rows.iter().find(|r| r.size == size && r.op == op).map(|r| r.median_ms);
        let ratio = get(RATIO_OP).unwrap();
        assert!((ratio - get("fmap_from_pmap").unwrap() / get("baseline_solve_fmap").unwrap()).abs() < 1e-12);
    }
    assert!(rows.iter().any(|r| r.op == "train_step" && r.size == 150));
    assert!(!rows.iter().any(|r| r.op == "train_step" && r.size == 600));
    // work grows with |V|, so medians must not shrink
    for op in ["fmap_from_pmap", "nn_search"] {
        let at = |size| rows.iter().find(|r| r.size == size && r.op == op).unwrap().median_ms;
        assert!(at(600) >= at(150), "{op}");
    }
    let few = BenchConfig { reps: 4, ..cfg };
    assert!(run_bench(&few, |_| {}).is_err());
}
