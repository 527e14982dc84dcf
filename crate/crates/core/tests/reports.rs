use pararl::bench::{run_bench, speedup_table, BenchConfig, BenchReport, MachineMeta};
use pararl::envs::{BusyParams, EnvSpec};
use pararl::report::{read_bench_json, write_bench_csv, write_bench_json, BENCH_CSV_HEADER};

fn small_bench(dir: &std::path::Path) -> BenchConfig {
    BenchConfig {
        worker_counts: vec![1, 2],
        trials: 2,
        iters: 2,
        samples_per_iter: 512,
        env_spec: EnvSpec::Busy(BusyParams {
            step_cost_us: 20,
            ..BusyParams::default()
        }),
        out_dir: Some(dir.to_path_buf()),
        ..BenchConfig::default()
    }
}

#[test]
fn empty_report_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let report = BenchReport {
        machine: MachineMeta::probe(&EnvSpec::CartPole),
        config: BenchConfig::default(),
        rows: vec![],
        failures: vec![],
        aggregates: vec![],
        notes: vec![],
    };
    let path = dir.path().join("bench.csv");
    write_bench_csv(&report, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", BENCH_CSV_HEADER.join(",")));
}

#[test]
fn bench_writes_parseable_csv_and_round_trips_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bench(dir.path());
    let report = run_bench(&cfg).unwrap();
    assert!(report.failures.is_empty());

    let mut rdr = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, BENCH_CSV_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), cfg.worker_counts.len() * cfg.trials * cfg.iters);
    for r in &rows {
        for field in r.iter() {
            assert!(field.parse::<f64>().is_ok(), "non-numeric field {field:?}");
        }
    }

    let back = read_bench_json(&dir.path().join("bench.json")).unwrap();
    assert_eq!(back, report);
    assert_eq!(speedup_table(&back).unwrap(), report.aggregates);
    assert_eq!(report.aggregates[0].speedup, 1.0);
    for a in &report.aggregates {
        assert!((a.collect_share_pct + a.learn_share_pct - 100.0).abs() < 1e-9);
    }
    assert!(report.machine.logical_cores >= 1);
    assert!(report.machine.busy_iters_per_us.is_some());

    let again = dir.path().join("copy.json");
    write_bench_json(&back, &again).unwrap();
    assert_eq!(read_bench_json(&again).unwrap(), report);
}

#[test]
fn single_count_sweep_has_unit_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        worker_counts: vec![1],
        trials: 1,
        ..small_bench(dir.path())
    };
    let report = run_bench(&cfg).unwrap();
    assert_eq!(report.aggregates.len(), 1);
    assert_eq!((report.aggregates[0].n_workers, report.aggregates[0].speedup), (1, 1.0));
}

#[test]
fn unwritable_output_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let cfg = BenchConfig {
        worker_counts: vec![1],
        trials: 1,
        ..small_bench(&blocker.join("sub"))
    };
    let err = run_bench(&cfg).unwrap_err().to_string();
    assert!(err.contains("sub"), "{err}");
}
