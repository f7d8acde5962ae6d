use local_voting::averaged::{deviation_estimate, Comparison};
use local_voting::consensus::StepSize;
use local_voting::harness::{bundled_scenario, replicate, step_size_sweep, with_threads, write_sweep_csv};
use local_voting::load_balancing::{run_comparison, write_metrics_csv};

fn column(csv_text: &[u8], name: &str) -> Vec<String> {
    let mut reader = csv::Reader::from_reader(csv_text);
    let idx = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn replication_and_deviation_ignore_pool_size() {
    let cfg = bundled_scenario("six-node-delayed").unwrap();
    let seeds: Vec<u64> = (0..12).collect();
    let scenario = cfg.consensus_scenario();
    let runs: Vec<_> = [1, 3, 8]
        .into_iter()
        .map(|threads| {
            with_threads(Some(threads), || {
                (
                    replicate(&cfg, 12, 0).unwrap(),
                    deviation_estimate(&scenario, &seeds, 80, Comparison::Discrete).unwrap(),
                )
            })
            .unwrap()
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sweep_csv_round_trips_exactly() {
    let cfg = bundled_scenario("six-node").unwrap();
    let arms = step_size_sweep(&cfg, &[("a".into(), StepSize::Constant(0.1))], &[0, 1, 2]).unwrap();
    let mut out = Vec::new();
    write_sweep_csv(&mut out, &arms).unwrap();
    let parsed: Vec<f64> = column(&out, "mean_err").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(parsed, arms[0].mean_err);
}

#[test]
fn metrics_csv_round_trips_exactly() {
    let cfg = bundled_scenario("ring").unwrap();
    let (with, without) = run_comparison(&cfg.lb_scenario(), 4, 60).unwrap();
    let (mw, mo) = (with.metrics(None), without.metrics(None));
    let mut out = Vec::new();
    write_metrics_csv(&mut out, &[("with", &mw), ("without", &mo)]).unwrap();
    let d_abs: Vec<f64> = column(&out, "d_abs").iter().map(|v| v.parse().unwrap()).collect();
    let expected: Vec<f64> = mw.iter().chain(&mo).map(|m| m.d_abs).collect();
    assert_eq!(d_abs, expected);
    assert_eq!(column(&out, "arm").iter().filter(|a| *a == "without").count(), mo.len());
}
