use arbmg::harness::{ingest_intraday, run_preset, PresetOptions, SYNTHETIC_LADDER_CSV};
use arbmg::price::{derivative_check, default_step};
use arbmg::stats::Histogram;
use arbmg::MeritLadder;

fn data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(name)
}

#[test]
fn intraday_histogram_matches_golden_fixture() {
    let f = std::fs::File::open(data("data/intraday_synthetic.csv")).unwrap();
    let r = ingest_intraday(f).unwrap();
    assert_eq!(r.intervals.len(), 288);
    assert_eq!(r.skipped_rows, 3);
    let golden = Histogram::from_csv(&std::fs::read_to_string(data("tests/fixtures/intraday_synthetic_i_avg_hist.csv")).unwrap())
        .unwrap();
    assert_eq!(r.i_avg_histogram.counts, golden.counts);
    for (a, b) in r.i_avg_histogram.bin_edges.iter().zip(&golden.bin_edges) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
    // every kept excess is positive and from a liquid interval
    assert!(r.excess.iter().all(|&x| x > 0.0));
    assert_eq!(r.excess_histogram.total() as usize, r.excess.len());
}

#[test]
fn synthetic_ladder_loads_from_file_and_embedded_copy() {
    let a = MeritLadder::from_csv_path(&data("data/merit_ladder_synthetic.csv")).unwrap();
    let b = MeritLadder::from_csv_reader(SYNTHETIC_LADDER_CSV.as_bytes()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.positive_capacity(), 2600.0);
    assert_eq!(a.negative_capacity(), 2600.0);
    assert_eq!(a.marginal(100.0).unwrap(), 22.0);
    assert_eq!(a.marginal(-100.0).unwrap(), 14.0);
    let h = default_step(&a);
    for x in [-2000.0, -500.0, 300.0, 1800.0] {
        let d = derivative_check(&a, x, h).unwrap();
        assert!(d.d_price >= 0.0);
    }
}

#[test]
fn app_presets_have_expected_shape() {
    let o = PresetOptions::default();
    let b = run_preset("appB", &o).unwrap();
    let rows = b.files[0].1.lines().count() - 1;
    assert_eq!(rows, 2 * 199);
    let c = run_preset("appC", &o).unwrap();
    // quadratic rows carry a closed form that agrees with the quadrature
    for line in c.files[0].1.lines().skip(1).filter(|l| l.starts_with("quadratic")) {
        let cells: Vec<f64> = line.split(',').skip(3).map(|x| x.parse().unwrap()).collect();
        assert!((cells[1] / cells[2] - 1.0).abs() < 1e-6, "{line}");
    }
    let a = run_preset("appA", &o).unwrap();
    let report: serde_json::Value = serde_json::from_str(&a.files[1].1).unwrap();
    assert!((report["effective_agents"].as_f64().unwrap() - 27.638).abs() < 1e-3);
}
