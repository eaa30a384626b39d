use std::hint::black_box;

use arbmg::harness::SYNTHETIC_LADDER_CSV;
use arbmg::stats::Moments;
use arbmg::{Game, GameConfig, MeritLadder, PriceSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    for (n, alpha, risk) in [(120, 1.0, "-inf"), (513, 0.5, "-inf"), (1025, 0.5, "-inf"), (513, 0.1, "1")] {
        let text = format!(
            "n_agents = {n}\nalpha = {alpha}\nrisk_aversion = {risk}\nprice = identity\nintraday_price = {}\n\
             strategy_bias = equilibrium",
            n as f64 / 4.0
        );
        let config = GameConfig::from_text(&text, None).unwrap();
        let mut game = Game::new(&config).unwrap();
        // past the initial transient
        for _ in 0..5_000 {
            game.step().unwrap();
        }
        g.bench_function(BenchmarkId::new(format!("eps={risk}"), n), |b| b.iter(|| black_box(game.step().unwrap())));
    }
    g.finish();
}

fn prices(c: &mut Criterion) {
    let ladder = MeritLadder::from_csv_reader(SYNTHETIC_LADDER_CSV.as_bytes()).unwrap();
    let xs: Vec<f64> = (0..1000).map(|k| -2400.0 + 4.8 * k as f64).collect();
    let specs = [
        ("identity", PriceSpec::Identity),
        ("quadratic", PriceSpec::Quadratic { c2: 0.002 }),
        ("merit", PriceSpec::MeritOrder(ladder.clone())),
    ];
    for (name, spec) in specs {
        c.bench_function(&format!("price/{name}/1000"), |b| {
            b.iter(|| xs.iter().map(|&x| spec.eval(black_box(x)).unwrap()).sum::<f64>())
        });
    }
    c.bench_function("price/smoothed_average/1000", |b| {
        b.iter(|| xs.iter().map(|&x| ladder.smoothed_average(black_box(x)).unwrap()).sum::<f64>())
    });
}

fn stats(c: &mut Criterion) {
    let xs: Vec<f64> = (0..100_000).map(|k| ((k * 7919) % 1000) as f64 - 500.0).collect();
    c.bench_function("moments/push/100k", |b| {
        b.iter(|| {
            let mut m = Moments::new();
            for &x in &xs {
                m.push(x);
            }
            black_box(m.excess_kurtosis())
        })
    });
}

criterion_group!(benches, steps, prices, stats);
criterion_main!(benches);
