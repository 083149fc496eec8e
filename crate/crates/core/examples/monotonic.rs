//! Trains one monotonicity task and prints the outcome.
//!
//! `cargo run --release --example monotonic -- 2 0.6`

use smile::bench::{gen_monotonic, r2};
use smile::training::{init_model, train, TrainConfig};
use smile::{Direction, RelationalProperty};

fn main() -> smile::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (alpha, omega) = (args.first().copied().unwrap_or(2.0), args.get(1).copied().unwrap_or(0.6));
    let data = gen_monotonic(alpha, omega, 2000, -10.0, 10.0, 0)?;
    let (tr, te) = data.split(0.8, 0);
    let mut cfg = TrainConfig::monotonicity();
    cfg.record_wall_time = true;
    let model = init_model(1, &cfg);
    let prop = RelationalProperty::monotonicity(&data.bx, &[0], Direction::Nondecreasing, 100.0)?;
    let rep = train(model, &tr.x, &tr.y, &prop, &data.bx, &cfg)?;
    let pred = rep.model.predict_rows(&te.x)?;
    println!(
        "alpha {alpha} omega {omega}: violBound {} status {:?} r2 {:.4} pre {} ep train-calls {} post-calls {} wall {} ms",
        rep.viol_bound,
        rep.final_status,
        r2(&te.y, &pred)?,
        rep.pretrain.epochs,
        rep.train.generator_calls,
        rep.post.generator_calls,
        rep.post.wall_ms
    );
    println!("{}", rep.to_json()?);
    Ok(())
}
