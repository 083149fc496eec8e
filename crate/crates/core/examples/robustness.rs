//! Trains the two-moons robustness task for one (δ, ε) and reports accuracy
//! and how many test points the rejection defense certifies.
//!
//! `cargo run --release --example robustness -- 0.05 1.0`

use smile::bench::{accuracy, rejection_defense, two_moons, DefenseVerdict};
use smile::training::{init_model, train, TrainConfig};
use smile::RelationalProperty;

fn main() -> smile::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (delta, eps) = (args.first().copied().unwrap_or(0.05), args.get(1).copied().unwrap_or(1.0));
    let data = two_moons(3000, 0.1, 3)?;
    let tr = data.subset(&(0..2000).collect::<Vec<_>>());
    let te = data.subset(&(2000..3000).collect::<Vec<_>>());
    let mut cfg = TrainConfig::robustness();
    if let Some(e) = args.get(2) {
        cfg.pretrain_epochs = *e as usize;
    }
    if let Some(e) = args.get(3) {
        cfg.train_epochs = *e as usize;
    }
    if let Some(lr) = args.get(4) {
        cfg.adam.lr = *lr;
    }
    if let Some(b) = args.get(5) {
        cfg.batch_size = *b as usize;
    }
    cfg.record_wall_time = true;
    let prop = RelationalProperty::robustness(&data.bx, delta, eps)?;
    let rep = train(init_model(2, &cfg), &tr.x, &tr.y, &prop, &data.bx, &cfg)?;
    let logits = rep.model.predict_rows(&te.x)?;
    let certified = (0..te.len())
        .filter(|&r| matches!(rejection_defense(&rep.model, te.x.row(r), eps), Ok(DefenseVerdict::Certified(_))))
        .count();
    println!(
        "delta {delta} eps {eps}: violBound {} acc {:.1}% certified {certified}/{} train-calls {} post-calls {}",
        rep.viol_bound,
        accuracy(&te.y, &logits, 0.0)?,
        te.len(),
        rep.train.generator_calls,
        rep.post.generator_calls,
    );
    Ok(())
}
