//! Trains the shipped synthetic fairness task for one ε and reports
//! accuracy and counterfactual variation on the held-out split.
//!
//! `cargo run --release --example fairness -- 0.5`

use smile::bench::{accuracy, counterfactual_variation, load_csv, Schema};
use smile::training::{init_model, train, TrainConfig};
use smile::RelationalProperty;

fn main() -> smile::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let eps: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let data = load_csv(format!("{dir}/fairness.csv"), &Schema::load(format!("{dir}/fairness.schema.json"))?)?;
    let (tr, te) = data.split(0.8, 0);
    let mut cfg = TrainConfig::fairness();
    cfg.record_wall_time = true;
    let protected = data.protected();
    let prop = RelationalProperty::fairness(&data.bx, &protected, eps)?;
    let rep = train(init_model(data.dim(), &cfg), &tr.x, &tr.y, &prop, &data.bx, &cfg)?;
    let logits = rep.model.predict_rows(&te.x)?;
    println!(
        "eps {eps}: violBound {} acc {:.1}% cfvar {:.4} train-calls {} post-calls {}",
        rep.viol_bound,
        accuracy(&te.y, &logits, 0.0)?,
        counterfactual_variation(&rep.model, &te, protected[0])?,
        rep.train.generator_calls,
        rep.post.generator_calls,
    );
    Ok(())
}
