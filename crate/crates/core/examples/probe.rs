use asyrec_core::data::{stratified_holdout, synth_generate, SynthConfig};
use asyrec_core::train::{evaluate, train, TrainConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let cfg = SynthConfig::default(); // d=16, 4 classes, 24 dyads/class, n=12, σ=0.05
    let ds = synth_generate(&cfg, 7).unwrap();
    println!("dataset: {} dyads, {} clips, gen in {:?}", ds.n_dyads(), ds.n_clips(), t0.elapsed());

    let (rest, test) = stratified_holdout(&ds, 0.33, 7).unwrap();
    let (train_part, val_part) = stratified_holdout(&rest, 0.2, 8).unwrap();
    println!("train {} / val {} / test {} dyads", train_part.n_dyads(), val_part.n_dyads(), test.n_dyads());

    let max_epochs: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(50);
    let lr: f64 = std::env::args()
        .nth(2)
        .and_then(|a| a.parse().ok())
        .unwrap_or(1e-4);
    let tcfg = TrainConfig {
        batch_size: 16,
        max_epochs,
        patience: max_epochs - 1,
        seed: 1,
        learning_rate: lr,
        ..TrainConfig::default()
    };
    println!("lr = {lr}");
    let t1 = std::time::Instant::now();
    let (model, history) = train(&train_part, &val_part, &tcfg).unwrap();
    for h in history.iter() {
        if h.epoch % 10 == 0 || h.epoch <= 5 {
            println!("epoch {:3}  loss {:.4}  val_uar {:.4}", h.epoch, h.mean_train_loss, h.val_uar);
        }
    }
    println!("train time: {:?}", t1.elapsed());
    let m = evaluate(&model, &test).unwrap();
    println!("test mean UAR: {:.4}", m.mean_uar);
}
