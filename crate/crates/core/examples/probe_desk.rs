//! Scratch probe: desk-scale hyperparameter sweep.
use pufauth::harness::{run_seed, ExperimentConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let closed_lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let closed_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10);
    let gan_batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);
    let gan_lr_mult: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let n_seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);
    let gan_epochs: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(50);
    let mut cfg = ExperimentConfig::default();
    cfg.hp.closed_lr = closed_lr;
    cfg.hp.closed_epochs = closed_epochs;
    cfg.hp.gan_batch = gan_batch;
    cfg.hp.gan_lr_d *= gan_lr_mult;
    cfg.hp.gan_lr_g *= gan_lr_mult;
    cfg.hp.gan_epochs = gan_epochs;
    println!("closed: lr={closed_lr} epochs={closed_epochs}; gan: batch={gan_batch} lrx{gan_lr_mult} epochs={gan_epochs}");
    for i in 0..n_seeds {
        let seed = cfg.master_seed + i;
        let t = Instant::now();
        let (o, m) = run_seed(&cfg, seed).unwrap();
        println!(
            "seed={seed} acc={:.4} far={:.4} frr={:.4} auroc={:.4} f1={:.4} tau={:.3} epoch={:>2} val_f1={:.3} loss={:.4} [{:.1}s]",
            o.metrics.closed_set_accuracy, o.metrics.far, o.metrics.frr, o.metrics.auroc,
            o.metrics.f1, m.tau, o.selected_epoch, o.val_f1, o.final_train_loss,
            t.elapsed().as_secs_f64()
        );
    }
}
// extended sweep entry: cargo run --example probe_desk -- lr epochs gb lrmult seeds gan_epochs
