//! Scratch probe for toy-run GAN dynamics (not part of the deliverable).
use pufauth::harness::{run_seed, ExperimentConfig, FleetMix};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.repeats = 1;
    cfg.image_width = 16;
    cfg.image_height = 16;
    cfg.images_per_device = 10;
    cfg.legit = FleetMix { arbiters: 1, memories: 1, id_base: 0, ..cfg.legit.clone() };
    cfg.impostor_val = FleetMix { arbiters: 1, memories: 1, id_base: 100, ..cfg.impostor_val.clone() };
    cfg.impostor_test = FleetMix { arbiters: 1, memories: 1, id_base: 200, ..cfg.impostor_test.clone() };
    cfg.legit.arbiter.flip_rate = 0.0;
    cfg.legit.memory.flip_prob = 0.0;
    cfg.legit.memory.bias = pufauth::puf::BiasMixture { low_weight: 0.5, high_weight: 0.5, beta_a: 1e-3, beta_b: 1e6 };
    cfg.backbone_channels = vec![16, 32, 64];
    cfg.hp.closed_epochs = 30;
    cfg.hp.closed_lr = 1e-3;
    cfg.hp.closed_batch = 4;
    cfg.hp.gan_epochs = 200;
    cfg.hp.gan_batch = 8;
    cfg.hp.gan_lr_d = 1e-3;
    cfg.hp.gan_lr_g = 1e-3;

    let mut bad = 0;
    for seed in [9000u64, 1234, 777, 1, 2, 3, 4, 5, 42, 314] {
        cfg.master_seed = seed;
        let (o, m) = run_seed(&cfg, cfg.master_seed).unwrap();
        let ok = o.metrics.closed_set_accuracy == 1.0 && o.metrics.far == 0.0 && o.metrics.frr == 0.0;
        if !ok { bad += 1; }
        println!(
            "seed={seed:>5} acc={:.2} far={:.2} frr={:.2} f1={:.3} tau={:.3} epoch={:>3} {}",
            o.metrics.closed_set_accuracy, o.metrics.far, o.metrics.frr, o.metrics.f1, m.tau, o.selected_epoch,
            if ok { "OK" } else { "X" }
        );
    }
    println!("bad: {bad}/10");
}
