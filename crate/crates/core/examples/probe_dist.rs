//! Scratch probe: score distributions at the selected checkpoint.
use pufauth::harness::{ExperimentConfig, FleetMix};
use pufauth::harness::experiment::run_seed;
use pufauth::imaging::{device_image, to_model_input};
use pufauth::openset::train::extract_features;
use pufauth::puf::{build_fleet, FleetConfig};

fn pct(v: &mut Vec<f32>, q: f64) -> f32 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[((v.len() - 1) as f64 * q) as usize]
}

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.hp.closed_lr = 1e-3;
    cfg.hp.gan_batch = 32;
    cfg.hp.gan_epochs = 100;
    cfg.hp.gan_lr_d *= 10.0;
    cfg.hp.gan_lr_g *= 10.0;
    for seed in [2024u64, 2025] {
        let (o, model) = run_seed(&cfg, seed).unwrap();
        println!("seed {seed}: tau={:.3} far={:.3} frr={:.3}", model.tau, o.metrics.far, o.metrics.frr);
        // Rebuild the val and test impostor images to inspect score spread.
        let challenge = pufauth::harness::experiment::derive_challenge(&cfg, seed);
        for (name, mix) in [("val_imp", &cfg.impostor_val), ("test_imp", &cfg.impostor_test)] {
            let fc = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: mix.device_specs() };
            let mut fleet = build_fleet(&fc).unwrap();
            for dv in &mut fleet {
                let mut inputs = vec![];
                for _ in 0..100 {
                    let img = device_image(dv, &cfg.lfsr.taps, challenge, 50, 50).unwrap();
                    inputs.push(to_model_input(&img, &cfg.norm).unwrap());
                }
                let feats = extract_features(&model.backbone, &inputs).unwrap();
                let mut s = model.discriminator.scores(&feats, inputs.len());
                println!("  {name} dev {}: p5={:.3} p50={:.3} p95={:.3}", dv.id, pct(&mut s, 0.05), pct(&mut s, 0.5), pct(&mut s, 0.95));
            }
        }
        // Legit test-side scores
        let fc = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.legit.device_specs() };
        let mut fleet = build_fleet(&fc).unwrap();
        let mut all = vec![];
        for dv in &mut fleet {
            let mut inputs = vec![];
            for _ in 0..100 {
                let img = device_image(dv, &cfg.lfsr.taps, challenge, 50, 50).unwrap();
                inputs.push(to_model_input(&img, &cfg.norm).unwrap());
            }
            let feats = extract_features(&model.backbone, &inputs).unwrap();
            all.extend(model.discriminator.scores(&feats, inputs.len()));
        }
        println!("  legit overall: p1={:.3} p5={:.3} p50={:.3}", pct(&mut all, 0.01), pct(&mut all, 0.05), pct(&mut all, 0.5));
    }
}
