//! Scratch probe: per-checkpoint validation F1 under run_seed's exact path.
use pufauth::harness::{ExperimentConfig, FleetMix};
use pufauth::imaging::{device_image, to_model_input};
use pufauth::openset::{confusion_at_tau, extract_features, train_closed_set, train_open_gan, BackboneConfig, Dataset, Split};
use pufauth::openset::train::predict_labels;
use pufauth::protocol::enroll_fleet;
use pufauth::puf::{build_fleet, Challenge, FleetConfig};
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

fn stream(seed: u64, tag: &[u8]) -> ChaCha12Rng {
    let mut h = Sha256::new(); h.update(seed.to_le_bytes()); h.update(tag);
    ChaCha12Rng::from_seed(h.finalize().into())
}

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.master_seed = 9000;
    cfg.image_width = 16; cfg.image_height = 16;
    cfg.images_per_device = 10;
    cfg.legit = FleetMix { arbiters: 1, memories: 1, id_base: 0, ..cfg.legit.clone() };
    cfg.impostor_val = FleetMix { arbiters: 1, memories: 0, id_base: 100, ..cfg.impostor_val.clone() };
    cfg.legit.arbiter.flip_rate = 0.0;
    cfg.legit.memory.flip_prob = 0.0;
    cfg.legit.memory.bias = pufauth::puf::BiasMixture { low_weight: 0.5, high_weight: 0.5, beta_a: 1e-3, beta_b: 1e6 };
    cfg.backbone_channels = vec![8, 16];
    cfg.hp.closed_epochs = 30; cfg.hp.closed_lr = 1e-3; cfg.hp.closed_batch = 4;
    cfg.hp.gan_epochs = 120; cfg.hp.gan_batch = 8; cfg.hp.gan_lr_d = 1e-3; cfg.hp.gan_lr_g = 1e-3;
    cfg.hp.z_dim = 16; cfg.hp.hidden_g = 32; cfg.hp.hidden_d = 32;

    let seed = 9000u64;
    let legit_cfg = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.legit.device_specs() };
    let imp_cfg = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.impostor_val.device_specs() };
    let challenge = Challenge::random(32, &mut stream(seed, b"challenge"));

    let mut legit = build_fleet(&legit_cfg).unwrap();
    let (images, _) = enroll_fleet(&mut legit, &cfg.lfsr, challenge, 10, 16, 16).unwrap();
    let mut sets: [(Vec<_>, Vec<usize>); 3] = Default::default();
    for (dev, block) in images.chunks(10).enumerate() {
        for (i, (img, _)) in block.iter().enumerate() {
            let which = if i < 6 { 0 } else if i < 8 { 1 } else { 2 };
            sets[which].0.push(to_model_input(img, &cfg.norm).unwrap());
            sets[which].1.push(dev);
        }
    }
    let [tr, va, _te] = sets;
    let train = Dataset::new(tr.0, tr.1, Split::Train);
    let val = Dataset::new(va.0, va.1, Split::Val);

    let mut imp_fleet = build_fleet(&imp_cfg).unwrap();
    let mut imp_inputs = vec![];
    for d in &mut imp_fleet {
        for _ in 0..10 {
            let img = device_image(d, &cfg.lfsr.taps, challenge, 16, 16).unwrap();
            imp_inputs.push(to_model_input(&img, &cfg.norm).unwrap());
        }
    }

    let bcfg = BackboneConfig { channels: vec![8, 16], num_classes: 2, input_hw: (16, 16), ..BackboneConfig::compact(2, (16,16)) };
    let mut trng = stream(seed, b"train");
    let (net, _) = train_closed_set(&train, bcfg, &cfg.hp, &mut trng).unwrap();
    let (_, ckpts) = train_open_gan(&net, &train, &cfg.hp, &mut trng).unwrap();

    let vl = extract_features(&net, &val.inputs).unwrap();
    let vi = extract_features(&net, &imp_inputs).unwrap();
    let preds = predict_labels(&net, &val.inputs).unwrap();
    let correct: Vec<bool> = preds.iter().zip(&val.labels).map(|(a, b)| a == b).collect();

    for (e, d) in ckpts.iter().enumerate().step_by(10) {
        let sl = d.scores(&vl, val.inputs.len());
        let si = d.scores(&vi, imp_inputs.len());
        let mut pool: Vec<f32> = sl.iter().chain(&si).copied().collect();
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = 0.0f64; let mut t_at = 0.0f32;
        let mut cands = vec![pool[0] - 1.0];
        cands.extend(pool.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands.push(*pool.last().unwrap());
        for &t in &cands {
            let f1 = confusion_at_tau(&sl, &correct, &si, t).f1();
            if f1 > best { best = f1; t_at = t; }
        }
        let min_l = sl.iter().cloned().fold(f32::MAX, f32::min);
        let max_i = si.iter().cloned().fold(f32::MIN, f32::max);
        println!("ckpt {e:>3}: bestF1={best:.3} tau={t_at:.3} minLegit={min_l:.3} maxImp={max_i:.3}");
    }
}
