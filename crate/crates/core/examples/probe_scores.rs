//! Scratch probe: discriminator score trajectories (not part of the deliverable).
use pufauth::harness::{ExperimentConfig, FleetMix};
use pufauth::imaging::{device_image, to_model_input};
use pufauth::openset::{train_closed_set, train_open_gan, extract_features, BackboneConfig, Dataset, Split};
use pufauth::protocol::enroll_fleet;
use pufauth::puf::{build_fleet, Challenge, FleetConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.master_seed = 9000;
    cfg.image_width = 16;
    cfg.image_height = 16;
    cfg.images_per_device = 10;
    cfg.legit = FleetMix { arbiters: 1, memories: 1, id_base: 0, ..cfg.legit.clone() };
    cfg.impostor_val = FleetMix { arbiters: 1, memories: 0, id_base: 100, ..cfg.impostor_val.clone() };
    cfg.legit.arbiter.flip_rate = 0.0;
    cfg.legit.memory.flip_prob = 0.0;
    cfg.legit.memory.bias = pufauth::puf::BiasMixture { low_weight: 0.5, high_weight: 0.5, beta_a: 1e-3, beta_b: 1e6 };
    cfg.backbone_channels = vec![8, 16];
    cfg.hp.closed_epochs = 30;
    cfg.hp.closed_lr = 1e-3;
    cfg.hp.closed_batch = 4;
    cfg.hp.gan_epochs = 120;
    cfg.hp.gan_batch = 8;
    cfg.hp.gan_lr_d = 1e-3;
    cfg.hp.gan_lr_g = 1e-3;
    cfg.hp.z_dim = 16;
    cfg.hp.hidden_g = 32;
    cfg.hp.hidden_d = 32;

    let seed = 9000u64;
    let legit_cfg = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.legit.device_specs() };
    let imp_cfg = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.impostor_val.device_specs() };
    let mut h = Sha256::new(); h.update(seed.to_le_bytes()); h.update(b"challenge");
    let mut crng = ChaCha12Rng::from_seed(h.finalize().into());
    let challenge = Challenge::random(32, &mut crng);

    let mut legit = build_fleet(&legit_cfg).unwrap();
    let (images, _) = enroll_fleet(&mut legit, &cfg.lfsr, challenge, 10, 16, 16).unwrap();
    let mut train_x = vec![]; let mut train_y = vec![];
    for (img, label) in &images {
        train_x.push(to_model_input(img, &cfg.norm).unwrap());
        train_y.push(*label);
    }
    let train = Dataset::new(train_x, train_y, Split::Train);

    let mut imp_fleet = build_fleet(&imp_cfg).unwrap();
    let mut imp_inputs = vec![];
    for d in &mut imp_fleet {
        for _ in 0..10 {
            let img = device_image(d, &cfg.lfsr.taps, challenge, 16, 16).unwrap();
            imp_inputs.push(to_model_input(&img, &cfg.norm).unwrap());
        }
    }

    let bcfg = BackboneConfig { channels: vec![8, 16], num_classes: 2, input_hw: (16, 16), ..BackboneConfig::compact(2, (16,16)) };
    let mut h = Sha256::new(); h.update(seed.to_le_bytes()); h.update(b"train");
    let mut trng = ChaCha12Rng::from_seed(h.finalize().into());
    let (net, _) = train_closed_set(&train, bcfg, &cfg.hp, &mut trng).unwrap();

    let feats_legit = extract_features(&net, &train.inputs).unwrap();
    let d = net.feature_dim();
    println!("feature norms legit: {:?}", feats_legit.chunks(d).take(3).map(|f| f.iter().map(|v| v*v).sum::<f32>().sqrt()).collect::<Vec<_>>());
    let feats_imp = extract_features(&net, &imp_inputs).unwrap();
    println!("feature norms imp: {:?}", feats_imp.chunks(d).take(3).map(|f| f.iter().map(|v| v*v).sum::<f32>().sqrt()).collect::<Vec<_>>());

    let (pair, ckpts) = train_open_gan(&net, &train, &cfg.hp, &mut trng).unwrap();
    for e in [0usize, 5, 20, 60, 119] {
        let disc = &ckpts[e];
        let sl = disc.scores(&feats_legit, train.len());
        let si = disc.scores(&feats_imp, imp_inputs.len());
        let z = pair.generator.sample_noise(64, &mut trng);
        let fake = pair.generator.forward(&z, 64).output;
        let sf = disc.scores(&fake, 64);
        let mean = |v: &[f32]| v.iter().sum::<f32>() / v.len() as f32;
        println!("epoch {e:>3}: legit[{:.3},{:.3}] imp[{:.3},{:.3}] meanfake@final={:.3}",
            sl.iter().cloned().fold(f32::MAX, f32::min), sl.iter().cloned().fold(f32::MIN, f32::max),
            si.iter().cloned().fold(f32::MAX, f32::min), si.iter().cloned().fold(f32::MIN, f32::max),
            mean(&sf));
    }
}
