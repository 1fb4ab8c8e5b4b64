//! Scratch probe: feature geometry of legit vs impostor devices.
use pufauth::harness::{ExperimentConfig, FleetMix};
use pufauth::imaging::{device_image, to_model_input};
use pufauth::openset::{extract_features, train_closed_set, BackboneConfig, Dataset, Split};
use pufauth::protocol::enroll_fleet;
use pufauth::puf::{build_fleet, Challenge, FleetConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

fn stream(seed: u64, tag: &[u8]) -> ChaCha12Rng {
    let mut h = Sha256::new(); h.update(seed.to_le_bytes()); h.update(tag);
    ChaCha12Rng::from_seed(h.finalize().into())
}

fn main() {
    let cfg = ExperimentConfig::default();
    let seed = 2024u64;
    let legit_cfg = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.legit.device_specs() };
    let imp_cfg = FleetConfig { master_seed: seed, lfsr: cfg.lfsr.clone(), devices: cfg.impostor_test.device_specs() };
    let challenge = Challenge::random(32, &mut stream(seed, b"challenge"));

    let mut legit = build_fleet(&legit_cfg).unwrap();
    let (images, _) = enroll_fleet(&mut legit, &cfg.lfsr, challenge, 100, 50, 50).unwrap();
    let mut tr_x = vec![]; let mut tr_y = vec![];
    for (dev, block) in images.chunks(100).enumerate() {
        for (img, _) in block.iter().take(60) {
            tr_x.push(to_model_input(img, &cfg.norm).unwrap());
            tr_y.push(dev);
        }
    }
    let train = Dataset::new(tr_x, tr_y, Split::Train);
    let bcfg = BackboneConfig { num_classes: 10, input_hw: (50, 50), ..BackboneConfig::compact(10, (50, 50)) };
    let mut hp = cfg.hp.clone();
    hp.closed_lr = 1e-3;
    let mut trng = stream(seed, b"train");
    let (net, loss) = train_closed_set(&train, bcfg, &hp, &mut trng).unwrap();
    println!("train loss {loss:.4}");

    let d = net.feature_dim();
    let feats = extract_features(&net, &train.inputs).unwrap();
    // Per-device mean norms
    for dev in 0..10 {
        let rows: Vec<&[f32]> = (0..train.len()).filter(|i| train.labels[*i] == dev)
            .map(|i| &feats[i*d..(i+1)*d]).collect();
        let mean_norm = rows.iter().map(|r| r.iter().map(|v| v*v).sum::<f32>().sqrt()).sum::<f32>() / rows.len() as f32;
        // intra-class spread: distance of each to class mean
        let mut mean = vec![0f32; d];
        for r in &rows { for (m, v) in mean.iter_mut().zip(*r) { *m += v; } }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f32);
        let spread = rows.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| (v-m)*(v-m)).sum::<f32>().sqrt()).sum::<f32>() / rows.len() as f32;
        println!("dev {dev}: mean feat norm {mean_norm:.3} intra spread {spread:.3}");
    }
    let mut imp_fleet = build_fleet(&imp_cfg).unwrap();
    let mut imp_inputs = vec![];
    for dv in &mut imp_fleet {
        for _ in 0..100 {
            let img = device_image(dv, &cfg.lfsr.taps, challenge, 50, 50).unwrap();
            imp_inputs.push(to_model_input(&img, &cfg.norm).unwrap());
        }
    }
    let imp_feats = extract_features(&net, &imp_inputs).unwrap();
    for dev in 0..3 {
        let rows: Vec<&[f32]> = (dev*100..(dev+1)*100).map(|i| &imp_feats[i*d..(i+1)*d]).collect();
        let mean_norm = rows.iter().map(|r| r.iter().map(|v| v*v).sum::<f32>().sqrt()).sum::<f32>() / rows.len() as f32;
        println!("imp {dev}: mean feat norm {mean_norm:.3}");
    }
    // Distance of each impostor device's mean feature to nearest legit class mean
    let mut class_means = vec![vec![0f32; d]; 10];
    let mut counts = vec![0usize; 10];
    for i in 0..train.len() {
        let y = train.labels[i];
        for (m, v) in class_means[y].iter_mut().zip(&feats[i*d..(i+1)*d]) { *m += v; }
        counts[y] += 1;
    }
    for (m, c) in class_means.iter_mut().zip(&counts) { m.iter_mut().for_each(|v| *v /= *c as f32); }
    for dev in 0..3 {
        let rows: Vec<&[f32]> = (dev*100..(dev+1)*100).map(|i| &imp_feats[i*d..(i+1)*d]).collect();
        let mut mean = vec![0f32; d];
        for r in &rows { for (m, v) in mean.iter_mut().zip(*r) { *m += v; } }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f32);
        let dmin = class_means.iter().map(|cm| cm.iter().zip(&mean).map(|(a,b)| (a-b)*(a-b)).sum::<f32>().sqrt())
            .fold(f32::MAX, f32::min);
        println!("imp {dev}: min distance to legit class mean {dmin:.3}");
    }
    // And legit class pairwise min distance for scale
    let mut min_inter = f32::MAX;
    for i in 0..10 { for j in i+1..10 {
        let dist = class_means[i].iter().zip(&class_means[j]).map(|(a,b)| (a-b)*(a-b)).sum::<f32>().sqrt();
        min_inter = min_inter.min(dist);
    }}
    println!("min inter-class distance among legit means: {min_inter:.3}");
}
