//! Trains from a config and prints generation MMD against a Gaussian baseline,
//! with and without EMA, at guidance 1 and 2.

use std::time::Instant;

use flowbridge::bridge::{sample_prior, ModelField};
use flowbridge::experiment::{build_data, gaussian_like};
use flowbridge::metrics::mmd_default;
use flowbridge::persist::parse_config;
use flowbridge::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or("configs/two_moons.cfg".into());
    let mut cfg = parse_config(&std::fs::read_to_string(path)?)?;
    if let Some(e) = std::env::args().nth(2) {
        cfg.train.epochs = e.parse()?;
    }
    let b = build_data(&cfg.data)?;
    let t0 = Instant::now();
    let mut model = VectorFieldModel::new(ModelSpec::new(2, cfg.hidden.clone(), 2), cfg.train.seed)?;
    let out = flowbridge::train::train(&mut model, &b.train, &cfg.train, |_, _| Ok(()))?;
    println!("{} steps {:.1}s", out.total_steps, t0.elapsed().as_secs_f64());
    for w in [1.0f32, 2.0] {
        for ema in [true, false] {
            let field = ModelField::new(&model, ema);
            let bc = BridgeConfig { guidance_weight: w, ..cfg.bridge };
            let g = sample_prior(&field, DomainLabel::Domain(0), 2000, &bc, &mut ChaCha8Rng::seed_from_u64(7))?;
            let g = b.test[0].with_data(g)?;
            let m = mmd_default(&g, &b.test[0])?;
            let base = mmd_default(&gaussian_like(&b.test[0], 2000, 7)?, &b.test[0])?;
            println!("w {w} ema {ema}: mmd {m:.5} gaussian {base:.5} ratio {:.4}", m / base);
        }
    }
    Ok(())
}
