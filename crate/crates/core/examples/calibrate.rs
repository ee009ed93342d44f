//! Trains the phantom pair once (cached at CKPT) and prints the tau x guidance
//! metric grid. Knobs are environment variables; see the top of `main`.

use std::path::Path;
use std::time::Instant;

use flowbridge::bridge::{EncodeGuidance, ModelField};
use flowbridge::experiment::*;
use flowbridge::metrics::FeatureExtractor;
use flowbridge::persist::{load_checkpoint, save_checkpoint, DataConfig, DataKind};
use flowbridge::*;

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = env("STEPS", 3000);
    let lr: f32 = env("LR", 1e-3);
    let batch: usize = env("BATCH", 64);
    let width: usize = env("WIDTH", 512);
    let solver: usize = env("SOLVER", 50);
    let ckpt: String = env("CKPT", "/tmp/cal.ckpt".to_string());
    let enc: EncodeGuidance = env("ENCODE", EncodeGuidance::Guided);
    let ws: Vec<f32> = env("WS", "1,2,4,8.5".to_string()).split(',').map(|s| s.parse().unwrap()).collect();
    let ema_only: bool = env("EMA_ONLY", true);
    let data = DataConfig {
        kind: DataKind::Phantom,
        domains: vec!["synthetic/high".into(), "real/normal".into()],
        n: 729,
        resolution: 32,
        ..DataConfig::default()
    };
    let b = build_data(&data)?;
    let model = if Path::new(&ckpt).exists() {
        load_checkpoint(Path::new(&ckpt), None)?.model
    } else {
        let mut model = VectorFieldModel::new(ModelSpec::new(1024, vec![width, width], 2), 0)?;
        let total = b.train[0].len() + b.train[1].len();
        let cfg = TrainConfig { learning_rate: lr, batch_size: batch, epochs: steps.div_ceil(total.div_ceil(batch)), warmup_steps: 100, ema_rate: 0.999, ..TrainConfig::default() };
        let t0 = Instant::now();
        let out = flowbridge::train::train(&mut model, &b.train, &cfg, |_, _| Ok(()))?;
        let el = t0.elapsed().as_secs_f64();
        println!("steps {} in {:.1}s ({:.1} ms/step)", out.total_steps, el, 1e3 * el / out.total_steps as f64);
        let k = out.losses.len();
        let m = |a: usize, z: usize| out.losses[a..z].iter().sum::<f32>() / (z - a) as f32;
        println!("loss first100 {:.4} last100 {:.4}", m(0, 100.min(k)), m(k.saturating_sub(100), k));
        save_checkpoint(&model, &b.names, Path::new(&ckpt))?;
        model
    };
    let features = FeatureExtractor::default_for_dim(1024);
    let reference = b.to_output_space(&b.test[1]);
    let src_out = b.to_output_space(&b.test[0]);
    println!("baseline src-vs-ref {:?}", score_outputs(&src_out, None, &reference, &features)?);
    for use_ema in [true, false] {
        if !use_ema && ema_only { continue; }
        let field = ModelField::new(&model, use_ema);
        for &w in &ws {
            for tau in [0.3f32, 0.45, 0.6] {
                let cfg = BridgeConfig { tau, guidance_weight: w, steps: solver, encode_guidance: enc };
                let (_, x) = translate_set(&field, &b.test[0], 0, 1, &cfg)?;
                let s = score_outputs(&b.to_output_space(&x), Some(&src_out), &reference, &features)?;
                let (_, rt) = translate_set(&field, &b.test[0], 0, 0, &cfg)?;
                let rl2 = flowbridge::metrics::mean_relative_l2(&b.to_output_space(&rt), &src_out)?;
                let mean: f64 = b.to_output_space(&x).tensor().sum() / x.tensor().len() as f64;
                println!("ema {use_ema} w {w} tau {tau}: rfid {:.3} ssim {:.3} l2 {:.3} mmd {:.4} cov {:.2} roundtrip {:.4} mean {:.3}", s["rfid"], s["ssim"], s["source_l2"], s["mmd"], s["coverage"], rl2, mean);
            }
        }
    }
    let field = ModelField::new(&model, true);
    let cfg = BridgeConfig { steps: solver, encode_guidance: enc, ..BridgeConfig::default() };
    let c = flowbridge::diagnostics::overlap_curve(&field, &b.test[0], DomainLabel::Domain(0), &b.test[1], DomainLabel::Domain(1), &[1.0, 0.6, 0.45, 0.3], &cfg, 200, 0)?;
    print!("overlap {}", c.to_csv());
    let m_ref: f64 = reference.tensor().sum() / reference.tensor().len() as f64;
    let m_src: f64 = src_out.tensor().sum() / src_out.tensor().len() as f64;
    println!("mean intensity ref {m_ref:.3} src {m_src:.3}");
    Ok(())
}
