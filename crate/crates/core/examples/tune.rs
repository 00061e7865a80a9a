//! Scratch calibration runs for the optimizer defaults (not part of the
//! test suite): sweeps learning rates and epoch counts on the fixture
//! problems and prints the resulting risks.

use cblab_core::contrastive::{empirical_risk, CentroidMap, ContrastiveTarget};
use cblab_core::erm::{check_localized, train_global_erm, LocalizationSpec, TrainConfig};
use cblab_core::evaluation::l2_risk;
use cblab_core::pairgen::{generate, GeneratorConfig};
use cblab_core::partition::{split_square, BaseDensity};

fn main() {
    let partition = split_square(0.5).unwrap();
    let gen_cfg = GeneratorConfig::new(
        partition.clone(),
        BaseDensity::uniform(2),
        0.95,
        vec![0.5, 0.5],
        2,
    )
    .unwrap();
    let ds = generate(&gen_cfg, 2000).unwrap();
    let target = ContrastiveTarget::new(partition).unwrap();
    let frame = target.frame();
    let baseline = empirical_risk(frame, &CentroidMap { d1: 2 }, &ds).unwrap();
    println!("centroid baseline: {baseline:.6}");

    let density = BaseDensity::uniform(2);
    for lr in [0.2, 0.5, 1.0, 2.0, 4.0] {
        for epochs in [40usize, 120, 300] {
            for batch in [32usize, 128] {
                let cfg = TrainConfig {
                    epochs,
                    batch_size: batch,
                    learning_rate: lr,
                    lr_decay: 0.02,
                    seed: 3,
                    max_weight: 10.0,
                    logit_clamp: 6.0,
                    layer_dims: vec![2, 8, 8, 2],
                    restarts: 1,
                };
                let out = train_global_erm(&cfg, &ds, frame).unwrap();
                let l2 = l2_risk(&out.net, &target, &density, 16_384, 0)
                    .unwrap()
                    .total_l2;
                let spec = LocalizationSpec {
                    beta: 0.5 * frame.dproj(),
                    beta0: 0.4,
                    eval_points: 5000,
                    seed: 37,
                };
                let member = check_localized(&out.net, &target, &spec, &density).unwrap();
                println!(
                    "lr {lr:>4} epochs {epochs:>3} batch {batch:>3}: risk {:.6} (epoch {:>3}) l2 {l2:.4} member {} prob {:.3}",
                    out.best_risk, out.best_epoch, member.is_member, member.measured_prob
                );
            }
        }
    }
}
