//! Trains the synthetic task under full gates and with the length gate
//! removed from the same seed, and prints the resulting dynamics.
//!
//! Usage: paired_ablation [steps] [seed] [lr] [adam|sgd]
//! Set `SHOW=1` to print sample rollouts and a metrics trace.

use std::time::Instant;

use verigate_core::optim::{OptimConfig, OptimizerKind};
use verigate_core::reward::{GateMode, RewardConfig};
use verigate_core::toytask::{
    gen_lexicon, init_activation_prior, measure_pass_at_k, train, LexiconParams, PriorConfig, TrainConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(7);

    let (lexicon, split) = gen_lexicon(42, &LexiconParams::default())?;
    let reward = RewardConfig::default();
    let mut optim = OptimConfig::default();
    if let Some(lr) = args.get(3) {
        optim.learning_rate = lr.parse()?;
    }
    match args.get(4).map(String::as_str) {
        Some("sgd") => optim.optimizer = OptimizerKind::Sgd,
        Some("adam") => optim.optimizer = OptimizerKind::Adam,
        _ => {}
    }
    let train_cfg = TrainConfig { steps, seed, ..Default::default() };
    let prior_cfg = PriorConfig::default();
    let prior = init_activation_prior(&lexicon, 1.0, train_cfg.max_len, &prior_cfg, &split.train_ids, seed)?;
    let ks = [1, 8, 64];
    let init = measure_pass_at_k(&prior, &lexicon, &split.train_ids, 256, &ks, 24, &reward, 99)?;
    println!("initial train pass@{{1,8,64}} {:?}", init.estimates);

    let mut summary = Vec::new();
    for mode in [GateMode::Full, GateMode::NoLenGate] {
        let t = Instant::now();
        let out = train(&lexicon, &split, prior.clone(), &reward, &optim, &train_cfg, mode)?;
        let curve = measure_pass_at_k(&out.policy, &lexicon, &split.train_ids, 256, &ks, 24, &reward, 99)?;
        let test = measure_pass_at_k(&out.policy, &lexicon, &split.test_ids, 256, &ks, 24, &reward, 99)?;
        let n = out.final_rollouts.len() as f64;
        let within = out.final_rollouts.iter().filter(|r| r.within_budget).count() as f64 / n;
        let multi = out.final_rollouts.iter().filter(|r| r.distinct_aliases >= 2).count() as f64 / n;
        let tail = &out.metrics[out.metrics.len().saturating_sub(50)..];
        let len = tail.iter().map(|r| r.mean_trans_length).sum::<f64>() / tail.len() as f64;
        println!(
            "{:12} {:6.1}s train pass@k {:?} test {:?}\n             final-window len {:.2} within budget {:.3} multi-alias {:.3}",
            mode.as_str(),
            t.elapsed().as_secs_f64(),
            curve.estimates,
            test.estimates,
            len,
            within,
            multi
        );
        if std::env::var_os("SHOW").is_some() {
            for r in out.final_rollouts.iter().step_by(37).take(8) {
                let e = &lexicon.entities[r.rollout.entity];
                println!("   entity {:2} gold {:?} -> {:?}", r.rollout.entity, e.aliases, r.rollout.body());
            }
            for row in out.metrics.iter().step_by((steps / 10).max(1)) {
                println!(
                    "   step {:5} reward {:.3} len {:5.2} entropy {:.3} pass1 {:.3}",
                    row.step, row.mean_reward, row.mean_trans_length, row.mean_entropy, row.pass1_eval
                );
            }
        }
        summary.push((curve, len, within, multi));
    }
    let (full, ablated) = (&summary[0], &summary[1]);
    println!(
        "activation: pass@1 {:.3} (>= 0.5), pass@64 {:.3} vs initial {:.3}",
        full.0.estimates[0], full.0.estimates[2], init.estimates[2]
    );
    println!(
        "ablation: length ratio {:.2} (>= 1.5), full within budget {:.3} (>= 0.95), multi-alias {:.3} vs {:.3}",
        ablated.1 / full.1,
        full.2,
        ablated.3,
        full.3
    );
    Ok(())
}
