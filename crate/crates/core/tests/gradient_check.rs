//! Analytic surrogate gradient against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use verigate_core::optim::{
    clip_branch, seq_importance_ratio, surrogate_gradient, surrogate_objective, ClipBranch, DifferentiablePolicy,
    GroupMember, OptimConfig, RolloutGroup,
};
use verigate_core::toytask::{sample_rollout, ToyPolicy};

const H: f64 = 1e-5;
/// Entries whose magnitudes are both below this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

fn setup(seed: u64, eps: f64) -> (ToyPolicy, Vec<RolloutGroup>, OptimConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = ToyPolicy::uniform(2, 10, 1.0).unwrap();
    for z in policy.params_mut() {
        *z = rng.gen_range(-1.5..1.5);
    }
    policy.refresh_snapshot();
    let cfg = OptimConfig {
        group_size: 4,
        eps_low: eps,
        eps_high: eps,
        ..Default::default()
    };
    let mut groups = Vec::new();
    for g in 0..6 {
        let ctx = g % 2;
        let members = (0..cfg.group_size)
            .map(|_| {
                let r = sample_rollout(&policy, ctx, 6, &mut rng).unwrap();
                GroupMember {
                    logprobs: r.logprobs().unwrap(),
                    reward: [0.0, 0.2, 1.2][rng.gen_range(0..3)],
                }
            })
            .collect();
        let mut group = RolloutGroup::new(ctx, policy.snapshot(), members);
        group.fill_advantages(cfg.std_floor).unwrap();
        groups.push(group);
    }
    // Move away from the snapshot so ratios differ from 1.
    for z in policy.params_mut() {
        *z += rng.gen_range(-0.3..0.3);
    }
    (policy, groups, cfg)
}

fn objective_at(policy: &ToyPolicy, groups: &[RolloutGroup], cfg: &OptimConfig) -> f64 {
    let mut groups = groups.to_vec();
    surrogate_gradient(policy, &mut groups, cfg).unwrap();
    surrogate_objective(&groups, cfg).unwrap()
}

fn max_relative_error(seed: u64, eps: f64) -> (f64, usize) {
    let (mut policy, mut groups, cfg) = setup(seed, eps);
    assert!(policy.num_params() <= 200);
    let (_, analytic) = surrogate_gradient(&policy, &mut groups, &cfg).unwrap();

    // Every ratio must sit well away from the clip kinks.
    let mut unclipped = 0;
    for g in &groups {
        for (m, &a) in g.members.iter().zip(g.advantages.as_ref().unwrap()) {
            let s = seq_importance_ratio(&m.logprobs);
            assert!((s - (1.0 - eps)).abs() > 1e-3 && (s - (1.0 + eps)).abs() > 1e-3, "ratio {s} near a kink");
            if a != 0.0 && clip_branch(s, a, eps, eps) == ClipBranch::Unclipped {
                unclipped += 1;
            }
        }
    }

    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let base = policy.params()[i];
        policy.params_mut()[i] = base + H;
        let up = objective_at(&policy, &groups, &cfg);
        policy.params_mut()[i] = base - H;
        let down = objective_at(&policy, &groups, &cfg);
        policy.params_mut()[i] = base;
        let numeric = (up - down) / (2.0 * H);
        let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    (worst, unclipped)
}

#[test]
fn gradient_matches_finite_differences_in_the_unclipped_regime() {
    let (err, unclipped) = max_relative_error(11, 0.5);
    assert!(unclipped > 10, "only {unclipped} unclipped members");
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradient_matches_finite_differences_with_mixed_clipping() {
    let (err, unclipped) = max_relative_error(23, 0.2);
    assert!(unclipped > 0);
    assert!(err < 1e-4, "max relative error {err}");
}
