//! Compares the network's analytic loss gradient with central differences.
//!
//! cargo run --release --example gradient_check

use dsn_sched::policy::{Activation, ActorCritic, Architecture, LossCoefficients, SampleRef};

fn main() -> dsn_sched::Result<()> {
    let arch = Architecture {
        obs_dim: 6,
        hidden: [5, 4],
        n_actions: 4,
        activation: Activation::Silu,
        input_scale: 1.0,
    };
    let mut net = ActorCritic::new(arch, 3);
    let obs = [0.3, -1.2, 0.0, 0.8, 2.0, -0.4];
    let mask = [true, false, true, true];
    let out = net.forward(&obs, &mask)?;
    let sample = SampleRef {
        obs: &obs,
        mask: &mask,
        action: 2,
        advantage: 0.7,
        value_target: 1.5,
        old_log_prob: out.probs[2].ln() + 0.1,
        old_value: out.value,
        old_probs: Some(&out.probs),
    };
    let coef = LossCoefficients::default();
    let (stats, grad) = net.loss_and_grad(&[sample], &coef)?;
    println!("loss {:.6} over {} parameters", stats.total, net.n_params());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, &g) in grad.iter().enumerate() {
        let base = net.params()[k];
        net.params_mut()[k] = base + h;
        let up = net.loss(&[sample], &coef)?.total;
        net.params_mut()[k] = base - h;
        let down = net.loss(&[sample], &coef)?.total;
        net.params_mut()[k] = base;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
