//! Reverse-mode gradients of a small MLP loss compared against central
//! differences, then a few Adam steps on the same loss.

use gmvae_lab::ndmath::{AdamConfig, AdamState, Mlp, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn loss(net: &Mlp, x: &Tensor, y: &Tensor) -> gmvae_lab::Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let out = net.forward(&mut tape, xv, 0)?;
    let diff = tape.sub(out, yv)?;
    let sq = tape.square(diff);
    let l = tape.sum(sq);
    let value = tape.value(l).data()[0];
    let grads = tape.backward(l)?;
    Ok((value, grads.ordered(net.n_param_tensors())?.into_iter().cloned().collect()))
}

fn main() -> gmvae_lab::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut net = Mlp::new(&[3, 8, 2], &mut rng)?;
    let x = Tensor::matrix(16, 3, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let y = Tensor::matrix(16, 2, (0..32).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let (_, grads) = loss(&net, &x, &y)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for t in 0..net.n_param_tensors() {
        for i in 0..grads[t].len() {
            let base = net.params()[t].data()[i];
            net.params_mut()[t].data_mut()[i] = base + h;
            let (up, _) = loss(&net, &x, &y)?;
            net.params_mut()[t].data_mut()[i] = base - h;
            let (down, _) = loss(&net, &x, &y)?;
            net.params_mut()[t].data_mut()[i] = base;
            let fd = (up - down) / (2.0 * h);
            let g = grads[t].data()[i];
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-8));
        }
    }
    println!("max relative gradient error {worst:.2e}");

    let mut adam = AdamState::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, net.params());
    for step in 0..=200 {
        let (value, grads) = loss(&net, &x, &y)?;
        if step % 50 == 0 {
            println!("step {step:>3}  loss {value:.6}");
        }
        let g: Vec<&Tensor> = grads.iter().collect();
        adam.step(&mut net.params_mut(), &g)?;
    }
    Ok(())
}
