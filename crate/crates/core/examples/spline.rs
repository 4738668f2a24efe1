//! Catmull-Rom initialized Hermite channel fitted to a sampled signal.

use physmotion::spline::init_channel;

fn main() -> physmotion::Result<()> {
    let rate = 50.0;
    let samples: Vec<f64> = (0..100).map(|i| (i as f64 / rate * std::f64::consts::TAU * 0.5).sin()).collect();
    let channel = init_channel(&samples, rate, 8)?;
    println!("{} knots at {:?} s", channel.times.len(), channel.times);
    let mut worst = 0.0f64;
    for (i, s) in samples.iter().enumerate() {
        let e = channel.eval(i as f64 / rate);
        worst = worst.max((e.value - s).abs());
    }
    println!("max reconstruction error {worst:.2e}");
    let mid = channel.eval(0.5);
    println!("t = 0.5 s: value {:.4}, derivative {:.4}", mid.value, mid.derivative);
    Ok(())
}
