//! L-BFGS with a strong-Wolfe line search on the Rosenbrock function.

use physmotion::lbfgs::{minimize, LbfgsConfig};

fn main() -> physmotion::Result<()> {
    let m = minimize(
        |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
        },
        vec![-1.2, 1.0],
        &LbfgsConfig::default(),
    )?;
    for r in m.trace.iter().step_by(5) {
        println!("iter {:3} f {:.3e} |g| {:.2e} step {:.3}", r.iteration, r.loss, r.grad_norm, r.step);
    }
    println!("x* = {:?} after {} iterations ({:?})", m.x, m.iterations(), m.termination);
    Ok(())
}
