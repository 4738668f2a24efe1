//! Pose and plausibility metrics on a prediction whose feet hover and slide.

use physmotion::math::Vec3;
use physmotion::metrics::{MetricsReport, METRIC_FEET};

fn main() -> physmotion::Result<()> {
    let reference: Vec<Vec<Vec3<f64>>> = (0..50).map(|_| (0..15).map(|j| Vec3::new(0.0, 0.0, j as f64 * 0.1)).collect()).collect();
    let pred: Vec<Vec<Vec3<f64>>> = reference
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let mut f = frame.clone();
            for &j in &METRIC_FEET {
                f[j] = f[j] + Vec3::new(0.002 * t as f64, 0.0, 0.015);
            }
            f
        })
        .collect();
    let report = MetricsReport::evaluate(&pred, &reference, &METRIC_FEET, 50.0)?;
    println!("{report}");
    let coarse = MetricsReport::evaluate_downsampled(&pred, &reference, &METRIC_FEET, 50.0, 2)?;
    println!("at {} fps: e_foot_vxy {:.2} mm/frame", coarse.fps, coarse.e_foot_vxy);
    Ok(())
}
