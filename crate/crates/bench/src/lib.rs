//! Deterministic fixtures shared by the benchmarks.

use segnoise_core::trainer::{prepare, PreparedPatient};
use segnoise_core::volume::{generate_corpus, PhantomSpec};
use segnoise_core::{MaskFrame, PredictionFrame};

/// A filled disc of radius `n / 4` centred in an `n × n` frame.
pub fn disc(n: usize) -> MaskFrame {
    let c = n as f64 / 2.0;
    let r = n as f64 / 4.0;
    MaskFrame::from_fn(n, n, |y, x| {
        let (dy, dx) = (y as f64 + 0.5 - c, x as f64 + 0.5 - c);
        dy * dy + dx * dx <= r * r
    })
}

/// A smooth prediction in `(0, 1)` that loosely overlaps [`disc`].
pub fn soft_prediction(n: usize) -> PredictionFrame {
    let c = n as f64 / 2.0;
    let data = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 - c, (i % n) as f64 - c);
            let d = (y * y + x * x).sqrt() / (n as f64 / 4.0);
            1.0 / (1.0 + (4.0 * (d - 1.1)).exp())
        })
        .collect();
    PredictionFrame::new(n, n, data).expect("values lie in (0, 1)")
}

pub fn phantom_patients(count: usize) -> Vec<PreparedPatient> {
    let records = generate_corpus(&PhantomSpec::default(), count, 0).expect("default spec is valid");
    prepare(&records).expect("phantoms normalize")
}
