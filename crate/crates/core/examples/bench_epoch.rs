use labelflow::diff::Tape;
use labelflow::flows::{FlowConfig, FlowModel};
use ndarray::Array2;
use std::time::Instant;

fn main() {
    let n = 228;
    let m = FlowModel::new(FlowConfig::classification(30), 0).unwrap();
    let x = Array2::from_shape_fn((n, 30), |(i, j)| ((i * 31 + j) % 17) as f64 / 17.0 - 0.5);
    let z = Array2::from_shape_fn((n, 1), |(i, _)| ((i * 7) % 11) as f64 / 11.0 - 0.5);
    let t0 = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        let t = Tape::new();
        let xv = t.constant(x.clone());
        let tr = m.generate_on(&t, xv, vec![t.constant(z.clone()), t.constant(z.clone())]);
        let loss = t.add(t.sum(t.square(tr.y[0])), t.sum(tr.logdet));
        let loss = t.add(loss, t.sum(t.square(tr.y[1])));
        let _g = t.backward(loss).unwrap();
    }
    println!("per epoch: {:?}", t0.elapsed() / reps);
}
