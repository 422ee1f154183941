use beig::{batched_eigvalsh, MatrixBatch, SolverConfig};
use beig::tridiag;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let c = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut data = vec![0.0; 4 * c * c];
    for b in 0..4 {
        let mut u: Vec<f64> = (0..c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut u { *x /= norm; }
        let a = &mut data[b * c * c..(b + 1) * c * c];
        for i in 0..c {
            for j in 0..c {
                a[i * c + j] = u[i] * u[j];
            }
        }
    }
    let m = MatrixBatch::new(4, c, data).unwrap();
    let t = tridiag::tridiagonalize(&m, false).unwrap();
    for b in 0..2 {
        println!("b={b} diag    = {:?}", t.diag(b));
        println!("b={b} offdiag = {:?}", t.offdiag(b));
    }
    match batched_eigvalsh(&m, &SolverConfig::default()) {
        Ok(v) => println!("ok {:?}", v.row(0)),
        Err(e) => println!("ERR {e}"),
    }
}
