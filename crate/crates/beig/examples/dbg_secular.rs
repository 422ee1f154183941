use beig::config::SolverConfig;
use beig::secular::*;

fn main() {
    // 2-pole case from the failing test: d=[3,1], z=[1,1], rho=0.5
    let d = vec![3.0, 1.0];
    let z = vec![1.0, 1.0];
    let rho = 0.5;
    let fro = (d.iter().map(|x| x * x).sum::<f64>()
        + 2.0 * rho * d.iter().zip(&z).map(|(d, z)| d * z * z).sum::<f64>()
        + rho * rho * 4.0)
        .sqrt();
    let p = SecularProblem::new(d.clone(), z.clone(), rho, fro, 1e-12);
    println!("u0_off = {}, eps_res = {}", p.u0_off, p.eps_res);
    let cfg = SolverConfig::default();
    let mut brackets = initial_brackets(&p, &cfg);
    for (i, b) in brackets.iter().enumerate() {
        println!("root {i}: origin {} lo {} hi {} target {:?}", b.origin, b.lo, b.hi, b);
    }
    hybrid_section(&p, &mut brackets, &cfg).unwrap();
    for (i, b) in brackets.iter().enumerate() {
        println!("after section root {i}: origin {} lo {} hi {} h {}", b.origin, b.lo, b.hi, b.h);
    }
    let (roots, res) = halley_refine(&p, &mut brackets, &cfg, RefineMethod::Halley).unwrap();
    println!("lambda = {:?}", roots.lambda);
    println!("origin = {:?} tau = {:?}", roots.origin, roots.tau);
    println!("residuals = {:?}", res);
    println!("expected hi/lo: {} {}", 2.5 + f64::hypot(1.0, 0.5), 2.5 - f64::hypot(1.0, 0.5));
    for (i, b) in brackets.iter().enumerate() {
        println!("halley iters root {i}: {} sections {}", b.halley_iters, b.section_iters);
    }
}
