use nashpoly::examples;
use nashpoly::extract::{extract_minimizers, flat_truncation};
use nashpoly::moment::{assemble_relaxation, gen_theta, min_order};
use nashpoly::poly::Polynomial;
use nashpoly::solver::{backend_by_name, ConicOptions};
use nashpoly::tms::Tms;

fn main() {
    let nep = examples::by_name("coupled-balls").unwrap();
    let n = nep.nvars();
    let (theta, _) = gen_theta(n, 0);
    let sys = nep.kkt_sets();
    let level = 3.477811205047689_f64;
    let excl = theta.sub(&Polynomial::constant(vec![n], level));
    let phi = sys.phi();
    let mut psi = sys.psi();
    psi.push(&excl);
    let d0 = min_order(&phi, &psi, &theta);
    let backend = backend_by_name(None).unwrap();
    for k in d0..=4 {
        let sdp = assemble_relaxation(&phi, &psi, &theta, k);
        let svec: usize = sdp.blocks.iter().map(|b| b.dim * (b.dim + 1) / 2).sum();
        let t0 = std::time::Instant::now();
        let sol = backend.solve(&sdp, &ConicOptions::default());
        println!(
            "k={k} dims: nvars={} eq={} svec={} | {:?} iters={} obj={:.6} pres={:.2e} dres={:.2e} gap={:.2e} ({:.1}s)",
            sdp.nvars,
            sdp.eq.len(),
            svec,
            sol.status,
            sol.iters,
            sol.obj,
            sol.pres,
            sol.dres,
            sol.relgap,
            t0.elapsed().as_secs_f64()
        );
        let y = Tms::new(n, 2 * k, sol.y.clone());
        let u = y.first_order_point();
        let (eq_res, ineq_min) = sys.residuals(&u);
        println!(
            "  u={:?} theta(u)={:.6} eq_res={:.2e} ineq_min={:.2e}",
            u,
            theta.evaluate(&u),
            eq_res,
            ineq_min
        );
        let flat = flat_truncation(&y, d0, k, 1e-6);
        println!("  flat: t={:?} rank={}", flat.t, flat.rank);
        if let Some(t) = flat.t {
            if let Some(ext) = extract_minimizers(&y, t, flat.rank, 0) {
                for (p, w) in ext.points.iter().zip(&ext.weights) {
                    let (er, im) = sys.residuals(p);
                    println!(
                        "  atom {:?} w={:.3} theta={:.6} eq_res={:.2e} ineq_min={:.2e}",
                        p,
                        w,
                        theta.evaluate(p),
                        er,
                        im
                    );
                }
            }
        }
    }
}
