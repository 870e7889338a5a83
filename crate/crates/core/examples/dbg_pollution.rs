use nashpoly::examples;
use nashpoly::moment::{assemble_relaxation, gen_theta, min_order};
use nashpoly::solver::{backend_by_name, ConicOptions};
use nashpoly::tms::Tms;

fn main() {
    let nep = examples::by_name("pollution-control").unwrap();
    let n = nep.nvars();
    let (theta, _) = gen_theta(n, 0);
    let sys = nep.kkt_sets();
    let phi = sys.phi();
    let psi = sys.psi();
    let dmax_phi = phi.iter().map(|p| p.degree()).max().unwrap();
    let dmax_psi = psi.iter().map(|p| p.degree()).max().unwrap();
    println!("phi {} polys, max deg {dmax_phi}", phi.len());
    println!("psi {} polys, max deg {dmax_psi}", psi.len());
    let d0 = min_order(&phi, &psi, &theta);
    println!("d0 {d0}");

    // The golden point must lift to a feasible moment vector at every k.
    let golden = &examples::golden("pollution-control").unwrap().nes[0];
    let backend = backend_by_name(None).unwrap();
    for k in d0..=d0 + 1 {
        let sdp = assemble_relaxation(&phi, &psi, &theta, k);
        let y = Tms::lift(golden, 2 * k);
        let mut worst_eq: f64 = 0.0;
        for row in &sdp.eq {
            let lhs: f64 = row.entries.iter().map(|&(i, w)| w * y.values()[i]).sum();
            worst_eq = worst_eq.max((lhs - row.rhs).abs());
        }
        let mut min_eig = f64::INFINITY;
        for blk in &sdp.blocks {
            let eig = blk.value(y.values()).symmetric_eigen();
            min_eig = min_eig.min(eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min));
        }
        println!(
            "k={k}: eq rows {}, lifted golden: worst eq residual {worst_eq:.2e}, min block eig {min_eig:.2e}",
            sdp.eq.len()
        );
        let sol = backend.solve(&sdp, &ConicOptions::default());
        println!(
            "  solve: {:?} obj={:.6} pres={:.2e} dres={:.2e}",
            sol.status, sol.obj, sol.pres, sol.dres
        );
    }
}
