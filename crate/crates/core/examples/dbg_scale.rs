use nashpoly::examples;

fn main() {
    for name in ["pollution-control", "electricity-market", "annulus-duo", "coupled-balls"] {
        let nep = examples::by_name(name).unwrap();
        let sys = nep.kkt_sets();
        let mut tiny = 0;
        let mut min_phi = f64::INFINITY;
        for (idx, p) in sys.phi().iter().enumerate() {
            let m = p.max_coeff();
            min_phi = min_phi.min(m);
            if m < 1e-9 {
                tiny += 1;
                println!(
                    "{name}: phi[{idx}] max_coeff {m:.3e} terms {}",
                    p.num_terms()
                );
                for (mi, c) in p.terms().take(6) {
                    println!("    {:?} -> {c:.3e}", mi);
                }
            }
        }
        let mut min_psi = f64::INFINITY;
        for (idx, p) in sys.psi().iter().enumerate() {
            let m = p.max_coeff();
            min_psi = min_psi.min(m);
            if m < 1e-9 {
                println!(
                    "{name}: psi[{idx}] max_coeff {m:.3e} terms {}",
                    p.num_terms()
                );
            }
        }
        println!("{name}: tiny phi {tiny}, min phi coeff {min_phi:.3e}, min psi coeff {min_psi:.3e}");
    }
}
