use nashpoly::examples;
use nashpoly::moment::{assemble_relaxation, gen_theta};
use nashpoly::solver::{backend_by_name, ConicOptions};

// deg(j) for graded monomial ordering over n vars.
fn degrees(n: usize, nvars: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(nvars);
    let mut d = 0u32;
    let mut count = 1usize; // C(n+d-1, d) terms of exact degree d
    let mut left = 1usize;
    while out.len() < nvars {
        if left == 0 {
            d += 1;
            count = count * (n + d as usize - 1) / d as usize;
            left = count;
        }
        out.push(d);
        left -= 1;
    }
    out
}

fn main() {
    let k: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let r: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let nep = examples::by_name("pollution-control").unwrap();
    let (theta, _) = gen_theta(nep.nvars(), 0);
    let sys = nep.kkt_sets();
    let phi = sys.phi();
    let psi = sys.psi();
    let mut sdp = assemble_relaxation(&phi, &psi, &theta, k);
    let deg = degrees(nep.nvars(), sdp.nvars);
    let d: Vec<f64> = deg.iter().map(|&dd| r.powi(dd as i32)).collect();
    for (j, c) in sdp.cost.iter_mut().enumerate() {
        *c *= d[j];
    }
    for row in &mut sdp.eq {
        for (j, w) in &mut row.entries {
            *w *= d[*j];
        }
    }
    for blk in &mut sdp.blocks {
        for ent in &mut blk.entries {
            for (j, w) in ent.iter_mut() {
                *w *= d[*j];
            }
        }
    }
    eprintln!("k={k} R={r}: x dim {}, eq rows {}", sdp.nvars, sdp.eq.len());
    let backend = backend_by_name(None).unwrap();
    let sol = backend.solve(&sdp, &ConicOptions::default());
    eprintln!(
        "status {:?} obj {:.6} iters {} pres {:.2e} dres {:.2e} relgap {:.2e}",
        sol.status, sol.obj, sol.iters, sol.pres, sol.dres, sol.relgap
    );
    // Unscaled first-order point.
    let n = nep.nvars();
    let pt: Vec<f64> = (0..n).map(|i| sol.y[1 + i] * d[1 + i]).collect();
    eprintln!("first-order point {pt:?}");
    if let Some(g) = examples::golden("pollution-control") {
        let gd: Vec<f64> = pt.iter().zip(&g.nes[0]).map(|(a, b)| (a - b).abs()).collect();
        eprintln!("dist to golden {:?}", gd.iter().cloned().fold(0.0f64, f64::max));
    }
}
