use nashpoly::examples;
use nashpoly::nash::{enumerate_nes, SolverOptions};

fn main() {
    let name = std::env::args().nth(1).unwrap_or("coupled-balls".into());
    let nep = examples::by_name(&name).unwrap();
    let report = enumerate_nes(&nep, &SolverOptions::default());
    println!("status {:?}", report.status);
    for eq in &report.equilibria {
        println!(
            "eq {:?} theta {:.6} omega* {:.2e}",
            eq.point, eq.theta, eq.omega_star
        );
    }
    for rec in &report.trace {
        println!("{}", serde_json::to_string(rec).unwrap());
    }
}
