//! Blind identifiability of the bundled space-time block codes: the
//! ambiguity order ρ, minimum-rank witnesses and the receive-antenna bound.

use mimofp::harness::{identifiability_csv, run_identifiability_report};
use mimofp::stbc::{codebook, identifiability, search_rmin, WitnessMode};

fn main() -> mimofp::Result<()> {
    for code in codebook() {
        let rep = identifiability(&code)?;
        println!(
            "{}: (M, n, K) = {:?}, rank Γ = {}, rank [Γ; Φ] = {}, ρ = {}",
            code.name(),
            code.dims(),
            rep.rank_gamma,
            rep.rank_gamma_phi,
            rep.rho
        );
        let s = search_rmin(&code, WitnessMode::Gamma, 500, 7)?;
        println!("  Γ witness of rank {} over the {:?} field after {} trials", s.best_rank, s.field, s.trials_used);
    }
    // the full table, as the CLI writes it
    print!("\n{}", identifiability_csv(&run_identifiability_report(&codebook(), 2_000, 0)?));
    Ok(())
}
