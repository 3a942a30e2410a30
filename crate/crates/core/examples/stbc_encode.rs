//! Linear-dispersion form of the Alamouti and rate-1/2 G3 codes.

use mimofp::numerics::C64;
use mimofp::stbc::{alamouti, codebook_dump, encode, tarokh_g3};

fn main() -> mimofp::Result<()> {
    print!("{}", codebook_dump(&alamouti()));

    let s = [C64::new(1.0, 1.0), C64::new(-1.0, 1.0), C64::new(1.0, -1.0), C64::new(-1.0, -1.0)];
    let g3 = tarokh_g3();
    let x = encode(&g3, &s)?;
    println!("\nG3 codeword for {s:?} (antennas x epochs):");
    for a in 0..g3.m() {
        let row: Vec<String> = (0..g3.k()).map(|t| format!("{:+.0}{:+.0}j", x[(a, t)].re, x[(a, t)].im)).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
