//! Closed-form constants of the rough-coefficient estimates over a small
//! parameter sweep.
//!
//! `cargo run --example explicit_constants`

use regularity_lab::rough::explicit_constants;

fn main() -> regularity_lab::Result<()> {
    println!(
        "{:>2} {:>5} {:>5} {:>4} {:>4} {:>8} {:>9} {:>11} {:>9} {:>11} {:>8}",
        "d", "p", "q", "a0", "c0", "γ", "β", "δ", "A", "α", "K1"
    );
    for d in 1..=3 {
        for (p, q) in [(4.0, 4.0), (8.0, 8.0), (f64::INFINITY, 12.0)] {
            for c0 in [1.0, 2.0] {
                let c = explicit_constants(d, p, q, 1.0, c0)?;
                println!(
                    "{d:>2} {p:>5} {q:>5} {:>4} {c0:>4} {:>8.4} {:>9.5} {:>11.4e} {:>9.5} {:>11.4e} {:>8.5}",
                    1.0, c.gamma, c.beta, c.delta, c.amplitude, c.alpha, c.k1
                );
            }
        }
    }
    Ok(())
}
