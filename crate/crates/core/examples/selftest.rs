//! Runs the acceptance suite and prints one line per criterion.
//!
//! `cargo run --release --example selftest`

fn main() -> coopdrive::Result<()> {
    let (reports, elapsed) = coopdrive::verify::run_selftest_timed()?;
    for r in &reports {
        println!("{r}");
    }
    println!("total {:.1}s", elapsed.as_secs_f64());
    Ok(())
}
