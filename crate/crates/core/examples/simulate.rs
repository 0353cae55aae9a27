//! Writes a simulated sample from one of the designs as CSV.
//!
//! `cargo run --example simulate -- D1 200 7 > sample.csv`

use forest_density::simbench::Design;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let design: Design = args.first().map_or("D1", String::as_str).parse().expect("design");
    let n: usize = args.get(1).map_or(Ok(200), |s| s.parse()).expect("n");
    let seed: u64 = args.get(2).map_or(Ok(0), |s| s.parse()).expect("seed");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = design.simulate(n, &mut rng).expect("simulate");
    println!("y,x1,x2,x3,x4");
    for i in 0..data.len() {
        let x = data.x(i);
        println!("{},{},{},{},{}", data.y(i), x[0], x[1], x[2], x[3]);
    }
}
