//! Encodes a joint as a pair of 1D heat vectors and decodes it back.
//!
//! cargo run --release --example simdr_codec

use evpc::simdr::{decode, encode, kl_target_prep, CodecConfig};

fn main() -> evpc::Result<()> {
    let cfg = CodecConfig::default();
    for joint in [[120.0, 80.0], [120.4, 80.6], [0.0, 259.0], [345.9, 12.5]] {
        let pair = encode(joint, 0, &cfg)?;
        let (x, y) = decode(&pair)?;
        let (tx, _) = kl_target_prep(&pair);
        println!(
            "({:6.2}, {:6.2}) -> bins ({x:3}, {y:3}); peak {:.3}, target mass {:.6}",
            joint[0],
            joint[1],
            pair.vx[x],
            tx.iter().sum::<f64>()
        );
    }
    match encode([400.0, 10.0], 0, &cfg) {
        Err(e) => println!("out of range rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
