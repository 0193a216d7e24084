//! Seal and open a model update over the authenticated channel, then watch
//! tampering get rejected and inspect the byte overhead.
//!
//! ```sh
//! cargo run --example secure_exchange
//! ```

use fafl::channel::{
    derive_channel_key, open_timed, parse_master_secret, seal_timed, serialize_params,
    ChannelMetrics, EncryptedFrame, MsgType, FRAME_OVERHEAD,
};
use fafl::config::DEFAULT_DEV_SECRET;
use fafl::model::{init_model, Arch};

fn main() -> fafl::Result<()> {
    let secret = parse_master_secret(DEFAULT_DEV_SECRET)?;
    let mut key = derive_channel_key(&secret, 3);
    println!("channel key for client 3: {}...", &hex::encode(key.key_bytes())[..16]);

    let weights = init_model(&Arch::linear(8, 3), 42)?;
    let payload = serialize_params(&weights)?;
    println!("serialized {} parameters into {} bytes", weights.len(), payload.len());

    let mut metrics = ChannelMetrics::default();
    let frame = seal_timed(&mut key, MsgType::ClientUpdate, 17, 3, &payload, &mut metrics)?;
    println!(
        "sealed frame: {} bytes on the wire ({} payload + {} header/tag), nonce {}",
        frame.wire_len(),
        payload.len(),
        FRAME_OVERHEAD,
        hex::encode(frame.nonce)
    );

    let back = open_timed(&key, &frame, &mut metrics)?;
    assert_eq!(back, payload);
    println!("opened and verified: payload matches bit for bit");

    // Any single flipped bit is rejected, wherever it lands.
    let wire = frame.to_bytes();
    let mut rejected = 0;
    for bit in 0..wire.len() * 8 {
        let mut tampered = wire.clone();
        tampered[bit / 8] ^= 1 << (bit % 8);
        let survives = EncryptedFrame::from_bytes(&tampered)
            .and_then(|f| fafl::channel::open(&key, &f))
            .is_ok();
        if !survives {
            rejected += 1;
        }
    }
    println!("tamper sweep: {rejected}/{} single-bit flips rejected", wire.len() * 8);

    println!(
        "channel metrics: {} plaintext bytes -> {} sealed bytes (overhead ratio {:.4}), crypto time {:.3} ms",
        metrics.bytes_plaintext,
        metrics.bytes_sealed,
        metrics.overhead_ratio(),
        metrics.crypto_time_ms()
    );
    Ok(())
}
