//! What a gradient message looks like on the wire, plain and encrypted.

use std::sync::Arc;

use fedxgb::counters::OpCounters;
use fedxgb::dataset::Role;
use fedxgb::gbdt::GHPair;
use fedxgb::he::{keygen, PackingParams};
use fedxgb::processor::{
    process_inbound, process_outbound, CallKind, Intent, PaillierPlugin, PassthroughPlugin, Payload, HEADER_LEN,
};

fn main() -> fedxgb::Result<()> {
    let gh = vec![GHPair::new(-0.5, 0.25), GHPair::new(0.25, 0.1875)];
    let plain = PassthroughPlugin::default();
    let secure = PaillierPlugin::with_keypair(keygen(512, 2)?, PackingParams::default(), 3, Arc::new(OpCounters::new()))?;

    for (name, plugin) in [("plain", &plain as &dyn fedxgb::processor::EncryptionPlugin), ("paillier", &secure)] {
        let buf = process_outbound(CallKind::Broadcast, Payload::GhPlain(gh.clone()), plugin, Role::Active)?;
        let bytes = buf.to_bytes();
        println!("{name}: kind {:?}, {} bytes", buf.kind, bytes.len());
        println!("  header {}", hex::encode(&bytes[..HEADER_LEN]));
        let back = process_inbound(&bytes, plugin, Role::Active, Intent::Decrypt)?;
        println!("  decoded {:?}", back);
        let refused = process_inbound(&bytes, plugin, Role::Server, Intent::Decrypt);
        println!("  server decrypt: {}", refused.map(|_| "allowed".to_string()).unwrap_or_else(|e| e.to_string()));
    }
    Ok(())
}
