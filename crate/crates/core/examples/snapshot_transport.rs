//! The binary snapshot format carried by the policy queue, and checkpoints.

use pararl::envs::EnvSpec;
use pararl::policy::{decode_snapshot, encode_snapshot, header_len, init_policy, read_checkpoint, write_checkpoint};

fn main() -> pararl::Result<()> {
    let mut snap = init_policy(&EnvSpec::Pendulum, &[64, 64], 42)?;
    snap.version = 17;
    let bytes = encode_snapshot(&snap);
    println!(
        "{} params -> {} bytes ({} header, {} payload)",
        snap.num_params(),
        bytes.len(),
        header_len(&snap),
        bytes.len() - header_len(&snap)
    );

    let back = decode_snapshot(&bytes)?;
    assert_eq!(back, snap);
    println!("decoded version {} with head {:?}", back.version, back.head);

    match decode_snapshot(&bytes[..bytes.len() - 3]) {
        Ok(_) => unreachable!(),
        Err(e) => println!("truncated buffer rejected: {e}"),
    }

    let path = std::env::temp_dir().join("pararl_example_checkpoint.bin");
    write_checkpoint(&path, &snap)?;
    assert_eq!(read_checkpoint(&path)?, snap);
    println!("checkpoint round trip ok at {}", path.display());
    Ok(())
}
