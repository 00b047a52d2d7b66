//! Writes a stream, its labels and a checkpoint to disk, reads them back
//! bit-exactly, and shows how a damaged header is reported.
//!
//! cargo run --release --example stream_files

use avprune::stream::{
    decode_stream, encode_stream, generate_synthetic, load_labels, load_stream, save_labels,
    save_stream, SyntheticSpec,
};
use avprune::vgas::{init_params, load_params, save_params, SelectorConfig};

fn main() -> avprune::Result<()> {
    let dir = std::env::temp_dir().join("avprune_stream_files");
    std::fs::create_dir_all(&dir)
        .map_err(|e| avprune::Error::Param(format!("{}: {e}", dir.display())))?;
    let (stream, labels) = generate_synthetic(&SyntheticSpec::default(), 4)?;
    let scfg = SelectorConfig::new(stream.dim, 8, 2, 4, 1)?;
    let params = init_params(&scfg, 4)?;

    let (s, l, p) = (dir.join("s.ots"), dir.join("s.otl"), dir.join("p.otp"));
    save_stream(&stream, &s)?;
    save_labels(&labels, &l)?;
    save_params(&params, &scfg, &p)?;
    assert_eq!(load_stream(&s)?, stream);
    assert_eq!(load_labels(&l)?, labels);
    assert_eq!(load_params(&p)?, (params, scfg));
    for f in [&s, &l, &p] {
        let len = std::fs::metadata(f).map(|m| m.len()).unwrap_or(0);
        println!("{}: {len} bytes, round trip exact", f.display());
    }

    let mut bytes = encode_stream(&stream)?;
    bytes[0] = b'X';
    println!("bad magic:  {}", decode_stream(&bytes).unwrap_err());
    let bytes = encode_stream(&stream)?;
    println!(
        "truncated:  {}",
        decode_stream(&bytes[..bytes.len() - 3]).unwrap_err()
    );
    println!(
        "missing:    {}",
        load_stream(dir.join("nope.ots")).unwrap_err()
    );
    Ok(())
}
