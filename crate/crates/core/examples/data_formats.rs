//! The two matrix formats (whitespace-separated text and the little-endian
//! dense binary layout) and the encodings applied before training.

use sparn::data::{decode_binary, encode, encode_binary, format_dense_text, load_matrix, write_matrix};
use sparn::{DataKind, MatrixFormat, RawMatrix};

fn main() -> sparn::Result<()> {
    let raw = RawMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]])?;
    let dir = std::env::temp_dir();
    for name in ["sparn-example.txt", "sparn-example.bin"] {
        let path = dir.join(name);
        let format = MatrixFormat::from_path(&path);
        write_matrix(&path, &raw, format)?;
        let back = load_matrix(&path, format)?;
        let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        println!("{format:?}: {} bytes, round trip equal: {}", bytes, back == raw);
    }
    print!("dense text:\n{}", format_dense_text(&raw));

    // binary data is modeled as ±1; decoding maps it back to {0, 1}
    let binary = encode_binary(&raw)?;
    println!("encoded row 0: {:?}", binary.row(0));
    println!("decoded equals input: {}", decode_binary(&binary) == raw);

    // continuous data is standardized; the constant column becomes zero
    let continuous = encode(&raw, DataKind::Continuous, None)?;
    println!("standardized row 0: {:?}", continuous.row(0));
    let meta = continuous.meta().expect("continuous data keeps its statistics");
    println!("column 1 constant: {}, log-Jacobian: {:.4}", meta.is_constant(1), meta.log_jacobian());

    // values other than 0/1 (or ±1) are rejected for binary models
    let bad = RawMatrix::from_rows(&[vec![0.0, 0.5]])?;
    println!("encoding 0.5 as binary: {}", encode_binary(&bad).unwrap_err());
    Ok(())
}
