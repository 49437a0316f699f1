//! Plain-text parameter checkpoints.
//!
//! Layout, one item per line, whitespace separated:
//!
//! ```text
//! ber-densenet 1
//! sizes <n0> <n1> ... <nL>
//! activations <act1> ... <actL>
//! layer <i> weights <outputs> <inputs>
//! <w[0][0]> ... <w[0][inputs-1]>          (one line per output row)
//! layer <i> biases <outputs>
//! <b[0]> ... <b[outputs-1]>
//! ...
//! end
//! ```
//!
//! Numbers use Rust's shortest round-trip exponent notation, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Activation, DenseNet, Layer};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "ber-densenet 1";

pub fn write_net<W: Write>(net: &DenseNet, mut w: W) -> Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "sizes {}", sizes.join(" "))?;
    let acts: Vec<&str> = net.layers().iter().map(|l| l.activation.name()).collect();
    writeln!(w, "activations {}", acts.join(" "))?;
    for (i, layer) in net.layers().iter().enumerate() {
        writeln!(w, "layer {i} weights {} {}", layer.outputs(), layer.inputs())?;
        for row in layer.weights.chunks_exact(layer.inputs()) {
            write_values(&mut w, row)?;
        }
        writeln!(w, "layer {i} biases {}", layer.outputs())?;
        write_values(&mut w, &layer.biases)?;
    }
    writeln!(w, "end")?;
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v:e}")?;
        first = false;
    }
    writeln!(w)?;
    Ok(())
}

pub fn read_net<R: BufRead>(r: R) -> Result<DenseNet> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        match lines.next() {
            Some(line) => Ok(line?),
            None => Err(Error::Checkpoint(format!("unexpected end of file, expected {what}"))),
        }
    };

    if next("header")?.trim() != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad header".into()));
    }
    let sizes: Vec<usize> = parse_keyed(&next("sizes")?, "sizes")?;
    let act_line = next("activations")?;
    let acts = act_line
        .strip_prefix("activations")
        .ok_or_else(|| Error::Checkpoint("expected activations".into()))?
        .split_whitespace()
        .map(|a| Activation::from_name(a).ok_or_else(|| Error::Checkpoint(format!("unknown activation {a}"))))
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 || acts.len() != sizes.len() - 1 {
        return Err(Error::Checkpoint("sizes and activations disagree".into()));
    }

    let mut layers = Vec::with_capacity(acts.len());
    for (i, act) in acts.iter().enumerate() {
        let (inputs, outputs) = (sizes[i], sizes[i + 1]);
        let header: Vec<String> = next("layer weights")?.split_whitespace().map(String::from).collect();
        let expected = [
            "layer".to_string(),
            i.to_string(),
            "weights".into(),
            outputs.to_string(),
            inputs.to_string(),
        ];
        if header != expected {
            return Err(Error::Checkpoint(format!("bad weight header for layer {i}")));
        }
        let mut weights = Vec::with_capacity(inputs * outputs);
        for _ in 0..outputs {
            let row = parse_values(&next("weight row")?)?;
            if row.len() != inputs {
                return Err(Error::Checkpoint(format!("layer {i}: weight row has {} values", row.len())));
            }
            weights.extend(row);
        }
        let header = next("layer biases")?;
        if header.split_whitespace().collect::<Vec<_>>() != ["layer", &i.to_string(), "biases", &outputs.to_string()] {
            return Err(Error::Checkpoint(format!("bad bias header for layer {i}")));
        }
        let biases = parse_values(&next("bias row")?)?;
        layers.push(Layer::new(inputs, outputs, weights, biases, *act)?);
    }
    if next("end")?.trim() != "end" {
        return Err(Error::Checkpoint("missing end marker".into()));
    }
    DenseNet::from_layers(layers)
}

fn parse_keyed(line: &str, key: &str) -> Result<Vec<usize>> {
    line.strip_prefix(key)
        .ok_or_else(|| Error::Checkpoint(format!("expected {key}")))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Checkpoint(format!("bad integer {t}"))))
        .collect()
}

fn parse_values(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Checkpoint(format!("bad number {t}"))))
        .collect()
}

pub fn save_net(net: &DenseNet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_net(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<DenseNet> {
    read_net(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..6, out in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DenseNet::new(&[3, hidden, out], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
            let mut buf = Vec::new();
            write_net(&net, &mut buf).unwrap();
            let back = read_net(buf.as_slice()).unwrap();
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNet::new(&[2, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(matches!(read_net(cut.as_bytes()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn layout_starts_with_sizes_then_row_major_weights() {
        let layer = Layer::new(2, 1, vec![0.5, -2.0], vec![0.25], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "ber-densenet 1\nsizes 2 1\nactivations identity\nlayer 0 weights 1 2\n5e-1 -2e0\nlayer 0 biases 1\n2.5e-1\nend\n"
        );
    }
}
