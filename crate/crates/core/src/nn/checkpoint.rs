//! Network checkpoints.
//!
//! A checkpoint is one UTF-8 header line followed by the raw parameters:
//!
//! ```text
//! mlp 3 3x256:relu 256x256:relu 256x1:identity\n
//! <num_params little-endian f64 values>
//! ```
//!
//! The first header field after `mlp` is the layer count; each following
//! field is `inputs x outputs : activation`. Parameters use the flat layout of
//! [`Mlp`], so a write/read cycle reproduces every bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::{Activation, LayerShape, Mlp};
use crate::error::{Error, Result};

const MAGIC: &str = "mlp";

pub fn write_checkpoint<W: Write>(net: &Mlp, mut out: W) -> Result<()> {
    let mut header = format!("{MAGIC} {}", net.layers().len());
    for l in net.layers() {
        header.push_str(&format!(
            " {}x{}:{}",
            l.inputs,
            l.outputs,
            l.activation.tag()
        ));
    }
    header.push('\n');
    out.write_all(header.as_bytes())?;
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Mlp> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let header = header
        .strip_suffix('\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count: usize = fields
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Checkpoint("bad layer count".into()))?;
    let layers = fields.map(parse_layer).collect::<Result<Vec<_>>>()?;
    if layers.len() != count {
        return Err(Error::Checkpoint(format!(
            "header announces {count} layers but lists {}",
            layers.len()
        )));
    }
    let template = Mlp::zeros(layers.clone())?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != template.num_params() * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            template.num_params() * 8,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Mlp::from_params(layers, params)
}

fn parse_layer(field: &str) -> Result<LayerShape> {
    let bad = || Error::Checkpoint(format!("bad layer field `{field}`"));
    let (dims, tag) = field.split_once(':').ok_or_else(bad)?;
    let (i, o) = dims.split_once('x').ok_or_else(bad)?;
    let inputs = i.parse().map_err(|_| bad())?;
    let outputs = o.parse().map_err(|_| bad())?;
    let activation = Activation::from_tag(tag).ok_or_else(bad)?;
    Ok(LayerShape::new(inputs, outputs, activation))
}

pub fn save(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Mlp> {
    read_checkpoint(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn header_layout() {
        let net = Mlp::zeros(vec![
            LayerShape::new(3, 4, Activation::Relu),
            LayerShape::new(4, 1, Activation::Tanh),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let header = b"mlp 2 3x4:relu 4x1:tanh\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 8 * net.num_params());
    }

    #[test]
    fn truncated_and_corrupt_files_are_rejected() {
        let mut rng = stream(0, Stream::AgentInit);
        let net = Mlp::init(
            &[2, 3, 1],
            Activation::Relu,
            Activation::Identity,
            None,
            &mut rng,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[4] = b'9';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        assert!(read_checkpoint(&b"mlp 1 2x3:softmax\n"[..]).is_err());
    }
}
