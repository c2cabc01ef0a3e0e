//! Model archive: a UTF-8 header followed by little-endian f64 tensors.
//!
//! ```text
//! attdep-model
//! format-version 1
//! config <key> = <value>          (run settings, repeated)
//! model <field> <value>           (network shape, repeated)
//! vocab <channel> <count>         (then one string per line)
//! relations <count>               (then one label per line)
//! tensor <name> <rows> <cols> <weight|bias>
//! payload <bytes>
//! <raw tensor data in directory order>
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::attention::QueryOptions;
use crate::corpus::{Channel, ChannelVocab, LabelVocab, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numerics::RealMatrix;
use crate::params::{ParameterSet, TensorSpec};

use super::config::RunConfig;

pub const MAGIC: &str = "attdep-model";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model with the settings it was trained under.
#[derive(Clone, Debug)]
pub struct ModelArchive {
    pub model: Model,
    pub config: RunConfig,
}

impl ModelArchive {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let m = &self.model;
        writeln!(w, "{}", MAGIC)?;
        writeln!(w, "format-version {}", FORMAT_VERSION)?;
        for line in self.config.echo() {
            writeln!(w, "config {}", line)?;
        }
        let c = &m.config;
        writeln!(w, "model hidden {}", c.hidden)?;
        writeln!(w, "model embed_dim {}", c.embed_dim)?;
        writeln!(w, "model directions {}", c.directions)?;
        writeln!(w, "model feed_soft_head {}", c.query.feed_soft_head)?;
        writeln!(w, "model soft_head_root {}", c.query.soft_head_root)?;
        for (channel, table) in m.vocab.channels() {
            writeln!(w, "vocab {} {}", channel, table.len())?;
            for s in table.strings() {
                writeln!(w, "{}", s)?;
            }
        }
        writeln!(w, "relations {}", m.vocab.relations().len())?;
        for label in m.vocab.relations().labels() {
            writeln!(w, "{}", label)?;
        }
        for (spec, _) in m.params.iter() {
            let kind = if spec.bias { "bias" } else { "weight" };
            writeln!(w, "tensor {} {} {} {}", spec.name, spec.rows, spec.cols, kind)?;
        }
        writeln!(w, "payload {}", 8 * m.params.total_size())?;
        for (_, t) in m.params.iter() {
            for v in t.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from(mut r: impl BufRead) -> Result<Self> {
        let mut header = Header { reader: &mut r };
        if header.line()? != MAGIC {
            return Err(Error::Archive("not a model archive".to_owned()));
        }
        let version = header.line()?;
        let found = version
            .strip_prefix("format-version ")
            .ok_or_else(|| Error::Archive("missing format version".to_owned()))?;
        if found.trim() != FORMAT_VERSION.to_string() {
            return Err(Error::ArchiveVersion {
                expected: FORMAT_VERSION,
                found: found.trim().to_owned(),
            });
        }

        let mut config = RunConfig::default();
        let mut model_fields = BTreeMap::new();
        let mut channels = BTreeMap::new();
        let mut relations = None;
        let mut specs = Vec::new();
        let payload = loop {
            let line = header.line()?;
            let (tag, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
            match tag {
                "config" => config.apply_text(rest).map_err(|e| Error::Archive(e.to_string()))?,
                "model" => {
                    let (k, v) = rest
                        .split_once(' ')
                        .ok_or_else(|| Error::Archive(format!("bad model line '{}'", line)))?;
                    model_fields.insert(k.to_owned(), v.to_owned());
                }
                "vocab" => {
                    let (name, count) = rest
                        .split_once(' ')
                        .ok_or_else(|| Error::Archive(format!("bad vocab line '{}'", line)))?;
                    let channel: Channel = name.parse().map_err(|e: Error| Error::Archive(e.to_string()))?;
                    let strings = header.lines(number(count)?)?;
                    channels.insert(channel, ChannelVocab::from_strings(strings)?);
                }
                "relations" => relations = Some(LabelVocab::from_labels(header.lines(number(rest)?)?)?),
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 || !matches!(f[3], "weight" | "bias") {
                        return Err(Error::Archive(format!("bad tensor line '{}'", line)));
                    }
                    specs.push(TensorSpec {
                        name: f[0].to_owned(),
                        rows: number(f[1])?,
                        cols: number(f[2])?,
                        bias: f[3] == "bias",
                    });
                }
                "payload" => break number(rest)?,
                _ => return Err(Error::Archive(format!("unexpected header line '{}'", line))),
            }
        };

        let expected: usize = specs.iter().map(|s| 8 * s.len()).sum();
        if payload != expected {
            return Err(Error::Archive(format!(
                "payload of {} bytes, tensor directory needs {}",
                payload, expected
            )));
        }
        let mut bytes = vec![0u8; payload];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Archive("truncated payload".to_owned()))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| Error::Archive(e.to_string()))? != 0 {
            return Err(Error::Archive("trailing bytes after payload".to_owned()));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let tensors = specs
            .iter()
            .map(|s| RealMatrix::from_vec(s.rows, s.cols, values.by_ref().take(s.len()).collect()))
            .collect::<Result<Vec<_>>>()?;
        let params = ParameterSet::from_tensors(specs, tensors)?;

        let field = |k: &str| {
            model_fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Archive(format!("missing model field {}", k)))
        };
        let flag = |k: &str| -> Result<bool> {
            field(k)?
                .parse()
                .map_err(|_| Error::Archive(format!("bad value for model field {}", k)))
        };
        let model_config = ModelConfig {
            hidden: number(field("hidden")?)?,
            embed_dim: number(field("embed_dim")?)?,
            directions: field("directions")?
                .parse()
                .map_err(|e: Error| Error::Archive(e.to_string()))?,
            query: QueryOptions {
                feed_soft_head: flag("feed_soft_head")?,
                soft_head_root: flag("soft_head_root")?,
            },
        };
        let relations = relations.ok_or_else(|| Error::Archive("missing relations".to_owned()))?;
        let vocab = Vocabulary::from_parts(channels, relations);
        let model = Model::with_params(model_config, vocab, params)?;
        Ok(ModelArchive { model, config })
    }
}

fn number(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Archive(format!("expected a count, found '{}'", s)))
}

struct Header<'r, R> {
    reader: &'r mut R,
}

impl<R: BufRead> Header<'_, R> {
    fn line(&mut self) -> Result<String> {
        let mut buf = Vec::new();
        let n = self
            .reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::Archive(e.to_string()))?;
        if n == 0 || buf.last() != Some(&b'\n') {
            return Err(Error::Archive("unexpected end of header".to_owned()));
        }
        buf.pop();
        String::from_utf8(buf).map_err(|_| Error::Archive("header is not UTF-8".to_owned()))
    }

    fn lines(&mut self, count: usize) -> Result<Vec<String>> {
        (0..count).map(|_| self.line()).collect()
    }
}
