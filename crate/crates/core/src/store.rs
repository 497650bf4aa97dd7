//! Binary container used by checkpoints, snapshots and topic models.
//!
//! Layout: a UTF-8 header of newline-terminated records, then the tensor
//! payloads as little-endian `f64` in header order.
//!
//! ```text
//! crossrec-checkpoint v1
//! meta <key> <value>
//! list <name> <count>
//! <count lines>
//! tensor <name> <rows> <cols> <count>
//! checksum <fnv1a-64 of the payload, hex>
//! end
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &str = "crossrec-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub lists: Vec<(String, Vec<String>)>,
    pub tensors: Vec<StoredTensor>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Container {
    pub fn put_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn put_list(&mut self, name: &str, items: Vec<String>) {
        self.lists.push((name.to_string(), items));
    }

    pub fn put_tensor(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        debug_assert_eq!(rows * cols, data.len());
        self.tensors.push(StoredTensor {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| bad(format!("missing meta `{key}`")))
    }

    pub fn meta_opt(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?
            .parse()
            .map_err(|_| bad(format!("meta `{key}` is malformed")))
    }

    pub fn list(&self, name: &str) -> Result<&[String]> {
        self.lists
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| bad(format!("missing list `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&StoredTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        for t in &self.tensors {
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut header = format!("{MAGIC} v{VERSION}\n");
        let clean = |s: &str, what: &str| -> Result<()> {
            if s.contains('\n') || s.contains('\r') {
                return Err(bad(format!("{what} contains a line break")));
            }
            Ok(())
        };
        for (k, v) in &self.meta {
            clean(k, "meta key")?;
            clean(v, "meta value")?;
            if k.is_empty() || k.contains(' ') {
                return Err(bad(format!("invalid meta key `{k}`")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, items) in &self.lists {
            clean(name, "list name")?;
            header.push_str(&format!("list {name} {}\n", items.len()));
            for item in items {
                clean(item, "list entry")?;
                header.push_str(item);
                header.push('\n');
            }
        }
        for t in &self.tensors {
            if t.name.contains(char::is_whitespace) || t.rows * t.cols != t.data.len() {
                return Err(bad(format!("invalid tensor `{}`", t.name)));
            }
            header.push_str(&format!("tensor {} {} {} {}\n", t.name, t.rows, t.cols, t.data.len()));
        }
        header.push_str(&format!("checksum {:016x}\nend\n", fnv1a(&payload)));
        let mut out = header.into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header"))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8"))
        };
        let first = next_line()?;
        let version = first
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().strip_prefix('v'))
            .ok_or_else(|| bad("not a checkpoint file"))?;
        if version != VERSION.to_string() {
            return Err(bad(format!("unsupported version v{version}, expected v{VERSION}")));
        }
        let mut c = Container::default();
        let mut shapes: Vec<(String, usize, usize, usize)> = Vec::new();
        let checksum;
        loop {
            let line = next_line()?;
            let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
            match kind {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    c.meta.push((k.to_string(), v.to_string()));
                }
                "list" => {
                    let (name, n) = rest.rsplit_once(' ').ok_or_else(|| bad("malformed list record"))?;
                    let n: usize = n.parse().map_err(|_| bad("malformed list length"))?;
                    let mut items = Vec::with_capacity(n);
                    for _ in 0..n {
                        items.push(next_line()?.to_string());
                    }
                    c.lists.push((name.to_string(), items));
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let nums: Option<Vec<usize>> =
                        f.get(1..4).map(|s| s.iter().filter_map(|v| v.parse().ok()).collect());
                    match nums {
                        Some(n) if f.len() == 4 && n.len() == 3 && n[0] * n[1] == n[2] => {
                            shapes.push((f[0].to_string(), n[0], n[1], n[2]))
                        }
                        _ => return Err(bad(format!("malformed tensor record `{line}`"))),
                    }
                }
                "checksum" => {
                    checksum = u64::from_str_radix(rest, 16).map_err(|_| bad("malformed checksum"))?;
                    if next_line()? != "end" {
                        return Err(bad("missing end marker"));
                    }
                    break;
                }
                _ => return Err(bad(format!("unknown header record `{kind}`"))),
            }
        }
        let payload = &bytes[pos..];
        let expected: usize = shapes.iter().map(|s| s.3 * 8).sum();
        if payload.len() != expected {
            return Err(bad(format!(
                "payload has {} bytes, header declares {expected}",
                payload.len()
            )));
        }
        if fnv1a(payload) != checksum {
            return Err(bad("checksum mismatch"));
        }
        let mut off = 0;
        for (name, rows, cols, n) in shapes {
            let data = payload[off..off + 8 * n]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            off += 8 * n;
            c.tensors.push(StoredTensor { name, rows, cols, data });
        }
        Ok(c)
    }

    /// Writes through a temporary file and a rename, so readers never see a
    /// partial file.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
