//! Self-describing text container for trained networks: a header naming
//! the architecture and hyperparameters, then shape-tagged row-major
//! arrays. Values are written with 17 significant digits so a load/save
//! cycle is bit-exact.

use super::{NetHyper, Network};
use crate::{fmt_f64, Error, Result};

use std::fs;
use std::path::Path;

pub fn save_model(net: &Network, seed: u64, path: &Path) -> Result<()> {
    let hyper = net.hyper();
    let mut out = String::new();
    out.push_str("modarm-model 1\n");
    out.push_str(&format!("variant {}\n", net.variant_name()));
    out.push_str(&format!("hidden {}\n", hyper.hidden));
    out.push_str(&format!("layers {}\n", hyper.layers));
    out.push_str(&format!("window {}\n", hyper.window));
    out.push_str(&format!("state_dim {}\n", hyper.state_dim));
    out.push_str(&format!("a_dim {}\n", hyper.a_dim));
    out.push_str(&format!("head_hidden {}\n", hyper.head_hidden.unwrap_or(0)));
    out.push_str(&format!("n_sum {}\n", net.n_sum_requirement().unwrap_or(0)));
    out.push_str(&format!("seed {seed}\n"));

    let mut count = 0usize;
    net.visit(&mut |_, _, _, _| count += 1);
    out.push_str(&format!("tensors {count}\n"));
    net.visit(&mut |name, rows, cols, data| {
        out.push_str(&format!("tensor {name} {rows} {cols}\n"));
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            let mut line = String::with_capacity(cols * 24);
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                line.push_str(&fmt_f64(*v));
            }
            out.push_str(&line);
            out.push('\n');
        }
    });
    out.push_str("end\n");
    fs::write(path, out)?;
    Ok(())
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of file".into(),
            })
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, String)> {
        let (line, text) = self.next()?;
        let (k, v) = text.split_once(' ').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `{key} <value>`"),
        })?;
        if k != key {
            return Err(Error::Parse {
                line,
                msg: format!("expected key {key}, found {k}"),
            });
        }
        Ok((line, v.to_string()))
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let (line, v) = self.keyed(key)?;
        v.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad integer for {key}: {v}"),
        })
    }
}

pub fn load_model(path: &Path) -> Result<(Network, u64)> {
    let text = fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<(Network, u64)> {
    let mut p = Parser {
        lines: text.lines().enumerate(),
    };
    let (line, magic) = p.next()?;
    if magic != "modarm-model 1" {
        return Err(Error::Parse {
            line,
            msg: format!("bad magic: {magic}"),
        });
    }
    let (_, variant) = p.keyed("variant")?;
    let hidden = p.keyed_usize("hidden")?;
    let layers = p.keyed_usize("layers")?;
    let window = p.keyed_usize("window")?;
    let state_dim = p.keyed_usize("state_dim")?;
    let a_dim = p.keyed_usize("a_dim")?;
    let head_hidden = p.keyed_usize("head_hidden")?;
    let n_sum = p.keyed_usize("n_sum")?;
    let (seed_line, seed_text) = p.keyed("seed")?;
    let seed: u64 = seed_text.parse().map_err(|_| Error::Parse {
        line: seed_line,
        msg: "bad seed".into(),
    })?;
    let tensor_count = p.keyed_usize("tensors")?;

    let hyper = NetHyper {
        hidden,
        layers,
        window,
        state_dim,
        a_dim,
        head_hidden: (head_hidden > 0).then_some(head_hidden),
    };
    let mut net = match variant.as_str() {
        "bilstm" => Network::new_bilstm(hyper, 0),
        "per-module-lstm" => {
            if n_sum == 0 {
                return Err(Error::Parse {
                    line: 1,
                    msg: "per-module-lstm requires n_sum".into(),
                });
            }
            Network::new_per_module(hyper, n_sum, 0)
        }
        "time-lstm" => {
            if n_sum == 0 {
                return Err(Error::Parse {
                    line: 1,
                    msg: "time-lstm requires n_sum".into(),
                });
            }
            Network::new_time(hyper, n_sum, 0)
        }
        other => {
            return Err(Error::Parse {
                line: 2,
                msg: format!("unknown variant {other}"),
            })
        }
    };

    // read every tensor block in file order
    struct Block {
        name: String,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }
    let mut blocks = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let (line, header) = p.next()?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "tensor" {
            return Err(Error::Parse {
                line,
                msg: format!("expected tensor header, found {header}"),
            });
        }
        let rows: usize = toks[2].parse().map_err(|_| Error::Parse {
            line,
            msg: "bad row count".into(),
        })?;
        let cols: usize = toks[3].parse().map_err(|_| Error::Parse {
            line,
            msg: "bad column count".into(),
        })?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line, row) = p.next()?;
            let before = data.len();
            for tok in row.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad number {tok}"),
                })?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {cols} values, found {}", data.len() - before),
                });
            }
        }
        blocks.push(Block {
            name: toks[1].to_string(),
            rows,
            cols,
            data,
        });
    }
    let (line, tail) = p.next()?;
    if tail != "end" {
        return Err(Error::Parse {
            line,
            msg: format!("expected end marker, found {tail}"),
        });
    }

    // fill the freshly constructed network in visit order
    let mut cursor = 0usize;
    let mut mismatch: Option<String> = None;
    net.visit_mut(&mut |name, rows, cols, data| {
        if mismatch.is_some() {
            return;
        }
        let Some(block) = blocks.get(cursor) else {
            mismatch = Some(format!("missing tensor {name}"));
            return;
        };
        if block.name != name || block.rows != rows || block.cols != cols {
            mismatch = Some(format!(
                "tensor {cursor}: expected {name} {rows}x{cols}, found {} {}x{}",
                block.name, block.rows, block.cols
            ));
            return;
        }
        data.copy_from_slice(&block.data);
        cursor += 1;
    });
    if let Some(msg) = mismatch {
        return Err(Error::Parse { line: 0, msg });
    }
    if cursor != blocks.len() {
        return Err(Error::Parse {
            line: 0,
            msg: format!("{} extra tensors in file", blocks.len() - cursor),
        });
    }
    Ok((net, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> NetHyper {
        NetHyper {
            hidden: 5,
            layers: 2,
            window: 3,
            state_dim: 3,
            a_dim: 2,
            head_hidden: None,
        }
    }

    #[test]
    fn exact_round_trip_all_variants() {
        let dir = std::env::temp_dir().join(format!("modarm-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for (k, net) in [
            Network::new_bilstm(hyper(), 11),
            Network::new_per_module(hyper(), 4, 12),
            Network::new_time(hyper(), 4, 13),
        ]
        .into_iter()
        .enumerate()
        {
            let path = dir.join(format!("net{k}.txt"));
            save_model(&net, 99, &path).unwrap();
            let (back, seed) = load_model(&path).unwrap();
            assert_eq!(seed, 99);
            assert_eq!(back.variant_name(), net.variant_name());
            let a = net.params_flat();
            let b = back.params_flat();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn hidden_head_round_trip() {
        let mut h = hyper();
        h.head_hidden = Some(4);
        let net = Network::new_bilstm(h, 3);
        let dir = std::env::temp_dir().join(format!("modarm-model-h-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.txt");
        save_model(&net, 1, &path).unwrap();
        let (back, _) = load_model(&path).unwrap();
        assert_eq!(back, net);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupted_file_rejected() {
        let net = Network::new_bilstm(hyper(), 1);
        let dir = std::env::temp_dir().join(format!("modarm-model-c-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.txt");
        save_model(&net, 1, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(40).collect();
        assert!(parse_model(&truncated.join("\n")).is_err());
        let wrong = text.replace("variant bilstm", "variant time-lstm");
        assert!(parse_model(&wrong).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
