//! Plain-text parameter checkpoints.
//!
//! ```text
//! fedmix-checkpoint v1
//! <layer_id> <tensor name> <d0>,<d1>,... <v0> <v1> ...
//! ```
//!
//! Values are written with 17 significant digits so every `f64` round-trips.

use std::io::{BufRead, Write};

use super::{NnError, ParameterSet, Tensor};

pub const CHECKPOINT_MAGIC: &str = "fedmix-checkpoint v1";

pub fn write_checkpoint<W: Write>(params: &ParameterSet, mut out: W) -> Result<(), NnError> {
    let io = |e: std::io::Error| NnError::Io(e.to_string());
    writeln!(out, "{CHECKPOINT_MAGIC}").map_err(io)?;
    for (layer_id, name, t) in params.iter() {
        let shape = t
            .shape()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        write!(out, "{layer_id} {name} {shape}").map_err(io)?;
        for v in t.data() {
            write!(out, " {v:.16e}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<ParameterSet, NnError> {
    let mut params = ParameterSet::new();
    let mut saw_magic = false;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| NnError::Io(e.to_string()))?;
        let err = |msg: &str| NnError::Checkpoint {
            line: lineno,
            msg: msg.to_string(),
        };
        if !saw_magic {
            if line.trim() != CHECKPOINT_MAGIC {
                return Err(err("missing header"));
            }
            saw_magic = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let layer_id: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad layer id"))?;
        let name = fields.next().ok_or_else(|| err("missing tensor name"))?;
        let shape: Vec<usize> = fields
            .next()
            .ok_or_else(|| err("missing shape"))?
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err("bad shape"))?;
        let data: Vec<f64> = fields
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err("bad value"))?;
        let t = Tensor::new(shape, data).map_err(|e| err(&e.to_string()))?;
        params.insert(layer_id, name, t);
    }
    if !saw_magic {
        return Err(NnError::Checkpoint {
            line: 0,
            msg: "empty checkpoint".into(),
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::super::{init_network, Architecture};
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn network_round_trips_exactly() {
        let arch = Architecture::agent_default(6, 5, 3).unwrap();
        let p = init_network(&arch, true, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CHECKPOINT_MAGIC));
        assert!(text.contains("1 u_update 5,5 "));
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), p);
    }

    #[test]
    fn rejects_bad_records() {
        let bad = format!("{CHECKPOINT_MAGIC}\n0 weight 2,2 1 2 3\n");
        assert!(matches!(
            read_checkpoint(bad.as_bytes()),
            Err(NnError::Checkpoint { line: 2, .. })
        ));
        assert!(read_checkpoint("0 weight 1 1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn values_round_trip(v in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..30)) {
            let mut p = ParameterSet::new();
            p.insert(2, "bias", Tensor::vector(v).unwrap());
            let mut buf = Vec::new();
            write_checkpoint(&p, &mut buf).unwrap();
            let back = read_checkpoint(&buf[..]).unwrap();
            let a: Vec<u64> = p.flatten().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.flatten().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
