//! Checkpoint file format.
//!
//! A single binary file: magic `NTF4`, one format-version byte, a dtype
//! tag, the epoch counter and RNG state, then named parameter sets, each
//! with its tensors (name, shape, raw little-endian values) and Adam
//! state. Values round-trip bit-exactly.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::{AdamState, Tensor};
use crate::nn::ParamSet;
use crate::scalar::{Dtype, Scalar};

pub const MAGIC: [u8; 4] = *b"NTF4";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u8),
    #[error("checkpoint dtype {got} does not match requested {expected}")]
    DtypeMismatch { expected: Dtype, got: u8 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// One named parameter group with optimizer state.
pub struct CheckpointSet<T> {
    pub name: String,
    pub params: ParamSet<T>,
    pub adam: AdamState<T>,
}

pub struct CheckpointData<T> {
    pub epoch: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub sets: Vec<CheckpointSet<T>>,
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    data: &CheckpointData<T>,
) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    w.write_all(&[FORMAT_VERSION, T::DTYPE.code()])?;
    w.write_all(&data.epoch.to_le_bytes())?;
    w.write_all(&data.rng_seed)?;
    w.write_all(&data.rng_word_pos.to_le_bytes())?;
    w.write_all(&[data.sets.len() as u8])?;
    for set in &data.sets {
        write_str(&mut w, &set.name)?;
        w.write_all(&(set.params.len() as u32).to_le_bytes())?;
        for (name, tensor) in set.params.names().iter().zip(set.params.tensors()) {
            write_str(&mut w, name)?;
            w.write_all(&[tensor.shape().len() as u8])?;
            for &d in tensor.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&T::to_le_byte_vec(tensor.data()))?;
        }
        w.write_all(&set.adam.step.to_le_bytes())?;
        for moment in [&set.adam.m, &set.adam.v] {
            if moment.len() != set.params.len() {
                return Err(CheckpointError::Corrupt(format!(
                    "set {} has {} moment tensors for {} params",
                    set.name,
                    moment.len(),
                    set.params.len()
                )));
            }
            for t in moment {
                w.write_all(&T::to_le_byte_vec(t.data()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<CheckpointData<T>, CheckpointError> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut header = [0u8; 2];
    r.read_exact(&mut header)?;
    if header[0] != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion(header[0]));
    }
    if header[1] != T::DTYPE.code() {
        return Err(CheckpointError::DtypeMismatch {
            expected: T::DTYPE,
            got: header[1],
        });
    }
    let epoch = read_u64(&mut r)?;
    let mut rng_seed = [0u8; 32];
    r.read_exact(&mut rng_seed)?;
    let mut pos_bytes = [0u8; 16];
    r.read_exact(&mut pos_bytes)?;
    let rng_word_pos = u128::from_le_bytes(pos_bytes);
    let mut n_sets = [0u8; 1];
    r.read_exact(&mut n_sets)?;

    let mut sets = Vec::with_capacity(n_sets[0] as usize);
    for _ in 0..n_sets[0] {
        let name = read_str(&mut r)?;
        let n_params = read_u32(&mut r)? as usize;
        let mut params = ParamSet::new();
        for _ in 0..n_params {
            let pname = read_str(&mut r)?;
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim)?;
            let mut shape = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                shape.push(read_u64(&mut r)? as usize);
            }
            let numel: usize = shape.iter().product();
            let tensor = read_tensor::<T>(&mut r, shape, numel)?;
            params.add(pname, tensor);
        }
        let step = read_u64(&mut r)?;
        let shapes = params.shapes();
        let mut adam = AdamState::new(&shapes);
        for i in 0..n_params {
            adam.m[i] = read_tensor::<T>(&mut r, shapes[i].clone(), shapes[i].iter().product())?;
        }
        for i in 0..n_params {
            adam.v[i] = read_tensor::<T>(&mut r, shapes[i].clone(), shapes[i].iter().product())?;
        }
        adam.step = step;
        sets.push(CheckpointSet { name, params, adam });
    }
    Ok(CheckpointData {
        epoch,
        rng_seed,
        rng_word_pos,
        sets,
    })
}

/// Peek at a checkpoint's dtype tag without loading it.
pub fn checkpoint_dtype(path: &Path) -> Result<Dtype, CheckpointError> {
    let mut file = std::fs::File::open(path)?;
    let mut head = [0u8; 6];
    file.read_exact(&mut head)?;
    if head[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if head[4] != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion(head[4]));
    }
    Dtype::from_code(head[5]).ok_or_else(|| CheckpointError::Corrupt("unknown dtype".into()))
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let bytes = s.as_bytes();
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)
}

fn read_str(r: &mut impl Read) -> Result<String, CheckpointError> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Corrupt(format!("bad name: {e}")))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_tensor<T: Scalar>(
    r: &mut impl Read,
    shape: Vec<usize>,
    numel: usize,
) -> Result<Tensor<T>, CheckpointError> {
    let mut buf = vec![0u8; numel * T::DTYPE.size_bytes()];
    r.read_exact(&mut buf)?;
    Ok(Tensor::from_vec(shape, T::from_le_byte_slice(&buf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::kaiming_init;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut params = ParamSet::<f32>::new();
        params.add("a", kaiming_init(4, 3, 1));
        params.add("b", Tensor::from_vec(vec![2], vec![0.5f32, -0.25]));
        let mut adam = AdamState::new(&params.shapes());
        adam.step = 17;
        adam.m[0] = kaiming_init(4, 3, 2);
        let data = CheckpointData {
            epoch: 42,
            rng_seed: [7u8; 32],
            rng_word_pos: 123456789,
            sets: vec![CheckpointSet {
                name: "field".into(),
                params,
                adam,
            }],
        };
        let dir = std::env::temp_dir().join("ntf4_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.ntf4");
        save_checkpoint(&path, &data).unwrap();

        let back: CheckpointData<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back.epoch, 42);
        assert_eq!(back.rng_seed, [7u8; 32]);
        assert_eq!(back.rng_word_pos, 123456789);
        assert_eq!(back.sets.len(), 1);
        let set = &back.sets[0];
        assert_eq!(set.name, "field");
        assert_eq!(set.adam.step, 17);
        for (a, b) in data.sets[0].params.tensors().iter().zip(set.params.tensors()) {
            assert_eq!(a.to_vec(), b.to_vec());
            assert_eq!(a.shape(), b.shape());
        }
        assert_eq!(data.sets[0].adam.m[0].to_vec(), set.adam.m[0].to_vec());
        assert_eq!(checkpoint_dtype(&path).unwrap(), Dtype::F32);
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let params = ParamSet::<f32>::new();
        let adam = AdamState::new(&params.shapes());
        let data = CheckpointData {
            epoch: 0,
            rng_seed: [0u8; 32],
            rng_word_pos: 0,
            sets: vec![CheckpointSet {
                name: "field".into(),
                params,
                adam,
            }],
        };
        let dir = std::env::temp_dir().join("ntf4_ckpt_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c32.ntf4");
        save_checkpoint(&path, &data).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(CheckpointError::DtypeMismatch { .. })
        ));
    }

    #[test]
    fn garbage_file_rejected() {
        let dir = std::env::temp_dir().join("ntf4_ckpt_test3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.ntf4");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
