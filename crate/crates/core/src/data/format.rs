//! The EEGEPOCH container.
//!
//! ```text
//! "EEGEPOCH" version:u32 n_trials:u32 n_channels:u32 n_samples:u32 n_classes:u32 fs:f32
//! per channel: name_len:u16 name:utf8 x:f32 y:f32
//! per class:   name_len:u16 name:utf8
//! labels: u32 × n_trials
//! data:   f32 × n_trials·n_channels·n_samples (trial-major, channel-major within trial)
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use super::{DataError, EpochSet, Montage};
use crate::fsio::{put_string, write_atomic, Reader};

pub const EPOCH_MAGIC: &[u8; 8] = b"EEGEPOCH";
pub const EPOCH_VERSION: u32 = 1;

pub fn encode_epochs(set: &EpochSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + set.trials.len() * 4 + set.labels.len() * 4);
    out.extend_from_slice(EPOCH_MAGIC);
    for v in [
        EPOCH_VERSION,
        set.n_trials as u32,
        set.n_channels as u32,
        set.n_samples as u32,
        set.n_classes() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&set.fs.to_le_bytes());
    for (name, xy) in set.montage.names.iter().zip(&set.montage.xy) {
        put_string(&mut out, name);
        out.extend_from_slice(&xy[0].to_le_bytes());
        out.extend_from_slice(&xy[1].to_le_bytes());
    }
    for name in &set.class_names {
        put_string(&mut out, name);
    }
    for &l in &set.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for &v in &set.trials {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_epochs(bytes: &[u8]) -> Result<EpochSet, DataError> {
    let mut r = Reader::new(bytes);
    match r.bytes(8) {
        Some(m) if m == EPOCH_MAGIC => {}
        _ => return Err(DataError::BadMagic),
    }
    let header = "header";
    let version = r.u32().ok_or(DataError::Truncated(header))?;
    if version != EPOCH_VERSION {
        return Err(DataError::Version(version));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u32().ok_or(DataError::Truncated(header))? as usize;
    }
    let [n_trials, n_channels, n_samples, n_classes] = dims;
    let fs = r.f32().ok_or(DataError::Truncated(header))?;

    let values = n_trials
        .checked_mul(n_channels)
        .and_then(|v| v.checked_mul(n_samples))
        .filter(|v| v.checked_mul(4).is_some())
        .ok_or_else(|| DataError::ExtentOverflow(format!("{n_trials}x{n_channels}x{n_samples} trials")))?;

    let mut names = Vec::with_capacity(n_channels.min(r.remaining()));
    let mut xy = Vec::with_capacity(n_channels.min(r.remaining()));
    for _ in 0..n_channels {
        names.push(r.string().ok_or(DataError::Truncated("channel table"))?);
        let x = r.f32().ok_or(DataError::Truncated("channel table"))?;
        let y = r.f32().ok_or(DataError::Truncated("channel table"))?;
        xy.push([x, y]);
    }
    let mut class_names = Vec::with_capacity(n_classes.min(r.remaining()));
    for _ in 0..n_classes {
        class_names.push(r.string().ok_or(DataError::Truncated("class table"))?);
    }
    if r.remaining() / 4 < n_trials {
        return Err(DataError::Truncated("labels"));
    }
    let labels: Vec<u32> = (0..n_trials).map(|_| r.u32().unwrap()).collect();
    if r.remaining() / 4 < values {
        return Err(DataError::Truncated("trial data"));
    }
    let raw = r.bytes(values * 4).unwrap();
    let trials = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if r.remaining() != 0 {
        return Err(DataError::Invalid(format!("{} trailing bytes", r.remaining())));
    }
    let set = EpochSet {
        n_trials,
        n_channels,
        n_samples,
        trials,
        labels,
        class_names,
        montage: Montage { names, xy },
        fs,
    };
    set.validate()?;
    Ok(set)
}

pub fn save_epochs(set: &EpochSet, path: &Path) -> Result<(), DataError> {
    set.validate()?;
    write_atomic(path, &encode_epochs(set)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_epochs(path: &Path) -> Result<EpochSet, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_epochs(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n_trials: usize, n_channels: usize, n_samples: usize, seed: u64) -> EpochSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trials = (0..n_trials * n_channels * n_samples)
            .map(|_| f32::from_bits(rng.random::<u32>() & 0xbfff_ffff))
            .collect();
        EpochSet::new(
            trials,
            n_samples,
            (0..n_trials as u32).map(|i| i % 3).collect(),
            vec!["left".into(), "right".into(), "feet".into()],
            Montage::for_channels(n_channels),
            125.0,
        )
        .unwrap()
    }

    fn same_bits(a: &EpochSet, b: &EpochSet) -> bool {
        a.trials.len() == b.trials.len()
            && a.trials.iter().zip(&b.trials).all(|(x, y)| x.to_bits() == y.to_bits())
            && a.labels == b.labels
            && a.montage == b.montage
            && a.class_names == b.class_names
            && a.fs.to_bits() == b.fs.to_bits()
    }

    #[test]
    fn round_trip_through_file() {
        let set = random_set(5, 22, 30, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.eegepoch");
        save_epochs(&set, &path).unwrap();
        let back = load_epochs(&path).unwrap();
        assert!(same_bits(&set, &back));
        assert_eq!(encode_epochs(&back), fs::read(&path).unwrap());
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_epochs(&random_set(2, 3, 4, 2));
        bytes[..8].copy_from_slice(b"EEGEPOCX");
        assert!(matches!(decode_epochs(&bytes), Err(DataError::BadMagic)));
        assert_eq!(decode_epochs(&bytes).unwrap_err().code(), "bad-magic");
    }

    #[test]
    fn header_claims_more_trials_than_payload() {
        let mut bytes = encode_epochs(&random_set(2, 3, 4, 3));
        bytes[12..16].copy_from_slice(&3u32.to_le_bytes());
        let err = decode_epochs(&bytes).unwrap_err();
        assert!(matches!(err, DataError::Truncated(_)), "{err}");
        let short = encode_epochs(&random_set(2, 3, 4, 3));
        assert!(matches!(decode_epochs(&short[..short.len() - 1]), Err(DataError::Truncated(_))));
    }

    #[test]
    fn absurd_extents_overflow() {
        let mut bytes = encode_epochs(&random_set(1, 1, 1, 4));
        for off in [12, 16, 20] {
            bytes[off..off + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = decode_epochs(&bytes).unwrap_err();
        assert!(matches!(err, DataError::ExtentOverflow(_)), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn any_channel_count_round_trips(channels in 1usize..=128, trials in 0usize..4, samples in 1usize..9, seed in any::<u64>()) {
            let set = random_set(trials, channels, samples, seed);
            let back = decode_epochs(&encode_epochs(&set)).unwrap();
            prop_assert!(same_bits(&set, &back));
        }
    }
}
