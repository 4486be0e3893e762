//! EPB v1: a small little-endian container for epoch sets.
//!
//! ```text
//! "ERPB"                      magic, 4 bytes
//! u16  version = 1
//! u32  n_epochs
//! u16  n_channels
//! u32  n_samples
//! f32  sampling_rate_hz
//! f32  prestim_ms
//! n_channels x [u8; 8]        channel names, ASCII, right-padded with spaces
//! n_epochs   x u8             labels (0 = non-target, 1 = target)
//! n_epochs   x i32            subject ids (-1 = unknown)
//! n_epochs * n_channels * n_samples x f32   amplitudes, [epoch][channel][sample]
//! ```

use std::fs;
use std::path::Path;

use super::EpochSet;
use crate::error::{Error, Result};

pub const EPB_MAGIC: &[u8; 4] = b"ERPB";
pub const EPB_VERSION: u16 = 1;
const NAME_LEN: usize = 8;

pub fn write_epb(set: &EpochSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_epb_bytes(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_epb(path: impl AsRef<Path>) -> Result<EpochSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_epb_bytes(&bytes)
}

fn narrow(v: f64) -> Option<f32> {
    let f = v as f32;
    f.is_finite().then_some(f)
}

pub fn write_epb_bytes(set: &EpochSet) -> Result<Vec<u8>> {
    let n_epochs = u32::try_from(set.n_epochs())
        .map_err(|_| Error::InvalidConfig("too many epochs for EPB".into()))?;
    let n_channels = u16::try_from(set.n_channels())
        .map_err(|_| Error::InvalidConfig("too many channels for EPB".into()))?;
    let n_samples = u32::try_from(set.n_samples())
        .map_err(|_| Error::InvalidConfig("too many samples for EPB".into()))?;
    let rate = narrow(set.sampling_rate_hz)
        .ok_or_else(|| Error::InvalidConfig("sampling rate not representable".into()))?;
    let prestim = narrow(set.prestim_ms)
        .ok_or_else(|| Error::InvalidConfig("prestimulus span not representable".into()))?;

    let mut out = Vec::with_capacity(32 + set.data().len() * 4);
    out.extend_from_slice(EPB_MAGIC);
    out.extend_from_slice(&EPB_VERSION.to_le_bytes());
    out.extend_from_slice(&n_epochs.to_le_bytes());
    out.extend_from_slice(&n_channels.to_le_bytes());
    out.extend_from_slice(&n_samples.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&prestim.to_le_bytes());
    for name in &set.channel_names {
        if !name.is_ascii() || name.len() > NAME_LEN {
            return Err(Error::InvalidConfig(format!(
                "channel name {name:?} must be ASCII and at most {NAME_LEN} bytes"
            )));
        }
        let mut field = [b' '; NAME_LEN];
        field[..name.len()].copy_from_slice(name.as_bytes());
        out.extend_from_slice(&field);
    }
    out.extend_from_slice(set.labels());
    for id in set.subject_ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    let per_epoch = set.epoch_len();
    for (i, &v) in set.data().iter().enumerate() {
        let f = narrow(v).ok_or(Error::InvalidAmplitude {
            epoch: i / per_epoch,
            channel: (i % per_epoch) / set.n_samples(),
            sample: i % set.n_samples(),
        })?;
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptFile(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn read_epb_bytes(bytes: &[u8]) -> Result<EpochSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic").map_err(|_| Error::UnrecognizedContainer)?;
    if magic != EPB_MAGIC {
        return Err(Error::UnrecognizedContainer);
    }
    let version = u16::from_le_bytes(r.array("version").map_err(|_| Error::UnrecognizedContainer)?);
    if version != EPB_VERSION {
        return Err(Error::UnrecognizedContainer);
    }
    let n_epochs = u32::from_le_bytes(r.array("header")?) as usize;
    let n_channels = u16::from_le_bytes(r.array("header")?) as usize;
    let n_samples = u32::from_le_bytes(r.array("header")?) as usize;
    let rate = f32::from_le_bytes(r.array("header")?);
    let prestim = f32::from_le_bytes(r.array("header")?);

    let mut channel_names = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let raw = r.take(NAME_LEN, "channel names")?;
        if !raw.is_ascii() {
            return Err(Error::CorruptFile("non-ASCII channel name".into()));
        }
        let name = std::str::from_utf8(raw).expect("ascii").trim_end_matches(' ');
        channel_names.push(name.to_string());
    }
    let labels = r.take(n_epochs, "labels")?.to_vec();
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::CorruptFile("label outside {0, 1}".into()));
    }
    let subject_ids = r
        .take(n_epochs.saturating_mul(4), "subject ids")?
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let n_values = n_epochs
        .checked_mul(n_channels)
        .and_then(|v| v.checked_mul(n_samples))
        .ok_or_else(|| Error::CorruptFile("header counts overflow".into()))?;
    let payload = r.take(n_values.saturating_mul(4), "amplitudes")?;
    if r.pos != bytes.len() {
        return Err(Error::CorruptFile(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();

    EpochSet::new(
        n_channels,
        n_samples,
        rate as f64,
        prestim as f64,
        channel_names,
        labels,
        subject_ids,
        data,
    )
    .map_err(|e| match e {
        e @ Error::InvalidAmplitude { .. } => e,
        other => Error::CorruptFile(other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_set() -> EpochSet {
        let data: Vec<f64> = (0..24).map(|i| i as f64 * 0.5 - 3.0).collect();
        EpochSet::new(
            3,
            4,
            1000.0,
            200.0,
            vec!["Fz".into(), "Cz".into(), "Pz".into()],
            vec![1, 0],
            vec![7, -1],
            data,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let set = small_set();
        let bytes = write_epb_bytes(&set).unwrap();
        let back = read_epb_bytes(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(write_epb_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = write_epb_bytes(&small_set()).unwrap();
        assert_eq!(&bytes[0..4], b"ERPB");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes([bytes[10], bytes[11]]), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(&bytes[24..32], b"Fz      ");
        let header = 24 + 3 * 8 + 2 + 2 * 4;
        assert_eq!(bytes.len(), header + 24 * 4);
    }

    #[test]
    fn header_only_file_is_corrupt() {
        let bytes = write_epb_bytes(&small_set()).unwrap();
        let header_only = &bytes[..24];
        assert!(matches!(read_epb_bytes(header_only), Err(Error::CorruptFile(_))));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(read_epb_bytes(truncated), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn bad_magic_or_version() {
        let mut bytes = write_epb_bytes(&small_set()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_epb_bytes(&bytes), Err(Error::UnrecognizedContainer)));
        let mut bytes = write_epb_bytes(&small_set()).unwrap();
        bytes[4] = 2;
        assert!(matches!(read_epb_bytes(&bytes), Err(Error::UnrecognizedContainer)));
        assert!(matches!(read_epb_bytes(b"ER"), Err(Error::UnrecognizedContainer)));
    }

    #[test]
    fn non_finite_payload_rejected() {
        let mut bytes = write_epb_bytes(&small_set()).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_epb_bytes(&bytes),
            Err(Error::InvalidAmplitude { epoch: 1, channel: 2, sample: 3 })
        ));
    }

    #[test]
    fn amplitude_overflowing_f32_rejected_on_write() {
        let mut set = small_set();
        set.epoch_mut(0)[0] = 1e300;
        assert!(matches!(write_epb_bytes(&set), Err(Error::InvalidAmplitude { .. })));
    }

    #[test]
    fn long_channel_names_rejected() {
        let mut set = small_set();
        set.channel_names[0] = "TooLongName".into();
        assert!(write_epb_bytes(&set).is_err());
    }

    proptest! {
        #[test]
        fn random_sets_round_trip(
            n_epochs in 0usize..5,
            n_channels in 1usize..4,
            n_samples in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::RngExt;
            let mut rng = crate::rng::SeededRng::new(seed);
            let len = n_epochs * n_channels * n_samples;
            let data: Vec<f64> = (0..len).map(|_| rng.random_range(-500.0f32..500.0) as f64).collect();
            let labels: Vec<u8> = (0..n_epochs).map(|_| rng.random_range(0..2u8)).collect();
            let subjects: Vec<i32> = (0..n_epochs).map(|_| rng.random_range(-1..300)).collect();
            let names = (0..n_channels).map(|c| format!("E{c}")).collect();
            let set = EpochSet::new(n_channels, n_samples, 512.0, 100.0, names, labels, subjects, data).unwrap();
            let bytes = write_epb_bytes(&set).unwrap();
            let back = read_epb_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(write_epb_bytes(&back).unwrap(), bytes);
        }
    }
}
