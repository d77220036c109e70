use std::collections::BTreeSet;

use fenc::formats::{fit_json, read_fit, read_spectrum, spectrum_table, Table};
use fenc::tagfile::{self, Header, HEADER_LEN};
use fenc::CliError;
use fenc::fft::RealFft;
use fenc_core::fitkit::{fit, Model};
use fenc_core::photonsim::TagStream;
use fenc_core::spectral::{psd_of_samples, Window};
use proptest::prelude::*;

fn stream(tags: &BTreeSet<u64>, extra: u64, seed: u64) -> TagStream {
    let ts: Vec<u64> = tags.iter().copied().collect();
    let duration = ts.last().copied().unwrap_or(0) + extra;
    TagStream::new(ts, duration, seed).unwrap().with_source_digest(seed ^ 0xabcd)
}

proptest! {
    #[test]
    fn tag_stream_round_trips(tags in prop::collection::btree_set(0u64..1u64 << 50, 0..500),
                              extra in 0u64..1000, seed: u64) {
        let s = stream(&tags, extra, seed);
        let bytes = tagfile::to_bytes(&s);
        prop_assert_eq!(bytes.len(), HEADER_LEN + 8 * s.len());
        let back = tagfile::read_stream(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.timestamps(), s.timestamps());
        prop_assert_eq!(back.duration_ps(), s.duration_ps());
        prop_assert_eq!(back.seed, s.seed);
        prop_assert_eq!(back.source_digest, s.source_digest);
    }

    #[test]
    fn truncated_files_are_rejected(tags in prop::collection::btree_set(0u64..1u64 << 40, 1..200),
                                    cut in 1usize..8) {
        let bytes = tagfile::to_bytes(&stream(&tags, 0, 1));
        let r = tagfile::read_stream(&bytes[..bytes.len() - cut]);
        let is_format = matches!(r, Err(CliError::Format { .. }));
        prop_assert!(is_format);
    }
}

#[test]
fn header_layout_is_fixed() {
    let h = Header {
        version: 1,
        duration_ps: 0x0102,
        count: 3,
        seed: 4,
        source_digest: 5,
    };
    let b = h.to_bytes();
    assert_eq!(&b[0..4], b"NVTS");
    assert_eq!(b[4], 1);
    assert_eq!(b[8], 0x02);
    assert_eq!(b[9], 0x01);
    assert_eq!(b[16], 3);
    assert_eq!(b[24], 4);
    assert_eq!(b[32], 5);
    assert_eq!(Header::parse(&b).unwrap(), h);
}

#[test]
fn corrupt_tag_files_name_the_problem() {
    let s = TagStream::new(vec![10, 20, 30], 100, 0).unwrap();
    let good = tagfile::to_bytes(&s);

    let mut magic = good.clone();
    magic[0] = b'X';
    let mut version = good.clone();
    version[4] = 9;
    let mut order = good.clone();
    order[HEADER_LEN + 8] = 5; // second tag below the first
    let mut beyond = good.clone();
    beyond[HEADER_LEN + 16] = 200; // last tag past the duration
    let mut trailing = good.clone();
    trailing.push(0);

    for (bytes, needle) in [
        (&magic, "magic"),
        (&version, "version"),
        (&order, "increasing"),
        (&beyond, "duration"),
        (&trailing, "trailing"),
        (&good[..10].to_vec(), "header"),
    ] {
        let err = tagfile::read_stream(bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains(needle), "{err} should mention {needle}");
        assert_eq!(err.exit_code() as i32, 2);
    }
}

#[test]
fn tag_file_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.nvts");
    let s = TagStream::new(vec![1, 2, 3, 1_000_000], 2_000_000, 42).unwrap();
    tagfile::write_file(&path, &s).unwrap();
    assert_eq!(tagfile::read_header(&path).unwrap().count, 4);
    assert_eq!(tagfile::read_file(&path).unwrap().timestamps(), s.timestamps());
}

#[test]
fn table_round_trips_with_metadata() {
    let mut t = Table::new(&["a", "b"]).with_meta("kind", "test").with_meta("bin_width_s", 1e-4);
    t.push_f64(&[1.0, 0.1 + 0.2]);
    t.push_f64(&[-3.5e-300, f64::MAX]);
    let back = Table::parse(&t.to_bytes(), "table").unwrap();
    assert_eq!(back.meta("kind"), Some("test"));
    assert_eq!(back.meta("bin_width_s"), Some("0.0001"));
    assert_eq!(back.column("a").unwrap(), vec![1.0, -3.5e-300]);
    assert_eq!(back.column("b").unwrap(), vec![0.1 + 0.2, f64::MAX]);
    assert!(back.column("c").is_err());
}

#[test]
fn malformed_tables_are_format_errors() {
    let err = Table::parse(b"# k=v\na,b\n1,2\n3\n", "table").unwrap_err();
    assert!(matches!(err, CliError::Format { .. }), "{err}");
    let t = Table::parse(b"a,b\n1,x\n", "table").unwrap();
    assert!(t.column("b").is_err());
}

#[test]
fn spectrum_table_round_trips_exactly() {
    let x: Vec<f64> = (0..64).map(|i| ((i * 7) % 5) as f64).collect();
    let s = psd_of_samples(x, 64, 1e-3, Window::Hann, &mut RealFft::new()).unwrap();
    let back = read_spectrum(&spectrum_table(&s).to_bytes()).unwrap();
    assert_eq!(back, s);
}

#[test]
fn fit_json_round_trips() {
    let x: Vec<f64> = (1..20).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v.powf(0.5)).collect();
    let f = fit(&Model::PowerLaw, &x, &y, None, None).unwrap();
    let mut back = read_fit(&fit_json(&f)).unwrap();
    assert!(back.cost_history.is_empty());
    back.cost_history = f.cost_history.clone();
    assert_eq!(back, f);
}
