use proptest::prelude::*;
use psyman_core::tensor_io::{
    encoded_len, read_ratings_csv, read_tensor, read_tensor_file, write_ratings_csv, write_tensor, write_tensor_file,
    HUMAN_RATING_RANGE,
};
use psyman_core::{Error, RatingsTable, Tensor};
use psyman_oracles as oracle;

fn random_tensor(g: &mut oracle::Gen) -> Tensor<f32> {
    let ndim = g.int(1, 4);
    let dims: Vec<usize> = (0..ndim).map(|_| g.int(1, 6)).collect();
    let len: usize = dims.iter().product();
    let data = (0..len)
        .map(|_| loop {
            // Arbitrary bit patterns, including subnormals and negative zero.
            let v = f32::from_bits((g.uniform() * u32::MAX as f64) as u32);
            if v.is_finite() {
                break v;
            }
        })
        .collect();
    Tensor::new(dims, data).unwrap()
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn five_hundred_random_tensors_round_trip() {
    let mut g = oracle::Gen::new(2024);
    for _ in 0..500 {
        let t = random_tensor(&mut g);
        let mut buf = Vec::new();
        let n = write_tensor(&t, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        assert_eq!(n, 9 + 4 * t.ndim() as u64 + 4 * t.len() as u64);
        assert_eq!(n, encoded_len(&t));
        let back = read_tensor(buf.as_slice()).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert_eq!(bits(&back), bits(&t));
    }
}

fn encode(t: &Tensor<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_tensor(t, &mut buf).unwrap();
    buf
}

/// Hand-assembled header: magic, version, dtype, reserved, ndim, dims.
fn header(magic: &[u8; 4], version: u16, dtype: u8, reserved: u8, dims: &[u32]) -> Vec<u8> {
    let mut b = magic.to_vec();
    b.extend_from_slice(&version.to_le_bytes());
    b.push(dtype);
    b.push(reserved);
    b.push(dims.len() as u8);
    for d in dims {
        b.extend_from_slice(&d.to_le_bytes());
    }
    b
}

fn format_err(bytes: &[u8]) -> bool {
    matches!(read_tensor(bytes), Err(Error::Format(_)))
}

#[test]
fn malformed_files_produce_named_errors() {
    let good = encode(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());

    let mut bad_magic = good.clone();
    bad_magic[..4].copy_from_slice(b"XXXX");
    assert!(format_err(&bad_magic));

    assert!(format_err(&[header(b"PSYT", 2, 0, 0, &[1]), 0f32.to_le_bytes().to_vec()].concat()));
    assert!(format_err(&[header(b"PSYT", 1, 1, 0, &[1]), 0f32.to_le_bytes().to_vec()].concat()));
    assert!(format_err(&[header(b"PSYT", 1, 0, 7, &[1]), 0f32.to_le_bytes().to_vec()].concat()));
    assert!(format_err(&header(b"PSYT", 1, 0, 0, &[])));
    assert!(format_err(&header(b"PSYT", 1, 0, 0, &[1, 1, 1, 1, 1])));
    assert!(format_err(&header(b"PSYT", 1, 0, 0, &[3, 0])));
    assert!(format_err(&header(b"PSYT", 1, 0, 0, &[u32::MAX, u32::MAX, u32::MAX, u32::MAX])));

    for cut in 0..good.len() {
        assert!(format_err(&good[..cut]), "truncation at {cut} accepted");
    }

    for pattern in [0x7FC0_0000u32, 0x7F80_0000, 0xFF80_0000, 0x7F80_0001] {
        let mut b = header(b"PSYT", 1, 0, 0, &[2]);
        b.extend_from_slice(&1f32.to_le_bytes());
        b.extend_from_slice(&pattern.to_le_bytes());
        assert!(matches!(read_tensor(b.as_slice()), Err(Error::Data(_))), "{pattern:#x}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.pst");
    std::fs::write(&path, [good.clone(), vec![0]].concat()).unwrap();
    assert!(matches!(read_tensor_file(&path), Err(Error::Format(_))));
    std::fs::write(&path, &good).unwrap();
    assert_eq!(read_tensor_file(&path).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn hand_encoded_scalar_is_seventeen_bytes() {
    let t = Tensor::new(vec![1], vec![0.0f32]).unwrap();
    let expected = [header(b"PSYT", 1, 0, 0, &[1]), vec![0, 0, 0, 0]].concat();
    assert_eq!(encode(&t), expected);
    assert_eq!(expected.len(), 17);
}

#[test]
fn invalid_tensors_are_rejected_before_writing() {
    assert!(matches!(Tensor::new(vec![3], vec![1.0f32, 2.0]), Err(Error::Shape(_))));
    assert!(Tensor::new(vec![], Vec::<f32>::new()).is_err());
    assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0f32]).is_err());
    assert!(matches!(Tensor::new(vec![1], vec![f32::NAN]), Err(Error::Data(_))));
}

#[test]
fn file_writer_reports_byte_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pst");
    let t = Tensor::new(vec![2, 3, 1], vec![0.5f32; 6]).unwrap();
    let n = write_tensor_file(&t, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), n);
}

#[test]
fn ratings_csv_preserves_row_order_and_round_trips() {
    let text = "image_id,happy,warm\nz9,1.0,2.0\na1,3.0,4.0\nm5,9,1\n";
    let t: RatingsTable = read_ratings_csv(text.as_bytes(), Some(HUMAN_RATING_RANGE)).unwrap();
    assert_eq!(t.image_ids(), ["z9", "a1", "m5"]);
    assert_eq!(t.attribute_names(), ["happy", "warm"]);
    assert_eq!(t.values()[[2, 0]], 9.0);
    let mut out = Vec::new();
    write_ratings_csv(&t, &mut out).unwrap();
    let back: RatingsTable = read_ratings_csv(out.as_slice(), None).unwrap();
    assert_eq!(back, t);
}

#[test]
fn ratings_csv_errors() {
    let err = |text: &str, range| read_ratings_csv::<f64>(text.as_bytes(), range).unwrap_err();
    let e = err("image_id,a,b\nx,1,2\ny,3,4\nz,abc,5\n", None);
    assert!(matches!(&e, Error::Format(m) if m.contains("row 3")), "{e}");
    let e = err("image_id,a,b\nx,1,2\ny,3\n", None);
    assert!(matches!(&e, Error::Format(m) if m.contains("row 2")), "{e}");
    assert!(matches!(err("image_id,a\nx,9.5\n", Some((1.0, 9.0))), Error::Data(_)));
    assert!(matches!(err("image_id,a\nx,0.5\n", Some((1.0, 9.0))), Error::Data(_)));
    assert!(matches!(err("image_id,a\nx,NaN\n", None), Error::Data(_)));
    assert!(matches!(err("id,a\nx,1\n", None), Error::Format(_)));
    assert!(err("image_id,a,a\nx,1,2\n", None).to_string().contains('a'));
    read_ratings_csv::<f64>("image_id,a\nx,9\ny,1\n".as_bytes(), Some((1.0, 9.0))).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn round_trip_is_bit_exact(dims in prop::collection::vec(1usize..5, 1..=4), seed in any::<u64>()) {
        let len: usize = dims.iter().product();
        let mut g = oracle::Gen::new(seed);
        let data: Vec<f32> = (0..len).map(|_| (g.gaussian() * 1e3) as f32).collect();
        let t = Tensor::new(dims, data).unwrap();
        let buf = encode(&t);
        prop_assert_eq!(buf.len() as u64, encoded_len(&t));
        let back = read_tensor(buf.as_slice()).unwrap();
        prop_assert_eq!(bits(&back), bits(&t));
        prop_assert_eq!(back.dims(), t.dims());
    }

    #[test]
    fn any_byte_flip_in_the_prefix_is_caught_or_harmless(pos in 0usize..17, bit in 0u8..8) {
        let t = Tensor::new(vec![2], vec![1.5f32, -2.0]).unwrap();
        let mut buf = encode(&t);
        buf[pos] ^= 1 << bit;
        match read_tensor(buf.as_slice()) {
            Ok(back) => prop_assert!(pos >= 13 && back.dims() == [2]),
            Err(e) => prop_assert!(matches!(e, Error::Format(_) | Error::Data(_))),
        }
    }
}
