mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use pprag::eval::random_unit_vectors;
use pprag::net::{encode_frame, encode_search, Opcode, RemoteStore, Server, ServerConfig};
use pprag::payload::{record_ad, PayloadKey};
use pprag::scheme::{CipherVector, SchemeKey};
use pprag::store::{squared_l2, RecordStore, SharedStore, StoredRecord, VectorStore};
use pprag::{error::RejectReason, Error};

fn records(
    key: &SchemeKey,
    pkey: &PayloadKey,
    vectors: &[Vec<f64>],
    first_id: u64,
) -> Vec<StoredRecord> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let id = first_id + i as u64;
            StoredRecord {
                id,
                embedding: key.enc_db(v).unwrap(),
                payload: pkey
                    .seal(format!("doc {id}").as_bytes(), &record_ad(id))
                    .unwrap(),
            }
        })
        .collect()
}

/// Sorts every record by (squared distance, id) with no shortcuts.
fn naive_topk(recs: &[StoredRecord], q: &CipherVector, k: usize) -> Vec<(u64, f64)> {
    let mut all: Vec<(f64, u64)> = recs
        .iter()
        .map(|r| {
            let d2: f64 = r
                .embedding
                .c
                .iter()
                .zip(&q.c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, r.id)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter()
        .take(k)
        .map(|(d2, id)| (id, d2.sqrt()))
        .collect()
}

#[test]
fn search_matches_naive_sort() {
    let key = common::key(1, 0.2);
    let pkey = PayloadKey::generate();
    let mut rng = common::rng(1);
    for m in [1usize, 7, 500, 9000] {
        let vecs = random_unit_vectors(&mut rng, m, 24);
        let recs = records(&key, &pkey, &vecs, 100);
        let mut store = VectorStore::new(24).unwrap();
        store.ingest(recs.clone()).unwrap().into_result().unwrap();
        for _ in 0..5 {
            let q = key.enc_q(&random_unit_vectors(&mut rng, 1, 24)[0]).unwrap();
            for k in [1, 10, m + 3] {
                let got: Vec<(u64, f64)> = store
                    .topk_search(&q, k)
                    .unwrap()
                    .into_iter()
                    .map(|h| (h.id, h.distance))
                    .collect();
                let want = naive_topk(&recs, &q, k);
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.0, w.0);
                    assert!((g.1 - w.1).abs() <= 1e-9 * w.1.max(1.0));
                }
            }
        }
    }
}

#[test]
fn ties_break_by_id() {
    let key = common::key(2, 0.2);
    let pkey = PayloadKey::generate();
    let rec = &records(&key, &pkey, &[vec![1.0, 0.0, 0.0]], 0)[0];
    let batch: Vec<StoredRecord> = [42u64, 7, 19]
        .iter()
        .map(|&id| StoredRecord { id, ..rec.clone() })
        .collect();
    let mut store = VectorStore::new(3).unwrap();
    store.ingest(batch).unwrap();
    let ids: Vec<u64> = store
        .topk_search(&rec.embedding, 3)
        .unwrap()
        .iter()
        .map(|h| h.id)
        .collect();
    assert_eq!(ids, vec![7, 19, 42]);
}

#[test]
fn squared_l2_matches_plain_sum() {
    let mut rng = common::rng(3);
    for d in [1usize, 3, 4, 5, 63, 768] {
        let v = random_unit_vectors(&mut rng, 2, d);
        let plain: f64 = v[0].iter().zip(&v[1]).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((squared_l2(&v[0], &v[1]) - plain).abs() < 1e-12);
    }
}

#[test]
fn partial_accept_reports_each_rejection() {
    let key = common::key(4, 0.2);
    let pkey = PayloadKey::generate();
    let mut rng = common::rng(4);
    let mut store = VectorStore::new(8).unwrap();
    store
        .ingest(records(
            &key,
            &pkey,
            &random_unit_vectors(&mut rng, 3, 8),
            0,
        ))
        .unwrap();

    let mut batch = records(&key, &pkey, &random_unit_vectors(&mut rng, 3, 8), 2);
    batch.extend(records(
        &key,
        &pkey,
        &random_unit_vectors(&mut rng, 1, 5),
        50,
    ));
    batch.extend(records(
        &key,
        &pkey,
        &random_unit_vectors(&mut rng, 1, 8),
        3,
    ));
    let report = store.ingest(batch).unwrap();
    assert_eq!(report.accepted, 2);
    assert_eq!(report.count, 5);
    assert_eq!(
        report.rejected,
        vec![
            (2, RejectReason::DuplicateId),
            (50, RejectReason::DimensionMismatch),
            (3, RejectReason::DuplicateId)
        ]
    );
    assert!(matches!(
        report.into_result(),
        Err(Error::Rejected {
            id: 2,
            reason: RejectReason::DuplicateId
        })
    ));
}

#[test]
fn store_file_round_trips_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    let key = common::key(5, 0.2);
    let pkey = PayloadKey::generate();
    let mut rng = common::rng(5);
    let mut store = VectorStore::create(&path, 16).unwrap();
    store
        .ingest(records(
            &key,
            &pkey,
            &random_unit_vectors(&mut rng, 40, 16),
            0,
        ))
        .unwrap();
    store
        .ingest(records(
            &key,
            &pkey,
            &random_unit_vectors(&mut rng, 10, 16),
            40,
        ))
        .unwrap();

    let reopened = VectorStore::open(&path).unwrap();
    assert_eq!(reopened.len(), 50);
    assert_eq!(reopened.records(), store.records());
    assert_eq!(std::fs::read(&path).unwrap(), store.to_bytes());

    let bytes = std::fs::read(&path).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        VectorStore::from_bytes(&bad_magic),
        Err(Error::Format { offset: 0, .. })
    ));
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    assert!(matches!(
        VectorStore::from_bytes(&bad_version),
        Err(Error::Version { .. })
    ));
    assert!(matches!(
        VectorStore::from_bytes(&bytes[..bytes.len() - 3]),
        Err(Error::Format { .. })
    ));
    assert!(
        VectorStore::create(&path, 16).is_err(),
        "create must not clobber"
    );
}

#[test]
fn store_and_server_never_touch_keys() {
    for file in ["src/store.rs", "src/net.rs"] {
        let text =
            std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/").to_owned() + file)
                .unwrap();
        for forbidden in ["SchemeKey", "PayloadKey", "dec_db", "decrypt", "record_ad"] {
            assert!(!text.contains(forbidden), "{file} mentions {forbidden}");
        }
    }
}

fn spawn_server(dim: usize) -> pprag::net::ServerHandle {
    Server::bind(
        SharedStore::new(VectorStore::new(dim).unwrap()),
        "127.0.0.1:0",
        ServerConfig::default(),
    )
    .unwrap()
    .spawn()
    .unwrap()
}

fn raw_round_trip(conn: &mut TcpStream, frame: &[u8]) -> (u8, Vec<u8>) {
    conn.write_all(frame).unwrap();
    let mut len = [0u8; 4];
    conn.read_exact(&mut len).unwrap();
    let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
    conn.read_exact(&mut body).unwrap();
    let op = body.remove(0);
    (op, body)
}

#[test]
fn remote_store_behaves_like_local() {
    let server = spawn_server(12);
    let remote = RemoteStore::with_timeout(server.addr(), Duration::from_secs(5)).unwrap();
    let local = SharedStore::new(VectorStore::new(12).unwrap());
    let key = common::key(6, 0.2);
    let pkey = PayloadKey::generate();
    let mut rng = common::rng(6);

    let mut batch = records(&key, &pkey, &random_unit_vectors(&mut rng, 300, 12), 0);
    batch.push(batch[0].clone());
    assert_eq!(
        remote.ingest(batch.clone()).unwrap(),
        local.ingest(batch).unwrap()
    );
    assert_eq!(remote.dim().unwrap(), 12);
    assert_eq!(remote.count().unwrap(), 300);

    let q = key.enc_q(&random_unit_vectors(&mut rng, 1, 12)[0]).unwrap();
    assert_eq!(
        remote.topk_search(&q, 9).unwrap(),
        local.topk_search(&q, 9).unwrap()
    );

    let wrong_dim = key.enc_q(&vec![1.0; 5]).unwrap();
    assert!(matches!(
        remote.topk_search(&wrong_dim, 3),
        Err(Error::Input(_))
    ));
    assert!(matches!(remote.topk_search(&q, 0), Err(Error::Param(_))));
    server.shutdown().unwrap();
}

#[test]
fn malformed_frames_get_error_replies() {
    let server = spawn_server(4);
    let mut conn = TcpStream::connect(server.addr()).unwrap();
    conn.set_read_timeout(Some(Duration::from_secs(5))).unwrap();

    let (op, body) = raw_round_trip(&mut conn, &encode_frame(99, b"junk"));
    assert_eq!(op, Opcode::Error as u8);
    assert!(String::from_utf8_lossy(&body[1..]).contains("99"));

    // A truncated search body is an input error, and the connection survives.
    let q = common::key(1, 0.2)
        .enc_q(&vec![1.0, 0.0, 0.0, 0.0])
        .unwrap();
    let mut frame = encode_search(&q, 2);
    frame.truncate(frame.len() - 4);
    let short_len = (frame.len() - 4) as u32;
    frame[..4].copy_from_slice(&short_len.to_le_bytes());
    let (op, _) = raw_round_trip(&mut conn, &frame);
    assert_eq!(op, Opcode::Error as u8);

    let (op, _) = raw_round_trip(&mut conn, &encode_search(&q, 2));
    assert_eq!(op, Opcode::Hits as u8);
    server.shutdown().unwrap();
}

#[test]
fn oversized_frames_close_the_connection() {
    let server = Server::bind(
        SharedStore::new(VectorStore::new(4).unwrap()),
        "127.0.0.1:0",
        ServerConfig {
            max_frame: 1024,
            ..Default::default()
        },
    )
    .unwrap()
    .spawn()
    .unwrap();
    let mut conn = TcpStream::connect(server.addr()).unwrap();
    conn.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    conn.write_all(&(1u32 << 20).to_le_bytes()).unwrap();
    let mut buf = [0u8; 1];
    assert!(matches!(conn.read(&mut buf), Ok(0) | Err(_)));
    server.shutdown().unwrap();
}
