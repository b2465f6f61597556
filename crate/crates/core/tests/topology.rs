mod common;

use std::fs;

use common::{cluster, login, signed_in, TEST_RSA_BITS};
use splitvault::crypto::md5_digest;
use splitvault::harness::{
    fetch_dump, leakage_audit, run_workload, CaptureProxy, Deployment, HarnessError, LocalCluster,
    TopologyConfig, WorkloadSpec,
};
use splitvault::protocol::ErrorCode;
use splitvault::storage::blob_path;
use splitvault::system::{SystemFault, SystemOptions};

fn blob_count(admin: std::net::SocketAddr) -> usize {
    fetch_dump(admin)
        .unwrap()
        .iter()
        .filter(|f| f.name.starts_with("blobs/"))
        .count()
}

#[test]
fn minimal_topology_starts_and_stops() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cluster(dir.path(), 1);
    assert!(c.health().iter().all(|(_, ok)| *ok));
    let addrs: Vec<_> = c.storage_admins();
    let system = c.system_addr();
    c.stop();
    assert!(!splitvault::harness::ping(system));
    assert!(!splitvault::harness::ping(addrs[0].1));
}

#[test]
fn round_robin_over_three_storage_servers() {
    let dir = tempfile::tempdir().unwrap();
    let c = cluster(dir.path(), 3);
    let (client, token) = signed_in(&c, "carol");
    for i in 0..6 {
        client
            .upload(&token, &format!("f{i}"), &[i as u8; 100])
            .unwrap();
    }
    let counts: Vec<usize> = c
        .storage_admins()
        .iter()
        .map(|(_, a)| blob_count(*a))
        .collect();
    assert_eq!(counts, vec![2, 2, 2]);
}

#[test]
fn duplicate_port_is_a_startup_failure_naming_the_port() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TopologyConfig::loopback(dir.path(), 2, 100, TEST_RSA_BITS);
    cfg.storage[0].listen = "127.0.0.1:47311".parse().unwrap();
    cfg.storage[1].admin = "127.0.0.1:47311".parse().unwrap();
    match LocalCluster::start(cfg) {
        Err(HarnessError::StartupFailure { component, reason }) => {
            assert_eq!(component, "s2 admin");
            assert!(reason.contains("47311"), "{reason}");
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("duplicate port accepted"),
    }
}

#[test]
fn occupied_port_names_the_component() {
    let dir = tempfile::tempdir().unwrap();
    let squatter = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut cfg = TopologyConfig::loopback(dir.path(), 1, 100, TEST_RSA_BITS);
    cfg.system.listen = squatter.local_addr().unwrap();
    match LocalCluster::start(cfg) {
        Err(HarnessError::StartupFailure { component, reason }) => {
            assert_eq!(component, "system");
            assert!(reason.contains(&squatter.local_addr().unwrap().port().to_string()));
        }
        other => panic!("expected startup failure, got {:?}", other.err()),
    }
}

#[test]
fn restart_keeps_accounts_keys_and_file_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cluster(dir.path(), 2);
    let (client, token) = signed_in(&c, "dave");
    client.upload(&token, "a", b"first").unwrap();
    client.upload(&token, "b", b"second").unwrap();
    c.restart_system().unwrap();
    c.restart_storage(0).unwrap();
    // Sessions are memory-only.
    assert_eq!(
        client.list(&token).unwrap_err().remote_code(),
        Some(ErrorCode::InvalidSession)
    );
    let token = login(&c, &client, "dave");
    assert_eq!(client.download(&token, "a").unwrap(), b"first");
    client.upload(&token, "c", b"third").unwrap();
    let numbers: Vec<u64> = c
        .system()
        .key_records()
        .iter()
        .map(|r| r.file_number.get())
        .collect();
    assert_eq!(numbers, vec![1, 2, 3]);
}

#[test]
fn counter_is_not_reused_after_a_crash_before_storage() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cluster(dir.path(), 1);
    let (client, token) = signed_in(&c, "erin");
    c.system().faults().arm(SystemFault::AfterFileNumber);
    assert!(client.upload(&token, "lost", b"x").is_err());
    c.restart_system().unwrap();
    let token = login(&c, &client, "erin");
    client.upload(&token, "kept", b"y").unwrap();
    let numbers: Vec<u64> = c
        .system()
        .key_records()
        .iter()
        .map(|r| r.file_number.get())
        .collect();
    assert_eq!(numbers, vec![2]);
}

#[test]
fn corrupted_blob_is_an_integrity_failure() {
    let dir = tempfile::tempdir().unwrap();
    let c = cluster(dir.path(), 1);
    let (client, token) = signed_in(&c, "frank");
    client.upload(&token, "doc", &[7u8; 4000]).unwrap();
    let rec = c.system().key_records().pop().unwrap();
    let entry = c.storage_server(0).locate(rec.file_number).unwrap();
    let path = c
        .storage_server(0)
        .data_dir()
        .join(blob_path(entry.position));
    let mut bytes = fs::read(&path).unwrap();
    // A byte well before the padding block.
    bytes[40] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    let err = client.download(&token, "doc").unwrap_err();
    assert_eq!(
        err.remote_code(),
        Some(ErrorCode::IntegrityFailure),
        "{err}"
    );
}

#[test]
fn storage_outage_reports_storage_unavailable_and_writes_no_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cluster(dir.path(), 1);
    let (client, token) = signed_in(&c, "gina");
    c.storage_server(0)
        .faults()
        .arm(splitvault::storage::StorageFault::BeforeAck);
    let err = client.upload(&token, "doc", b"abc").unwrap_err();
    assert_eq!(
        err.remote_code(),
        Some(ErrorCode::StorageUnavailable),
        "{err}"
    );
    assert!(c.system().key_records().is_empty());
    c.restart_storage(0).unwrap();
    client.upload(&token, "doc", b"abc").unwrap();
    assert_eq!(client.download(&token, "doc").unwrap(), b"abc");
}

#[test]
fn error_codes_for_common_misuse() {
    let dir = tempfile::tempdir().unwrap();
    let c = cluster(dir.path(), 1);
    let (client, token) = signed_in(&c, "hank");
    let code = |r: Result<(), splitvault::client::ClientError>| r.unwrap_err().remote_code();
    assert_eq!(
        code(client.register("hank", "x@mail.test")),
        Some(ErrorCode::DuplicateUser)
    );
    assert_eq!(
        code(client.login("hank", "wrong").map(|_| ())),
        Some(ErrorCode::AuthFailed)
    );
    assert_eq!(
        code(client.login("nobody", "wrong").map(|_| ())),
        Some(ErrorCode::AuthFailed)
    );
    client.upload(&token, "doc", b"1").unwrap();
    assert_eq!(
        code(client.upload(&token, "doc", b"2")),
        Some(ErrorCode::DuplicateLabel)
    );
    assert_eq!(
        code(client.download(&token, "nope").map(|_| ())),
        Some(ErrorCode::NoSuchLabel)
    );
    client.logout(&token).unwrap();
    assert_eq!(
        code(client.list(&token).map(|_| ())),
        Some(ErrorCode::InvalidSession)
    );
}

#[test]
fn users_cannot_see_each_others_labels() {
    let dir = tempfile::tempdir().unwrap();
    let c = cluster(dir.path(), 2);
    let (a, ta) = signed_in(&c, "ivy");
    let (b, tb) = signed_in(&c, "jack");
    a.upload(&ta, "shared-name", b"ivy's").unwrap();
    b.upload(&tb, "shared-name", b"jack's").unwrap();
    assert_eq!(a.download(&ta, "shared-name").unwrap(), b"ivy's");
    assert_eq!(b.download(&tb, "shared-name").unwrap(), b"jack's");
    assert_eq!(a.list(&ta).unwrap(), vec!["shared-name"]);
}

#[test]
fn oversized_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = LocalCluster::start_with(
        TopologyConfig::loopback(dir.path(), 1, 100, TEST_RSA_BITS),
        SystemOptions {
            max_file_len: 1000,
            ..SystemOptions::default()
        },
    )
    .unwrap();
    let (client, token) = signed_in(&c, "kim");
    let err = client.upload(&token, "big", &[0u8; 1001]).unwrap_err();
    assert_eq!(err.remote_code(), Some(ErrorCode::FileTooLarge));
    client.upload(&token, "ok", &[0u8; 1000]).unwrap();
}

#[test]
fn persisted_tables_hold_digests_not_names() {
    let dir = tempfile::tempdir().unwrap();
    let c = cluster(dir.path(), 1);
    let (client, token) = signed_in(&c, "lena");
    client.upload(&token, "doc", b"body").unwrap();
    let dump = fetch_dump(c.system_admin()).unwrap();
    let all: Vec<u8> = dump.iter().flat_map(|f| f.bytes.clone()).collect();
    let text = String::from_utf8(all).unwrap();
    assert!(text.contains(&md5_digest(b"lena").to_hex()));
    assert!(!text.contains("lena\t"));
}

#[test]
fn audit_pass_vector_is_hermetic() {
    let mut vectors = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let c = cluster(dir.path(), 2);
        let proxy = CaptureProxy::start(c.system_addr()).unwrap();
        let spec = WorkloadSpec {
            users: 2,
            files_per_user: 2,
            ..WorkloadSpec::default()
        };
        let outcome = run_workload(&c, proxy.addr(), &spec).unwrap();
        vectors.push(leakage_audit(&c, &proxy, &outcome).unwrap().pass_vector());
    }
    assert_eq!(vectors[0], vectors[1]);
    assert_eq!(vectors[0], vec![true; 5]);
}
