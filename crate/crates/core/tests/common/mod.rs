#![allow(dead_code)]

use std::sync::OnceLock;

use splitvault::client::Client;
use splitvault::crypto::{rsa_generate, RsaKeyPair};
use splitvault::harness::{Deployment, LocalCluster, TopologyConfig};
use splitvault::protocol::SessionToken;

pub const TEST_RSA_BITS: u64 = 1024;

/// One client key pair shared by every test in a binary; generation dominates otherwise.
pub fn client_keypair() -> RsaKeyPair {
    static K: OnceLock<RsaKeyPair> = OnceLock::new();
    K.get_or_init(|| rsa_generate(TEST_RSA_BITS).unwrap())
        .clone()
}

pub fn cluster(base: &std::path::Path, k: usize) -> LocalCluster {
    LocalCluster::start(TopologyConfig::loopback(base, k, 100, TEST_RSA_BITS)).unwrap()
}

pub fn client_for(dep: &dyn Deployment) -> Client {
    Client::new(dep.system_addr(), dep.system_public_key(), client_keypair())
}

/// Registers `user` and logs in with the mailed OTP.
pub fn signed_in(dep: &dyn Deployment, user: &str) -> (Client, SessionToken) {
    let client = client_for(dep);
    let mail = format!("{user}@mail.test");
    client.register(user, &mail).unwrap();
    let token = login(dep, &client, user);
    (client, token)
}

pub fn login(dep: &dyn Deployment, client: &Client, user: &str) -> SessionToken {
    let otp = dep
        .latest_mail(&format!("{user}@mail.test"))
        .unwrap()
        .unwrap();
    client.login(user, &otp).unwrap()
}
