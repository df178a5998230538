mod common;

use std::sync::Arc;
use std::time::Duration;

use molrefine_core::proposer::{CachedProposer, Proposer, ProposerError};

#[test]
fn client_against_mock_server() {
    println!("{}", common::proposer_client().unwrap());
}

#[test]
fn retries_exhaust_on_persistent_errors() {
    let server = common::mock_server(vec![503; 10], Duration::ZERO);
    let chat = common::client(&server.url, 2);
    let err = chat.propose(&common::request("CCO")).unwrap_err();
    assert!(err.is_transport(), "{err}");
    assert_eq!(server.requests.lock().unwrap().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = common::mock_server(vec![400], Duration::ZERO);
    let chat = common::client(&server.url, 2);
    match chat.propose(&common::request("CCO")) {
        Err(ProposerError::Http { status: 400, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn cache_entries_survive_a_new_client() {
    let server = common::mock_server(vec![], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let make = || CachedProposer::new(Arc::new(common::client(&server.url, 2)), dir.path().to_path_buf()).unwrap();
    let first = make().propose(&common::request("CCN")).unwrap();
    let second = make().propose(&common::request("CCN")).unwrap();
    assert!(!first.cached && second.cached);
    assert_eq!(second.attempts, 0);
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}
