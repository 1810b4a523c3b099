//! Engine behaviour: assignment, refit policy, concurrency and recovery.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hybrid_mst::{Mode, ScoreEstimate};
use hybrid_mst_service::experiment::ExperimentState;
use hybrid_mst_service::store::{ExperimentMeta, ExperimentSettings, LOG_FILE};
use hybrid_mst_service::{CreateExperiment, Engine, ServiceConfig, ServiceError, VoteRequest};

fn engine(dir: &Path) -> Engine {
    Engine::open(ServiceConfig {
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    })
    .unwrap()
}

fn items(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("item-{k}")).collect()
}

fn create(e: &Engine, n: usize, free_voting: bool, staleness_secs: u64) -> String {
    e.create(CreateExperiment {
        items: items(n),
        quadrature_order: None,
        staleness_secs: Some(staleness_secs),
        free_voting: Some(free_voting),
    })
    .unwrap()
    .id
}

fn vote(pair: [usize; 2], y: u8) -> VoteRequest {
    VoteRequest {
        pair,
        y,
        annotator: "tester".into(),
        vote_id: None,
    }
}

/// Observed winner/loser counts as a map.
fn observed(e: &Engine, id: &str) -> HashMap<(usize, usize), u64> {
    e.with_state(id, |s| {
        let m = s.matrix();
        let mut out = HashMap::new();
        for i in 0..m.n() {
            for j in 0..m.n() {
                if i != j && m.observed(i, j) > 0 {
                    out.insert((i, j), m.observed(i, j));
                }
            }
        }
        out
    })
    .unwrap()
}

fn pair_variance(est: &ScoreEstimate, i: usize, j: usize) -> f64 {
    let c = est.covariance();
    c[(i, i)] + c[(j, j)] - 2.0 * c[(i, j)]
}

#[test]
fn concurrent_voters_are_linearizable_and_survive_reopen() {
    let tmp = tempfile::tempdir().unwrap();
    let e = Arc::new(engine(tmp.path()));
    let id = create(&e, 12, false, 60);
    let threads = 8;
    let per_thread = 125;
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let e = e.clone();
            let id = id.clone();
            std::thread::spawn(move || {
                let mut acked: HashMap<(usize, usize), u64> = HashMap::new();
                for k in 0..per_thread {
                    let annotator = format!("voter-{t}");
                    let b = e.batch(&id, &annotator, Some(1)).unwrap();
                    let [i, j] = b.pairs[0];
                    assert!(i < j);
                    let y = ((t + k) % 3 != 0) as u8;
                    let ack = e
                        .vote(
                            &id,
                            &VoteRequest {
                                pair: [i, j],
                                y,
                                annotator,
                                vote_id: Some(format!("{t}-{k}")),
                            },
                        )
                        .unwrap();
                    assert!(!ack.duplicate);
                    let outcome = if y == 1 { (i, j) } else { (j, i) };
                    *acked.entry(outcome).or_insert(0) += 1;
                }
                acked
            })
        })
        .collect();
    let mut expected: HashMap<(usize, usize), u64> = HashMap::new();
    for h in handles {
        for (k, v) in h.join().unwrap() {
            *expected.entry(k).or_insert(0) += v;
        }
    }
    assert_eq!(expected.values().sum::<u64>(), 1000);
    assert_eq!(observed(&e, &id), expected);
    assert_eq!(e.estimate(&id).unwrap().observed_votes, 1000);
    assert!(e.with_state(&id, |s| s.outstanding().is_empty()).unwrap());
    drop(e);

    let log = fs::read_to_string(tmp.path().join(&id).join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 1000);
    let reopened = engine(tmp.path());
    assert_eq!(reopened.ids(), vec![id.clone()]);
    assert_eq!(observed(&reopened, &id), expected);
    // Vote ids are rebuilt from the log, so retries stay idempotent.
    let mut retry = vote([0, 1], 1);
    retry.vote_id = Some("3-7".into());
    assert!(reopened.vote(&id, &retry).unwrap().duplicate);
}

#[test]
fn torn_tail_is_dropped_on_reopen() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let id = create(&e, 4, true, 60);
    for k in 0..5 {
        e.vote(&id, &vote([k % 3, 3], (k % 2) as u8)).unwrap();
    }
    let before = observed(&e, &id);
    let scores = e.estimate(&id).unwrap().scores.clone();
    drop(e);
    OpenOptions::new()
        .append(true)
        .open(tmp.path().join(&id).join(LOG_FILE))
        .unwrap()
        .write_all(br#"{"pair":[0,1],"y":1,"annotator":"x","ts":"2024"#)
        .unwrap();

    let e = engine(tmp.path());
    assert_eq!(observed(&e, &id), before);
    let est = e.estimate(&id).unwrap();
    for (a, b) in est.scores.iter().zip(&scores) {
        assert!((a - b).abs() < 1e-8);
    }
    e.vote(&id, &vote([0, 1], 1)).unwrap();
    drop(e);
    let e = engine(tmp.path());
    assert_eq!(e.estimate(&id).unwrap().observed_votes, 6);
}

#[test]
fn damaged_log_middle_refuses_to_open() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let id = create(&e, 3, true, 60);
    e.vote(&id, &vote([0, 1], 1)).unwrap();
    e.vote(&id, &vote([1, 2], 1)).unwrap();
    drop(e);
    let path = tmp.path().join(&id).join(LOG_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, format!("garbage\n{text}")).unwrap();
    let err = Engine::open(ServiceConfig {
        data_dir: tmp.path().to_path_buf(),
        ..ServiceConfig::default()
    })
    .unwrap_err();
    assert!(matches!(err, ServiceError::Corrupt(_)), "{err}");
}

#[test]
fn gm_to_mst_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let n = 5;
    let id = create(&e, n, true, 60);
    let threshold = n * (n - 1) / 2;
    for k in 0..=threshold {
        let b = e.batch(&id, "a", None).unwrap();
        assert_eq!(b.mode, Mode::Gm, "after {k} votes");
        assert_eq!(b.pairs.len(), 1, "after {k} votes");
        let [i, j] = b.pairs[0];
        e.vote(&id, &vote([i, j], (k % 2) as u8)).unwrap();
    }
    let b = e.batch(&id, "a", None).unwrap();
    assert_eq!(b.mode, Mode::Mst);
    assert_eq!(b.observed_votes as usize, threshold + 1);
    assert_eq!(b.pairs.len(), n - 1);
}

#[test]
fn mst_batches_are_split_then_reissued_round_robin() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let n = 7;
    let id = create(&e, n, true, 3600);
    for i in 0..n {
        for j in i + 1..n {
            e.vote(&id, &vote([i, j], ((i + j) % 2) as u8)).unwrap();
        }
    }
    e.vote(&id, &vote([0, 1], 1)).unwrap();

    // Distinct annotators asking for one pair each get disjoint edges.
    let first: Vec<[usize; 2]> = (0..n - 1)
        .map(|k| {
            let b = e.batch(&id, &format!("ann-{k}"), Some(1)).unwrap();
            assert_eq!(b.mode, Mode::Mst);
            assert_eq!(b.pairs.len(), 1);
            b.pairs[0]
        })
        .collect();
    assert!(first.iter().all(|[i, j]| i < j && *j < n));
    assert_eq!(first.iter().collect::<HashSet<_>>().len(), n - 1);
    // The edges span all items (a tree on n nodes with n-1 distinct edges
    // is connected iff it touches every node without a cycle).
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for [i, j] in &first {
        let (a, b) = (root(&mut parent, *i), root(&mut parent, *j));
        assert_ne!(a, b, "cycle in assigned edges");
        parent[a] = b;
    }

    // Once every edge is out, requests cycle through the tree in order.
    let again: Vec<[usize; 2]> = (0..2 * (n - 1))
        .map(|k| e.batch(&id, &format!("late-{k}"), Some(1)).unwrap().pairs[0])
        .collect();
    assert_eq!(&again[..n - 1], &first[..]);
    assert_eq!(&again[n - 1..], &first[..]);
    let outstanding = e.with_state(&id, |s| s.outstanding().clone()).unwrap();
    for [i, j] in &first {
        assert_eq!(outstanding[&(*i, *j)], 3);
    }

    // A larger request returns the whole tree without repeats.
    let whole = e.batch(&id, "bulk", None).unwrap().pairs;
    assert_eq!(whole.iter().collect::<HashSet<_>>().len(), n - 1);
}

#[test]
fn mst_refits_after_whole_batch_is_voted() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let n = 5;
    let id = create(&e, n, false, 3600);
    // Walk through GM mode using assigned pairs only.
    for k in 0..=n * (n - 1) / 2 {
        let [i, j] = e.batch(&id, "a", None).unwrap().pairs[0];
        e.vote(&id, &vote([i, j], (k % 2) as u8)).unwrap();
    }
    let est = e.estimate(&id).unwrap();
    assert_eq!(est.fitted_votes, est.observed_votes);
    let fitted = est.fitted_votes;

    let tree = e.batch(&id, "a", None).unwrap().pairs;
    assert_eq!(tree.len(), n - 1);
    for (k, [i, j]) in tree.iter().enumerate() {
        e.vote(&id, &vote([*i, *j], 1)).unwrap();
        let est = e.estimate(&id).unwrap();
        assert_eq!(est.observed_votes, fitted + k as u64 + 1);
        if k + 2 < n {
            assert_eq!(est.fitted_votes, fitted, "refit before batch completed");
        } else {
            assert_eq!(est.fitted_votes, est.observed_votes);
        }
    }
    // Voting a pair that is no longer outstanding is refused.
    let [i, j] = tree[0];
    let err = e.vote(&id, &vote([i, j], 1)).unwrap_err();
    assert!(matches!(err, ServiceError::Conflict(_)), "{err}");
}

#[test]
fn stale_mst_batch_is_refit_on_next_request() {
    let tmp = tempfile::tempdir().unwrap();
    let meta = ExperimentMeta {
        id: "stale".into(),
        items: items(4),
        created: "2024-01-01T00:00:00.000000Z".into(),
        settings: ExperimentSettings {
            quadrature_order: 30,
            staleness_secs: 60,
            free_voting: true,
        },
    };
    let mut s = ExperimentState::create(tmp.path(), meta).unwrap();
    let t0 = Instant::now();
    for i in 0..4 {
        for j in i + 1..4 {
            s.vote(&vote([i, j], 1), t0).unwrap();
        }
    }
    s.vote(&vote([0, 3], 0), t0).unwrap();
    assert_eq!(s.mode(), Mode::Mst);
    let fitted = s.fitted_votes();
    s.vote(&vote([1, 2], 0), t0).unwrap();
    assert_eq!(s.fitted_votes(), fitted);
    assert!(!s.maybe_refit(t0 + Duration::from_secs(59)).unwrap());
    s.assign("a", Some(1), t0 + Duration::from_secs(61)).unwrap();
    assert_eq!(s.fitted_votes(), s.observed_votes());
}

#[test]
fn pair_uncertainty_shrinks_as_the_pair_is_compared() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let id = create(&e, 4, true, 0);
    let mut last = f64::INFINITY;
    for round in 0..15 {
        let var = e.with_state(&id, |s| pair_variance(s.estimate(), 0, 1)).unwrap();
        assert!(var < last, "round {round}: {var} !< {last}");
        last = var;
        // One win each keeps the estimate centred on a tie.
        e.vote(&id, &vote([0, 1], 1)).unwrap();
        e.vote(&id, &vote([0, 1], 0)).unwrap();
    }
    let se = &e.estimate(&id).unwrap().std_errors;
    assert!(se[0] < se[2] && se[1] < se[3], "{se:?}");
}

#[test]
fn symmetric_votes_give_zero_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let id = create(&e, 4, true, 0);
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                e.vote(&id, &vote([i, j], 1)).unwrap();
            }
        }
    }
    let est = e.estimate(&id).unwrap();
    assert_eq!(est.observed_votes, 12);
    assert!(est.scores.iter().all(|s| s.abs() < 1e-9), "{:?}", est.scores);
    let mut ranking = est.ranking.clone();
    ranking.sort();
    assert_eq!(ranking, vec![0, 1, 2, 3]);
}

#[test]
fn imported_dataset_round_trips_through_export() {
    let tmp = tempfile::tempdir().unwrap();
    let e = engine(tmp.path());
    let csv = "item_a,item_b,count_a_wins\nx,y,3\ny,x,1\ny,z,2\nz,x,0\n";
    let data = hybrid_mst::dataset::import_dataset(csv.as_bytes()).unwrap();
    let view = e
        .import(
            &data,
            CreateExperiment {
                items: Vec::new(),
                quadrature_order: None,
                staleness_secs: None,
                free_voting: None,
            },
        )
        .unwrap();
    assert_eq!(view.observed_votes, 6);
    let exported = e.export_csv(&view.id).unwrap();
    let again = hybrid_mst::dataset::import_dataset(exported.as_bytes()).unwrap();
    assert_eq!(again.items, data.items);
    assert_eq!(again.matrix.to_rows(), data.matrix.to_rows());
    drop(e);
    let e = engine(tmp.path());
    assert_eq!(e.export_csv(&view.id).unwrap(), exported);
}
