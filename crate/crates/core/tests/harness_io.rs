use mrtrack::coordination::{CoordinationMethod, MethodTag};
use mrtrack::harness::*;

fn cfg(method: &str) -> ExperimentConfig {
    ExperimentConfig {
        n_robots: 3,
        method: MethodTag(method.parse().unwrap()),
        steps: 5,
        burn_in: 1,
        trials: 2,
        mcts_iterations: 20,
        samples: 4,
        reference_samples: 8,
        capacity_samples: 4,
        record_every: 2,
        redundancy_every: 2,
        ..ExperimentConfig::default()
    }
}

fn csv_text<T: serde::Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[test]
fn metrics_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = run_experiment(&cfg("rsp:2")).unwrap();
    data.rows.push(TrialRow::failed(
        &cfg("myopic"),
        7,
        &mrtrack::Error::Planner("boom".into()),
    ));
    let p = dir.path().join("m.csv");
    write_trial_csv(&p, &data.rows).unwrap();
    let back = read_trial_csv(&p).unwrap();
    // NaN fields defeat PartialEq, so compare the serialized forms
    assert_eq!(csv_text(&back), csv_text(&data.rows));
    assert!(back[2].mean_entropy.is_nan() && !back[2].is_ok());
    assert_eq!(back[0].n_d, Some(2));

    let p = dir.path().join("e.csv");
    write_epoch_csv(&p, &data.epochs).unwrap();
    let back = read_epoch_csv(&p).unwrap();
    assert_eq!(back.len(), 10);
    assert_eq!(csv_text(&back), csv_text(&data.epochs));
    // measured from the end of burn-in (epoch 1) every second epoch
    let measured = |e: usize| e >= 1 && (e - 1) % 2 == 0;
    assert!(back
        .iter()
        .filter(|r| !measured(r.epoch))
        .all(|r| r.redundancy_per_robot.is_nan()));
    assert!(back
        .iter()
        .filter(|r| measured(r.epoch))
        .all(|r| r.redundancy_per_robot.is_finite()));
}

#[test]
fn header_matches_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = run_experiment(&ExperimentConfig {
        trials: 1,
        ..cfg("random")
    })
    .unwrap();
    let p = dir.path().join("m.csv");
    write_trial_csv(&p, &data.rows).unwrap();
    let header = std::fs::read_to_string(&p).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "method,n_r,n_targets,n_d,trial,trial_seed,steps,burn_in,mean_entropy,final_entropy,\
mean_objective,objective_per_robot,redundancy_per_robot,redundancy_epochs,sequential_steps,\
messages_per_epoch,wall_per_epoch,fallbacks,degenerate_updates,status"
    );
}

#[test]
fn record_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        records_dir: Some(dir.path().join("recs")),
        output: Some(dir.path().join("m.csv")),
        ..cfg("rrsp:2:5:4")
    };
    let data = run_experiment(&c).unwrap();
    write_outputs(&c, &data).unwrap();
    let back = read_records(c.records_dir.as_ref().unwrap()).unwrap();
    assert_eq!(back.len(), data.records.len());
    for r in &back {
        r.check_integrity().unwrap();
        let orig = data
            .records
            .iter()
            .find(|o| o.trial_seed == r.trial_seed && o.epoch == r.epoch)
            .unwrap();
        assert_eq!(orig.to_json().unwrap(), r.to_json().unwrap());
        assert!(r.scopes.is_some());
    }
}

#[test]
fn experiment_is_reproducible_except_wall_time() {
    let a = run_experiment(&cfg("sequential")).unwrap();
    let b = run_experiment(&cfg("sequential")).unwrap();
    let strip = |rows: &[TrialRow]| {
        rows.iter()
            .map(|r| TrialRow {
                wall_per_epoch: 0.0,
                ..r.clone()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.rows), strip(&b.rows));
}

#[test]
fn sequential_messages_and_rounds() {
    let d = run_experiment(&ExperimentConfig {
        n_robots: 5,
        ..cfg("sequential")
    })
    .unwrap();
    for r in &d.rows {
        assert_eq!(r.sequential_steps, 5);
        assert_eq!(r.messages_per_epoch, 10.0);
    }
    let d = run_experiment(&ExperimentConfig {
        n_robots: 5,
        ..cfg("myopic")
    })
    .unwrap();
    assert!(d
        .rows
        .iter()
        .all(|r| r.sequential_steps == 1 && r.messages_per_epoch == 0.0));
    assert_eq!(d.rows[0].method, CoordinationMethod::Myopic.to_string());
}
