import json

import numpy as np
import pytest

from firngraph.errors import DivergedTraining, ShapeMismatch
from firngraph.graphs import (
    apply_normalization,
    build_temporal_sample,
    fit_normalization,
)
from firngraph.synth import SynthParams, generate_corpus
from firngraph.train import (
    TrainConfig,
    config_hash,
    dataset_hash,
    evaluate_rmse,
    load_predictions,
    parse_config_text,
    report_json_bytes,
    run_experiment,
    run_trial,
    save_predictions,
    write_trial_curves,
)


@pytest.fixture(scope="module")
def small_corpus():
    params = SynthParams(n_segments=12, seed=21)
    return [r.to_thickness_record() for r in generate_corpus(params)]


def normalized_samples(records):
    samples = [build_temporal_sample(r) for r in records]
    stats = fit_normalization(samples)
    return [apply_normalization(s, stats) for s in samples]


def test_evaluate_rmse_frozen_examples():
    # constant error of 3 px in every entry
    preds = np.full((2, 4, 5), 3.0)
    targets = np.zeros((2, 4, 5))
    per_year, total = evaluate_rmse(preds, targets)
    assert np.allclose(per_year, 3.0)
    assert total == pytest.approx(3.0)
    # one year off by 3, others exact: total = 3 / sqrt(5)
    preds = np.zeros((1, 4, 5))
    preds[..., 2] = 3.0
    per_year, total = evaluate_rmse(preds, np.zeros((1, 4, 5)))
    assert per_year[2] == pytest.approx(3.0)
    assert per_year[0] == 0.0
    assert total == pytest.approx(3.0 / np.sqrt(5.0))
    # errors 1 and 2 in two cells of a 2-entry tensor: sqrt(2.5)
    per_year, total = evaluate_rmse(
        np.array([[[1.0, 2.0]]]), np.zeros((1, 1, 2))
    )
    assert total == pytest.approx(np.sqrt(2.5))


def test_total_rmse_is_quadratic_mean_of_per_year(rng):
    preds = rng.standard_normal((3, 7, 5))
    targets = rng.standard_normal((3, 7, 5))
    per_year, total = evaluate_rmse(preds, targets)
    assert total**2 == pytest.approx(np.mean(per_year**2), rel=1e-12)


def test_evaluate_rmse_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        evaluate_rmse(np.zeros((1, 2, 3)), np.zeros((1, 2, 4)))


def test_aggregate_mean_and_sample_std():
    # frozen: totals {4, 5, 6, 4, 5} -> mean 4.8, sample std 0.83666
    totals = np.array([4.0, 5.0, 6.0, 4.0, 5.0])
    assert totals.mean() == pytest.approx(4.8)
    assert totals.std(ddof=1) == pytest.approx(0.8366600265340756)


def test_config_parsing_and_validation():
    cfg = parse_config_text("kind = lstm\nepochs = 3\nlr = 0.5\n# comment\n")
    assert cfg.kind == "lstm" and cfg.epochs == 3 and cfg.lr == 0.5
    with pytest.raises(ValueError):
        parse_config_text("kind = transformer\n")
    with pytest.raises(ValueError):
        parse_config_text("unknown_key = 1\n")
    with pytest.raises(ValueError):
        parse_config_text("epochs\n")
    assert config_hash(cfg) == config_hash(parse_config_text("kind=lstm\nepochs=3\nlr=0.5"))
    assert config_hash(cfg) != config_hash(TrainConfig())


def test_dataset_hash_sensitivity(small_corpus):
    h = dataset_hash(small_corpus)
    assert h == dataset_hash(small_corpus)
    mutated = [r for r in small_corpus]
    mutated[0] = type(mutated[0])(
        segment_id=mutated[0].segment_id,
        latitudes=mutated[0].latitudes,
        longitudes=mutated[0].longitudes,
        thickness=mutated[0].thickness + 1,
        year_labels=mutated[0].year_labels,
    )
    assert dataset_hash(mutated) != h


def test_run_trial_zero_epochs_keeps_initial_params(small_corpus):
    samples = normalized_samples(small_corpus)
    cfg = TrainConfig(kind="lstm", epochs=0, hidden=8, head_hidden=4, seed=1)
    report = run_trial(cfg, 0, samples[:9], samples[9:])
    assert report.epoch_losses == []
    assert report.total_rmse > 0.0


def test_run_trial_deterministic(small_corpus):
    samples = normalized_samples(small_corpus)
    cfg = TrainConfig(kind="gcn_lstm", epochs=2, hidden=8, head_hidden=4, seed=3)
    a = run_trial(cfg, 0, samples[:9], samples[9:])
    b = run_trial(cfg, 0, samples[:9], samples[9:])
    assert a.epoch_losses == b.epoch_losses
    assert a.per_year_rmse == b.per_year_rmse
    assert a.total_rmse == b.total_rmse
    c = run_trial(cfg, 1, samples[:9], samples[9:])
    assert c.total_rmse != a.total_rmse  # trials draw fresh init streams


def test_run_trial_diverges_on_huge_lr(small_corpus):
    samples = normalized_samples(small_corpus)
    cfg = TrainConfig(kind="lstm", epochs=5, hidden=8, head_hidden=4, lr=1e80)
    with pytest.raises(DivergedTraining):
        run_trial(cfg, 0, samples[:9], samples[9:])


def test_run_experiment_end_to_end(tmp_path, small_corpus):
    cfg = TrainConfig(
        kind="lstm", epochs=2, hidden=8, head_hidden=4, n_trials=2,
        seed=2, out_dir=str(tmp_path),
    )
    report = run_experiment(cfg, small_corpus)
    assert len(report.trials) == 2
    assert report.target_years == [2007, 2008, 2009, 2010, 2011]
    assert len(report.per_year_mean) == 5
    assert report.total_std >= 0.0
    for t in report.trials:
        assert t.persistence_total_rmse is not None
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "splits.json").exists()
    assert (tmp_path / "trial0.ckpt").exists()
    assert (tmp_path / "trial1.preds").exists()
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["kind"] == "lstm"
    assert len(payload["trials"]) == 2
    # splits are 4:1 over 12 records -> 9 train, 3 test
    plans = json.loads((tmp_path / "splits.json").read_text())
    assert len(plans[0]["train_ids"]) == 9
    assert len(plans[0]["test_ids"]) == 3


def test_report_bytes_exclude_wall_time(small_corpus):
    cfg = TrainConfig(kind="lstm", epochs=1, hidden=8, head_hidden=4, n_trials=2)
    a = run_experiment(cfg, small_corpus)
    b = run_experiment(cfg, small_corpus)
    assert a.trials[0].wall_time != b.trials[0].wall_time
    assert report_json_bytes(a) == report_json_bytes(b)


def test_norm_scope_changes_results(small_corpus):
    base = TrainConfig(kind="lstm", epochs=1, hidden=8, head_hidden=4, n_trials=1)
    import dataclasses

    alt = dataclasses.replace(base, norm_scope="all")
    a = run_experiment(base, small_corpus)
    b = run_experiment(alt, small_corpus)
    assert a.trials[0].total_rmse != b.trials[0].total_rmse


def test_predictions_roundtrip_and_curves(tmp_path, rng):
    preds = rng.standard_normal((3, 6, 5)) + 40.0
    targets = rng.standard_normal((3, 6, 5)) + 40.0
    ids = ["a", "b", "c"]
    years = [2007, 2008, 2009, 2010, 2011]
    path = tmp_path / "t.preds"
    save_predictions(path, ids, preds, targets, years)
    got_ids, got_preds, got_targets, got_years = load_predictions(path)
    assert got_ids == ids and got_years == years
    assert np.array_equal(got_preds, preds)
    assert np.array_equal(got_targets, targets)
    out = tmp_path / "curves"
    written = write_trial_curves(path, out)
    assert len(written) == 10  # csv + png per year
    csv_text = (out / "continuous_2011.csv").read_text()
    assert csv_text.startswith("node_index,true_px,predicted_px")
    assert len(csv_text.strip().splitlines()) == 1 + 18
