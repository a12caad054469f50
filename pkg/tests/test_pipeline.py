"""Config handling, checkpoints, training loops, inference, and the CLI."""

import dataclasses
import filecmp
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from motionbank.errors import CheckpointError, ValidationError
from motionbank.metrics import extract_features_batch
from motionbank.motiondata import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
)
from motionbank.pipeline.checkpoint import (
    adam_from_block,
    generator_from_state,
    load_checkpoint,
    rng_state_of,
    save_checkpoint,
)
from motionbank.pipeline.cli import main
from motionbank.pipeline.config import (
    Config,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    validate_config,
)
from motionbank.pipeline.infer import evaluate, predict
from motionbank.pipeline.model import (
    arm_params_of,
    build_arm_store,
    load_model,
    store_from_checkpoint,
)
from motionbank.pipeline.train import (
    arm_training_segments,
    lr_at,
    prepare_batch,
    train_arm,
    train_mpm,
)


def _toy_cfg(**kw):
    base = dict(
        pose_dim=3, num_actions=3, past_len=4, horizon=5, latent_dim=4,
        hidden_dim=6, stab_tuples=2, acb_tuples=2, key_dim=4, value_dim=4,
        fused_dim=4, bank_mlp_hidden=[5], top_k=2, tau_cls=1, tau_aaa=1,
        epochs_arm=4, epochs_mpm=3, lr_hold_arm=2, lr_hold_mpm=2,
        batch_size=8, num_samples=3, seed=7,
    )
    base.update(kw)
    return Config(**base)


def _toy_data(per_class=3, seed=11):
    spec = SyntheticSpec(classes=3, pose_dim=3, per_class=per_class,
                         past_len=4, horizon=5, transition=2, noise=0.03,
                         seed=seed)
    return generate_synthetic(spec)


@pytest.fixture(scope="module")
def trained():
    cfg = _toy_cfg()
    train_set = _toy_data(per_class=3, seed=11)
    test_set = _toy_data(per_class=2, seed=13)
    arm_store, arm_adam, arm_hist = train_arm(cfg, train_set, seed=1)
    mpm_store, mpm_adam, mpm_hist = train_mpm(
        cfg, train_set, arm_params_of(arm_store), seed=2,
    )
    return dict(
        cfg=cfg, train=train_set, test=test_set,
        arm=(arm_store, arm_adam, arm_hist),
        mpm=(mpm_store, mpm_adam, mpm_hist),
    )


# ---------------------------------------------------------------- config


def test_default_config_is_valid():
    validate_config(Config())


def test_config_dict_round_trip():
    cfg = _toy_cfg(gamma=0.75, disable_acb=True)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_unknown_config_keys_rejected():
    with pytest.raises(ValidationError) as err:
        config_from_dict({"pose_dim": 3, "bogus": 1, "also_bad": 2})
    assert "also_bad" in str(err.value) and "bogus" in str(err.value)


def test_bad_config_values_rejected():
    for kw in (
        dict(pose_dim=0),
        dict(lr=-0.1),
        dict(gamma=1.5),
        dict(lr_floor=0.0),
        dict(top_k=5),  # larger than num_actions
        dict(bank_mlp_hidden=[0]),
        dict(batch_size=0),
    ):
        with pytest.raises(ValidationError):
            validate_config(_toy_cfg(**kw))


def test_config_accepts_integer_rates():
    cfg = config_from_dict({"lr": 1, "gamma": 0, "lambda_kl": 1})
    assert cfg.lr == 1.0 and isinstance(cfg.lr, float)
    assert isinstance(cfg.gamma, float)
    assert isinstance(cfg.lambda_kl, float)


def test_config_hash_tracks_content():
    a = config_hash(_toy_cfg())
    b = config_hash(_toy_cfg())
    c = config_hash(_toy_cfg(seed=8))
    assert a == b
    assert a != c
    assert len(a) == 64
    int(a, 16)


def test_load_config_reports_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError) as err:
        load_config(str(path))
    assert "broken.json" in str(err.value)


# ------------------------------------------------------------ checkpoints


def test_checkpoint_save_load_save_is_byte_identical(tmp_path, trained):
    cfg = trained["cfg"]
    store, adam, _ = trained["arm"]
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_checkpoint(str(first), "arm", cfg, store, adam, epoch=4)
    ckpt = load_checkpoint(str(first))
    rebuilt = store_from_checkpoint(ckpt)
    re_adam = adam_from_block(rebuilt, ckpt.adam)
    save_checkpoint(str(second), "arm", ckpt.config, rebuilt, re_adam,
                    epoch=ckpt.epoch)
    assert filecmp.cmp(first, second, shallow=False)


def test_checkpoint_restores_params_and_optimizer(tmp_path, trained):
    cfg = trained["cfg"]
    store, adam, _ = trained["mpm"]
    path = tmp_path / "mpm.json"
    save_checkpoint(str(path), "mpm", cfg, store, adam, epoch=cfg.epochs_mpm)
    ckpt = load_checkpoint(str(path))
    assert ckpt.kind == "mpm"
    assert ckpt.epoch == cfg.epochs_mpm
    assert ckpt.config == cfg
    rebuilt = store_from_checkpoint(ckpt)
    for name, tensor in store.items():
        assert_array_equal(rebuilt[name].data, tensor.data)
        assert rebuilt.is_trainable(name) == store.is_trainable(name)
    # frozen classifier parameters keep their flag through the round trip
    assert not rebuilt.is_trainable("arm.gru.gates.W")
    re_adam = adam_from_block(rebuilt, ckpt.adam)
    assert re_adam.t == adam.t
    for name in adam.m:
        assert_array_equal(re_adam.m[name], adam.m[name])
        assert_array_equal(re_adam.v[name], adam.v[name])


def test_rng_state_round_trip():
    gen = np.random.default_rng(42)
    gen.standard_normal(10)
    state = rng_state_of(gen)
    expected = gen.standard_normal(5)
    resumed = generator_from_state(state)
    assert_array_equal(resumed.standard_normal(5), expected)


def test_corrupted_checkpoints_are_named(tmp_path, trained):
    cfg = trained["cfg"]
    store, _, _ = trained["arm"]
    path = tmp_path / "good.json"
    save_checkpoint(str(path), "arm", cfg, store)
    doc = json.loads(path.read_text())

    def dump(d, name):
        p = tmp_path / name
        p.write_text(json.dumps(d))
        return str(p)

    broken = dict(doc)
    del broken["params"]
    with pytest.raises(CheckpointError, match="missing field 'params'"):
        load_checkpoint(dump(broken, "missing.json"))

    broken = dict(doc, version=99)
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(dump(broken, "version.json"))

    broken = dict(doc, kind="frobnicator")
    with pytest.raises(CheckpointError, match="unknown kind"):
        load_checkpoint(dump(broken, "kind.json"))

    broken = json.loads(path.read_text())
    name = sorted(broken["params"])[0]
    broken["params"][name]["data"] = broken["params"][name]["data"][:-1]
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(dump(broken, "short.json"))
    assert name in str(err.value) and "expects" in str(err.value)

    bad = tmp_path / "notjson.json"
    bad.write_text("{oops")
    with pytest.raises(CheckpointError, match="invalid JSON"):
        load_checkpoint(str(bad))


def test_param_inventory_is_enforced(tmp_path, trained):
    cfg = trained["cfg"]
    store, _, _ = trained["arm"]
    path = tmp_path / "arm.json"
    save_checkpoint(str(path), "arm", cfg, store)

    ckpt = load_checkpoint(str(path))
    dropped = sorted(ckpt.params)[0]
    del ckpt.params[dropped]
    with pytest.raises(CheckpointError, match="missing parameters"):
        store_from_checkpoint(ckpt)

    ckpt = load_checkpoint(str(path))
    ckpt.params["arm.extra"] = np.zeros(3)
    ckpt.trainable["arm.extra"] = True
    with pytest.raises(CheckpointError, match="unexpected parameters"):
        store_from_checkpoint(ckpt)

    ckpt = load_checkpoint(str(path))
    name = sorted(ckpt.params)[0]
    ckpt.params[name] = ckpt.params[name].reshape(-1)[: 1]
    with pytest.raises(CheckpointError, match="does not match"):
        store_from_checkpoint(ckpt)


def test_load_model_checks_kind(tmp_path, trained):
    cfg = trained["cfg"]
    store, _, _ = trained["arm"]
    path = tmp_path / "arm.json"
    save_checkpoint(str(path), "arm", cfg, store)
    with pytest.raises(CheckpointError) as err:
        load_model(str(path), expect_kind="mpm")
    assert "'arm'" in str(err.value) and "'mpm'" in str(err.value)


# --------------------------------------------------------------- training


def test_lr_schedule_shape():
    base, hold, floor, total = 0.002, 5, 0.1, 20
    values = [lr_at(e, total, base, hold, floor) for e in range(total)]
    assert values[:hold] == [base] * hold
    assert_allclose(values[-1], base * floor, rtol=1e-12)
    diffs = np.diff(values)
    assert np.all(diffs <= 0)
    # the decay segment is linear
    assert_allclose(np.diff(diffs[hold:]), 0.0, atol=1e-15)
    # too few epochs to decay: constant
    assert [lr_at(e, 3, base, 5, floor) for e in range(3)] == [base] * 3


def test_train_arm_zero_epochs_returns_initialization():
    cfg = _toy_cfg(epochs_arm=0)
    data = _toy_data()
    store, adam, history = train_arm(cfg, data, seed=5)
    fresh = build_arm_store(cfg, seed=5)
    assert history == []
    assert adam.t == 0
    assert sorted(n for n, _ in store.items()) == sorted(n for n, _ in fresh.items())
    for name, tensor in store.items():
        assert_array_equal(tensor.data, fresh[name].data)


def test_train_arm_is_deterministic():
    cfg = _toy_cfg(epochs_arm=2)
    data = _toy_data()
    store_a, _, hist_a = train_arm(cfg, data, seed=3)
    store_b, _, hist_b = train_arm(cfg, data, seed=3)
    assert hist_a == hist_b
    for name, tensor in store_a.items():
        assert_array_equal(tensor.data, store_b[name].data)


def test_train_arm_loss_decreases(trained):
    _, _, history = trained["arm"]
    assert history[-1] < history[0]


def test_train_arm_epoch_callback_order():
    cfg = _toy_cfg(epochs_arm=2)
    seen = []
    train_arm(cfg, _toy_data(), seed=0,
              on_epoch=lambda e, st, ad, rng: seen.append(e))
    assert seen == [0, 1]


def test_arm_training_segments_cover_both_halves():
    data = _toy_data(per_class=1)
    segments = arm_training_segments(data)
    assert len(segments) == 2 * len(data)
    for sample, (past_seg, future_seg) in zip(
        data, zip(segments[0::2], segments[1::2])
    ):
        assert_array_equal(past_seg[0], sample.past.frames)
        assert past_seg[1] == sample.past_action.index
        assert_array_equal(future_seg[0], sample.future.frames)
        assert future_seg[1] == sample.future_action.index


def test_prepare_batch_shapes_and_weights(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    samples = trained["train"][:4]
    batch = prepare_batch(store, cfg, samples)
    assert batch.past.shape == (cfg.past_len, 4, cfg.pose_dim)
    assert batch.future.shape == (cfg.horizon, 4, cfg.pose_dim)
    assert batch.future_onehot.shape == (4, cfg.num_actions)
    assert batch.topk_labels.shape == (4, cfg.top_k)
    assert np.all(batch.topk_labels >= 0)
    assert np.all(batch.topk_labels < cfg.num_actions)
    assert_allclose(batch.topk_weights.sum(axis=1), 1.0, rtol=1e-12)


def test_train_mpm_freezes_classifier(trained):
    cfg = trained["cfg"]
    arm_store, _, _ = trained["arm"]
    mpm_store, _, history = trained["mpm"]
    for name, tensor in arm_store.items():
        assert_array_equal(mpm_store[name].data, tensor.data)
    assert set(history[0]) == {"total", "rec", "kl", "ce"}
    assert all(np.isfinite(list(h.values())).all() for h in history)


def test_train_mpm_overfits_one_sample():
    cfg = _toy_cfg(epochs_arm=5, epochs_mpm=200, lr_hold_mpm=150, seed=3)
    data = _toy_data(seed=11)
    arm_store, _, _ = train_arm(cfg, data, seed=1)
    _, _, history = train_mpm(cfg, data[:1], arm_params_of(arm_store), seed=2)
    assert history[-1]["rec"] < 0.1 * history[0]["rec"]


def test_train_mpm_is_deterministic():
    cfg = _toy_cfg(epochs_mpm=2)
    data = _toy_data()
    arm_store, _, _ = train_arm(cfg, data, seed=1)
    params = arm_params_of(arm_store)
    store_a, _, hist_a = train_mpm(cfg, data, params, seed=4)
    store_b, _, hist_b = train_mpm(cfg, data, params, seed=4)
    assert hist_a == hist_b
    for name, tensor in store_a.items():
        assert_array_equal(tensor.data, store_b[name].data)


def test_train_mpm_fully_ablated_completes():
    cfg = _toy_cfg(epochs_mpm=2, disable_stab=True, disable_acb=True,
                   disable_aaa=True, disable_running_mean=True)
    data = _toy_data()
    arm_store, _, _ = train_arm(cfg, data, seed=1)
    _, _, history = train_mpm(cfg, data, arm_params_of(arm_store), seed=2)
    assert len(history) == 2
    assert np.isfinite(history[-1]["total"])


def test_training_rejects_mismatched_dataset():
    cfg = _toy_cfg(pose_dim=7)
    with pytest.raises(ValidationError, match="pose dim"):
        train_arm(cfg, _toy_data(), seed=0)


# -------------------------------------------------------------- inference


def test_predict_shapes_and_determinism(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    sample = trained["test"][0]
    seqs_a, _ = predict(store, cfg, sample.past, sample.future_action, seed=9)
    seqs_b, _ = predict(store, cfg, sample.past, sample.future_action, seed=9)
    assert len(seqs_a) == cfg.num_samples
    for s_a, s_b in zip(seqs_a, seqs_b):
        assert s_a.frames.shape == (cfg.horizon, cfg.pose_dim)
        assert_array_equal(s_a.frames, s_b.frames)
    seqs_c, _ = predict(store, cfg, sample.past, sample.future_action, seed=10)
    assert any(
        not np.array_equal(a.frames, c.frames) for a, c in zip(seqs_a, seqs_c)
    )


def test_predict_overrides(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    sample = trained["test"][1]
    seqs, _ = predict(store, cfg, sample.past, 0, horizon=8, num_samples=2)
    assert len(seqs) == 2
    assert seqs[0].frames.shape == (8, cfg.pose_dim)


def test_predict_alpha_trace(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    sample = trained["test"][0]
    seqs, alpha = predict(store, cfg, sample.past, sample.future_action,
                          seed=9, trace_alpha=True)
    assert alpha.shape == (cfg.num_samples, cfg.horizon)
    # blending starts at the fusion threshold, before it the weight is pinned
    assert_array_equal(alpha[:, 0], np.ones(cfg.num_samples))
    no_trace, none_alpha = predict(store, cfg, sample.past,
                                   sample.future_action, seed=9)
    assert none_alpha is None
    for s_a, s_b in zip(seqs, no_trace):
        assert_array_equal(s_a.frames, s_b.frames)


def test_predict_validation(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    sample = trained["test"][0]
    with pytest.raises(ValidationError, match="horizon"):
        predict(store, cfg, sample.past, 0, horizon=0)
    with pytest.raises(ValidationError, match="num_samples"):
        predict(store, cfg, sample.past, 0, num_samples=0)
    with pytest.raises(ValidationError, match="future action"):
        predict(store, cfg, sample.past, cfg.num_actions)


def test_predict_from_reloaded_checkpoint_matches(tmp_path, trained):
    cfg = trained["cfg"]
    store, adam, _ = trained["mpm"]
    sample = trained["test"][2]
    path = tmp_path / "mpm.json"
    save_checkpoint(str(path), "mpm", cfg, store, adam, epoch=cfg.epochs_mpm)
    ckpt, reloaded = load_model(str(path), expect_kind="mpm")
    seqs_live, _ = predict(store, cfg, sample.past, sample.future_action, seed=5)
    seqs_disk, _ = predict(reloaded, ckpt.config, sample.past,
                           sample.future_action, seed=5)
    for a, b in zip(seqs_live, seqs_disk):
        assert_array_equal(a.frames, b.frames)


def test_evaluate_with_ground_truth_generator(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    eval_store, _, _ = trained["arm"]
    test_set = trained["test"]

    def copies_of_truth(index, sample):
        return np.repeat(sample.future.frames[None], cfg.num_samples, axis=0)

    report = evaluate(store, cfg, eval_store, trained["train"], test_set,
                      seed=0, generator=copies_of_truth)
    futures = np.stack([s.future.frames for s in test_set])
    _, probs = extract_features_batch(eval_store, futures)
    labels = np.array([s.future_action.index for s in test_set])
    direct_acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    assert report["acc"] == direct_acc
    assert report["div"] == 0.0
    assert report["div_w"] == 0.0
    assert report["fid_test"] < 0.5
    assert report["num_conditions"] == len(test_set)
    assert report["samples_per_condition"] == cfg.num_samples
    assert report["config_hash"] == config_hash(cfg)
    assert json.loads(json.dumps(report)) == report
    for block in report["per_action"].values():
        assert set(block) == {"acc", "div", "div_w", "conditions"}


def test_evaluate_constant_generator_has_zero_diversity(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    eval_store, _, _ = trained["arm"]

    def frozen_pose(index, sample):
        return np.ones((cfg.num_samples, cfg.horizon, cfg.pose_dim))

    report = evaluate(store, cfg, eval_store, trained["train"],
                      trained["test"], generator=frozen_pose)
    assert report["div"] == 0.0
    assert report["div_w"] == 0.0
    assert report["fid_test"] > 0.0


def test_evaluate_default_path_is_deterministic(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    eval_store, _, _ = trained["arm"]
    first = evaluate(store, cfg, eval_store, trained["train"],
                     trained["test"][:3], seed=21)
    second = evaluate(store, cfg, eval_store, trained["train"],
                      trained["test"][:3], seed=21)
    assert first == second
    third = evaluate(store, cfg, eval_store, trained["train"],
                     trained["test"][:3], seed=22)
    assert third != first


def test_evaluate_validation(trained):
    cfg = trained["cfg"]
    store, _, _ = trained["mpm"]
    eval_store, _, _ = trained["arm"]
    with pytest.raises(ValidationError, match="test set"):
        evaluate(store, cfg, eval_store, trained["train"], [])
    with pytest.raises(ValidationError, match="train set"):
        evaluate(store, cfg, eval_store, [], trained["test"])
    lonely = dataclasses.replace(cfg, num_samples=1)
    with pytest.raises(ValidationError, match="num_samples"):
        evaluate(store, lonely, eval_store, trained["train"], trained["test"])

    def flat(index, sample):
        return np.zeros((cfg.num_samples, cfg.horizon))

    with pytest.raises(ValidationError, match="generator"):
        evaluate(store, cfg, eval_store, trained["train"], trained["test"],
                 generator=flat)


# -------------------------------------------------------------------- CLI


@pytest.fixture(scope="module")
def cli_ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = _toy_cfg(checkpoint_every=2)
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config_to_dict(cfg)) + "\n")
    assert main([
        "gen-data", "--config", str(cfg_path), "--out", str(root / "data"),
        "--train-per-class", "3", "--test-per-class", "2",
        "--noise", "0.03", "--transition", "2",
    ]) == 0
    assert main([
        "train-arm", "--config", str(cfg_path),
        "--data", str(root / "data" / "train.jsonl"),
        "--out", str(root / "arm.json"),
    ]) == 0
    assert main([
        "train-mpm", "--config", str(cfg_path),
        "--data", str(root / "data" / "train.jsonl"),
        "--arm", str(root / "arm.json"),
        "--out", str(root / "mpm.json"),
    ]) == 0
    return {"root": root, "cfg": cfg, "cfg_path": cfg_path}


def test_cli_gen_data_writes_both_splits(cli_ws):
    root = cli_ws["root"]
    train = load_dataset(str(root / "data" / "train.jsonl"), num_actions=3)
    test = load_dataset(str(root / "data" / "test.jsonl"), num_actions=3)
    assert len(train) == 9
    assert len(test) == 6
    assert {s.future_action.index for s in train} == {0, 1, 2}


def test_cli_training_writes_versioned_checkpoints(cli_ws):
    root = cli_ws["root"]
    ckpt, _ = load_model(str(root / "arm.json"), expect_kind="arm")
    assert ckpt.epoch == cli_ws["cfg"].epochs_arm
    assert ckpt.adam is not None
    # interval saves appear at every second epoch
    assert (root / "arm.json.ep2").exists()
    assert (root / "arm.json.ep4").exists()
    assert (root / "mpm.json.ep2").exists()
    partial = load_checkpoint(str(root / "arm.json.ep2"))
    assert partial.epoch == 2
    assert partial.rng_state is not None


def test_cli_mpm_checkpoint_round_trips(cli_ws):
    root = cli_ws["root"]
    ckpt, store = load_model(str(root / "mpm.json"), expect_kind="mpm")
    assert ckpt.config == cli_ws["cfg"]
    assert not store.is_trainable("arm.gru.gates.W")


def test_cli_predict_formats_agree(cli_ws, tmp_path):
    root = cli_ws["root"]
    args = [
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"), "--index", "1",
    ]
    jsonl_out = tmp_path / "pred.jsonl"
    csv_out = tmp_path / "pred.csv"
    alpha_out = tmp_path / "alpha.csv"
    assert main(args + ["--out", str(jsonl_out)]) == 0
    assert main(args + ["--out", str(csv_out), "--format", "csv",
                        "--trace-alpha", str(alpha_out)]) == 0

    cfg = cli_ws["cfg"]
    generated = load_dataset(str(jsonl_out), num_actions=3)
    assert len(generated) == cfg.num_samples
    assert generated[0].future.frames.shape == (cfg.horizon, cfg.pose_dim)

    rows = [line.split(",") for line in
            csv_out.read_text().strip().splitlines()]
    assert rows[0] == ["sample", "frame", "c0", "c1", "c2"]
    assert len(rows) == 1 + cfg.num_samples * cfg.horizon
    # repr round trip keeps csv and jsonl outputs bit-identical
    for g in range(cfg.num_samples):
        row = rows[1 + g * cfg.horizon]
        assert row[0] == str(g) and row[1] == "0"
        parsed = np.array([float(v) for v in row[2:]])
        assert_array_equal(parsed, generated[g].future.frames[0])

    alpha_rows = alpha_out.read_text().strip().splitlines()
    assert alpha_rows[0] == "sample,step,alpha"
    assert len(alpha_rows) == 1 + cfg.num_samples * cfg.horizon
    assert alpha_rows[1].split(",")[2] == "1.0"


def test_cli_predict_is_deterministic(cli_ws, tmp_path):
    root = cli_ws["root"]
    args = [
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"), "--seed", "5",
    ]
    a, b, c = (tmp_path / n for n in ("a.jsonl", "b.jsonl", "c.jsonl"))
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert filecmp.cmp(a, b, shallow=False)
    assert main([
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"), "--seed", "6",
        "--out", str(c),
    ]) == 0
    assert not filecmp.cmp(a, c, shallow=False)


def test_cli_predict_action_override(cli_ws, tmp_path):
    root = cli_ws["root"]
    out = tmp_path / "forced.jsonl"
    assert main([
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"),
        "--action", "2", "--horizon", "3", "--samples", "2",
        "--out", str(out),
    ]) == 0
    generated = load_dataset(str(out), num_actions=3)
    assert len(generated) == 2
    assert generated[0].future.frames.shape == (3, 3)
    assert all(s.future_action.index == 2 for s in generated)


def test_cli_evaluate_writes_report(cli_ws, tmp_path):
    root = cli_ws["root"]
    out = tmp_path / "report.json"
    assert main([
        "evaluate", "--checkpoint", str(root / "mpm.json"),
        "--eval-arm", str(root / "arm.json"),
        "--train-data", str(root / "data" / "train.jsonl"),
        "--test-data", str(root / "data" / "test.jsonl"),
        "--out", str(out),
    ]) == 0
    report = json.loads(out.read_text())
    assert {"acc", "fid_train", "fid_test", "div", "div_w",
            "per_action", "config_hash", "seed"} <= set(report)
    assert 0.0 <= report["acc"] <= 1.0
    assert report["div"] > 0.0


def test_cli_inspect_bank(cli_ws, tmp_path, capsys):
    root = cli_ws["root"]
    assert main([
        "inspect-bank", "--checkpoint", str(root / "mpm.json"),
        "--bank", "stab", "--past-action", "1", "--future-action", "2",
    ]) == 0
    dump = json.loads(capsys.readouterr().out)
    cfg = cli_ws["cfg"]
    assert dump["bank"] == "stab"
    assert dump["cell"] == {"past_action": 1, "future_action": 2}
    assert len(dump["rows"]) == cfg.stab_tuples
    assert len(dump["keys"][0]) == cfg.key_dim
    assert len(dump["values"][0]) == cfg.value_dim

    out = tmp_path / "cell.json"
    assert main([
        "inspect-bank", "--checkpoint", str(root / "mpm.json"),
        "--bank", "acb", "--future-action", "0", "--out", str(out),
    ]) == 0
    dump = json.loads(out.read_text())
    assert dump["cell"] == {"future_action": 0}


def test_cli_train_mpm_ablation_flags(cli_ws, tmp_path):
    root = cli_ws["root"]
    out = tmp_path / "ablated.json"
    assert main([
        "train-mpm", "--config", str(cli_ws["cfg_path"]),
        "--data", str(root / "data" / "train.jsonl"),
        "--arm", str(root / "arm.json"),
        "--disable-stab", "--top-k", "1",
        "--out", str(out),
    ]) == 0
    ckpt = load_checkpoint(str(out))
    assert ckpt.config.disable_stab
    assert ckpt.config.top_k == 1
    # the dropped bank must not reappear at inspection time
    assert main([
        "inspect-bank", "--checkpoint", str(out),
        "--bank", "stab", "--future-action", "0",
    ]) == 1


def test_cli_rejects_architecture_mismatch(cli_ws, tmp_path, capsys):
    root = cli_ws["root"]
    other = dataclasses.replace(cli_ws["cfg"], latent_dim=8)
    other_path = tmp_path / "other.json"
    other_path.write_text(json.dumps(config_to_dict(other)) + "\n")
    code = main([
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"),
        "--config", str(other_path), "--out", str(tmp_path / "x.jsonl"),
    ])
    assert code == 1
    assert "latent_dim" in capsys.readouterr().err


def test_cli_exit_codes(cli_ws, tmp_path, capsys):
    root = cli_ws["root"]
    # argparse failures surface as usage errors
    assert main(["frobnicate"]) == 1
    assert main([
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"),
        "--out", str(tmp_path / "x.jsonl"), "--jobs", "0",
    ]) == 1
    # missing inputs are usage errors, not crashes
    assert main([
        "predict", "--checkpoint", str(root / "missing.json"),
        "--data", str(root / "data" / "test.jsonl"),
        "--out", str(tmp_path / "y.jsonl"),
    ]) == 1
    assert main([
        "train-arm", "--config", str(cli_ws["cfg_path"]),
        "--data", str(root / "data" / "train.jsonl"),
    ]) == 1  # no --out
    assert main([
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"),
        "--index", "99", "--out", str(tmp_path / "z.jsonl"),
    ]) == 1
    # unwritable output is a runtime failure
    assert main([
        "predict", "--checkpoint", str(root / "mpm.json"),
        "--data", str(root / "data" / "test.jsonl"),
        "--format", "csv", "--out", str(root),
    ]) == 2
    capsys.readouterr()
