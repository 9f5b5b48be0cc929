from dataclasses import replace

import numpy as np
import pytest

from checkworthy import synthetic, train
from checkworthy.corpus import Dataset, DatasetError
from checkworthy.model import forward, init_params
from checkworthy.train import (EnsembleModel, ModelFormatError, Prediction, TrainConfig,
                               TrainingError, alpha_sweep, format_predictions, load_model,
                               member_training_sets, model_from_bytes, parse_predictions, predict,
                               save_model, train_ensemble, train_single)


def training_accuracy(params, data, config):
    ids, mask, y, _ = train.encode_dataset(data, config)
    pred = forward(params, ids, mask).probs("cwd").argmax(axis=1)
    return float((pred == y).mean())


class TestTrainSingle:
    def test_learns_separable_toy(self, toy_train, small_config):
        cfg = replace(small_config, epochs=200, batch_size=16, embed_dim=16, hidden=16)
        params = train_single(toy_train, cfg)
        assert training_accuracy(params, toy_train, cfg) >= 0.95

    def test_alpha_one_freezes_language_head(self, toy_train, small_config):
        cfg = replace(small_config, alpha=1.0, weight_decay=0.0)
        params = train_single(toy_train, cfg)
        init = init_params(256, 2, 8, 8, seed=cfg.member_seeds(0)[1])
        for part in ("w1", "b1", "w2", "b2"):
            assert np.array_equal(getattr(params, f"li_{part}"), getattr(init, f"li_{part}"))
        assert not np.array_equal(params.cwd_w2, init.cwd_w2)

    def test_alpha_zero_freezes_checkworthiness_head(self, toy_train, small_config):
        cfg = replace(small_config, alpha=0.0, weight_decay=0.0)
        params = train_single(toy_train, cfg)
        init = init_params(256, 2, 8, 8, seed=cfg.member_seeds(0)[1])
        for part in ("w1", "b1", "w2", "b2"):
            assert np.array_equal(getattr(params, f"cwd_{part}"), getattr(init, f"cwd_{part}"))

    def test_deterministic(self, toy_train, small_config):
        a = train_single(toy_train, small_config)
        b = train_single(toy_train, small_config)
        assert a.equal(b)

    def test_step_count_and_history(self, toy_train, toy_dev, small_config):
        history = []
        train_single(toy_train, small_config, history=history, dev_data=toy_dev)
        steps = [h for h in history if "step" in h]
        assert len(steps) == small_config.epochs * -(-200 // small_config.batch_size)
        assert all(np.isfinite(h["joint"]) for h in steps)
        dev = [h for h in history if "dev_map" in h]
        assert [h["epoch"] for h in dev] == [1, 2]

    def test_empty(self, small_config):
        with pytest.raises(TrainingError):
            train_single(Dataset((), "train"), small_config)

    def test_non_finite_loss_aborts(self, toy_train, small_config):
        cfg = replace(small_config, lr=1e300)
        with np.errstate(all="ignore"), pytest.raises(TrainingError, match="step"):
            train_single(toy_train, cfg)

    def test_class_weighting_changes_training(self, toy_train, small_config):
        a = train_single(toy_train, small_config)
        b = train_single(toy_train, replace(small_config, class_weighting=True))
        assert not a.equal(b)


class TestEnsemble:
    def test_leave_one_out_sizes(self):
        data = synthetic.toy_corpus(822)
        sets = member_training_sets(data, TrainConfig(k=5))
        assert sorted(len(s) for s in sets) == [657, 657, 658, 658, 658]

    def test_holdout_partition(self):
        data = synthetic.toy_corpus(101)
        cfg = TrainConfig(k=5)
        sets = member_training_sets(data, cfg)
        all_ids = set(data.ids)
        held = [all_ids - set(s.ids) for s in sets]
        assert sum(len(h) for h in held) == len(data)
        assert set().union(*held) == all_ids
        single = member_training_sets(data, replace(cfg, chunk_mode="single_chunk"))
        assert [set(s.ids) for s in single] == held

    def test_k_one_uses_everything(self, toy_train, small_config):
        model = train_ensemble(toy_train, replace(small_config, k=1))
        assert len(model.members) == 1
        assert member_training_sets(toy_train, replace(small_config, k=1))[0] is toy_train

    def test_deterministic(self, toy_train, small_config):
        a = train_ensemble(toy_train, small_config)
        b = train_ensemble(toy_train, small_config)
        assert all(x.equal(y) for x, y in zip(a.members, b.members))
        assert not a.members[0].equal(a.members[1])

    def test_too_small(self, small_config):
        with pytest.raises(DatasetError):
            train_ensemble(synthetic.toy_corpus(1), small_config)


class TestPredict:
    def test_identical_members_equal_single(self, toy_train, toy_dev, small_config):
        params = train_single(toy_train, small_config)
        one = predict(EnsembleModel([params], small_config), toy_dev)
        five = predict(EnsembleModel([params.copy() for _ in range(5)], small_config), toy_dev)
        assert [p.score for p in one] == [p.score for p in five]

    def test_mean_of_two(self):
        assert train.running_mean(np.array([[0.2], [0.4]]))[0] == pytest.approx(0.3)

    def test_scores_and_order(self, toy_train, toy_dev, small_config):
        model = train_ensemble(toy_train, small_config)
        preds = predict(model, toy_dev)
        assert [p.sample_id for p in preds] == toy_dev.ids
        assert all(0.0 <= p.score <= 1.0 for p in preds)
        for p in preds:
            assert len(p.member_scores) == 2
            assert p.score == pytest.approx(np.mean(p.member_scores), abs=1e-15)
        assert preds == predict(model, toy_dev)

    def test_empty(self, toy_train, small_config):
        model = EnsembleModel([init_params(256, 2, 8, 8)], small_config)
        assert predict(model, Dataset()) == []


class TestSweep:
    def test_grid_and_seeds(self, toy_train, toy_dev, small_config):
        cfg = replace(small_config, epochs=1, k=1)
        result = alpha_sweep(toy_train, toy_dev, cfg)
        assert [r.alpha for r in result.rows] == [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        assert len({r.seeds for r in result.rows}) == 1
        best = max(result.rows, key=lambda r: r.report.map)
        assert result.best_alpha == best.alpha
        assert set(result.rows[0].per_language) == {"en", "es"}
        assert result.to_tsv().splitlines()[0].startswith("alpha\tMAP\tR-Rank\tR-Pr\tP@1")

    def test_singleton_matches_standalone(self, toy_train, toy_dev, small_config):
        cfg = replace(small_config, epochs=1)
        row = alpha_sweep(toy_train, toy_dev, cfg, [0.6]).rows[0]
        alone = train.evaluate_model(train_ensemble(toy_train, replace(cfg, alpha=0.6)), toy_dev)
        assert row.report == alone

    def test_bad_alpha(self, toy_train, toy_dev, small_config):
        with pytest.raises(ValueError):
            alpha_sweep(toy_train, toy_dev, small_config, [1.2])
        with pytest.raises(ValueError):
            alpha_sweep(toy_train, toy_dev, small_config, [])


class TestSerialization:
    @pytest.fixture
    def model(self, toy_train, small_config):
        return train_ensemble(toy_train, replace(small_config, epochs=1))

    def test_round_trip_bit_exact(self, model, toy_dev, tmp_path):
        before = predict(model, toy_dev)
        path = tmp_path / "m.bin"
        digest = save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        assert all(a.equal(b) for a, b in zip(loaded.members, model.members))
        assert predict(loaded, toy_dev) == before
        assert save_model(loaded, tmp_path / "again.bin") == digest

    def test_corrupted_byte(self, model, tmp_path):
        data = bytearray(train.model_bytes(model))
        data[len(data) // 2] ^= 0x01
        with pytest.raises(ModelFormatError, match="checksum"):
            model_from_bytes(bytes(data))

    def test_truncated(self, model):
        data = train.model_bytes(model)
        with pytest.raises(ModelFormatError):
            model_from_bytes(data[:-100])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.bin"
        p.write_bytes(b"")
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(p)

    def test_version_mismatch(self, model):
        import hashlib
        import struct
        data = bytearray(train.model_bytes(model)[:-32])
        struct.pack_into("<I", data, 8, 99)
        data += hashlib.sha256(data).digest()
        with pytest.raises(ModelFormatError, match="version 99"):
            model_from_bytes(bytes(data))

    def test_layout(self, model):
        data = train.model_bytes(model)
        assert data[:8] == b"CWJMODEL"
        n_floats = sum(a.size for m in model.members for _, a in m.items())
        header_len = int.from_bytes(data[12:20], "little")
        assert len(data) == 20 + header_len + 8 * n_floats + 32
        first = np.frombuffer(data, "<f8", count=1, offset=20 + header_len)[0]
        assert first == model.members[0].embedding[0, 0]


def test_prediction_tsv_round_trip():
    preds = [Prediction("1", 0.25, "covid"), Prediction("2", 1 / 3, "")]
    text = format_predictions(preds, "run1")
    assert text.splitlines()[0] == "covid\t1\t0.25\trun1"
    back = parse_predictions("# comment\n" + text)
    assert [(p.sample_id, p.score, p.topic_id) for p in back] == [("1", 0.25, "covid"),
                                                                   ("2", 1 / 3, "")]
