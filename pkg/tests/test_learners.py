import numpy as np
import pytest

from cfslbench import (
    EpisodeSession,
    LearnerKind,
    LearnerParams,
    MacCounter,
    ModelNotFitted,
    PrototypeModel,
    TaskConfig,
    fit_stream,
    learner_spec_from_dict,
    output_label_count,
    predict,
    sample_episode,
)
from synth import clustered_pack


def cfg(nss, cci, **kw):
    base = dict(n_way=5, k_shot=1, k_target=5, overwrite=False, seed=0)
    base.update(kw)
    return TaskConfig(nss=nss, cci=cci, **base)


def run_episode(pack, config, kind, params=LearnerParams(), index=0):
    episode = sample_episode(pack, config, index)
    session = EpisodeSession(pack, episode)
    model = fit_stream(kind, session, params)
    target = session.request_target()
    preds = predict(model, target.images)
    return session.submit_predictions(preds), model, session


class TestRandomLearner:
    def test_chance_level_on_fifty_labels(self, small_pack):
        config = cfg(10, 1, seed=4)
        accs = [
            run_episode(small_pack, config, "random", LearnerParams(seed=1), i)[0].accuracy
            for i in range(150)
        ]
        expected = 1 / 50
        stderr = (expected * (1 - expected) / (150 * 250)) ** 0.5
        assert abs(np.mean(accs) - expected) < 4 * stderr

    def test_stores_nothing(self, small_pack):
        score, _, session = run_episode(small_pack, cfg(3, 1), "random")
        assert session.bank.total_bytes == 0
        assert score.memory_bytes == 0

    def test_label_frequencies_binomial(self, small_pack):
        episode = sample_episode(small_pack, cfg(1, 1), 0)
        session = EpisodeSession(small_pack, episode)
        model = fit_stream("random", session, LearnerParams(seed=3))
        inputs = np.zeros((1000, *small_pack.image_shape), dtype=np.uint8)
        labels = predict(model, inputs)
        for lbl in range(5):
            count = int(np.sum(labels == lbl))
            assert abs(count - 200) <= 3 * (1000 * 0.2 * 0.8) ** 0.5

    def test_same_seed_same_draws(self, small_pack):
        a = run_episode(small_pack, cfg(3, 1), "random", LearnerParams(seed=9))[0]
        b = run_episode(small_pack, cfg(3, 1), "random", LearnerParams(seed=9))[0]
        assert a.accuracy == b.accuracy


class TestPrototypeLearner:
    def test_separable_single_block_is_nearly_perfect(self):
        pack = clustered_pack(num_classes=12, per_class=16, noise=2, seed=1)
        config = cfg(4, 4, n_way=2, k_shot=1, k_target=5, overwrite=True, seed=6)
        accs = [
            run_episode(pack, config, "prototype", index=i)[0].accuracy for i in range(100)
        ]
        assert np.mean(accs) >= 0.95

    def test_overwrite_merges_super_classes_and_costs_accuracy(self, lowdim_pack):
        plain = cfg(3, 1, seed=8)
        merged = cfg(3, 1, overwrite=True, seed=8)
        acc_b = np.mean([
            run_episode(lowdim_pack, plain, "prototype", index=i)[0].accuracy
            for i in range(50)
        ])
        acc_c = np.mean([
            run_episode(lowdim_pack, merged, "prototype", index=i)[0].accuracy
            for i in range(50)
        ])
        assert acc_c < acc_b

    def test_super_class_centroid_is_running_mean_across_blocks(self, separable_pack):
        config = cfg(3, 1, overwrite=True, seed=2)
        _, model, _ = run_episode(separable_pack, config, "prototype")
        assert set(model.counts.values()) == {3}  # one sample per block, three blocks

    def test_exact_centroid_input_predicts_its_label(self):
        d = 4
        model = PrototypeModel(
            sums={0: np.array([0.0, 0, 0, 0]), 1: np.array([1.0, 1, 1, 1]) * 3},
            counts={0: 1, 1: 3},
            standardize=False,
            embed_dim=None,
        )
        images = (model.centroid(1).reshape(1, 2, 2, 1) * 255).astype(np.uint8)
        assert predict(model, images)[0] == 1

    def test_tie_breaks_to_lowest_label(self):
        model = PrototypeModel(
            sums={3: np.array([1.0, 0.0]), 7: np.array([-1.0, 0.0])},
            counts={3: 1, 7: 1},
            standardize=False,
            embed_dim=None,
        )
        query = np.zeros((1, 1, 2, 1), dtype=np.uint8)  # equidistant from both
        assert predict(model, query)[0] == 3

    def test_order_invariance_single_block(self, separable_pack):
        config = cfg(4, 4, seed=13)
        episode = sample_episode(separable_pack, config, 0)
        shuffled = episode.support_sets[::-1]
        renumbered = tuple(
            type(ref)(position=i + 1, block=ref.block, pairs=ref.pairs)
            for i, ref in enumerate(shuffled)
        )
        import dataclasses

        permuted = dataclasses.replace(episode, support_sets=renumbered)
        _, model_a, _ = run_episode(separable_pack, config, "prototype")
        session = EpisodeSession(separable_pack, permuted)
        model_b = fit_stream("prototype", session, LearnerParams())
        labels_a, table_a = model_a.centroid_table()
        labels_b, table_b = model_b.centroid_table()
        assert np.array_equal(labels_a, labels_b)
        assert np.allclose(table_a, table_b, atol=1e-12)

    def test_bank_grows_per_support_set(self, small_pack):
        config = cfg(3, 1)
        _, _, session = run_episode(small_pack, config, "prototype")
        d = int(np.prod(small_pack.image_shape))
        assert session.bank.total_bytes == 15 * d * 4
        assert len(session.bank.entries) == 15
        assert all(e.element_width == 4 for e in session.bank.entries)


class TestLinearFineTune:
    def test_weight_rows_track_label_space(self, small_pack):
        _, model_b, _ = run_episode(small_pack, cfg(10, 1), "linear_finetune")
        assert model_b.weights.shape[0] == output_label_count(cfg(10, 1)) == 50
        _, model_c, _ = run_episode(small_pack, cfg(10, 1, overwrite=True), "linear_finetune")
        assert model_c.weights.shape[0] == 5

    def test_learns_overwrite_task_beyond_chance(self, lowdim_pack):
        config = cfg(3, 1, overwrite=True, seed=21)
        accs = [
            run_episode(lowdim_pack, config, "linear_finetune",
                        LearnerParams(standardize=True), index=i)[0].accuracy
            for i in range(60)
        ]
        assert np.mean(accs) > 1 / 5

    def test_memory_bank_left_empty(self, small_pack):
        _, _, session = run_episode(small_pack, cfg(3, 1), "linear_finetune")
        assert session.bank.total_bytes == 0


class TestProtocolDiscipline:
    @pytest.mark.parametrize("kind", ["random", "prototype", "linear_finetune"])
    def test_every_learner_consumes_each_set_once(self, small_pack, kind):
        episode = sample_episode(small_pack, cfg(4, 2), 0)
        session = EpisodeSession(small_pack, episode)
        fit_stream(kind, session, LearnerParams())
        assert session.cursor == 4

    def test_unfitted_prototype_rejected(self):
        empty = PrototypeModel(sums={}, counts={}, standardize=False, embed_dim=None)
        with pytest.raises(ModelNotFitted):
            predict(empty, np.zeros((1, 2, 2, 1), dtype=np.uint8))

    def test_none_model_rejected(self):
        with pytest.raises(ModelNotFitted):
            predict(None, np.zeros((1, 2, 2, 1), dtype=np.uint8))

    def test_macs_recorded_for_prototype(self, small_pack):
        episode = sample_episode(small_pack, cfg(3, 1), 0)
        session = EpisodeSession(small_pack, episode)
        macs = MacCounter()
        model = fit_stream("prototype", session, LearnerParams(), macs)
        target = session.request_target()
        predict(model, target.images, macs)
        assert macs.by_phase.get("learning", 0) > 0
        assert macs.by_phase.get("inference", 0) > 0


class TestLearnerSpecParsing:
    def test_harness_keys(self):
        kind, params = learner_spec_from_dict(
            {"learner": "linear_finetune", "steps": 7, "lr": 0.5, "standardize": True}
        )
        assert kind is LearnerKind.LINEAR_FINETUNE
        assert params.steps == 7
        assert params.lr == 0.5
        assert params.standardize is True
        assert params.embed_dim is None

    def test_defaults(self):
        kind, params = learner_spec_from_dict({"learner": "prototype"})
        assert kind is LearnerKind.PROTOTYPE
        assert params == LearnerParams()
