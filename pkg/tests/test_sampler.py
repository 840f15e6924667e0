import pytest

from cfslbench import (
    BlockIndexError,
    NotEnoughClasses,
    NotEnoughSamples,
    TaskConfig,
    episode_manifest_bytes,
    label_assignment,
    read_episode,
    sample_episode,
    sample_eval_suite,
    write_episode,
)
from episode_laws import assert_episode_laws, true_class_set


def cfg(nss, cci, n_way=5, k_shot=1, k_target=5, overwrite=False, seed=0):
    return TaskConfig(nss=nss, cci=cci, n_way=n_way, k_shot=k_shot,
                      k_target=k_target, overwrite=overwrite, seed=seed)


class TestCounting:
    def test_three_unit_blocks(self, small_pack):
        episode = sample_episode(small_pack, cfg(3, 1), 0)
        assert len(episode.support_sets) == 3
        assert all(len(ref.pairs) == 5 for ref in episode.support_sets)
        assert len(episode.distinct_classes) == 15
        # counting oracle: k_target * n_way * nss/cci
        assert len(episode.target_set.pairs) == 5 * 5 * 3 == 75

    def test_single_block_reuses_classes(self, small_pack):
        episode = sample_episode(small_pack, cfg(10, 10), 0)
        assert len(episode.distinct_classes) == 5
        assert len(episode.target_set.pairs) == 5 * 5 * 1 == 25

    def test_repeat_is_bitwise_identical(self, small_pack):
        a = sample_episode(small_pack, cfg(4, 2, seed=31), 17)
        b = sample_episode(small_pack, cfg(4, 2, seed=31), 17)
        assert a == b
        assert episode_manifest_bytes(a) == episode_manifest_bytes(b)


class TestLabelAssignment:
    def test_second_block_without_overwrite(self):
        assert list(label_assignment(2, cfg(3, 1))) == [5, 6, 7, 8, 9]

    def test_overwrite_pins_to_first_range(self):
        for a in (1, 2, 3):
            assert list(label_assignment(a, cfg(3, 1, overwrite=True))) == [0, 1, 2, 3, 4]

    def test_first_block_same_either_way(self):
        assert list(label_assignment(1, cfg(3, 1))) == [0, 1, 2, 3, 4]
        assert list(label_assignment(1, cfg(3, 1, overwrite=True))) == [0, 1, 2, 3, 4]

    def test_out_of_range_block(self):
        with pytest.raises(BlockIndexError):
            label_assignment(4, cfg(3, 1))
        with pytest.raises(BlockIndexError):
            label_assignment(0, cfg(3, 1))


class TestEpisodeLaws:
    @pytest.mark.parametrize(
        "config",
        [
            cfg(1, 1),
            cfg(3, 1), cfg(3, 1, overwrite=True), cfg(3, 3, overwrite=True),
            cfg(4, 2), cfg(8, 2), cfg(10, 1), cfg(10, 1, overwrite=True),
            cfg(10, 10, overwrite=True), cfg(10, 5), cfg(6, 2, n_way=3, k_shot=2, k_target=2),
            cfg(6, 3, n_way=2, k_shot=3, k_target=1, overwrite=True),
        ],
    )
    def test_laws_hold_across_grid(self, small_pack, config):
        for index in range(5):
            episode = sample_episode(small_pack, config, index)
            assert_episode_laws(small_pack, config, episode)

    def test_within_block_sets_share_classes_but_not_samples(self, small_pack):
        episode = sample_episode(small_pack, cfg(6, 3), 1)
        first, second, third = episode.support_sets[:3]
        assert true_class_set(small_pack, first.sample_ids) == true_class_set(small_pack, second.sample_ids)
        assert not (set(first.sample_ids) & set(second.sample_ids))
        assert not (set(second.sample_ids) & set(third.sample_ids))


class TestErrors:
    def test_not_enough_classes(self, small_pack):
        with pytest.raises(NotEnoughClasses):
            sample_episode(small_pack, cfg(13, 1), 0)  # needs 65 classes, pack has 60

    def test_not_enough_samples_names_the_class(self, small_pack):
        # per-class need = cci*k_shot + k_target = 10*4 + 5 = 45 > 40 available
        config = cfg(10, 10, k_shot=4, k_target=5)
        with pytest.raises(NotEnoughSamples) as err:
            sample_episode(small_pack, config, 0)
        assert 0 <= err.value.class_id < small_pack.num_classes

    def test_negative_index_rejected(self, small_pack):
        with pytest.raises(ValueError):
            sample_episode(small_pack, cfg(3, 1), -1)


class TestEvalSuite:
    def test_count_one_equals_episode_zero(self, small_pack):
        suite = sample_eval_suite(small_pack, cfg(3, 1, seed=5), 1)
        assert suite == [sample_episode(small_pack, cfg(3, 1, seed=5), 0)]

    def test_six_hundred_episodes_stable(self, small_pack):
        config = cfg(3, 1, seed=9)
        first = sample_eval_suite(small_pack, config, 50)
        second = sample_eval_suite(small_pack, config, 50)
        assert first == second

    def test_episodes_draw_independently(self, small_pack):
        # class removal must not leak across episodes: a pack with exactly
        # enough classes for one episode still yields many episodes
        config = cfg(10, 1, seed=2)  # needs 50 of 60 classes per episode
        suite = sample_eval_suite(small_pack, config, 10)
        assert len(suite) == 10

    def test_different_seeds_differ(self, small_pack):
        a = sample_eval_suite(small_pack, cfg(3, 1, seed=1), 50)
        b = sample_eval_suite(small_pack, cfg(3, 1, seed=2), 50)
        assert any(x.class_blocks != y.class_blocks for x, y in zip(a, b))

    def test_zero_count_rejected(self, small_pack):
        with pytest.raises(ValueError):
            sample_eval_suite(small_pack, cfg(3, 1), 0)


class TestManifests:
    def test_round_trip(self, small_pack, tmp_path):
        episode = sample_episode(small_pack, cfg(4, 2, overwrite=True, seed=3), 7)
        path = tmp_path / "episode.json"
        write_episode(episode, path)
        again = read_episode(path)
        assert again == episode
        write_episode(again, tmp_path / "second.json")
        assert path.read_bytes() == (tmp_path / "second.json").read_bytes()

    def test_manifest_is_single_canonical_line(self, small_pack):
        episode = sample_episode(small_pack, cfg(2, 1), 0)
        raw = episode_manifest_bytes(episode)
        assert raw.endswith(b"\n")
        assert raw.count(b"\n") == 1
