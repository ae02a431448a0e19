import numpy as np
import pytest

from src.asr.ctc import min_frames
from src.core.config import DataConfig
from src.core.errors import GenerationError, InvalidInputError
from src.core.rng import make_rng
from src.synth.corpus import (
    sample_accented_panel,
    sample_corpus,
    sample_utterance,
    split_by_speaker,
    strongest_speakers,
    subsample,
)
from src.synth.datasets import ACCENTED, ADAPT, L1_TRAIN, build_corpora, build_languages
from src.synth.language import AccentSpec, Language, derive_accented, make_language, nearest_phone_map


@pytest.fixture(scope="module")
def l1():
    return make_language(10, 20, 8, seed=11, name="l1")


@pytest.fixture(scope="module")
def l2():
    return make_language(12, 20, 8, seed=12, name="l2")


class TestMakeLanguage:
    def test_two_phones_far_apart(self):
        lang = make_language(2, 3, 4, seed=0, separation=6.0)
        assert lang.min_phone_distance() >= 6.0

    def test_deterministic(self):
        a, b = make_language(5, 8, 3, seed=4), make_language(5, 8, 3, seed=4)
        assert np.array_equal(a.phone_means, b.phone_means)
        assert a.lexicon == b.lexicon

    def test_default_inventory_separation(self):
        l1, l2 = build_languages(DataConfig())
        assert l1.min_phone_distance() >= 4.0
        assert l2.min_phone_distance() >= 4.0

    def test_words_distinct_and_bounded(self, l2):
        assert len(set(l2.lexicon)) == l2.vocab_size == 20
        assert all(2 <= len(word) <= 4 for word in l2.lexicon)

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            make_language(1, 5, 2, seed=0)

    def test_unplaceable_phones(self):
        with pytest.raises(GenerationError, match="separation"):
            make_language(40, 5, 1, seed=0, separation=10.0, spread=0.05)

    def test_dict_round_trip(self, l1):
        again = Language.from_dict(l1.to_dict())
        assert np.array_equal(again.phone_means, l1.phone_means)
        assert again.lexicon == l1.lexicon


class TestAccent:
    def test_zero_strength_is_identity(self, l1, l2):
        accented = derive_accented(AccentSpec(l2, l1, 0.0))
        assert np.array_equal(accented.phone_means, l2.phone_means)
        assert accented.lexicon == l2.lexicon

    def test_full_strength_lands_on_l1(self, l1, l2):
        spec = AccentSpec(l2, l1, 1.0)
        accented = derive_accented(spec)
        assert np.array_equal(accented.phone_means, l1.phone_means[spec.phone_map])

    def test_phone_map_matches_scan(self, l1, l2):
        scan = [int(np.argmin([np.sum((m - n) ** 2) for n in l1.phone_means])) for m in l2.phone_means]
        assert nearest_phone_map(l2, l1).tolist() == scan

    def test_distance_monotone_in_strength(self, l1, l2):
        shifts = [
            np.linalg.norm(derive_accented(AccentSpec(l2, l1, s)).phone_means - l2.phone_means, axis=1).mean()
            for s in (0.0, 0.25, 0.5, 0.75, 1.0)
        ]
        assert all(b >= a for a, b in zip(shifts, shifts[1:]))

    def test_strength_range(self, l1, l2):
        with pytest.raises(InvalidInputError):
            AccentSpec(l2, l1, 1.2)


class TestCorpus:
    def test_noise_free_single_word(self, l2):
        quiet = Language("quiet", l2.phone_means, 0.0, 2, 0, l2.lexicon)
        features, labels, alignment = sample_utterance(quiet, make_rng(0), (1, 1))
        assert len(labels) == 1
        assert np.array_equal(features, quiet.phone_means[alignment].astype(np.float32))
        assert np.all(np.bincount(alignment)[np.unique(alignment)] % 2 == 0)

    def test_deterministic(self, l2):
        a, b = sample_corpus(l2, 5, seed=3), sample_corpus(l2, 5, seed=3)
        assert all(x.features.tobytes() == y.features.tobytes() and x.labels == y.labels for x, y in zip(a, b))

    def test_phone_frame_means(self, l2):
        corpus = sample_corpus(l2, 200, seed=1)
        frames = np.concatenate([u.features for u in corpus])
        phones = np.concatenate([u.alignment for u in corpus])
        for p in np.unique(phones):
            rows = frames[phones == p]
            if len(rows) < 30:
                continue
            bound = 3 * l2.sigma * np.sqrt(l2.feat_dim) / np.sqrt(len(rows))
            assert np.linalg.norm(rows.mean(axis=0) - l2.phone_means[p]) <= bound

    def test_ctc_feasible_and_labelled(self, l2):
        for utt in sample_corpus(l2, 50, seed=2):
            assert utt.frames >= min_frames(utt.labels)
            assert 1 <= min(utt.labels) and max(utt.labels) <= l2.vocab_size

    def test_requires_utterances(self, l2):
        with pytest.raises(InvalidInputError):
            sample_corpus(l2, 0)


class TestPanels:
    def test_accented_panel(self, l1, l2):
        panel = sample_accented_panel(l2, l1, 4, 3, strength=0.6, spread=0.2, seed=5)
        speakers = {u.speaker for u in panel}
        assert len(panel) == 12 and len(speakers) == 4
        assert all(0.4 <= u.accent <= 0.8 for u in panel)
        assert all(u.lang == "l2" for u in panel)

    def test_strongest_speakers(self, l1, l2):
        panel = sample_accented_panel(l2, l1, 5, 2, strength=0.5, spread=0.5, seed=6)
        strong = strongest_speakers(panel, 0.4)
        kept = {u.speaker for u in strong}
        assert len(kept) == 2
        assert min(u.accent for u in strong) >= max(u.accent for u in panel if u.speaker not in kept)

    def test_split_by_speaker(self, l1, l2):
        panel = sample_accented_panel(l2, l1, 10, 2, strength=0.6, spread=0.2, seed=7)
        train, val, test = split_by_speaker(panel, (8, 1, 1), seed=0)
        groups = [{u.speaker for u in part} for part in (train, val, test)]
        assert [len(g) for g in groups] == [8, 1, 1]
        assert not (groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])
        assert len(train) + len(val) + len(test) == len(panel)

    def test_subsample(self, l2):
        corpus = sample_corpus(l2, 10, seed=0)
        picked = subsample(corpus, 4, seed=1)
        assert len(picked) == 4
        assert [u.uid for u in picked] == sorted(u.uid for u in picked)
        assert subsample(corpus, 50, seed=1) == corpus


def test_build_corpora_sizes(tiny_config, tiny_data):
    assert len(tiny_data[L1_TRAIN]) == tiny_config.data.n_train_l1
    assert len(tiny_data[ACCENTED]) == 9
    assert len(tiny_data[ADAPT]) == 20
    again = build_corpora(tiny_config.data)
    assert [u.features.tobytes() for u in again[ADAPT]] == [u.features.tobytes() for u in tiny_data[ADAPT]]
