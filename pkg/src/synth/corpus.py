"""
Corpus sampling from synthetic languages and accented speaker panels
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import InvalidInputError
from src.core.logger import get_logger
from src.core.rng import derive_rng, derive_seed
from src.synth.language import AccentSpec, Language, derive_accented

logger = get_logger(__name__)

NATIVE_SPEAKER = "native"


@dataclass(eq=False)
class Utterance:
    """Frame features paired with a word-label transcript"""

    uid: str
    features: np.ndarray
    labels: Tuple[int, ...]
    lang: str
    accent: float = 0.0
    speaker: str = NATIVE_SPEAKER
    alignment: Optional[np.ndarray] = None

    @property
    def frames(self) -> int:
        return self.features.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]


def sample_utterance(
    lang: Language,
    rng: np.random.Generator,
    words_per_utt: Tuple[int, int],
) -> Tuple[np.ndarray, Tuple[int, ...], np.ndarray]:
    """Draw one word sequence; returns frames, word labels and the frame-level phone ids"""
    low, high = words_per_utt
    n_words = int(rng.integers(low, high + 1))
    words = rng.integers(0, lang.vocab_size, size=n_words)
    phones = [p for w in words for p in lang.lexicon[int(w)]]
    jitter = lang.duration_jitter
    durations = np.maximum(1, lang.mean_duration + rng.integers(-jitter, jitter + 1, size=len(phones)))
    phone_per_frame = np.repeat(np.asarray(phones), durations)
    noise = rng.standard_normal((phone_per_frame.size, lang.feat_dim))
    features = lang.phone_means[phone_per_frame] + lang.sigma * noise
    labels = tuple(int(w) + 1 for w in words)
    return features.astype(np.float32), labels, phone_per_frame


def sample_corpus(
    lang: Language,
    n_utts: int,
    words_per_utt: Tuple[int, int] = (2, 5),
    seed: int = 0,
    tag: str = "l2",
    accent: float = 0.0,
    speaker: str = NATIVE_SPEAKER,
    prefix: str = "",
) -> List[Utterance]:
    """
    Sample n_utts utterances; utterance i uses the sub-stream (seed, i)

    Every phone lasts at least one frame and every word has at least two
    phones, so T >= 2L and each transcript is CTC-feasible.
    """
    if n_utts < 1:
        raise InvalidInputError(f"n_utts must be at least 1, got {n_utts}")
    low, high = words_per_utt
    if low < 1 or high < low:
        raise InvalidInputError(f"invalid words-per-utterance range {words_per_utt}")

    prefix = prefix or lang.name
    utterances = []
    for i in range(n_utts):
        features, labels, alignment = sample_utterance(lang, derive_rng(seed, i), words_per_utt)
        utterances.append(
            Utterance(
                uid=f"{prefix}-{i:05d}",
                features=features,
                labels=labels,
                lang=tag,
                accent=accent,
                speaker=speaker,
                alignment=alignment,
            )
        )
    return utterances


def sample_accented_panel(
    l2: Language,
    l1: Language,
    n_speakers: int,
    utts_per_speaker: int,
    strength: float,
    spread: float,
    seed: int,
    words_per_utt: Tuple[int, int] = (2, 5),
    prefix: str = "accented",
) -> List[Utterance]:
    """Learner speakers, each with its own accent strength around strength +- spread"""
    if n_speakers < 1:
        raise InvalidInputError("an accented panel needs at least one speaker")
    utterances: List[Utterance] = []
    for k in range(n_speakers):
        s = float(np.clip(derive_rng(seed, "strength", k).uniform(strength - spread, strength + spread), 0.0, 1.0))
        speaker = f"spk{k:03d}"
        accented = derive_accented(AccentSpec(source=l2, substrate=l1, strength=s))
        utterances.extend(
            sample_corpus(
                accented,
                utts_per_speaker,
                words_per_utt,
                seed=derive_seed(seed, "speaker", k),
                tag="l2",
                accent=s,
                speaker=speaker,
                prefix=f"{prefix}-{speaker}",
            )
        )
    logger.debug(f"Sampled accented panel '{prefix}': {n_speakers} speakers, {len(utterances)} utterances")
    return utterances


def _speaker_strengths(utts: Sequence[Utterance]) -> Dict[str, float]:
    strengths: Dict[str, float] = {}
    for utt in utts:
        strengths.setdefault(utt.speaker, utt.accent)
    return strengths


def strongest_speakers(utts: Sequence[Utterance], fraction: float) -> List[Utterance]:
    """Utterances of the ceil(fraction * speakers) most strongly accented speakers"""
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError(f"fraction must lie in (0, 1], got {fraction}")
    strengths = _speaker_strengths(utts)
    ranked = sorted(strengths, key=lambda spk: (-strengths[spk], spk))
    keep = set(ranked[: math.ceil(fraction * len(ranked))])
    return [utt for utt in utts if utt.speaker in keep]


def split_by_speaker(
    utts: Sequence[Utterance],
    ratios: Tuple[int, int, int] = (8, 1, 1),
    seed: int = 0,
) -> Tuple[List[Utterance], List[Utterance], List[Utterance]]:
    """Speaker-independent train/validation/test split at the given ratios"""
    speakers = sorted(_speaker_strengths(utts))
    if len(speakers) < 3:
        raise InvalidInputError("a three-way speaker split needs at least three speakers")
    order = [speakers[i] for i in derive_rng(seed, "split").permutation(len(speakers))]
    total = sum(ratios)
    n_val = max(1, round(len(speakers) * ratios[1] / total))
    n_test = max(1, round(len(speakers) * ratios[2] / total))
    n_train = len(speakers) - n_val - n_test
    if n_train < 1:
        raise InvalidInputError("split leaves no training speakers")
    assigned = {spk: 0 for spk in order[:n_train]}
    assigned.update({spk: 1 for spk in order[n_train : n_train + n_val]})
    assigned.update({spk: 2 for spk in order[n_train + n_val :]})
    parts: Tuple[List[Utterance], List[Utterance], List[Utterance]] = ([], [], [])
    for utt in utts:
        parts[assigned[utt.speaker]].append(utt)
    return parts


def subsample(utts: Sequence[Utterance], n: int, seed: int) -> List[Utterance]:
    """n utterances drawn without replacement, original order kept"""
    if n >= len(utts):
        return list(utts)
    chosen = np.sort(derive_rng(seed, "subsample", n).choice(len(utts), size=n, replace=False))
    return [utts[i] for i in chosen]
