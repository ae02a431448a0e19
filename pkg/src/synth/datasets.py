"""
Named corpora of one synthetic setup, all derived from DataConfig.seed
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from src.core.config import DataConfig, LanguageConfig, ModelConfig, ModelSpec
from src.core.errors import InvalidInputError
from src.core.logger import get_logger
from src.core.rng import derive_seed
from src.synth.corpus import Utterance, sample_accented_panel, sample_corpus, strongest_speakers
from src.synth.language import Language, make_language

logger = get_logger(__name__)

L1_TRAIN = "l1_train"
L1_TEST = "l1_test"
L2_TRAIN = "l2_train"
L2_TEST = "l2_test"
ACCENTED = "accented"
ADAPT = "adapt"

CORPUS_NAMES = (L1_TRAIN, L1_TEST, L2_TRAIN, L2_TEST, ACCENTED, ADAPT)


@dataclass
class SyntheticData:
    """Both languages and every named corpus of one setup"""

    l1: Language
    l2: Language
    corpora: Dict[str, List[Utterance]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> List[Utterance]:
        try:
            return self.corpora[name]
        except KeyError as e:
            raise InvalidInputError(f"unknown corpus '{name}'; known: {', '.join(self.corpora)}") from e

    def accented_strong(self, fraction: float) -> List[Utterance]:
        return strongest_speakers(self[ACCENTED], fraction)


def _language(cfg: LanguageConfig, data: DataConfig, name: str) -> Language:
    return make_language(
        cfg.phones,
        cfg.words,
        data.feat_dim,
        seed=derive_seed(data.seed, "language", name),
        separation=cfg.separation,
        sigma=data.sigma,
        spread=cfg.spread,
        mean_duration=cfg.mean_duration,
        duration_jitter=cfg.duration_jitter,
        name=name,
    )


def build_languages(data: DataConfig) -> Tuple[Language, Language]:
    """L1 and L2 inventories drawn independently"""
    return _language(data.l1, data, "l1"), _language(data.l2, data, "l2")


def build_corpora(data: DataConfig) -> SyntheticData:
    """Native train/test corpora of both languages plus the two accented panels"""
    l1, l2 = build_languages(data)
    wpu = tuple(data.words_per_utt)

    def native(lang: Language, tag: str, split: str, n: int) -> List[Utterance]:
        return sample_corpus(
            lang, n, wpu, seed=derive_seed(data.seed, "corpus", tag, split), tag=tag, prefix=f"{tag}-{split}"
        )

    corpora = {
        L1_TRAIN: native(l1, "l1", "train", data.n_train_l1),
        L1_TEST: native(l1, "l1", "test", data.n_test),
        L2_TRAIN: native(l2, "l2", "train", data.n_train_l2),
        L2_TEST: native(l2, "l2", "test", data.n_test),
        ACCENTED: sample_accented_panel(
            l2, l1,
            n_speakers=data.accent.n_speakers,
            utts_per_speaker=data.accent.utts_per_speaker,
            strength=data.accent.strength,
            spread=data.accent.spread,
            seed=derive_seed(data.seed, "panel", ACCENTED),
            words_per_utt=wpu,
            prefix=ACCENTED,
        ),
        ADAPT: sample_accented_panel(
            l2, l1,
            n_speakers=data.adapt.n_speakers,
            utts_per_speaker=data.adapt.utts_per_speaker,
            strength=data.accent.strength,
            spread=data.accent.spread,
            seed=derive_seed(data.seed, "panel", ADAPT),
            words_per_utt=wpu,
            prefix=ADAPT,
        ),
    }
    logger.info(
        "Generated corpora: " + ", ".join(f"{name}={len(utts)}" for name, utts in corpora.items())
    )
    return SyntheticData(l1=l1, l2=l2, corpora=corpora)


def model_spec(l1: Language, l2: Language, model: ModelConfig) -> ModelSpec:
    """Architecture spec matching a pair of languages"""
    if l1.feat_dim != l2.feat_dim:
        raise InvalidInputError("L1 and L2 must share the feature dimension")
    return ModelSpec(feat_dim=l2.feat_dim, vocab_l1=l1.vocab_size, vocab_l2=l2.vocab_size, model=model)
