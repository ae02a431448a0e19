"""
Synthetic languages: phone inventories with Gaussian emissions and word lexicons

An accent is modelled by pulling every L2 phone mean towards its nearest L1
phone mean by a strength s in [0, 1]; the lexicon and labels stay L2.
"""

from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt

from src.core.errors import GenerationError, InvalidInputError
from src.core.logger import get_logger
from src.core.rng import make_rng

logger = get_logger(__name__)

MAX_DRAWS = 1000
WORD_LENGTHS = (2, 4)


class _Rejected(Exception):
    """A candidate draw violated a constraint"""


@dataclass(frozen=True, eq=False)
class Language:
    """Generative description of one synthetic language"""

    name: str
    phone_means: np.ndarray
    sigma: float
    mean_duration: int
    duration_jitter: int
    lexicon: Tuple[Tuple[int, ...], ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mean_duration < 1:
            raise InvalidInputError("mean phone duration must be at least one frame")
        if any(len(word) == 0 for word in self.lexicon):
            raise InvalidInputError("lexicon words must be non-empty")

    @property
    def num_phones(self) -> int:
        return self.phone_means.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.phone_means.shape[1]

    @property
    def vocab_size(self) -> int:
        """Word-level alphabet size V; word i carries label i + 1"""
        return len(self.lexicon)

    def min_phone_distance(self) -> float:
        diff = self.phone_means[:, None, :] - self.phone_means[None, :, :]
        dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
        return float(dist[np.triu_indices(self.num_phones, k=1)].min())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "phone_means": self.phone_means.tolist(),
            "sigma": self.sigma,
            "mean_duration": self.mean_duration,
            "duration_jitter": self.duration_jitter,
            "lexicon": [list(word) for word in self.lexicon],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Language":
        return cls(
            name=data["name"],
            phone_means=np.asarray(data["phone_means"], dtype=np.float64),
            sigma=float(data["sigma"]),
            mean_duration=int(data["mean_duration"]),
            duration_jitter=int(data["duration_jitter"]),
            lexicon=tuple(tuple(int(p) for p in word) for word in data["lexicon"]),
            metadata=dict(data.get("metadata", {})),
        )


def make_language(
    P: int,
    W: int,
    D: int,
    seed: int,
    separation: float = 4.0,
    sigma: float = 1.0,
    spread: float = 1.0,
    mean_duration: int = 2,
    duration_jitter: int = 1,
    name: str = "lang",
) -> Language:
    """
    Draw a phone inventory and a lexicon

    Phone means come from N(0, (spread * separation * sigma)^2 I) with
    rejection until every pair is at least separation * sigma apart. Words
    are distinct phone strings of length 2..4.

    Raises:
        InvalidInputError: P < 2 or W < 2
        GenerationError: a phone or word could not be placed within the retry budget
    """
    if P < 2 or W < 2:
        raise InvalidInputError(f"need P >= 2 and W >= 2, got P={P}, W={W}")
    rng = make_rng(seed)
    min_dist = separation * max(sigma, 1e-12)
    scale = spread * separation * max(sigma, 1e-12)
    means: List[np.ndarray] = []

    @retry(stop=stop_after_attempt(MAX_DRAWS), retry=retry_if_exception_type(_Rejected))
    def draw_phone() -> np.ndarray:
        candidate = rng.standard_normal(D) * scale
        if any(np.linalg.norm(candidate - m) < min_dist for m in means):
            raise _Rejected()
        return candidate

    lexicon: List[Tuple[int, ...]] = []
    seen = set()

    @retry(stop=stop_after_attempt(MAX_DRAWS), retry=retry_if_exception_type(_Rejected))
    def draw_word() -> Tuple[int, ...]:
        length = int(rng.integers(WORD_LENGTHS[0], WORD_LENGTHS[1] + 1))
        word = tuple(int(p) for p in rng.integers(0, P, size=length))
        if word in seen:
            raise _Rejected()
        return word

    try:
        for _ in range(P):
            means.append(draw_phone())
    except RetryError as e:
        raise GenerationError(
            f"could not place {P} phones {separation} sigma apart after {MAX_DRAWS} draws; "
            f"lower the separation or raise the spread"
        ) from e

    try:
        for _ in range(W):
            word = draw_word()
            seen.add(word)
            lexicon.append(word)
    except RetryError as e:
        raise GenerationError(f"could not draw {W} distinct words over {P} phones") from e

    language = Language(
        name=name,
        phone_means=np.stack(means),
        sigma=sigma,
        mean_duration=mean_duration,
        duration_jitter=duration_jitter,
        lexicon=tuple(lexicon),
        metadata={"seed": seed, "separation": separation},
    )
    logger.debug(f"Generated language {name}: P={P}, W={W}, min distance {language.min_phone_distance():.2f}")
    return language


@dataclass(frozen=True)
class AccentSpec:
    """L2 spoken with an L1 substrate at strength s"""

    source: Language
    substrate: Language
    strength: float

    def __post_init__(self):
        if not 0.0 <= self.strength <= 1.0:
            raise InvalidInputError(f"accent strength must lie in [0, 1], got {self.strength}")
        if self.source.feat_dim != self.substrate.feat_dim:
            raise InvalidInputError("source and substrate must share the feature dimension")

    @property
    def phone_map(self) -> np.ndarray:
        return nearest_phone_map(self.source, self.substrate)


def nearest_phone_map(source: Language, substrate: Language) -> np.ndarray:
    """For each source phone, the substrate phone with the closest mean (lowest index on ties)"""
    diff = source.phone_means[:, None, :] - substrate.phone_means[None, :, :]
    return np.argmin(np.einsum("pqd,pqd->pq", diff, diff), axis=1)


def derive_accented(spec: AccentSpec) -> Language:
    """Source language with each mean moved to (1 - s) * mu_L2 + s * mu_map(L1)"""
    s = spec.strength
    target = spec.substrate.phone_means[spec.phone_map]
    if s == 0.0:
        means = spec.source.phone_means.copy()
    elif s == 1.0:
        means = target.copy()
    else:
        means = (1.0 - s) * spec.source.phone_means + s * target
    return replace(
        spec.source,
        name=f"{spec.source.name}-accented-{s:.2f}",
        phone_means=means,
        metadata={**spec.source.metadata, "accent": s, "substrate": spec.substrate.name},
    )
