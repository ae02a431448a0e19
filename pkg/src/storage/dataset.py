"""
Corpus files: JSON index, one float32 feature file per utterance, plain-text transcripts

Layout of a corpus directory:
    index.json        format version, name, feature dim, one entry per utterance
    feats/<uid>.f32   little-endian float32, frames x feat_dim, row-major
    transcripts.txt   space-separated labels, one line per utterance in index order
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.errors import DataFormatError
from src.core.logger import get_logger
from src.storage.checkpoint import WIRE_DTYPE
from src.synth.corpus import Utterance
from src.synth.datasets import CORPUS_NAMES, SyntheticData
from src.synth.language import Language

logger = get_logger(__name__)

FORMAT_VERSION = 1
INDEX = "index.json"
TRANSCRIPTS = "transcripts.txt"
FEATS = "feats"
LANGUAGES = "languages.json"


def _dump_json(payload, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def save_corpus(utts: Sequence[Utterance], path: str, name: Optional[str] = None) -> Path:
    """Write one corpus directory"""
    root = Path(path)
    (root / FEATS).mkdir(parents=True, exist_ok=True)
    feat_dim = utts[0].feat_dim if utts else 0
    entries = []
    lines = []
    for utt in utts:
        file = f"{FEATS}/{utt.uid}.f32"
        (root / file).write_bytes(np.ascontiguousarray(utt.features, dtype=WIRE_DTYPE).tobytes())
        entries.append(
            {
                "uid": utt.uid,
                "frames": utt.frames,
                "file": file,
                "lang": utt.lang,
                "accent": utt.accent,
                "speaker": utt.speaker,
            }
        )
        lines.append(" ".join(str(label) for label in utt.labels))
    _dump_json(
        {"format_version": FORMAT_VERSION, "name": name or root.name, "feat_dim": feat_dim, "utterances": entries},
        root / INDEX,
    )
    (root / TRANSCRIPTS).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    logger.debug(f"Wrote {len(utts)} utterances to {root}")
    return root


def load_corpus(path: str) -> List[Utterance]:
    """
    Read a corpus directory back

    Raises:
        DataFormatError: missing index, unknown version, or files that disagree with the index
    """
    root = Path(path)
    try:
        with open(root / INDEX, encoding="utf-8") as f:
            index = json.load(f)
        transcripts = (root / TRANSCRIPTS).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise DataFormatError(f"no corpus at {root}: {e.filename} missing") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"corpus index at {root} is not valid JSON: {e}") from e

    if index.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"unsupported corpus format {index.get('format_version')} in {root}")
    entries = index["utterances"]
    if len(transcripts) != len(entries):
        raise DataFormatError(f"{root}: {len(entries)} index entries but {len(transcripts)} transcripts")

    feat_dim = int(index["feat_dim"])
    utts = []
    for entry, line in zip(entries, transcripts):
        try:
            raw = (root / entry["file"]).read_bytes()
        except FileNotFoundError as e:
            raise DataFormatError(f"{root}: feature file {entry['file']} missing") from e
        expected = entry["frames"] * feat_dim * WIRE_DTYPE.itemsize
        if len(raw) != expected:
            raise DataFormatError(f"{root}: {entry['file']} holds {len(raw)} bytes, expected {expected}")
        features = np.frombuffer(raw, dtype=WIRE_DTYPE).reshape(entry["frames"], feat_dim).astype(np.float32)
        utts.append(
            Utterance(
                uid=entry["uid"],
                features=features,
                labels=tuple(int(tok) for tok in line.split()),
                lang=entry["lang"],
                accent=float(entry["accent"]),
                speaker=entry["speaker"],
            )
        )
    return utts


def save_dataset(data: SyntheticData, path: str) -> Path:
    """languages.json plus one corpus directory per named corpus"""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    _dump_json({"l1": data.l1.to_dict(), "l2": data.l2.to_dict()}, root / LANGUAGES)
    for name, utts in data.corpora.items():
        save_corpus(utts, str(root / name), name=name)
    logger.info(f"Saved dataset to {root}")
    return root


def load_dataset(path: str, names: Sequence[str] = CORPUS_NAMES) -> SyntheticData:
    """Languages and the requested corpora of a saved dataset"""
    root = Path(path)
    try:
        with open(root / LANGUAGES, encoding="utf-8") as f:
            languages = json.load(f)
    except FileNotFoundError as e:
        raise DataFormatError(f"no dataset at {root}; run gen-data first") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{root / LANGUAGES} is not valid JSON: {e}") from e

    corpora: Dict[str, List[Utterance]] = {name: load_corpus(str(root / name)) for name in names}
    return SyntheticData(
        l1=Language.from_dict(languages["l1"]),
        l2=Language.from_dict(languages["l2"]),
        corpora=corpora,
    )
