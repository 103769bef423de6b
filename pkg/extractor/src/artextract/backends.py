"""Feature backends: pretrained models when their weights are present,
and a deterministic offline stand-in otherwise.

The offline backend exists so the full pipeline (artifact shapes,
checksums, catalog ordering, range validation, clustering) runs on
machines without model weights. Its vectors are seeded from content
hashes: identical inputs give identical rows, and every emitted shape
and range matches the real models (2048-d image, 384-d text, match
probabilities in [0,1] with own-description affinity).
"""

from __future__ import annotations

import hashlib
import logging
import re
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import BackendUnavailable, CorruptImage

log = logging.getLogger(__name__)

IMAGE_DIM = 2048
TEXT_DIM = 384

POSITIVE_WORDS = frozenset(
    """calm safe good great happy peaceful beautiful hopeful warm relaxed relaxing
    joy joyful better lovely love curious steady bright serene gentle pleasant
    comfortable free alive grateful rested restful soothing inspired wonderful
    cheerful content delighted enjoyable""".split()
)
NEGATIVE_WORDS = frozenset(
    """sad afraid scared anxious pain painful tired dark upset angry worse lonely
    fear nervous distressed hopeless gloomy tense trapped cold uneasy worried
    frustrated exhausted restless miserable bleak frightened terrible awful bad""".split()
)

_WORD = re.compile(r"[a-z']+")


def _verify_image(path: Path) -> bytes:
    data = Path(path).read_bytes()
    try:
        with Image.open(path) as img:
            img.verify()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImage(f"cannot decode {path.name}: {exc}", str(path))
    return data


def _hash_vector(seed_material: bytes, dim: int, salt: bytes) -> np.ndarray:
    digest = hashlib.sha256(salt + seed_material).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    return rng.standard_normal(dim).astype("<f4")


class OfflineBackend:
    """Content-hash features; no model weights needed."""

    name = "offline"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._salt = f"artextract/{seed}/".encode()

    def image_features(self, paths: list[Path]) -> np.ndarray:
        rows = [_hash_vector(_verify_image(p), IMAGE_DIM, self._salt + b"img") for p in paths]
        return np.stack(rows)

    def text_features(self, texts: list[str]) -> np.ndarray:
        rows = [
            _hash_vector(" ".join(t.split()).encode("utf-8"), TEXT_DIM, self._salt + b"txt")
            for t in texts
        ]
        return np.stack(rows)

    def itm_scores(self, paths: list[Path], texts: list[str]) -> np.ndarray:
        img_keys = [hashlib.sha256(_verify_image(p)).digest() for p in paths]
        txt_keys = [hashlib.sha256(" ".join(t.split()).encode("utf-8")).digest() for t in texts]
        m = len(paths)
        scores = np.empty((m, m), dtype=np.float64)
        for i in range(m):
            for j in range(m):
                digest = hashlib.sha256(self._salt + b"itm" + img_keys[i] + txt_keys[j]).digest()
                u = int.from_bytes(digest[:8], "little") / 2**64
                # off-diagonal pairs in [0.05, 0.55); a painting matches its
                # own description with a fixed affinity bump
                scores[i, j] = 0.05 + 0.5 * u + (0.4 if i == j else 0.0)
        return scores

    def sentiment(self, sentences: list[str]) -> list[tuple[str, float]]:
        out = []
        for sentence in sentences:
            words = _WORD.findall(sentence.lower())
            pos = sum(w in POSITIVE_WORDS for w in words)
            neg = sum(w in NEGATIVE_WORDS for w in words)
            label = "positive" if pos >= neg else "negative"
            hits = pos + neg
            confidence = 0.5 if hits == 0 else min(0.99, 0.5 + 0.5 * abs(pos - neg) / hits)
            out.append((label, round(confidence, 4)))
        return out


class PretrainedBackend:
    """Real model inference; every loader failure becomes BackendUnavailable."""

    name = "pretrained"

    def __init__(self, job):
        self.job = job

    def _unavailable(self, what: str, exc: Exception):
        raise BackendUnavailable(f"{what}: {type(exc).__name__}: {exc}", what)

    def image_features(self, paths: list[Path]) -> np.ndarray:
        try:
            import torch
            from torchvision.models import ResNet50_Weights, resnet50
        except Exception as exc:
            self._unavailable("torchvision import", exc)
        try:
            weights = ResNet50_Weights.IMAGENET1K_V2
            model = resnet50(weights=weights)
        except Exception as exc:
            self._unavailable(f"{self.job.image_model} weights", exc)
        model.fc = torch.nn.Identity()  # pooled final stage: 2048-d
        model.eval()
        transform = weights.transforms()
        rows = []
        with torch.no_grad():
            for start in range(0, len(paths), self.job.batch_size):
                batch_paths = paths[start : start + self.job.batch_size]
                imgs = []
                for p in batch_paths:
                    _verify_image(p)
                    imgs.append(transform(Image.open(p).convert("RGB")))
                rows.append(model(torch.stack(imgs)).cpu().numpy())
        return np.concatenate(rows).astype("<f4")

    def text_features(self, texts: list[str]) -> np.ndarray:
        try:
            from sentence_transformers import SentenceTransformer

            model = SentenceTransformer(self.job.text_model, device=self.job.device)
        except Exception as exc:
            self._unavailable(f"{self.job.text_model} weights", exc)
        return model.encode(
            texts, batch_size=self.job.batch_size, convert_to_numpy=True
        ).astype("<f4")

    def itm_scores(self, paths: list[Path], texts: list[str]) -> np.ndarray:
        try:
            import torch
            from transformers import BlipForImageTextRetrieval, BlipProcessor

            name = "Salesforce/blip-itm-base-coco"
            processor = BlipProcessor.from_pretrained(name)
            model = BlipForImageTextRetrieval.from_pretrained(name)
        except Exception as exc:
            self._unavailable(f"{self.job.itm_model} weights", exc)
        model.eval()
        m = len(paths)
        scores = np.empty((m, m), dtype=np.float64)
        with torch.no_grad():
            for i, p in enumerate(paths):
                _verify_image(p)
                image = Image.open(p).convert("RGB")
                for j, text in enumerate(texts):
                    inputs = processor(images=image, text=text, return_tensors="pt")
                    logits = model(**inputs, use_itm_head=True).itm_score
                    scores[i, j] = torch.softmax(logits, dim=1)[0, 1].item()
        return scores

    def sentiment(self, sentences: list[str]) -> list[tuple[str, float]]:
        try:
            from transformers import pipeline

            clf = pipeline("sentiment-analysis", device=-1)
        except Exception as exc:
            self._unavailable(f"{self.job.sentiment_model} weights", exc)
        out = []
        for result in clf(sentences, truncation=True):
            out.append((result["label"].lower(), round(float(result["score"]), 4)))
        return out


def run_backend(job, method: str, *args):
    """Dispatch per job.backend; "auto" falls back to offline on missing weights."""
    if job.backend == "offline":
        return getattr(OfflineBackend(job.seed), method)(*args)
    if job.backend == "pretrained":
        return getattr(PretrainedBackend(job), method)(*args)
    try:
        return getattr(PretrainedBackend(job), method)(*args)
    except BackendUnavailable as exc:
        log.warning("pretrained backend unavailable (%s); using offline features", exc)
        return getattr(OfflineBackend(job.seed), method)(*args)
