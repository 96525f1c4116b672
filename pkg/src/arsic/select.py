"""Caption filtering, scoring and selection."""
import hashlib
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

import httpx

from .errors import AllFiltered, EmbeddingDimensionMismatch, ScorerUnavailable
from .metrics import tokenize

ORDINALS = (
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
    "ninth", "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth",
)

BANNED_PATTERNS = (
    ("group-id", re.compile(r"\bgroups?\s*(?:#|no\.?|number)?\s*\d+", re.IGNORECASE)),
    (
        "ordinal-group",
        re.compile(r"\b(?:" + "|".join(ORDINALS) + r"|\d+(?:st|nd|rd|th))\s+groups?\b", re.IGNORECASE),
    ),
    ("cluster-id", re.compile(r"\bclusters?\s*(?:#|no\.?|number)?\s*\d+", re.IGNORECASE)),
)


def banned_reason(caption):
    for reason, pattern in BANNED_PATTERNS:
        if pattern.search(caption):
            return reason
    return None


def filter_keywords(captions):
    """Split captions into ``(kept, rejected)``; rejected items are ``(caption, reason)``."""
    kept, rejected = [], []
    for c in captions:
        reason = banned_reason(c)
        if reason is None:
            kept.append(c)
        else:
            rejected.append((c, reason))
    return kept, rejected


@dataclass
class ScorerConfig:
    endpoint: str = "offline"
    wq: float = 0.7
    wd: float = 0.3
    k: int = 5
    timeout: float = 30.0

    def __post_init__(self):
        if self.wq < 0 or self.wd < 0 or abs(self.wq + self.wd - 1.0) > 1e-9:
            raise ValueError("wq and wd must be non-negative and sum to 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.endpoint:
            raise ValueError("scorer endpoint must be a URL or 'offline'")

    @property
    def offline(self):
        return self.endpoint == "offline"


def offline_quality(caption, image_ref):
    """Deterministic stand-in for an image-text score, in [-1, 1]. Test use only."""
    digest = hashlib.sha256(f"{image_ref}\x00{caption}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / float(2**64 - 1) * 2.0 - 1.0


def cosine(u, v):
    if len(u) != len(v):
        raise EmbeddingDimensionMismatch(f"embedding sizes differ: {len(u)} vs {len(v)}")
    dot = math.fsum(x * y for x, y in zip(u, v))
    nu = math.sqrt(math.fsum(x * x for x in u))
    nv = math.sqrt(math.fsum(y * y for y in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


class ScorerClient:
    """Client for an embedding service answering ``{"image_ref"}`` / ``{"text"}`` posts."""

    def __init__(self, cfg, transport=None):
        self.cfg = cfg
        self._http = httpx.Client(timeout=cfg.timeout, transport=transport)
        self._image_cache = {}
        self._lock = threading.Lock()

    def _embed(self, payload):
        try:
            resp = self._http.post(self.cfg.endpoint, json=payload)
            resp.raise_for_status()
            emb = resp.json()["embedding"]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise ScorerUnavailable(f"scorer request failed: {exc}") from exc
        if not isinstance(emb, list) or not emb:
            raise ScorerUnavailable("scorer returned an empty embedding")
        return [float(x) for x in emb]

    def image_embedding(self, image_ref):
        with self._lock:
            if image_ref in self._image_cache:
                return self._image_cache[image_ref]
        emb = self._embed({"image_ref": image_ref})
        with self._lock:
            self._image_cache[image_ref] = emb
        return emb

    def text_embedding(self, text):
        return self._embed({"text": text})

    def close(self):
        self._http.close()


def quality_score(caption, image_ref, cfg, client=None):
    if cfg.offline:
        return offline_quality(caption, image_ref)
    own = client is None
    client = client or ScorerClient(cfg)
    try:
        return cosine(client.image_embedding(image_ref), client.text_embedding(caption))
    finally:
        if own:
            client.close()


def ngrams(caption):
    """Word unigrams and bigrams of a caption, as a Counter."""
    toks = tokenize(caption)
    grams = Counter(toks)
    grams.update(" ".join(p) for p in zip(toks, toks[1:]))
    return grams


class DiversityIndex:
    """TF-IDF diversity against captions of *other* images.

    Document frequencies are kept for the whole run so each query only
    subtracts its own image's captions instead of recounting the corpus.
    """

    def __init__(self, captions_by_image):
        self._docs = {img: [ngrams(c) for c in caps] for img, caps in captions_by_image.items()}
        self._df = Counter()
        self._n = 0
        for docs in self._docs.values():
            for d in docs:
                self._df.update(d.keys())
                self._n += 1

    def score(self, caption, image_id=None):
        own = self._docs.get(image_id, [])
        corpus = [d for img, docs in self._docs.items() if img != image_id for d in docs]
        if not corpus:
            return 1.0
        df = self._df.copy()
        for d in own:
            df.subtract(d.keys())
        cand = ngrams(caption)
        df.update(cand.keys())
        n_docs = self._n - len(own) + 1
        return _diversity(cand, corpus, df, n_docs)


def _diversity(cand, corpus, df, n_docs):
    def idf(g):
        return math.log((n_docs + 1) / (df[g] + 1)) + 1.0

    cvec = {g: c * idf(g) for g, c in cand.items()}
    cnorm = math.sqrt(math.fsum(v * v for v in cvec.values()))
    if cnorm == 0.0:
        return 1.0
    best = 0.0
    for doc in corpus:
        shared = cvec.keys() & doc.keys()
        if not shared:
            continue
        dvec = {g: c * idf(g) for g, c in doc.items()}
        dnorm = math.sqrt(math.fsum(v * v for v in dvec.values()))
        sim = math.fsum(cvec[g] * dvec[g] for g in shared) / (cnorm * dnorm)
        best = max(best, sim)
    return min(1.0, max(0.0, 1.0 - best))


def diversity_score(caption, corpus):
    docs = [ngrams(c) for c in corpus]
    if not docs:
        return 1.0
    cand = ngrams(caption)
    df = Counter()
    for d in docs + [cand]:
        df.update(d.keys())
    return _diversity(cand, docs, df, len(docs) + 1)


@dataclass
class CaptionCandidate:
    text: str
    index: int = 0
    filtered: bool = False
    reason: Optional[str] = None
    quality: Optional[float] = None
    diversity: Optional[float] = None
    final: Optional[float] = None
    selected: bool = False

    def to_dict(self):
        d = {"text": self.text, "filtered": self.filtered}
        if self.filtered:
            d["reason"] = self.reason
        d.update(quality=self.quality, diversity=self.diversity, final=self.final, selected=self.selected)
        return d


def _dec(x):
    return Decimal(repr(float(x)))


def final_score(quality, diversity, wq, wd):
    """``wq * (quality + 1) / 2 + wd * diversity`` evaluated on the decimal forms of the inputs."""
    return float(_dec(wq) * (_dec(quality) + 1) / 2 + _dec(wd) * _dec(diversity))


def combine_and_select(candidates, cfg):
    """Rank unfiltered candidates by final score and flag the top ``k``.

    Filtered candidates follow the ranked ones in their original order.
    """
    live = [c for c in candidates if not c.filtered]
    if not live:
        raise AllFiltered("every caption was rejected by the keyword filter")
    for c in live:
        c.final = final_score(c.quality, c.diversity, cfg.wq, cfg.wd)
    live.sort(key=lambda c: (-c.final, c.text, c.index))
    for rank, c in enumerate(live):
        c.selected = rank < cfg.k
    dead = sorted((c for c in candidates if c.filtered), key=lambda c: c.index)
    return live + dead


@dataclass
class ImageSelection:
    image_id: str
    candidates: list = field(default_factory=list)
    error: Optional[str] = None

    def to_dict(self):
        d = {"image_id": self.image_id, "candidates": [c.to_dict() for c in self.candidates]}
        if self.error:
            d["error"] = self.error
        return d

    @property
    def best(self):
        for c in self.candidates:
            if c.selected:
                return c.text
        return None


def select_captions(captions_by_image, cfg, client=None, workers=1):
    """Full selection stage over ``{image_id: [captions]}``, ordered by image_id."""
    kept_by_image = {image_id: filter_keywords(caps)[0] for image_id, caps in captions_by_image.items()}
    index = DiversityIndex(kept_by_image)

    def run(image_id):
        cands = []
        for i, text in enumerate(captions_by_image[image_id]):
            reason = banned_reason(text)
            c = CaptionCandidate(text, i, filtered=reason is not None, reason=reason)
            if not c.filtered:
                c.quality = quality_score(text, image_id, cfg, client)
                c.diversity = index.score(text, image_id)
            cands.append(c)
        try:
            return ImageSelection(image_id, combine_and_select(cands, cfg))
        except AllFiltered as exc:
            return ImageSelection(image_id, cands, error=f"AllFiltered: {exc}")

    ids = sorted(captions_by_image)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, ids))
    return [run(i) for i in ids]
