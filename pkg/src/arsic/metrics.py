"""CIDEr-D caption scoring."""
import math
import re
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyCorpus, NoReferences

MAX_N = 4
DEFAULT_SIGMA = 6.0

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(caption):
    return [t for t in _TOKEN_SPLIT.split(caption.lower()) if t]


@dataclass
class NGramStats:
    counts: list  # counts[n-1] is a Counter of n-gram tuples
    length: int


def ngram_stats(caption, max_n=MAX_N):
    tokens = tokenize(caption) if isinstance(caption, str) else list(caption)
    counts = [Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)) for n in range(1, max_n + 1)]
    return NGramStats(counts, len(tokens))


@dataclass
class CorpusDf:
    df: list  # df[n-1] maps n-gram -> number of images whose references contain it
    num_docs: int

    def idf(self, n, gram):
        # absent n-grams are treated as df = 1
        return math.log(self.num_docs) - math.log(max(1, self.df[n - 1].get(gram, 0)))


def corpus_df(reference_sets, max_n=MAX_N):
    """Document frequencies, one document per image's reference set."""
    sets = [list(refs) for refs in reference_sets]
    if not sets or not any(sets):
        raise EmptyCorpus("CIDEr-D needs at least one image with references")
    df = [Counter() for _ in range(max_n)]
    for refs in sets:
        seen = [set() for _ in range(max_n)]
        for ref in refs:
            stats = ngram_stats(ref, max_n)
            for n in range(max_n):
                seen[n].update(stats.counts[n])
        for n in range(max_n):
            df[n].update(seen[n])
    return CorpusDf(df, len(sets))


def _tfidf(stats, df):
    vec, norms = [], []
    for n, counts in enumerate(stats.counts, start=1):
        v = {g: c * df.idf(n, g) for g, c in counts.items()}
        vec.append(v)
        norms.append(math.sqrt(sum(x * x for x in v.values())))
    return vec, norms


def _sim(cand_vec, cand_norm, ref_vec, ref_norm, len_cand, len_ref, sigma):
    delta = float(len_cand - len_ref)
    penalty = math.exp(-(delta * delta) / (2.0 * sigma * sigma))
    out = []
    for n in range(len(cand_vec)):
        if cand_norm[n] == 0.0 or ref_norm[n] == 0.0:
            out.append(0.0)
            continue
        rv = ref_vec[n]
        # candidate weights clipped at the reference's
        dot = sum(min(x, rv[g]) * rv[g] for g, x in cand_vec[n].items() if g in rv)
        out.append(min(1.0, dot / (cand_norm[n] * ref_norm[n])) * penalty)
    return out


def cider_d(candidate, references, df, sigma=DEFAULT_SIGMA):
    refs = list(references)
    if not refs:
        raise NoReferences("CIDEr-D needs at least one reference")
    max_n = len(df.df)
    cand = ngram_stats(candidate, max_n)
    cvec, cnorm = _tfidf(cand, df)
    total = 0.0
    for ref in refs:
        r = ngram_stats(ref, max_n)
        rvec, rnorm = _tfidf(r, df)
        sims = _sim(cvec, cnorm, rvec, rnorm, cand.length, r.length, sigma)
        total += sum(sims) / max_n
    return total / len(refs) * 10.0


def corpus_cider_d(candidates, references, sigma=DEFAULT_SIGMA):
    """Score ``{image_id: caption}`` against ``{image_id: [refs]}``.

    Document frequencies come from the references of the scored images.
    Returns ``(per_image, mean)``; the mean stays on the 0-10 scale.
    """
    ids = sorted(set(candidates) & set(references))
    df = corpus_df([references[i] for i in ids])
    per_image = {i: cider_d(candidates[i], references[i], df, sigma) for i in ids}
    mean = math.fsum(per_image.values()) / len(per_image) if per_image else 0.0
    return per_image, mean
