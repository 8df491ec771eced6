"""
Bytecode similarity - normalized Levenshtein distance over raw contract bytecode,
Monte Carlo baseline estimation, nearest-seed classification and the
false-positive neighbour pass
"""

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, PositiveInt

from . import settings
from .errors import CorpusError
from .ledger import load_manifest, normalize_address

logger = logging.getLogger(__name__)

ByteLike = Union[bytes, bytearray, memoryview, str]
Normalization = Literal["metric", "max"]

CLASSIFY_HEADER = ["address", "min_nld", "nearest_seed"]


def _as_bytes(value: ByteLike) -> bytes:
    if isinstance(value, str):
        return value.encode("utf-8")
    return bytes(value)


# === DATA TYPES ===

@dataclass(frozen=True)
class BytecodeBlob:
    """Contract address paired with its deployed bytecode"""
    address: str
    bytecode: bytes

    def __post_init__(self):
        object.__setattr__(self, "address", normalize_address(self.address))
        if not self.bytecode:
            raise CorpusError(f"{self.address}: empty bytecode")

    def __len__(self) -> int:
        return len(self.bytecode)


class SimilarityConfig(BaseModel):
    """Knobs of the similarity search; defaults come from settings"""
    threshold: float = Field(default_factory=lambda: settings.SIMILARITY_THRESHOLD, gt=0, lt=1)
    sample_pairs: PositiveInt = Field(default_factory=lambda: settings.SAMPLE_PAIRS)
    rng_seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2**64)
    fp_neighbor_limit: PositiveInt = Field(default_factory=lambda: settings.FP_NEIGHBOR_LIMIT)
    normalization: Normalization = Field(
        default_factory=lambda: "max" if settings.NORMALIZATION == "max" else "metric"
    )
    workers: PositiveInt = Field(default_factory=lambda: settings.WORKERS)


@dataclass(frozen=True)
class BaselineEstimate:
    mean: float
    std_error: float
    samples: int


@dataclass(frozen=True)
class Classification:
    """A corpus contract within the threshold of at least one seed"""
    address: str
    min_distance: float
    nearest_seed: str


@dataclass(frozen=True)
class NeighborReport:
    """A flagged contract close to suspiciously many corpus contracts"""
    address: str
    neighbor_count: int


# === EDIT DISTANCE ===

def _rows(a: bytes, b: bytes):
    """
    Yield successive DP rows of the edit distance between `a` and `b`.

    Two-row dynamic programming over numpy vectors. Row i holds the distances
    between a[:i] and every prefix of b. Insertions inside a row form a
    running minimum: D[i][j] = min over k <= j of (C[k] + j - k).
    """
    target = np.frombuffer(b, dtype=np.uint8)
    index = np.arange(len(b) + 1, dtype=np.int64)
    previous = index.copy()
    yield previous
    for i, symbol in enumerate(a, start=1):
        current = np.empty_like(previous)
        current[0] = i
        # substitution/match against the diagonal, deletion from the row above
        np.minimum(previous[:-1] + (target != symbol), previous[1:] + 1, out=current[1:])
        previous = np.minimum.accumulate(current - index) + index
        yield previous


def levenshtein(a: ByteLike, b: ByteLike) -> int:
    """Minimal number of single-byte insertions, deletions and substitutions turning a into b."""
    a, b = _as_bytes(a), _as_bytes(b)
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    last = None
    for last in _rows(a, b):
        pass
    return int(last[-1])


def levenshtein_bounded(a: ByteLike, b: ByteLike, max_distance: int) -> Optional[int]:
    """
    Edit distance if it is at most `max_distance`, otherwise None.

    Every alignment path crosses every DP row with non-decreasing cost, so
    the minimum of any row is a lower bound of the final distance; the scan
    stops as soon as that bound leaves the band.
    """
    a, b = _as_bytes(a), _as_bytes(b)
    if max_distance < 0:
        return None
    if len(a) < len(b):
        a, b = b, a
    if len(a) - len(b) > max_distance:
        return None
    if not b:
        return len(a)
    last = None
    for last in _rows(a, b):
        if int(last.min()) > max_distance:
            return None
    distance = int(last[-1])
    return distance if distance <= max_distance else None


def nld_fraction(distance: int, len_a: int, len_b: int, normalization: Normalization = "metric") -> Fraction:
    """Exact normalized distance for a known edit distance."""
    if len_a == 0 and len_b == 0:
        return Fraction(0)
    if normalization == "max":
        return Fraction(distance, max(len_a, len_b))
    return Fraction(2 * distance, len_a + len_b + distance)


def nld_exact(a: ByteLike, b: ByteLike) -> Fraction:
    """2L / (|a| + |b| + L) as an exact rational."""
    a, b = _as_bytes(a), _as_bytes(b)
    return nld_fraction(levenshtein(a, b), len(a), len(b))


def nld(a: ByteLike, b: ByteLike) -> float:
    """
    Normalized Levenshtein distance 2L / (|a| + |b| + L).

    A true metric on [0, 1): zero iff the inputs are equal, symmetric, and
    satisfies the triangle inequality. Two empty inputs are identical (0).
    """
    return float(nld_exact(a, b))


def nld_max(a: ByteLike, b: ByteLike) -> float:
    """L / max(|a|, |b|). Not a metric; selectable as normalization="max"."""
    a, b = _as_bytes(a), _as_bytes(b)
    return float(nld_fraction(levenshtein(a, b), len(a), len(b), "max"))


def band_for_threshold(
    len_a: int,
    len_b: int,
    threshold: Union[float, Fraction],
    normalization: Normalization = "metric",
) -> int:
    """Largest edit distance whose normalized value is still strictly below `threshold`."""
    t = Fraction(threshold)
    if normalization == "max":
        bound = t * max(len_a, len_b)
    else:
        # 2L / (n + L) < t  <=>  L < t * n / (2 - t)
        bound = t * (len_a + len_b) / (2 - t)
    return math.ceil(bound) - 1


def _distance_below(a: bytes, b: bytes, threshold: Fraction, normalization: Normalization) -> Optional[Fraction]:
    """Exact normalized distance when it is below `threshold`, else None."""
    band = band_for_threshold(len(a), len(b), threshold, normalization)
    distance = levenshtein_bounded(a, b, band)
    if distance is None:
        return None
    value = nld_fraction(distance, len(a), len(b), normalization)
    return value if value < threshold else None


# === WORKER POOL ===

# Per-process shared state, installed by `_init_worker` so large corpora are
# pickled once per worker instead of once per task.
_WORKER_STATE: Dict[str, Any] = {}


def _init_worker(state: Dict[str, Any]) -> None:
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def _parallel_map(func: Callable, items: Sequence, workers: int, state: Dict[str, Any]) -> List:
    """Ordered map over `items`; results never depend on the worker count."""
    if workers <= 1 or len(items) < 2:
        _init_worker(state)
        return [func(item) for item in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(state,)) as executor:
        return list(executor.map(func, items, chunksize=chunksize))


def _pair_distance(pair: Tuple[int, int]) -> float:
    blobs = _WORKER_STATE["blobs"]
    normalization = _WORKER_STATE["normalization"]
    a, b = blobs[pair[0]], blobs[pair[1]]
    return float(nld_fraction(levenshtein(a, b), len(a), len(b), normalization))


def _nearest_seed(code: bytes) -> Optional[Tuple[Fraction, str]]:
    seeds: List[Tuple[str, bytes]] = _WORKER_STATE["seeds"]
    threshold: Fraction = _WORKER_STATE["threshold"]
    normalization = _WORKER_STATE["normalization"]
    best: Optional[Tuple[Fraction, str]] = None
    # Seeds arrive sorted by address; only a strictly closer seed replaces the
    # current best, which resolves ties to the lowest address.
    for seed_address, seed_code in seeds:
        bound = threshold if best is None else best[0]
        value = _distance_below(code, seed_code, bound, normalization)
        if value is not None:
            best = (value, seed_address)
            if value == 0:
                break
    return best


def _neighbor_count(index: int) -> int:
    codes: List[bytes] = _WORKER_STATE["codes"]
    threshold: Fraction = _WORKER_STATE["threshold"]
    normalization = _WORKER_STATE["normalization"]
    target = _WORKER_STATE["targets"][index]
    count = 0
    for position, code in enumerate(codes):
        if position == target:
            continue
        if _distance_below(codes[target], code, threshold, normalization) is not None:
            count += 1
    return count


# === OPERATIONS ===

def estimate_baseline(corpus: Sequence[BytecodeBlob], cfg: SimilarityConfig) -> BaselineEstimate:
    """
    Monte Carlo estimate of the mean NLD between two random corpus contracts.

    Draws `cfg.sample_pairs` unordered pairs of distinct indices uniformly,
    with replacement, from a counter-based Philox generator seeded with
    `cfg.rng_seed`.
    """
    if len(corpus) < 2:
        raise CorpusError(f"baseline needs at least 2 contracts, got {len(corpus)}")

    rng = np.random.Generator(np.random.Philox(cfg.rng_seed))
    n = len(corpus)
    first = rng.integers(0, n, size=cfg.sample_pairs)
    second = rng.integers(0, n - 1, size=cfg.sample_pairs)
    second = second + (second >= first)
    pairs = list(zip(first.tolist(), second.tolist()))

    values = np.array(
        _parallel_map(
            _pair_distance,
            pairs,
            cfg.workers,
            {"blobs": [blob.bytecode for blob in corpus], "normalization": cfg.normalization},
        ),
        dtype=np.float64,
    )
    mean = float(values.mean())
    std_error = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    logger.info("Baseline NLD %.4f +/- %.4f over %d sampled pairs", mean, std_error, len(values))
    return BaselineEstimate(mean=mean, std_error=std_error, samples=len(values))


def pairwise_mean(corpus: Sequence[BytecodeBlob], normalization: Normalization = "metric", workers: int = 1) -> float:
    """Exhaustive mean NLD over all unordered pairs of distinct contracts."""
    if len(corpus) < 2:
        raise CorpusError(f"pairwise mean needs at least 2 contracts, got {len(corpus)}")
    pairs = [(i, j) for i in range(len(corpus)) for j in range(i + 1, len(corpus))]
    values = _parallel_map(
        _pair_distance,
        pairs,
        workers,
        {"blobs": [blob.bytecode for blob in corpus], "normalization": normalization},
    )
    return math.fsum(values) / len(values)


def family_similarity(seeds: Sequence[BytecodeBlob], normalization: Normalization = "metric", workers: int = 1) -> Optional[float]:
    """Average NLD among known schemes; None with fewer than two seeds."""
    if len(seeds) < 2:
        return None
    return pairwise_mean(seeds, normalization, workers)


def classify(
    corpus: Sequence[BytecodeBlob],
    seeds: Sequence[BytecodeBlob],
    cfg: SimilarityConfig,
) -> List[Classification]:
    """
    Flag every corpus contract whose closest seed is within `cfg.threshold`.

    Seed addresses are filtered out of the corpus. Output is sorted by
    distance then address, so it does not depend on corpus order.
    """
    if not seeds:
        raise CorpusError("empty seed set")

    seed_addresses = {seed.address for seed in seeds}
    candidates = [blob for blob in corpus if blob.address not in seed_addresses]
    ordered_seeds = sorted(((seed.address, seed.bytecode) for seed in seeds), key=lambda item: item[0])

    nearest = _parallel_map(
        _nearest_seed,
        [blob.bytecode for blob in candidates],
        cfg.workers,
        {
            "seeds": ordered_seeds,
            "threshold": Fraction(cfg.threshold),
            "normalization": cfg.normalization,
        },
    )

    flagged = [
        (best[0], blob.address, best[1])
        for blob, best in zip(candidates, nearest)
        if best is not None
    ]
    flagged.sort(key=lambda item: (item[0], item[1]))
    logger.info("Flagged %d of %d candidate contracts", len(flagged), len(candidates))
    return [
        Classification(address=address, min_distance=float(value), nearest_seed=seed)
        for value, address, seed in flagged
    ]


def fp_pass(
    flagged: Sequence[BytecodeBlob],
    corpus: Sequence[BytecodeBlob],
    cfg: SimilarityConfig,
    seeds: Iterable[str] = (),
) -> List[NeighborReport]:
    """
    Report flagged contracts that sit within the threshold of too many corpus
    contracts (more than `cfg.fp_neighbor_limit`), typically very short code.

    Neighbour counts exclude seed addresses and the contract itself.
    """
    excluded = {normalize_address(address) for address in seeds}
    population = [blob for blob in corpus if blob.address not in excluded]
    positions = {blob.address: index for index, blob in enumerate(population)}

    targets = []
    for blob in flagged:
        if blob.address not in positions:
            logger.warning("Flagged contract %s is not part of the corpus; skipped", blob.address)
            continue
        targets.append(positions[blob.address])

    counts = _parallel_map(
        _neighbor_count,
        list(range(len(targets))),
        cfg.workers,
        {
            "codes": [blob.bytecode for blob in population],
            "targets": targets,
            "threshold": Fraction(cfg.threshold),
            "normalization": cfg.normalization,
        },
    )

    suspects = [
        NeighborReport(address=population[target].address, neighbor_count=count)
        for target, count in zip(targets, counts)
        if count > cfg.fp_neighbor_limit
    ]
    suspects.sort(key=lambda report: (-report.neighbor_count, report.address))
    return suspects


# === CORPUS I/O ===

def parse_hex(text: str, source: str = "<memory>") -> bytes:
    cleaned = text.strip()
    if cleaned[:2].lower() == "0x":
        cleaned = cleaned[2:]
    if len(cleaned) % 2:
        raise CorpusError(f"{source}: odd number of hex digits ({len(cleaned)})")
    try:
        return bytes.fromhex(cleaned)
    except ValueError:
        raise CorpusError(f"{source}: invalid hex bytecode") from None


def load_blob(path: Union[str, Path]) -> BytecodeBlob:
    path = Path(path)
    try:
        address = normalize_address(path.stem)
    except ValueError:
        raise CorpusError(f"{path}: file name is not an address") from None
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as e:
        raise CorpusError(f"{path}: cannot read bytecode ({e})") from None
    code = parse_hex(text, str(path))
    if not code:
        raise CorpusError(f"{path}: empty bytecode")
    return BytecodeBlob(address=address, bytecode=code)


def load_corpus(directory: Union[str, Path]) -> List[BytecodeBlob]:
    """Load every `<address>.hex` file of a directory, sorted by address."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"{directory}: corpus directory not found or unreadable")
    blobs: Dict[str, BytecodeBlob] = {}
    for path in sorted(directory.glob("*.hex")):
        blob = load_blob(path)
        if blob.address in blobs:
            raise CorpusError(f"{path}: duplicate contract {blob.address}")
        blobs[blob.address] = blob
    if not blobs:
        logger.warning("Corpus directory %s holds no .hex files", directory)
    return [blobs[address] for address in sorted(blobs)]


def write_classification(path: Union[str, Path], results: Iterable[Classification]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CLASSIFY_HEADER)
        for result in results:
            writer.writerow([result.address, f"{result.min_distance:.6f}", result.nearest_seed])


# === PIPELINE ===

@dataclass(frozen=True)
class ClassificationRun:
    corpus_size: int
    seeds: List[BytecodeBlob]
    flagged: List[Classification]
    suspects: List[NeighborReport]
    family_nld: Optional[float]


def load_seeds(manifest: Union[str, Path], corpus_dir: Optional[Union[str, Path]] = None) -> List[BytecodeBlob]:
    """
    Bytecode of every scheme listed in a seed manifest, read from
    `<address>.hex` beside the manifest or, failing that, in the corpus.
    """
    manifest = Path(manifest)
    search = [manifest.parent] + ([Path(corpus_dir)] if corpus_dir is not None else [])
    seeds = []
    for descriptor in load_manifest(manifest):
        for directory in search:
            candidate = directory / f"{descriptor.address}.hex"
            if candidate.is_file():
                seeds.append(load_blob(candidate))
                break
        else:
            logger.warning("No bytecode for seed %s (%s); skipped", descriptor.address, descriptor.name)
    if not seeds:
        raise CorpusError(f"{manifest}: no seed bytecode found")
    return sorted(seeds, key=lambda blob: blob.address)


def run_classification(
    corpus_dir: Union[str, Path],
    seeds_manifest: Union[str, Path],
    cfg: SimilarityConfig,
) -> ClassificationRun:
    """Classify a corpus against its seeds and run the false-positive pass on the hits."""
    corpus = load_corpus(corpus_dir)
    seeds = load_seeds(seeds_manifest, corpus_dir)
    flagged = classify(corpus, seeds, cfg)

    by_address = {blob.address: blob for blob in corpus}
    suspects = fp_pass(
        [by_address[c.address] for c in flagged],
        corpus,
        cfg,
        seeds=[seed.address for seed in seeds],
    )
    return ClassificationRun(
        corpus_size=len(corpus),
        seeds=seeds,
        flagged=flagged,
        suspects=suspects,
        family_nld=family_similarity(seeds, cfg.normalization, cfg.workers),
    )


def write_false_positives(path: Union[str, Path], suspects: Iterable[NeighborReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["address", "neighbor_count"])
        for suspect in suspects:
            writer.writerow([suspect.address, suspect.neighbor_count])
