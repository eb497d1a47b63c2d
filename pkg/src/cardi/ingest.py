"""Record ingestion: header parsing, diagnosis label space, stratified splits.

Header layout (one text file per record, signal stored in a companion
``.npy``/``.csv``/``.txt`` matrix of 12 x L samples in millivolts)::

    <record_id> <n_leads> <sampling_rate> <n_samples>
    # Age: 50
    # Sex: Female
    # Dx: 164889003,59118001

The scored diagnosis space holds 27 codes of which three pairs carry the
same clinical meaning under different regional names; each pair is merged
onto one canonical code, leaving 24 classes. The default merge map follows
the public 12-lead challenge convention and can be replaced by a CSV of
``alias_code,canonical_code`` rows.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

N_LEADS = 12

# 27 scored diagnosis codes; aliases point at their canonical partner
DEFAULT_MERGE_MAP = {
    "59118001": "713427006",  # right bundle branch block variants
    "63593006": "284470004",  # supraventricular / atrial premature beats
    "17338001": "427172004",  # ventricular premature beat variants
}
_SCORED_27 = (
    "10370003", "111975006", "164889003", "164890007", "164909002",
    "164917005", "164934002", "164947007", "17338001", "251146004",
    "270492004", "284470004", "39732003", "426177001", "426627000",
    "426783006", "427084000", "427172004", "427393009", "445118002",
    "47665007", "59118001", "59931005", "63593006", "698252002",
    "713426002", "713427006",
)
NORMAL_CLASS_CODE = "426783006"  # ordinary sinus rhythm


class IngestError(ValueError):
    """Base class for ingestion failures."""


class HeaderParseError(IngestError):
    """Malformed header text."""


class UnsupportedRecordError(IngestError):
    """Structurally valid header describing a record we do not handle."""


@dataclass(frozen=True)
class EcgRecord:
    """One 12-lead recording with demographics and diagnosis codes.

    ``age`` is in years (None when missing); ``sex`` is "female", "male",
    or None; ``signal`` rows are leads, columns samples, in millivolts.
    """

    record_id: str
    signal: np.ndarray
    sampling_rate: float
    age: float | None
    sex: str | None
    dx_codes: frozenset[str]

    def __post_init__(self):
        sig = np.asarray(self.signal, dtype=float)
        object.__setattr__(self, "signal", sig)
        if sig.ndim != 2 or sig.shape[0] != N_LEADS:
            raise UnsupportedRecordError(
                f"record {self.record_id}: expected {N_LEADS} leads, got shape {sig.shape}"
            )
        if self.sampling_rate <= 0:
            raise IngestError(f"record {self.record_id}: sampling_rate must be positive")
        if sig.shape[1] < 1:
            raise IngestError(f"record {self.record_id}: empty signal")

    @property
    def duration_samples(self) -> int:
        return self.signal.shape[1]


@dataclass(frozen=True)
class HeaderInfo:
    """Semantic content of a header file."""

    record_id: str
    sampling_rate: int
    duration_samples: int
    age: float | None
    sex: str | None
    dx_codes: frozenset[str]


def parse_header(text: str) -> HeaderInfo:
    """Parse a record header.

    Raises:
        HeaderParseError: malformed first line (names the offending line).
        UnsupportedRecordError: lead count other than 12.
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise HeaderParseError("header is empty")
    first = lines[0].strip()
    tokens = first.split()
    if len(tokens) != 4:
        raise HeaderParseError(
            f"malformed first line (expected '<id> <n_leads> <rate> <n_samples>'): {first!r}"
        )
    record_id = tokens[0]
    try:
        n_leads = int(tokens[1])
        rate = int(tokens[2])
        n_samples = int(tokens[3])
    except ValueError:
        raise HeaderParseError(f"malformed first line (non-integer field): {first!r}") from None
    if n_leads != N_LEADS:
        raise UnsupportedRecordError(f"record {record_id}: {n_leads} leads unsupported")
    if rate <= 0 or n_samples < 1:
        raise HeaderParseError(f"malformed first line (non-positive rate/length): {first!r}")

    age: float | None = None
    sex: str | None = None
    dx: frozenset[str] = frozenset()
    for line in lines[1:]:
        line = line.strip()
        if not line.startswith("#") or ":" not in line:
            continue
        key, _, value = line.lstrip("#").partition(":")
        key = key.strip().lower()
        value = value.strip()
        if key == "age":
            age = _parse_age(value)
        elif key == "sex":
            sex = _parse_sex(value)
        elif key == "dx":
            dx = frozenset(c.strip() for c in value.split(",") if c.strip())
    return HeaderInfo(record_id, rate, n_samples, age, sex, dx)


def _parse_age(value: str) -> float | None:
    if not value or value.lower() == "nan":
        return None
    try:
        age = float(value)
    except ValueError:
        return None
    return None if math.isnan(age) else age


def _parse_sex(value: str) -> str | None:
    v = value.strip().lower()
    if v in ("f", "female"):
        return "female"
    if v in ("m", "male"):
        return "male"
    return None


def serialize_header(info: HeaderInfo) -> str:
    """Inverse of parse_header (parse(serialize(x)) == x)."""
    age = "NaN" if info.age is None else (
        str(int(info.age)) if float(info.age).is_integer() else repr(info.age)
    )
    sex = {"female": "Female", "male": "Male", None: "Unknown"}[info.sex]
    lines = [
        f"{info.record_id} {N_LEADS} {info.sampling_rate} {info.duration_samples}",
        f"# Age: {age}",
        f"# Sex: {sex}",
        f"# Dx: {','.join(sorted(info.dx_codes))}",
    ]
    return "\n".join(lines) + "\n"


def read_signal(path: str | Path) -> np.ndarray:
    """Load the companion signal matrix (.npy binary or .csv/.txt text)."""
    path = Path(path)
    if path.suffix == ".npy":
        sig = np.load(path)
    elif path.suffix == ".csv":
        sig = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        sig = np.loadtxt(path, ndmin=2)
    return np.asarray(sig, dtype=float)


def load_record(header_path: str | Path, signal_path: str | Path | None = None) -> EcgRecord:
    """Read a header plus its companion signal file into an EcgRecord."""
    header_path = Path(header_path)
    info = parse_header(header_path.read_text())
    if signal_path is None:
        for suffix in (".npy", ".csv", ".txt"):
            candidate = header_path.with_suffix(suffix)
            if candidate.exists():
                signal_path = candidate
                break
        else:
            raise IngestError(f"no signal file found beside {header_path}")
    signal = read_signal(signal_path)
    if signal.shape != (N_LEADS, info.duration_samples):
        raise IngestError(
            f"record {info.record_id}: signal shape {signal.shape} does not match "
            f"header ({N_LEADS}, {info.duration_samples})"
        )
    return EcgRecord(info.record_id, signal, info.sampling_rate, info.age, info.sex, info.dx_codes)


class LabelSpace:
    """Ordered canonical diagnosis classes plus the alias merge map.

    The production space has exactly 24 canonical classes reached by
    merging 3 alias codes; synthetic spaces of other sizes are allowed for
    testing as long as they are internally consistent.
    """

    def __init__(self, classes, merge_map=None):
        self.classes: tuple[str, ...] = tuple(str(c) for c in classes)
        self.merge_map: dict[str, str] = {str(k): str(v) for k, v in (merge_map or {}).items()}
        if len(set(self.classes)) != len(self.classes):
            raise IngestError("duplicate canonical class codes")
        for alias, canonical in self.merge_map.items():
            if canonical not in self.classes:
                raise IngestError(f"merge target {canonical} is not a canonical class")
            if alias in self.classes:
                raise IngestError(f"alias {alias} is itself canonical")
        self.index_of: dict[str, int] = {c: i for i, c in enumerate(self.classes)}

    def __len__(self) -> int:
        return len(self.classes)

    def canonical(self, code: str) -> str | None:
        """Canonical form of a code, or None if outside the scored space."""
        code = self.merge_map.get(code, code)
        return code if code in self.index_of else None

    @classmethod
    def default(cls) -> "LabelSpace":
        classes = sorted(set(_SCORED_27) - set(DEFAULT_MERGE_MAP))
        return cls(classes, DEFAULT_MERGE_MAP)


def load_merge_map(path: str | Path) -> dict[str, str]:
    """Read an ``alias_code,canonical_code`` CSV (header row optional)."""
    out: dict[str, str] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("alias_code", "alias"):
                continue
            if len(row) < 2:
                raise IngestError(f"merge map row needs two columns: {row!r}")
            out[row[0].strip()] = row[1].strip()
    return out


def apply_merge(
    dx_codes,
    label_space: LabelSpace,
    unknown: Counter | None = None,
) -> np.ndarray:
    """Map diagnosis codes through the merge map onto a binary label vector.

    Codes outside the scored space are dropped (tallied into ``unknown``
    when a counter is supplied). Aliases and their canonical partner land
    on the same index, so a record carrying both yields a single 1 there.
    """
    vec = np.zeros(len(label_space), dtype=int)
    for code in dx_codes:
        canonical = label_space.canonical(str(code))
        if canonical is None:
            if unknown is not None:
                unknown[str(code)] += 1
            continue
        vec[label_space.index_of[canonical]] = 1
    return vec


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    path: str
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))


@dataclass
class DatasetManifest:
    """Record list with label vectors and an optional split assignment."""

    entries: list[ManifestEntry]
    split: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [e.record_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise IngestError("duplicate record ids in manifest")
        widths = {e.labels.shape[0] for e in self.entries}
        if len(widths) > 1:
            raise IngestError(f"inconsistent label vector lengths: {sorted(widths)}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def n_classes(self) -> int:
        return self.entries[0].labels.shape[0] if self.entries else 0

    def label_matrix(self) -> np.ndarray:
        return np.stack([e.labels for e in self.entries]) if self.entries else np.zeros((0, 0), int)

    def subset(self, record_ids) -> "DatasetManifest":
        wanted = set(record_ids)
        kept = [e for e in self.entries if e.record_id in wanted]
        return DatasetManifest(kept, {e.record_id: self.split[e.record_id]
                                      for e in kept if e.record_id in self.split})

    def save_csv(self, path: str | Path) -> None:
        """Export as ``record_id,split,label_bits`` rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["record_id", "split", "label_bits"])
            for e in self.entries:
                bits = "".join(str(int(b)) for b in e.labels)
                writer.writerow([e.record_id, self.split.get(e.record_id, ""), bits])

    @classmethod
    def load_csv(cls, path: str | Path) -> "DatasetManifest":
        entries = []
        split = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["record_id", "split", "label_bits"]:
                raise IngestError(f"unexpected manifest header: {header!r}")
            for row in reader:
                rid, split_name, bits = row[0], row[1], row[2]
                entries.append(ManifestEntry(rid, "", np.array([int(b) for b in bits])))
                if split_name:
                    split[rid] = split_name
        return cls(entries, split)


def build_manifest(records_meta, label_space: LabelSpace) -> tuple[DatasetManifest, dict]:
    """Assemble a manifest from (record_id, path, dx_codes) triples.

    Returns the manifest plus a diagnostics dict reporting how many codes
    fell outside the scored space.
    """
    unknown: Counter = Counter()
    entries = []
    for record_id, path, dx_codes in records_meta:
        entries.append(ManifestEntry(record_id, str(path), apply_merge(dx_codes, label_space, unknown)))
    diagnostics = {
        "n_records": len(entries),
        "unknown_codes": dict(sorted(unknown.items())),
        "n_unknown_dropped": int(sum(unknown.values())),
    }
    return DatasetManifest(entries), diagnostics


# --- iterative multi-label stratification ---------------------------------
#
# Greedy rarest-label-first assignment gets close to proportional class
# counts but multi-label overlap can leave some (class, group) cells more
# than one record away from target. A local-search repair pass then moves
# or swaps records until every cell is within one record of target (the
# guarantee tested downstream), minimizing the squared excess beyond that
# allowance for class counts and group sizes alike.

def _iterative_assignment(labels: np.ndarray, fractions, rng) -> np.ndarray:
    """Assign each row to one of len(fractions) groups, balancing every
    label column (rarest label placed first, desired-count bookkeeping).
    """
    n, k = labels.shape
    n_groups = len(fractions)
    desired_total = np.array([n * f for f in fractions], dtype=float)
    desired_class = np.array([[labels[:, j].sum() * f for f in fractions] for j in range(k)])
    assignment = np.full(n, -1, dtype=int)
    remaining = np.ones(n, dtype=bool)

    while remaining.any():
        counts = labels[remaining].sum(axis=0)
        active = np.flatnonzero(counts > 0)
        if active.size == 0:
            # label-free leftovers: balance group sizes only
            for i in rng.permutation(np.flatnonzero(remaining)):
                g = _pick_group(desired_total, desired_total, rng)
                assignment[i] = g
                remaining[i] = False
                desired_total[g] -= 1
            break
        # rarest label first; ties by column index for determinism
        j = active[np.argmin(counts[active])]
        rows = np.flatnonzero(remaining & (labels[:, j] == 1))
        for i in rng.permutation(rows):
            g = _pick_group(desired_class[j], desired_total, rng)
            assignment[i] = g
            remaining[i] = False
            desired_total[g] -= 1
            for m in np.flatnonzero(labels[i]):
                desired_class[m][g] -= 1
    return _repair_assignment(labels, assignment, fractions)


def _excess(counts: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Squared deviation beyond the one-record allowance, per cell."""
    over = np.abs(counts - targets) - 1.0
    return np.where(over > 0, over * over, 0.0)


def _repair_assignment(labels: np.ndarray, assignment: np.ndarray, fractions) -> np.ndarray:
    n, k = labels.shape
    n_groups = len(fractions)
    fractions = np.asarray(fractions, dtype=float)
    class_targets = np.outer(labels.sum(axis=0), fractions)         # (k, n_groups)
    size_targets = n * fractions
    counts = np.zeros((k, n_groups))
    sizes = np.zeros(n_groups)
    for i, g in enumerate(assignment):
        counts[:, g] += labels[i]
        sizes[g] += 1

    def penalty():
        return _excess(counts, class_targets).sum() + _excess(sizes, size_targets).sum()

    def delta_move(i, src, dst):
        lab = labels[i]
        active = np.flatnonzero(lab)
        before = (
            _excess(counts[active, src], class_targets[active, src]).sum()
            + _excess(counts[active, dst], class_targets[active, dst]).sum()
            + _excess(sizes[[src, dst]], size_targets[[src, dst]]).sum()
        )
        after = (
            _excess(counts[active, src] - 1, class_targets[active, src]).sum()
            + _excess(counts[active, dst] + 1, class_targets[active, dst]).sum()
            + _excess(np.array([sizes[src] - 1, sizes[dst] + 1]),
                      size_targets[[src, dst]]).sum()
        )
        return after - before

    def apply_move(i, src, dst):
        counts[:, src] -= labels[i]
        counts[:, dst] += labels[i]
        sizes[src] -= 1
        sizes[dst] += 1
        assignment[i] = dst

    for _ in range(4 * n + 16):
        if penalty() == 0:
            break
        best = (0.0, None)
        for i in range(n):
            src = assignment[i]
            for dst in range(n_groups):
                if dst == src:
                    continue
                d = delta_move(i, src, dst)
                if d < best[0] - 1e-12:
                    best = (d, (i, src, dst))
        if best[1] is not None:
            apply_move(*best[1])
            continue
        # no single move helps: try pairwise swaps across groups
        best_swap = (0.0, None)
        for i in range(n):
            for j in range(i + 1, n):
                gi, gj = assignment[i], assignment[j]
                if gi == gj:
                    continue
                d = delta_move(i, gi, gj)
                apply_move(i, gi, gj)
                d += delta_move(j, gj, gi)
                apply_move(i, gj, gi)  # undo
                if d < best_swap[0] - 1e-12:
                    best_swap = (d, (i, j, gi, gj))
        if best_swap[1] is None:
            break
        i, j, gi, gj = best_swap[1]
        apply_move(i, gi, gj)
        apply_move(j, gj, gi)
    return assignment


def _pick_group(primary: np.ndarray, secondary: np.ndarray, rng) -> int:
    """Group with the largest remaining primary demand; ties fall back to
    the largest secondary demand, then to a seeded draw."""
    best = np.flatnonzero(primary == primary.max())
    if best.size > 1:
        sec = secondary[best]
        best = best[np.flatnonzero(sec == sec.max())]
    if best.size > 1:
        return int(rng.choice(best))
    return int(best[0])


def stratified_split(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.72, 0.18, 0.10),
    seed: int = 0,
) -> DatasetManifest:
    """Assign train/val/test splits, keeping each class's positives within
    one record of its proportional share in every split.
    """
    if len(manifest) == 0:
        raise IngestError("cannot split an empty manifest")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise IngestError(f"split ratios must sum to 1, got {ratios}")
    names = ("train", "val", "test")
    if len(ratios) != 3:
        raise IngestError("expected exactly three ratios (train, val, test)")
    rng = np.random.default_rng(seed)
    assignment = _iterative_assignment(manifest.label_matrix(), list(ratios), rng)
    split = {e.record_id: names[g] for e, g in zip(manifest.entries, assignment)}
    return DatasetManifest(list(manifest.entries), split)


def stratified_kfold(manifest: DatasetManifest, k: int = 5, seed: int = 0) -> list[DatasetManifest]:
    """Partition into k folds with per-class counts within one of n_class/k."""
    if k < 2:
        raise IngestError(f"k must be at least 2, got {k}")
    if k > len(manifest):
        raise IngestError(f"k={k} exceeds the {len(manifest)} available records")
    rng = np.random.default_rng(seed)
    assignment = _iterative_assignment(manifest.label_matrix(), [1.0 / k] * k, rng)
    folds = []
    for f in range(k):
        entries = [e for e, g in zip(manifest.entries, assignment) if g == f]
        folds.append(DatasetManifest(entries, {e.record_id: str(f) for e in entries}))
    return folds
