"""Report corpora: loading, labeling, family-disjoint splitting, and synthesis."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


class CorpusError(ValueError):
    """Invalid corpus input: bad manifest, bad labels, bad split arguments."""


@dataclass(frozen=True)
class LabeledReport:
    """One sandbox report: raw text plus optional nation and family labels."""

    id: str
    raw_text: str
    nation: str | None = None
    family: str | None = None


class Corpus:
    """An ordered, immutable collection of labeled reports."""

    def __init__(self, reports: Iterable[LabeledReport]):
        self.reports: tuple[LabeledReport, ...] = tuple(reports)
        seen: set[str] = set()
        for r in self.reports:
            if not r.id:
                raise CorpusError("report with empty id")
            if r.id in seen:
                raise CorpusError(f"duplicate report id {r.id!r}")
            seen.add(r.id)
        self.nations: frozenset[str] = frozenset(
            r.nation for r in self.reports if r.nation is not None
        )
        self.families: frozenset[str] = frozenset(
            r.family for r in self.reports if r.family is not None
        )

    def __len__(self) -> int:
        return len(self.reports)

    def ids(self) -> list[str]:
        return [r.id for r in self.reports]


@dataclass(frozen=True)
class SplitResult:
    train: Corpus
    validation: Corpus
    test: Corpus


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the deterministic synthetic report generator.

    Every report of nation n includes each of that nation's signature tokens
    independently with probability p_nation, each of its family's signature
    tokens with probability p_family, then uniform noise-pool draws up to
    tokens_per_report total tokens.
    """

    nations: int = 2
    families_per_nation: int = 2
    reports_per_family: int = 400
    nation_sig_size: int = 30
    family_sig_size: int = 20
    noise_pool_size: int = 500
    tokens_per_report: int = 120
    p_nation: float = 0.6
    p_family: float = 0.6
    seed: int = 0

    def validate(self) -> None:
        counts = {
            "nations": self.nations,
            "families_per_nation": self.families_per_nation,
            "reports_per_family": self.reports_per_family,
            "nation_sig_size": self.nation_sig_size,
            "family_sig_size": self.family_sig_size,
            "noise_pool_size": self.noise_pool_size,
            "tokens_per_report": self.tokens_per_report,
        }
        for name, value in counts.items():
            if value < 0:
                raise CorpusError(f"{name} must be >= 0, got {value}")
        for name, value in (("p_nation", self.p_nation), ("p_family", self.p_family)):
            if not 0.0 <= value <= 1.0:
                raise CorpusError(f"{name} must be in [0,1], got {value}")
        if not 0 <= self.seed < 2**64:
            raise CorpusError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load a corpus from a JSON Lines manifest; report paths are relative to it."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CorpusError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    reports: list[LabeledReport] = []
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"manifest line {lineno}: invalid JSON ({exc})") from exc
            if not isinstance(entry, dict) or "id" not in entry or "path" not in entry:
                raise CorpusError(f"manifest line {lineno}: expected object with id and path")
            report_path = base / entry["path"]
            if not report_path.is_file():
                raise CorpusError(f"manifest line {lineno}: report file not found: {report_path}")
            # Non-UTF-8 bytes become replacement chars, which tokenize as delimiters.
            text = report_path.read_text(encoding="utf-8", errors="replace")
            reports.append(
                LabeledReport(
                    id=entry["id"],
                    raw_text=text,
                    nation=entry.get("nation"),
                    family=entry.get("family"),
                )
            )
    return Corpus(reports)


def family_disjoint_split(
    corpus: Corpus, test_families: set[str], val_per_family: int
) -> SplitResult:
    """Split so that no family is shared between (train + validation) and test.

    All reports of a test family go to test; from each remaining family the
    first val_per_family reports (by corpus order) go to validation, the rest
    to train.
    """
    unknown = set(test_families) - set(corpus.families)
    if unknown:
        raise CorpusError(f"test families not present in corpus: {sorted(unknown)}")
    for r in corpus.reports:
        if r.family is None:
            raise CorpusError(f"report {r.id!r} has no family label")
    train_families = set(corpus.families) - set(test_families)
    if corpus.families and not train_families:
        raise CorpusError("no training families remain")

    per_family_counts: dict[str, int] = {}
    for r in corpus.reports:
        if r.family in train_families:
            per_family_counts[r.family] = per_family_counts.get(r.family, 0) + 1
    for fam, count in sorted(per_family_counts.items()):
        if val_per_family > count:
            raise CorpusError(
                f"val_per_family={val_per_family} exceeds {count} reports of family {fam!r}"
            )

    train: list[LabeledReport] = []
    validation: list[LabeledReport] = []
    test: list[LabeledReport] = []
    taken: dict[str, int] = {fam: 0 for fam in train_families}
    for r in corpus.reports:
        if r.family in test_families:
            test.append(r)
        elif taken[r.family] < val_per_family:
            taken[r.family] += 1
            validation.append(r)
        else:
            train.append(r)
    return SplitResult(train=Corpus(train), validation=Corpus(validation), test=Corpus(test))


def generate_synthetic_corpus(spec: SynthSpec) -> Corpus:
    """Generate a labeled corpus of token-stream reports; pure function of spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    reports: list[LabeledReport] = []
    for n in range(spec.nations):
        nation_sig = [f"nsig_{n}_{k}" for k in range(spec.nation_sig_size)]
        for f in range(spec.families_per_nation):
            family_sig = [f"fsig_{n}_{f}_{k}" for k in range(spec.family_sig_size)]
            for r in range(spec.reports_per_family):
                tokens = [t for t in nation_sig if rng.random() < spec.p_nation]
                tokens += [t for t in family_sig if rng.random() < spec.p_family]
                if spec.noise_pool_size > 0:
                    missing = spec.tokens_per_report - len(tokens)
                    for _ in range(max(0, missing)):
                        tokens.append(f"noise_{rng.integers(spec.noise_pool_size)}")
                reports.append(
                    LabeledReport(
                        id=f"report_{n}_{f}_{r}",
                        raw_text=" ".join(tokens),
                        nation=f"nation_{n}",
                        family=f"family_{n}_{f}",
                    )
                )
    return Corpus(reports)


def export_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    """Write one text file per report plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    lines = []
    for r in corpus.reports:
        filename = f"{r.id}.txt"
        (out_dir / filename).write_text(r.raw_text, encoding="utf-8")
        lines.append(
            json.dumps(
                {"id": r.id, "path": filename, "nation": r.nation, "family": r.family},
                sort_keys=True,
            )
        )
    manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return manifest_path
