"""Journal entries: CSV I/O, a surrogate multi-clinic corpus, encoding and
anomaly injection.

The surrogate corpus stands in for confidential clinic ledgers.  Each
organisation draws from a shared catalogue of (debit, credit, amount-scale)
templates with its own frequency profile, plus a handful of fixed monthly
transactions (rent, directors' pay, leases ...) that recur at a constant
amount.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import JournalParseError, JournalValidationError
from .schema import OTHER, ContinuousFeature, LabeledDataset, Schema


@dataclass(frozen=True)
class JournalEntry:
    debit: str
    credit: str
    amount: float

    def __post_init__(self):
        if not self.amount > 0:
            raise ValueError(f"amount must be positive, got {self.amount}")


# --- CSV -----------------------------------------------------------------

HEADER = ["debit", "credit", "amount"]


def read_journal_csv(path) -> tuple[list[JournalEntry], list[str] | None]:
    """Parse ``debit,credit,amount[,label]``; labels are None when absent."""
    entries: list[JournalEntry] = []
    labels: list[str] = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != HEADER:
            raise JournalParseError("expected header debit,credit,amount", 1)
        labelled = len(header) > 3 and header[3].strip() == "label"
        width = 4 if labelled else 3
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise JournalParseError(f"expected {width} fields, got {len(row)}", lineno)
            try:
                amount = float(row[2])
            except ValueError:
                raise JournalParseError(f"amount {row[2]!r} is not a number", lineno) from None
            if not math.isfinite(amount) or amount <= 0:
                raise JournalValidationError(f"amount must be positive, got {row[2]}", lineno)
            entries.append(JournalEntry(row[0].strip(), row[1].strip(), amount))
            if labelled:
                labels.append(row[3].strip())
    return entries, (labels if labelled else None)


def load_journal_csv(path) -> list[JournalEntry]:
    return read_journal_csv(path)[0]


def _fmt_amount(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_journal_csv(path, entries: Sequence[JournalEntry], labels: Sequence[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER + (["label"] if labels is not None else []))
        for i, e in enumerate(entries):
            row = [e.debit, e.credit, _fmt_amount(e.amount)]
            if labels is not None:
                row.append(labels[i])
            w.writerow(row)


# --- schema / encoding ---------------------------------------------------


AMOUNT_TRANSFORMS = ("log1p", "none")
AMOUNT_SCALINGS = ("minmax", "standard")


def fit_schema(entries: Iterable[JournalEntry], amount_transform: str = "log1p",
               amount_scaling: str = "minmax") -> Schema:
    """Vocabularies (sorted, plus ``<other>``) and amount scaling from training data.

    ``amount_transform`` is applied first; ``amount_scaling="minmax"`` maps the
    training range to [0, 1], ``"standard"`` maps the mean to 0 and one
    standard deviation to 1.
    """
    if amount_transform not in AMOUNT_TRANSFORMS:
        raise ValueError(f"amount_transform must be one of {AMOUNT_TRANSFORMS}")
    if amount_scaling not in AMOUNT_SCALINGS:
        raise ValueError(f"amount_scaling must be one of {AMOUNT_SCALINGS}")
    entries = list(entries)
    if not entries:
        raise ValueError("cannot fit a schema on zero entries")
    debits = sorted({e.debit for e in entries} - {OTHER}) + [OTHER]
    credits = sorted({e.credit for e in entries} - {OTHER}) + [OTHER]
    amounts = np.array([e.amount for e in entries], dtype=np.float64)
    v = np.log1p(amounts) if amount_transform == "log1p" else amounts
    if amount_scaling == "minmax":
        lo, hi = float(v.min()), float(v.max())
    else:
        lo = float(v.mean())
        hi = lo + float(v.std())
    if hi <= lo:
        hi = lo + 1.0
    return Schema(
        categorical_groups=(("debit", tuple(debits)), ("credit", tuple(credits))),
        continuous_features=(ContinuousFeature("amount", amount_transform, lo, hi),),
    )


def with_local_amount(shared: Schema, entries: Iterable[JournalEntry], amount_transform: str = "log1p",
                      amount_scaling: str = "minmax") -> Schema:
    """Keep the shared vocabularies but refit the amount scaling on ``entries``.

    Used when each organisation normalises amounts with statistics of its own
    ledger, so no organisation has to disclose its amount range.
    """
    local = fit_schema(entries, amount_transform, amount_scaling)
    return Schema(shared.categorical_groups, local.continuous_features)


def encode(entries: Sequence[JournalEntry], schema: Schema) -> np.ndarray:
    return schema.encode(
        [[e.debit for e in entries], [e.credit for e in entries]],
        [[e.amount for e in entries]],
    )


def journal_dataset(entries: Sequence[JournalEntry], schema: Schema, labels: Sequence[str] | None = None) -> LabeledDataset:
    labels = ["normal"] * len(entries) if labels is None else list(labels)
    feats = encode(entries, schema) if entries else np.zeros((0, schema.width))
    return LabeledDataset(schema, feats, labels, list(entries))


# --- surrogate corpus ----------------------------------------------------

# (debit, credit, log10 median amount, log10 spread, base weight)
CORE_TEMPLATES: list[tuple[str, str, float, float, float]] = [
    ("Cash", "Sales (paid at one's own expense)", 3.6, 0.45, 30.0),
    ("Insurance accounts receivable", "Sales (Insurance claim income)", 6.3, 0.30, 6.0),
    ("Ordinary deposits", "Insurance accounts receivable", 6.3, 0.30, 6.0),
    ("Ordinary deposits", "Cash", 5.0, 0.40, 8.0),
    ("Cash", "Ordinary deposits", 4.9, 0.35, 5.0),
    ("Medical supplies expenses", "Accounts payable - trade", 5.0, 0.45, 8.0),
    ("Drug expenses", "Accounts payable - trade", 5.2, 0.45, 7.0),
    ("Accounts payable - trade", "Ordinary deposits", 5.3, 0.45, 8.0),
    ("Salaries and allowances", "Ordinary deposits", 5.4, 0.25, 8.0),
    ("Salaries and allowances", "Deposits received", 4.3, 0.30, 4.0),
    ("Deposits received", "Ordinary deposits", 4.6, 0.40, 4.0),
    ("Legal welfare expenses", "Ordinary deposits", 5.0, 0.30, 3.0),
    ("Bonuses", "Ordinary deposits", 5.6, 0.25, 1.0),
    ("Consumables expenses", "Cash", 3.5, 0.45, 10.0),
    ("Consumables expenses", "Accounts payable - other", 4.2, 0.45, 4.0),
    ("Outsourced testing expenses", "Accounts payable - trade", 4.8, 0.40, 4.0),
    ("Communication expenses", "Ordinary deposits", 4.0, 0.30, 3.0),
    ("Utilities expenses", "Ordinary deposits", 4.7, 0.30, 3.0),
    ("Travel and transportation expenses", "Cash", 3.2, 0.40, 6.0),
    ("Entertainment expenses", "Cash", 3.9, 0.40, 3.0),
    ("Meeting expenses", "Cash", 3.4, 0.40, 2.0),
    ("Miscellaneous expenses", "Cash", 3.3, 0.45, 5.0),
    ("Books and subscriptions", "Cash", 3.4, 0.35, 2.0),
    ("Commission fees", "Ordinary deposits", 3.6, 0.45, 5.0),
    ("Taxes and dues", "Ordinary deposits", 4.5, 0.60, 2.0),
    ("Taxes and dues", "Cash", 3.3, 0.40, 2.0),
    ("Insurance expenses", "Ordinary deposits", 4.6, 0.35, 1.5),
    ("Advertising expenses", "Ordinary deposits", 4.6, 0.40, 1.5),
    ("Repairs and maintenance", "Accounts payable - other", 4.8, 0.50, 1.5),
    ("Cleaning expenses", "Ordinary deposits", 4.5, 0.30, 1.5),
    ("Waste disposal expenses", "Ordinary deposits", 4.2, 0.30, 1.0),
    ("Vehicle expenses", "Cash", 3.7, 0.40, 1.5),
    ("Training expenses", "Ordinary deposits", 4.0, 0.40, 1.0),
    ("Welfare expenses", "Cash", 3.7, 0.40, 2.0),
    ("Accounts payable - other", "Ordinary deposits", 4.8, 0.50, 4.0),
    ("Accrued expenses", "Ordinary deposits", 5.0, 0.40, 1.5),
    ("Prepaid expenses", "Ordinary deposits", 4.7, 0.40, 0.8),
    ("Suspense payments", "Cash", 4.0, 0.50, 1.0),
    ("Cash", "Suspense receipts", 4.0, 0.50, 0.8),
    ("Accounts receivable - other", "Other medical income", 4.5, 0.40, 1.5),
    ("Ordinary deposits", "Accounts receivable - other", 4.5, 0.40, 1.5),
    ("Cash", "Other medical income", 3.8, 0.40, 2.0),
    ("Ordinary deposits", "Interest income", 1.5, 0.60, 0.5),
    ("Ordinary deposits", "Miscellaneous income", 4.2, 0.50, 0.7),
    ("Ordinary deposits", "Subsidy income", 5.5, 0.40, 0.3),
    ("Medical equipment", "Accounts payable - other", 6.2, 0.40, 0.3),
    ("Furniture and fixtures", "Ordinary deposits", 5.3, 0.40, 0.3),
    ("Software", "Ordinary deposits", 5.5, 0.40, 0.2),
    ("Short-term borrowings", "Ordinary deposits", 5.8, 0.30, 0.4),
    ("Interest expenses", "Ordinary deposits", 4.3, 0.40, 1.0),
    ("Income taxes - current", "Ordinary deposits", 5.8, 0.40, 0.2),
    ("Consumption taxes payable", "Ordinary deposits", 5.3, 0.40, 0.2),
    ("Income taxes payable", "Ordinary deposits", 5.7, 0.40, 0.2),
    ("Time deposits", "Ordinary deposits", 6.3, 0.30, 0.2),
    ("Donations", "Cash", 4.0, 0.40, 0.2),
    ("Sundries", "Ordinary deposits", 5.0, 0.60, 1.0),
    ("Salaries and allowances", "Sundries", 5.5, 0.30, 1.0),
    ("Sundries", "Sales (Insurance claim income)", 5.5, 0.40, 0.5),
]

# (debit, credit, log10 typical monthly amount)
RECURRING_POOL: list[tuple[str, str, float]] = [
    ("Rents", "Ordinary deposits", 5.7),
    ("Directors' compensations", "Ordinary deposits", 6.1),
    ("Lease expenses", "Ordinary deposits", 5.2),
    ("Membership fee", "Ordinary deposits", 4.3),
    ("Depreciation", "Accumulated depreciation", 5.9),
    ("Long-term borrowings", "Ordinary deposits", 5.8),
    ("Lease obligations", "Ordinary deposits", 5.0),
    ("Insurance expenses", "Prepaid expenses", 4.5),
]

_EXPENSES = [
    "Medical supplies expenses", "Drug expenses", "Consumables expenses", "Communication expenses",
    "Utilities expenses", "Travel and transportation expenses", "Entertainment expenses",
    "Meeting expenses", "Miscellaneous expenses", "Books and subscriptions", "Commission fees",
    "Taxes and dues", "Insurance expenses", "Advertising expenses", "Repairs and maintenance",
    "Cleaning expenses", "Waste disposal expenses", "Vehicle expenses", "Training expenses",
    "Welfare expenses", "Outsourced testing expenses", "Rents", "Lease expenses", "Membership fee",
    "Donations", "Interest expenses", "Uniform expenses", "Postage", "Recruitment expenses",
    "Software maintenance", "Medical waste fees", "Laundry expenses", "Security expenses",
    "Professional fees", "Bank charges", "Research expenses", "Linen rental", "Parking fees",
]
_FUNDING = [
    "Cash", "Ordinary deposits", "Accounts payable - other", "Accounts payable - trade",
    "Accrued expenses", "Sundries", "Short-term borrowings", "Suspense receipts", "Corporate card payable",
]


def _tail_templates(rng: np.random.Generator) -> list[tuple[str, str, float, float, float]]:
    core_pairs = {(d, c) for d, c, *_ in CORE_TEMPLATES}
    out = []
    for d in _EXPENSES:
        for c in _FUNDING:
            if (d, c) in core_pairs or rng.random() > 0.35:
                continue
            out.append((d, c, float(rng.uniform(3.0, 5.0)), 0.4, float(rng.uniform(0.05, 0.6))))
    # refunds and corrections credit an expense account
    for c in _EXPENSES:
        for d in _FUNDING[:3]:
            if (d, c) in core_pairs or rng.random() > 0.3:
                continue
            out.append((d, c, float(rng.uniform(2.8, 4.5)), 0.4, float(rng.uniform(0.02, 0.15))))
    return out


@dataclass
class OrgProfile:
    templates: list[tuple[str, str, float, float]]  # debit, credit, log10 median, spread
    weights: np.ndarray
    recurring: list[tuple[str, str, float]]  # debit, credit, fixed amount
    scale: float


class JournalSurrogate:
    """Generator for per-organisation journal corpora with shared accounts
    but organisation-specific frequency profiles."""

    def __init__(self, orgs: int, seed: int, heterogeneity: float = 1.0):
        if orgs < 1:
            raise ValueError("orgs must be at least 1")
        self.seed = seed
        rng = np.random.default_rng([seed, 0])
        tail = _tail_templates(rng)
        catalogue = CORE_TEMPLATES + tail
        self.profiles: list[OrgProfile] = []
        for k in range(orgs):
            prng = np.random.default_rng([seed, 1, k])
            base = np.array([t[4] for t in catalogue])
            noise = np.exp(prng.normal(0.0, heterogeneity, size=len(catalogue)))
            keep = np.ones(len(catalogue), dtype=bool)
            keep[len(CORE_TEMPLATES):] = prng.random(len(tail)) < 0.5
            specialty = prng.choice(len(CORE_TEMPLATES), size=6, replace=False)
            boost = np.ones(len(catalogue))
            boost[specialty] = np.exp(2.0 * heterogeneity)
            weights = base * noise * boost * keep
            scale = float(np.exp(prng.normal(0.0, 0.35)))
            n_rec = int(prng.integers(4, 7))
            rec_idx = prng.choice(len(RECURRING_POOL), size=n_rec, replace=False)
            recurring = []
            for i in sorted(rec_idx):
                d, c, lg = RECURRING_POOL[i]
                amount = 10 ** (lg + prng.normal(0.0, 0.2)) * scale
                recurring.append((d, c, float(max(1000, round(amount, -3)))))
            self.profiles.append(OrgProfile(
                templates=[t[:4] for t in catalogue],
                weights=weights / weights.sum(),
                recurring=recurring,
                scale=scale,
            ))

    def sample(self, org: int, n: int, rng: np.random.Generator, months: int | None = None) -> list[JournalEntry]:
        """``n`` entries in month order; each month opens with the recurring entries."""
        prof = self.profiles[org]
        if n <= 0:
            return []
        if months is None:
            months = int(np.clip(n // 200, 1, 72))
        n_rec = min(months * len(prof.recurring), n // 2)
        n_free = n - n_rec
        free_month = np.sort(rng.integers(months, size=n_free))
        picks = rng.choice(len(prof.templates), size=n_free, p=prof.weights)
        noise = rng.standard_normal(n_free)
        out: list[JournalEntry] = []
        placed_rec = 0
        j = 0
        for month in range(months):
            for d, c, amt in prof.recurring:
                if placed_rec < n_rec:
                    out.append(JournalEntry(d, c, amt))
                    placed_rec += 1
            while j < n_free and free_month[j] == month:
                d, c, med, spread = prof.templates[picks[j]]
                amount = max(1.0, round(10 ** (med + spread * noise[j]) * prof.scale))
                out.append(JournalEntry(d, c, float(amount)))
                j += 1
        return out


def gen_journal_corpus(orgs: int, entries_per_org: Sequence[int], seed: int,
                       heterogeneity: float = 1.0) -> list[list[JournalEntry]]:
    if len(entries_per_org) != orgs:
        raise ValueError("need one size per organisation")
    gen = JournalSurrogate(orgs, seed, heterogeneity)
    return [gen.sample(k, n, np.random.default_rng([seed, 2, k])) for k, n in enumerate(entries_per_org)]


# --- anomaly injection ---------------------------------------------------

RECURRING_FACTORS = (0.1, 10.0)


def recurring_transactions(entries: Sequence[JournalEntry], min_count: int = 6) -> set[tuple[str, str, float]]:
    """(debit, credit, amount) triples that repeat at least ``min_count`` times."""
    counts = Counter((e.debit, e.credit, e.amount) for e in entries)
    return {k for k, v in counts.items() if v >= min_count}


def inject_journal_anomalies(
    test: Sequence[JournalEntry],
    seed: int,
    reference: Sequence[JournalEntry] | None = None,
    n_global: int = 6,
    n_pair_local: int = 10,
    n_recurring_local: int = 4,
    local_entries: Sequence[JournalEntry] | None = None,
) -> tuple[list[JournalEntry], list[str]]:
    """Return a copy of ``test`` with global and local anomalies written in.

    Global: the ``n_global`` largest amounts multiplied by U[3, 5].
    Local: entries with account pairs never seen in ``reference`` (defaults to
    the test set itself), plus recurring transactions whose amount is scaled
    by 0.1 or 10.  ``local_entries`` adds caller-supplied local anomalies.
    """
    entries = list(test)
    n = len(entries)
    extra = list(local_entries or [])
    if n < max(n_global, 1) or n_global + n_pair_local + n_recurring_local + len(extra) > n:
        raise ValueError(f"test set of {n} entries is too small for the requested anomalies")
    reference = list(reference) if reference is not None else entries
    rng = np.random.default_rng(seed)
    labels = ["normal"] * n
    used: set[int] = set()

    order = sorted(range(n), key=lambda i: (-entries[i].amount, i))
    for i in order[:n_global]:
        e = entries[i]
        entries[i] = JournalEntry(e.debit, e.credit, float(math.ceil(e.amount * rng.uniform(3.0, 5.0))))
        labels[i] = "global"
        used.add(i)

    def free_slot(candidates=None) -> int:
        pool = [i for i in (range(n) if candidates is None else candidates) if i not in used]
        if not pool:
            raise ValueError("no free rows left for local anomalies")
        i = int(pool[rng.integers(len(pool))])
        used.add(i)
        return i

    rec = recurring_transactions(reference)
    rec_rows = [i for i, e in enumerate(entries) if (e.debit, e.credit, e.amount) in rec]
    n_rec = min(n_recurring_local, len([i for i in rec_rows if i not in used]))
    for _ in range(n_rec):
        i = free_slot(rec_rows)
        e = entries[i]
        factor = RECURRING_FACTORS[rng.integers(2)]
        entries[i] = JournalEntry(e.debit, e.credit, float(max(1.0, round(e.amount * factor))))
        labels[i] = "local"

    seen_pairs = {(e.debit, e.credit) for e in reference}
    debits = sorted({e.debit for e in reference})
    credits = sorted({e.credit for e in reference})
    by_debit: dict[str, list[float]] = {}
    for e in reference:
        by_debit.setdefault(e.debit, []).append(e.amount)
    n_pair = n_pair_local + (n_recurring_local - n_rec)
    made = 0
    attempts = 0
    while made < n_pair:
        attempts += 1
        if attempts > 100_000:
            raise ValueError("could not find unseen account pairs")
        d = debits[rng.integers(len(debits))]
        c = credits[rng.integers(len(credits))]
        if d == c or (d, c) in seen_pairs:
            continue
        pool = by_debit[d]
        amount = pool[rng.integers(len(pool))]
        i = free_slot()
        entries[i] = JournalEntry(d, c, amount)
        labels[i] = "local"
        seen_pairs.add((d, c))
        made += 1

    for e in extra:
        i = free_slot()
        entries[i] = e
        labels[i] = "local"
    return entries, labels
