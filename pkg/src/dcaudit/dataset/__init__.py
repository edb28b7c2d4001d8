"""Data generation, ingestion, encoding and anomaly injection."""
from .journal import (
    JournalEntry,
    JournalSurrogate,
    encode,
    fit_schema,
    gen_journal_corpus,
    inject_journal_anomalies,
    journal_dataset,
    load_journal_csv,
    read_journal_csv,
    with_local_amount,
    write_journal_csv,
)
from .schema import LABELS, OTHER, ContinuousFeature, LabeledDataset, Schema
from .synthetic import (
    SYNTHETIC_SCHEMA,
    AnomalySpec,
    gen_synthetic_normal,
    inject_synthetic_anomalies,
    is_normal,
    read_synthetic_csv,
    write_synthetic_csv,
)
