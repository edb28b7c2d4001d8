from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import truncnorm

from dcaudit.dataset import (
    OTHER,
    SYNTHETIC_SCHEMA,
    AnomalySpec,
    ContinuousFeature,
    JournalEntry,
    Schema,
    encode,
    fit_schema,
    gen_journal_corpus,
    gen_synthetic_normal,
    inject_journal_anomalies,
    inject_synthetic_anomalies,
    is_normal,
    load_journal_csv,
    read_journal_csv,
    read_synthetic_csv,
    write_journal_csv,
    write_synthetic_csv,
)
from dcaudit.dataset.synthetic import BAND_HALF_WIDTH, NORMAL_COMBOS, band
from dcaudit.errors import JournalParseError, JournalValidationError

from oracles import js_divergence


def _check_encoding(ds):
    for sl in ds.schema.group_slices:
        np.testing.assert_array_equal(ds.features[:, sl].sum(axis=1), 1.0)
    cont = ds.features[:, ds.schema.continuous_slice]
    assert np.all((cont >= 0) & (cont <= 1))


# --- synthetic -----------------------------------------------------------


def test_synthetic_normal_1600():
    ds = gen_synthetic_normal(1600, seed=0)
    assert ds.features.shape == (1600, 7)
    assert set(ds.labels) == {"normal"}
    a, b, c = zip(*ds.records)
    assert set(a) <= {0, 1, 2} and set(b) <= {0, 1, 2}
    assert min(c) >= 0.1 and max(c) <= 0.9
    assert all(is_normal(*r) for r in ds.records)
    _check_encoding(ds)


def test_synthetic_single_row():
    ds = gen_synthetic_normal(1, seed=3)
    assert len(ds) == 1 and is_normal(*ds.records[0])


def test_synthetic_band_means_match_truncated_normal():
    ds = gen_synthetic_normal(10_000, seed=1)
    by_combo = {}
    for a, b, c in ds.records:
        by_combo.setdefault((a, b), []).append(c)
    assert set(by_combo) == set(NORMAL_COMBOS)
    for combo, values in by_combo.items():
        mu = NORMAL_COMBOS[combo]
        lo, hi = band(combo)
        expected = truncnorm.mean((lo - mu) / 0.08, (hi - mu) / 0.08, loc=mu, scale=0.08)
        assert abs(np.mean(values) - expected) <= 0.02


def test_synthetic_width_is_seven():
    assert SYNTHETIC_SCHEMA.width == 3 + 3 + 1


@pytest.mark.parametrize("ratio,n_global,n_local", [(0.25, 25, 25), (0.10, 10, 10), (0.05, 5, 5)])
def test_anomaly_spec_counts(ratio, n_global, n_local):
    spec = AnomalySpec.from_ratio(ratio, 200)
    assert (spec.n_global, spec.n_local) == (n_global, n_local)
    test = gen_synthetic_normal(200, seed=4)
    out = inject_synthetic_anomalies(test, spec, seed=5)
    assert out.counts() == {"normal": 200 - n_global - n_local, "global": n_global, "local": n_local}
    for rec, lab in zip(out.records, out.labels):
        a, b, c = rec
        if lab == "global":
            assert (a, b) in NORMAL_COMBOS and (c < 0.1 or c > 0.9)
        elif lab == "local":
            assert not is_normal(a, b, c) and 0.0 <= c <= 1.0
    _check_encoding(out)


def test_anomaly_ratio_zero_is_noop():
    test = gen_synthetic_normal(50, seed=4)
    out = inject_synthetic_anomalies(test, AnomalySpec.from_ratio(0.0, 50), seed=1)
    np.testing.assert_array_equal(out.features, test.features)
    assert list(out.labels) == list(test.labels)


def test_anomaly_too_many():
    test = gen_synthetic_normal(10, seed=4)
    with pytest.raises(ValueError):
        inject_synthetic_anomalies(test, AnomalySpec(1.0, 6, 6), seed=0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n_global=st.integers(0, 20), n_local=st.integers(0, 20))
def test_injected_anomalies_satisfy_predicates(seed, n_global, n_local):
    test = gen_synthetic_normal(60, seed=seed)
    out = inject_synthetic_anomalies(test, AnomalySpec(0.0, n_global, n_local), seed=seed + 1)
    assert out.counts()["global"] == n_global and out.counts()["local"] == n_local
    for (a, b, c), lab in zip(out.records, out.labels):
        if lab == "global":
            assert c < 0.1 or c > 0.9
        if lab == "local":
            assert not is_normal(a, b, c)
        if lab == "normal":
            assert is_normal(a, b, c)


def test_synthetic_csv_roundtrip(tmp_path):
    ds = inject_synthetic_anomalies(gen_synthetic_normal(30, 0), AnomalySpec(0.2, 3, 3), 1)
    write_synthetic_csv(tmp_path / "s.csv", ds)
    back = read_synthetic_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.features, ds.features)
    assert list(back.labels) == list(ds.labels)


def test_local_swapped_c_leaves_own_band():
    # band half-width is what separates a swapped c from its own band
    assert BAND_HALF_WIDTH == pytest.approx(0.24)


# --- schema / encoding -----------------------------------------------------


def test_one_hot_block():
    schema = Schema((("debit", ("Cash", "Rents", "Sales")),), ())
    np.testing.assert_array_equal(schema.encode([["Rents"]], []), [[0.0, 1.0, 0.0]])


def test_amount_scaling_extrapolates_past_training_max():
    train = [JournalEntry("Cash", "Sales", 100.0), JournalEntry("Rents", "Cash", 5000.0)]
    schema = fit_schema(train)
    x = encode([JournalEntry("Cash", "Sales", 5000.0), JournalEntry("Cash", "Sales", 1e9)], schema)
    assert x[0, -1] == 1.0
    expected = (np.log1p(1e9) - np.log1p(100.0)) / (np.log1p(5000.0) - np.log1p(100.0))
    assert x[1, -1] == pytest.approx(expected) and x[1, -1] > 1.0


def test_unseen_token_goes_to_other():
    schema = fit_schema([JournalEntry("Cash", "Sales", 100.0)])
    x = encode([JournalEntry("Unknown", "Sales", 100.0)], schema)
    debit_vocab = schema.categorical_groups[0][1]
    assert x[0, debit_vocab.index(OTHER)] == 1.0
    assert schema.width == len(debit_vocab) + len(schema.categorical_groups[1][1]) + 1


def test_schema_without_other_rejects_unknown():
    with pytest.raises(KeyError):
        SYNTHETIC_SCHEMA.encode([["5"], ["0"]], [[0.5]])


def test_schema_validation():
    with pytest.raises(ValueError):
        Schema((("a", ("x", "x")),), ())
    with pytest.raises(ValueError):
        ContinuousFeature("c", "none", 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["Cash", "Rents", "Sales", "Depreciation"]),
                          st.sampled_from(["Cash", "Ordinary deposits", "Sundries"]),
                          st.floats(1, 1e8)), min_size=1, max_size=30))
def test_encode_decode_tokens_roundtrip(rows):
    entries = [JournalEntry(*r) for r in rows]
    schema = fit_schema(entries)
    tokens, values = schema.decode(encode(entries, schema))
    assert tokens[0] == [e.debit for e in entries]
    assert tokens[1] == [e.credit for e in entries]
    np.testing.assert_allclose(values[0], [e.amount for e in entries], rtol=1e-9)


def test_schema_json_roundtrip(tmp_path):
    schema = fit_schema([JournalEntry("Cash", "Sales", 10.0), JournalEntry("Rents", "Cash", 20.0)])
    schema.save(tmp_path / "schema.json")
    assert Schema.load(tmp_path / "schema.json") == schema


# --- journal CSV -----------------------------------------------------------


def test_load_csv_row(tmp_path):
    p = tmp_path / "j.csv"
    p.write_text("debit,credit,amount\nRents,Ordinary deposits,6270000\n")
    assert load_journal_csv(p) == [JournalEntry("Rents", "Ordinary deposits", 6_270_000.0)]


def test_load_csv_empty(tmp_path):
    p = tmp_path / "j.csv"
    p.write_text("debit,credit,amount\n")
    assert load_journal_csv(p) == []


def test_load_csv_negative_amount(tmp_path):
    p = tmp_path / "j.csv"
    p.write_text("debit,credit,amount\nA,B,1\nX,Y,-5\n")
    with pytest.raises(JournalValidationError) as err:
        load_journal_csv(p)
    assert err.value.line == 3


def test_load_csv_malformed(tmp_path):
    p = tmp_path / "j.csv"
    p.write_text("debit,credit,amount\nA,B,1\nA,B\n")
    with pytest.raises(JournalParseError) as err:
        load_journal_csv(p)
    assert err.value.line == 3
    p.write_text("debit,credit,amount\nA,B,lots\n")
    with pytest.raises(JournalParseError):
        load_journal_csv(p)


def test_labelled_csv_roundtrip(tmp_path):
    entries = [JournalEntry("Depreciation", "Cash", 300000.0), JournalEntry("Cash", "Sales", 12.5)]
    write_journal_csv(tmp_path / "t.csv", entries, ["local", "normal"])
    back, labels = read_journal_csv(tmp_path / "t.csv")
    assert back == entries and labels == ["local", "normal"]


# --- surrogate corpus --------------------------------------------------------

TABLE2_NONIID = [17070, 22978, 10708, 11230, 14984, 8525, 8133, 8611]


def test_corpus_sizes_match_table():
    corpus = gen_journal_corpus(8, TABLE2_NONIID, seed=0)
    assert [len(c) for c in corpus] == TABLE2_NONIID
    for org in corpus:
        assert 40 <= len({e.debit for e in org}) <= 80
        amounts = np.array([e.amount for e in org])
        assert np.mean(amounts) > 2 * np.median(amounts)  # heavy right tail


def test_corpus_minimal():
    corpus = gen_journal_corpus(1, [10], seed=1)
    schema = fit_schema(corpus[0])
    assert len(corpus[0]) == 10
    vocab = set(schema.categorical_groups[0][1])
    assert all(e.debit in vocab for e in corpus[0])


def test_corpus_orgs_are_heterogeneous():
    a, b = gen_journal_corpus(2, [5000, 5000], seed=2)
    vocab = sorted({e.debit for e in a + b})
    ha, hb = Counter(e.debit for e in a), Counter(e.debit for e in b)
    assert js_divergence([ha[v] for v in vocab], [hb[v] for v in vocab]) > 0.1


def test_corpus_has_monthly_recurring_entries():
    (org,) = gen_journal_corpus(1, [5000], seed=3)
    counts = Counter((e.debit, e.credit, e.amount) for e in org)
    assert sum(1 for v in counts.values() if v >= 12) >= 4


# --- journal anomalies ---------------------------------------------------------


def test_journal_global_range():
    entries = [JournalEntry("Cash", "Sales", float(10 * (i + 1))) for i in range(20)]
    entries[7] = JournalEntry("Insurance accounts receivable", "Sales (Insurance claim income)", 17_632_000.0)
    out, labels = inject_journal_anomalies(entries, seed=0, n_pair_local=0, n_recurring_local=0)
    assert labels.count("global") == 6 and labels[7] == "global"
    assert 52_896_000 <= out[7].amount <= 88_160_000


def test_journal_explicit_local():
    (org,) = gen_journal_corpus(1, [400], seed=5)
    dep_cash = JournalEntry("Depreciation", "Cash", 300_000.0)
    out, labels = inject_journal_anomalies(org, seed=1, n_global=6, n_pair_local=0,
                                           n_recurring_local=0, local_entries=[dep_cash])
    i = out.index(dep_cash)
    assert labels[i] == "local"


def test_journal_zero_anomalies():
    (org,) = gen_journal_corpus(1, [50], seed=5)
    out, labels = inject_journal_anomalies(org, seed=1, n_global=0, n_pair_local=0, n_recurring_local=0)
    assert out == org and set(labels) == {"normal"}


def test_journal_too_small():
    with pytest.raises(ValueError):
        inject_journal_anomalies([JournalEntry("A", "B", 1.0)] * 5, seed=0)


def test_journal_anomaly_properties():
    corpus = gen_journal_corpus(2, [6000, 1500], seed=7)
    train, test = corpus[0], corpus[1]
    out, labels = inject_journal_anomalies(test, seed=3, reference=train + test)
    assert labels.count("global") == 6
    assert labels.count("local") >= 8
    seen = {(e.debit, e.credit) for e in train + test}
    recurring_hits = 0
    for before, after, lab in zip(test, out, labels):
        if lab == "global":
            assert after.amount >= 3 * before.amount
            assert (after.debit, after.credit) == (before.debit, before.credit)
        elif lab == "local":
            if (after.debit, after.credit) not in seen:
                continue
            recurring_hits += 1
            ratio = after.amount / before.amount
            assert ratio == pytest.approx(0.1, rel=0.01) or ratio == pytest.approx(10.0, rel=0.01)
        else:
            assert after == before
    assert recurring_hits == 4
