"""Analysis: pass@k closed form, histograms, class stats, tables, exports.

pass@k oracle (hand binomial arithmetic, n=5):
c=2, k=1: 1 - C(3,1)/C(5,1) = 1 - 3/5 = 0.4
c=2, k=5: 1 - C(3,5)/C(5,5) = 1 (C(3,5) = 0)
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from earl import analysis as an
from earl import policy as pol
from earl.errors import DomainError
from earl.minirtl.vocab import DEFAULT_VOCAB
from earl.seeds import rng_for


# --- pass@k -------------------------------------------------------------------

def test_pass_at_k_exact_table():
    expected = {
        (5, 0, 1): 0.0, (5, 1, 1): 0.2, (5, 2, 1): 0.4, (5, 3, 1): 0.6,
        (5, 4, 1): 0.8, (5, 5, 1): 1.0,
        (5, 0, 5): 0.0, (5, 1, 5): 1.0, (5, 2, 5): 1.0, (5, 3, 5): 1.0,
        (5, 4, 5): 1.0, (5, 5, 5): 1.0,
    }
    for (n, c, k), want in expected.items():
        assert abs(an.pass_at_k(n, c, k) - want) < 1e-12, (n, c, k)


def test_pass_at_k_monotone_in_k():
    for c in range(6):
        values = [an.pass_at_k(5, c, k) for k in range(1, 6)]
        assert values == sorted(values)
        assert (an.pass_at_k(5, c, 5) == 1.0) == (c > 0)


def test_pass_at_k_rejects_bad_args():
    for n, c, k in [(5, 6, 1), (5, -1, 1), (5, 2, 0), (5, 2, 6)]:
        with pytest.raises(DomainError):
            an.pass_at_k(n, c, k)
    with pytest.raises(DomainError):
        an.pass_at_k(5.0, 2, 1)


def test_pass_at_k_monte_carlo_agreement():
    rng = rng_for("mc-passk")
    n = 5
    for c in range(n + 1):
        for k in (1, 2, 5):
            hits = 0
            trials = 100_000
            wins = rng.random((trials, n)).argsort(axis=1) < k
            # choose k of n uniformly; success iff any chosen index < c
            hits = (wins[:, :c].any(axis=1)).sum()
            assert abs(hits / trials - an.pass_at_k(n, c, k)) < 0.01


# --- histogram ----------------------------------------------------------------

def test_histogram_all_zero_entropies():
    edges = [0.0, 0.15, math.log(DEFAULT_VOCAB.size)]
    counts = an.entropy_histogram(np.zeros(37), edges)
    assert counts.tolist() == [37, 0]


def test_histogram_empty_input():
    counts = an.entropy_histogram([], [0.0, 1.0, 2.0])
    assert counts.tolist() == [0, 0]


def test_histogram_conserves_total_and_closes_last_bin():
    edges = an.default_bin_edges(DEFAULT_VOCAB)
    top = math.log(DEFAULT_VOCAB.size)
    vals = [0.0, 0.05, top, top - 1e-9, 1.0]
    counts = an.entropy_histogram(vals, edges)
    assert counts.sum() == len(vals)
    assert counts[-1] >= 1  # ln V sits inside the closed last bin


def test_histogram_rejects_bad_edges():
    with pytest.raises(DomainError):
        an.entropy_histogram([0.1], [0.0, 0.0, 1.0])
    with pytest.raises(DomainError):
        an.entropy_histogram([0.1], [1.0])


def test_near_uniform_init_mass_in_last_bin():
    p = pol.init_params(DEFAULT_VOCAB, 2, 0)
    r = pol.sample_rollout(p, (DEFAULT_VOCAB.id("BOS"),), 1.0, 30,
                           rng_for(0))
    edges = [0.0, 0.15, math.log(DEFAULT_VOCAB.size)]
    counts = an.entropy_histogram(r.entropies, edges)
    assert counts[-1] == len(r.entropies)


# --- class stats and token tables ---------------------------------------------

def _rollout(tokens, entropies):
    n = len(tokens)
    return pol.Rollout((DEFAULT_VOCAB.id("BOS"),), tuple(tokens),
                       np.full(n, -1.0), np.asarray(entropies, dtype=float),
                       1.0, False)


def test_class_map_total_and_expected_members():
    cm = an.default_token_classes()
    assert len(cm.classes) == DEFAULT_VOCAB.size
    assert cm.class_of(DEFAULT_VOCAB.id("always")) == "process-sensitivity"
    assert cm.class_of(DEFAULT_VOCAB.id("if")) == "control-flow"
    assert cm.class_of(DEFAULT_VOCAB.id("assign")) == "binding-connection"
    assert cm.class_of(DEFAULT_VOCAB.id("module")) == "module-head"
    assert cm.class_of(DEFAULT_VOCAB.id("endmodule")) == \
        "structural-terminator"
    assert cm.class_of(DEFAULT_VOCAB.id("a")) == "identifier"
    assert cm.class_of(DEFAULT_VOCAB.id("0")) == "literal"


def test_class_stats_two_level_synthetic():
    cm = an.default_token_classes()
    iftok, endtok = DEFAULT_VOCAB.id("if"), DEFAULT_VOCAB.id("end")
    r = _rollout([iftok, endtok, iftok, endtok], [0.9, 0.1, 0.9, 0.1])
    stats = an.token_class_stats([r], cm)
    assert stats["control-flow"]["mean"] == pytest.approx(0.9)
    assert stats["structural-terminator"]["mean"] == pytest.approx(0.1)
    assert stats["literal"]["count"] == 0
    assert stats["literal"]["mean"] is None


def test_class_stats_requires_rollouts():
    with pytest.raises(DomainError):
        an.token_class_stats([], an.default_token_classes())


def test_top_tokens_frequency_floor_and_ranking():
    iftok, endtok = DEFAULT_VOCAB.id("if"), DEFAULT_VOCAB.id("end")
    r = _rollout([iftok, endtok] * 3, [0.9, 0.1] * 3)
    hi, lo = an.top_tokens_by_entropy([r], k=1, min_frequency=2)
    assert hi[0][0] == "if" and hi[0][1] == pytest.approx(0.9)
    assert lo[0][0] == "end"
    hi, lo = an.top_tokens_by_entropy([r], k=5, min_frequency=10)
    assert hi == [] and lo == []


def test_heatmap_projection_is_bitwise():
    r = _rollout([3, 4, 5], [0.25, 0.5, 0.75])
    records = an.heatmap_export(r)
    assert len(records) == 3
    assert [h for _, _, h in records] == list(r.entropies)
    csv = an.heatmap_to_csv(records)
    assert csv.splitlines()[0] == "position,token,entropy"
    svg = an.heatmap_to_svg(records)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


# --- eval suite and ablation format -------------------------------------------

def _mini_eval():
    from earl.taskgen import CorpusConfig, build_corpus
    corpus = build_corpus(CorpusConfig({"combinational-easy": 5},
                                       heldout_fraction=0.4), 23)
    p = pol.init_params(DEFAULT_VOCAB, 4, 0)
    return p, corpus.heldout()


def test_eval_suite_shape_and_syntax_dominates_functional():
    p, tasks = _mini_eval()
    report = an.eval_suite(p, tasks, n=5, ks=(1, 5), seed=0, max_len=30)
    assert len(report.tasks) == len(tasks)
    for t in report.tasks:
        for k in (1, 5):
            assert t.syn_at(k) >= t.pass_at(k)


def test_eval_suite_deterministic():
    p, tasks = _mini_eval()
    a = an.eval_suite(p, tasks, n=3, ks=(1,), seed=7, max_len=30)
    b = an.eval_suite(p, tasks, n=3, ks=(1,), seed=7, max_len=30)
    assert an.eval_to_csv(a) == an.eval_to_csv(b)


def test_eval_suite_rejects_empty_and_small_n():
    p, tasks = _mini_eval()
    with pytest.raises(DomainError):
        an.eval_suite(p, [], n=5)
    with pytest.raises(DomainError):
        an.eval_suite(p, tasks, n=3, ks=(1, 5))


def test_ablation_csv_header():
    rows = [an.AblationRow(0.0, 0.1, 0.2, 0.3, 0.2, 1.0)]
    text = an.ablation_to_csv(rows)
    assert text.splitlines()[0] == "rho,pass@1,pass@5,syn@5,func@5"


def test_ablation_failed_cell_marks_nan_without_abort():
    from earl import rlcore
    p, tasks = _mini_eval()
    cfg = rlcore.RlConfig(steps=1, batch_prompts=1, group_size=2,
                          max_resample_attempts=0, max_response_len=20)
    # rho validation passes but training on an empty task list fails per cell
    rows = an.ablation_grid(cfg, p, [], tasks, rhos=(0.0, 0.8), seeds=(0,),
                            n=2)
    assert len(rows) == 2
    assert all(r.failed and math.isnan(r.pass1) for r in rows)
