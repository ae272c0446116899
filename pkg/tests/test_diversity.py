"""Histograms and Jensen-Shannon diversity against brute-force oracles."""

import math
import random

import numpy as np
import pytest
from scipy.spatial.distance import jensenshannon

from onnxnet import (
    GraphBuilder,
    between_space_diversity,
    jsd,
    op_histogram,
    within_space_diversity,
)
from onnxnet.diversity import OpHistogram, pooled_histogram
from onnxnet.exceptions import EmptyHistogram, InsufficientSamples


def hist(**probs) -> OpHistogram:
    return OpHistogram(probs=dict(probs), counts={})


def random_hist(rng: random.Random, vocab_size: int = 6) -> OpHistogram:
    ops = [f"Op{i}" for i in range(vocab_size)]
    chosen = rng.sample(ops, rng.randint(1, vocab_size))
    weights = [rng.random() + 1e-9 for _ in chosen]
    total = sum(weights)
    return hist(**{op: w / total for op, w in zip(chosen, weights)})


def reference_jsd(p: dict, q: dict) -> float:
    """Definitional double KL, written independently of the implementation."""
    vocab = set(p) | set(q)
    kl_pm = 0.0
    kl_qm = 0.0
    for op in vocab:
        pi, qi = p.get(op, 0.0), q.get(op, 0.0)
        m = (pi + qi) / 2
        if pi:
            kl_pm += pi * math.log2(pi / m)
        if qi:
            kl_qm += qi * math.log2(qi / m)
    return 0.5 * kl_pm + 0.5 * kl_qm


class TestOpHistogram:
    def test_counts_exclude_constant(self):
        b = GraphBuilder()
        b.input("x", (1, 2, 4, 4))
        b.param("w", np.ones((2, 2, 1, 1), dtype=np.float32))
        (c1,) = b.node("Conv", ["x", "w"], kernel_shape=(1, 1), pads=(0, 0, 0, 0),
                       strides=(1, 1), dilations=(1, 1))
        (r1,) = b.node("Relu", [c1])
        (c2,) = b.node("Conv", [r1, "w"], kernel_shape=(1, 1), pads=(0, 0, 0, 0),
                       strides=(1, 1), dilations=(1, 1))
        (k,) = b.node("Constant", [], value=np.asarray([1], dtype=np.int64))
        (y,) = b.node("Reshape", [c2, k])
        b.output(y)
        h = op_histogram(b.build())
        assert h.probs["Conv"] == pytest.approx(2 / 4)
        assert h.probs["Relu"] == pytest.approx(1 / 4)
        assert h.probs["Reshape"] == pytest.approx(1 / 4)
        assert "Constant" not in h.vocab

    def test_single_op(self):
        b = GraphBuilder()
        b.input("x", (1, 3))
        (y,) = b.node("Relu", ["x"])
        b.output(y)
        assert op_histogram(b.build()).probs == {"Relu": 1.0}

    def test_block_pattern_hand_count(self):
        # conv stem + 2x (concat of 4 branches -> conv -> relu -> 2 maxpools)
        b = GraphBuilder()
        b.input("x", (1, 3, 16, 16))
        b.param("w0", np.ones((8, 3, 1, 1), dtype=np.float32))
        (v,) = b.node("Conv", ["x", "w0"], kernel_shape=(1, 1), pads=(0, 0, 0, 0),
                      strides=(1, 1), dilations=(1, 1))
        for i in range(2):
            (cat,) = b.node("Concat", [v, v, v, v], axis=1)
            b.param(f"w{i + 1}", np.ones((8, 32, 1, 1), dtype=np.float32))
            (c,) = b.node("Conv", [cat, f"w{i + 1}"], kernel_shape=(1, 1),
                          pads=(0, 0, 0, 0), strides=(1, 1), dilations=(1, 1))
            (r,) = b.node("Relu", [c])
            (m1,) = b.node("MaxPool", [r], kernel_shape=(3, 3), pads=(1, 1, 1, 1),
                           strides=(1, 1))
            (v,) = b.node("MaxPool", [m1], kernel_shape=(3, 3), pads=(1, 1, 1, 1),
                          strides=(1, 1))
        b.output(v)
        h = op_histogram(b.build())
        # 11 nodes: 3 Conv, 2 Concat, 2 Relu, 4 MaxPool
        assert h.counts == {"Concat": 2, "Conv": 3, "MaxPool": 4, "Relu": 2}
        assert math.isclose(sum(h.probs.values()), 1.0, abs_tol=1e-12)

    def test_empty_histogram(self):
        b = GraphBuilder()
        b.input("x", (1, 3))
        b.output("x")
        with pytest.raises(EmptyHistogram):
            op_histogram(b.build())


class TestJsd:
    def test_identical_is_zero(self):
        p = hist(Conv=0.5, Relu=0.5)
        assert jsd(p, p) == 0.0

    def test_disjoint_is_one(self):
        assert jsd(hist(A=1.0), hist(B=1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_hand_case(self):
        value = jsd(hist(A=1.0), hist(A=0.5, B=0.5))
        assert value == pytest.approx(0.311278124, abs=1e-9)

    def test_symmetry_exact(self):
        rng = random.Random(0)
        for _ in range(200):
            p, q = random_hist(rng), random_hist(rng)
            assert jsd(p, q) == jsd(q, p)

    def test_bounds_on_random_pairs(self):
        rng = random.Random(1)
        for _ in range(2000):
            v = jsd(random_hist(rng), random_hist(rng))
            assert 0.0 <= v <= 1.0

    def test_matches_definitional_oracle(self):
        rng = random.Random(2)
        for _ in range(300):
            p, q = random_hist(rng), random_hist(rng)
            assert jsd(p, q) == pytest.approx(reference_jsd(p.probs, q.probs), abs=1e-12)

    def test_matches_scipy(self):
        rng = random.Random(3)
        for _ in range(100):
            p, q = random_hist(rng), random_hist(rng)
            vocab = sorted(p.vocab | q.vocab)
            pv = [p.probs.get(op, 0.0) for op in vocab]
            qv = [q.probs.get(op, 0.0) for op in vocab]
            expect = jensenshannon(pv, qv, base=2) ** 2
            assert jsd(p, q) == pytest.approx(expect, abs=1e-10)

    def test_zero_probability_keys_ignored(self):
        p = hist(A=0.7, B=0.3)
        q = hist(A=0.2, B=0.8)
        padded = hist(A=0.7, B=0.3, C=0.0, D=0.0)
        assert jsd(p, q) == jsd(padded, q)

    def test_identity_of_indiscernibles(self):
        p = hist(A=0.7, B=0.3)
        q = hist(A=0.7, B=0.3)
        assert jsd(p, q) <= 1e-12
        r = hist(A=0.7000001, B=0.2999999)
        assert jsd(p, r) > 0.0


class TestWithinSpace:
    def test_identical_histograms_zero(self):
        p = hist(Conv=0.6, Relu=0.4)
        report = within_space_diversity([p, p, p, p])
        assert report.value_bits == 0.0
        assert report.pair_count == 6

    def test_two_disjoint_histograms_one(self):
        report = within_space_diversity([hist(A=1.0), hist(B=1.0)])
        assert report.value_bits == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force_double_loop(self):
        rng = random.Random(4)
        hists = [random_hist(rng) for _ in range(5)]
        report = within_space_diversity(hists)
        acc = []
        for i in range(len(hists)):
            for j in range(i + 1, len(hists)):
                acc.append(reference_jsd(hists[i].probs, hists[j].probs))
        assert report.value_bits == pytest.approx(sum(acc) / len(acc), abs=1e-12)

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamples):
            within_space_diversity([hist(A=1.0)])


class TestBetweenSpace:
    def test_same_lists_zero(self):
        hs = [
            OpHistogram.from_counts({"A": 1, "B": 1}),
            OpHistogram.from_counts({"A": 1, "B": 3}),
        ]
        report = between_space_diversity(hs, hs)
        assert report.value_bits == 0.0
        assert report.mode == "between"

    def test_disjoint_vocabularies_one(self):
        report = between_space_diversity(
            [OpHistogram.from_counts({"A": 2})], [OpHistogram.from_counts({"B": 5})]
        )
        assert report.value_bits == pytest.approx(1.0, abs=1e-12)

    def test_count_pooling_matches_hand_computation(self):
        a1 = OpHistogram.from_counts({"Conv": 3, "Relu": 1})
        a2 = OpHistogram.from_counts({"Conv": 1, "Add": 1})
        b1 = OpHistogram.from_counts({"Gemm": 2})
        b2 = OpHistogram.from_counts({"Gemm": 1, "Relu": 1})
        report = between_space_diversity([a1, a2], [b1, b2])
        pool_a = {"Conv": 4 / 6, "Relu": 1 / 6, "Add": 1 / 6}
        pool_b = {"Gemm": 3 / 4, "Relu": 1 / 4}
        assert report.value_bits == pytest.approx(reference_jsd(pool_a, pool_b), abs=1e-12)

    def test_mean_pooling_alternative(self):
        a1 = OpHistogram.from_counts({"Conv": 3, "Relu": 1})
        a2 = OpHistogram.from_counts({"Conv": 1, "Add": 1})
        pooled = pooled_histogram([a1, a2], by_counts=False)
        assert pooled.probs["Conv"] == pytest.approx((0.75 + 0.5) / 2)

    def test_report_json_schema(self):
        report = between_space_diversity(
            [OpHistogram.from_counts({"A": 1})],
            [OpHistogram.from_counts({"B": 1})],
            space_a="s1",
            space_b="s2",
            seed=7,
        )
        assert sorted(report.to_json()) == [
            "mode", "n", "pairs", "seed", "space_a", "space_b", "value_bits",
        ]
