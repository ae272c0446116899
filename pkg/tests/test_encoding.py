"""Text encoding: golden lines, grammar conformance, variant behavior."""

import re

import numpy as np
import pytest

from onnxnet import (
    EncodingConfig,
    GraphBuilder,
    TextEncoder,
    VARIANTS,
    encode,
    encode_bytes,
    encode_file,
    infer_shapes,
    prepare_graph,
    parse_onnx,
    random_instance,
    validate_encoding,
)
from onnxnet.exceptions import MalformedFile

from onnx_oracle import single_conv_model

GOLDEN_CONV_FULL = (
    "Conv(1x3x32x32, 128x3x3x3, 128)"
    "(dilations=1,kernel_shape=3,pads=1,strides=1)"
    " --> Out:1x128x32x32"
)


def classifier_tail_graph():
    """Relu fan-out into a ReduceMean -> Gemm classifier tail."""
    b = GraphBuilder()
    b.input("x", (1, 512, 8, 8))
    (v,) = b.node("Relu", ["x"])
    (rm,) = b.node("ReduceMean", [v], axes=(2, 3))
    b.param("w", np.ones((10, 512), dtype=np.float32))
    b.param("c", np.ones((10,), dtype=np.float32))
    (gemm,) = b.node("Gemm", [rm, "w", "c"])
    (gap,) = b.node("GlobalAveragePool", [v])
    (flat,) = b.node("Flatten", [gap], axis=1)
    b.output(gemm, flat)
    return b.build()


class TestGoldenLines:
    def test_single_conv_full_golden_line(self, conv_model_bytes):
        arch = encode_bytes(conv_model_bytes, EncodingConfig.full())
        assert arch.text == GOLDEN_CONV_FULL + "\n"
        assert arch.line_count == 1

    def test_single_conv_base(self, conv_model_bytes):
        arch = encode_bytes(conv_model_bytes, EncodingConfig.base())
        assert arch.text == "Conv --> Out\n"

    def test_reduce_mean_gemm_line(self):
        g = infer_shapes(classifier_tail_graph())
        cfg = EncodingConfig(include_inputs=True, include_parameters=True,
                             include_out_shape=False)
        lines = encode(g, cfg).text.splitlines()
        assert lines[1] == "ReduceMean(Value1)(axes=[2,3]) --> Gemm(prev, 10x512, 10) --> Out"
        assert lines[0] == "Relu(1x512x8x8) --> Value1"
        assert lines[2] == "GlobalAveragePool(Value1) --> Flatten(prev)(axis=1) --> Out2"

    def test_chain_line_uses_prev_for_internal_edges(self):
        b = GraphBuilder()
        b.input("x", (1, 2, 6, 6))
        b.param("w", np.ones((2, 2, 1, 1), dtype=np.float32))
        (c,) = b.node("Conv", ["x", "w"], kernel_shape=(1, 1), pads=(0, 0, 0, 0),
                      strides=(1, 1), dilations=(1, 1))
        (r,) = b.node("Relu", [c])
        (m,) = b.node("MaxPool", [r], kernel_shape=(2, 2), pads=(0, 0, 0, 0),
                      strides=(2, 2))
        b.output(m)
        g = infer_shapes(b.build())
        line = encode(g, EncodingConfig.full()).text.splitlines()[0]
        assert line == (
            "Conv(1x2x6x6, 2x2x1x1)(dilations=1,kernel_shape=1,pads=0,strides=1)"
            " --> Relu(prev)"
            " --> MaxPool(prev)(kernel_shape=2,pads=0,strides=2)"
            " --> Out:1x2x3x3"
        )

    def test_non_uniform_int_list_renders_bracketed(self):
        b = GraphBuilder()
        b.input("x", (1, 4, 6, 6))
        (y,) = b.node("ReduceMean", ["x"], axes=(2, 3), keepdims=0)
        b.output(y)
        g = infer_shapes(b.build())
        line = encode(g, EncodingConfig.full()).text.splitlines()[0]
        assert "(axes=[2,3],keepdims=0)" in line


class TestVariants:
    def test_all_flags_off_is_base_all_on_is_full(self):
        assert VARIANTS["base"] == EncodingConfig.base()
        assert VARIANTS["full"] == EncodingConfig.full()

    @pytest.mark.parametrize("seed", range(30))
    def test_token_monotonicity_and_conformance(self, seed):
        g, _, _ = random_instance(seed)
        g = prepare_graph(g)
        tokens = {}
        for name, cfg in VARIANTS.items():
            arch = encode(g, cfg)
            assert validate_encoding(arch.text) == []
            tokens[name] = arch.token_estimate
        for single in ("inputs", "parameters", "outshape"):
            assert tokens["base"] <= tokens[single] <= tokens["full"]

    @pytest.mark.parametrize("seed", range(10))
    def test_base_recoverable_from_full(self, seed):
        g, _, _ = random_instance(seed)
        g = prepare_graph(g)
        full = encode(g, EncodingConfig.full()).text
        base = encode(g, EncodingConfig.base()).text
        stripped = re.sub(r"\([^()]*\)", "", full)
        stripped = re.sub(r":(?:scalar|[0-9?]+(?:x[0-9?]+)*)", "", stripped)
        assert stripped == base

    @pytest.mark.parametrize("seed", range(10))
    def test_single_assignment_property(self, seed):
        g, _, _ = random_instance(seed)
        g = prepare_graph(g)
        text = encode(g, EncodingConfig.full()).text
        defined: set[str] = set()
        for line in text.splitlines():
            segments = line.split(" --> ")
            for clause in segments[:-1]:
                for ref in re.findall(r"Value\d+", clause):
                    assert ref in defined, f"{ref} used before defined"
            for out in segments[-1].split(", "):
                ref = out.split(":")[0]
                if ref.startswith("Value"):
                    assert ref not in defined, f"{ref} defined twice"
                    defined.add(ref)


class TestValidator:
    def test_missing_separator(self):
        violations = validate_encoding("Conv Relu\n")
        assert len(violations) == 1
        assert violations[0].line_no == 1

    def test_unspaced_separator_rejected(self):
        assert validate_encoding("Conv-->Out\n") != []

    def test_bad_output_label(self):
        assert validate_encoding("Conv --> Banana:1x2\n") != []
        assert validate_encoding("Conv --> banana\n") != []
        assert validate_encoding("Conv --> Out:1x2\n") == []

    def test_accepts_multi_output_lines(self):
        assert validate_encoding("MaxPool(Value1) --> Value2:1x2, Value3:1x2\n") == []

    def test_accepts_float_and_token_attrs(self):
        line = "BatchNormalization(Value1, 4, 4, 4, 4)(epsilon=1e-05,momentum=0.9) --> Out\n"
        assert validate_encoding(line) == []
        assert validate_encoding("Pad(Value1)(mode=reflect) --> Out\n") == []

    def test_empty_text_is_valid(self):
        assert validate_encoding("") == []


class TestFilePipeline:
    def test_encode_file_equals_encode_bytes(self, tmp_path, conv_model_bytes):
        path = tmp_path / "net.onnx"
        path.write_bytes(conv_model_bytes)
        via_file = encode_file(path, EncodingConfig.full())
        via_bytes = encode_bytes(conv_model_bytes, EncodingConfig.full())
        assert via_file == via_bytes

    def test_malformed_file_propagates(self, tmp_path):
        path = tmp_path / "junk.onnx"
        path.write_bytes(b"\x00\x01junk")
        with pytest.raises(MalformedFile):
            encode_file(path)

    def test_reencoding_is_byte_identical(self, tmp_path):
        path = tmp_path / "net.onnx"
        path.write_bytes(single_conv_model(filters=16))
        first = encode_file(path)
        second = encode_file(path)
        assert first.text == second.text

    def test_simplification_changes_surface_forms(self):
        # Identity + unfused MatMul/Add collapse before encoding
        b = GraphBuilder()
        b.input("x", (1, 8))
        (i1,) = b.node("Identity", ["x"])
        b.param("w", np.ones((8, 4), dtype=np.float32))
        (mm,) = b.node("MatMul", [i1, "w"])
        b.param("c", np.ones((4,), dtype=np.float32))
        (y,) = b.node("Add", [mm, "c"])
        b.output(y)
        g = prepare_graph(b.build())
        line = encode(g, EncodingConfig.full()).text.splitlines()[0]
        assert line == "Gemm(1x8, 4x8, 4)(transB=1) --> Out:1x4"


class TestTextEncoderEstimator:
    def test_transform_paths_and_bytes(self, tmp_path, conv_model_bytes):
        path = tmp_path / "net.onnx"
        path.write_bytes(conv_model_bytes)
        enc = TextEncoder(variant="full").fit()
        texts = enc.transform([str(path), conv_model_bytes])
        assert texts[0] == texts[1] == GOLDEN_CONV_FULL + "\n"

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            TextEncoder(variant="everything").fit()

    def test_sklearn_params_round_trip(self):
        from sklearn.base import clone

        enc = TextEncoder(variant="base")
        assert enc.get_params() == {"variant": "base"}
        twin = clone(enc)
        assert twin.get_params() == enc.get_params()
