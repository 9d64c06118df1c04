from fractions import Fraction

import pytest

from lsksr.complexity import (DEFAULT_WIDTHS, SEPARABLE, SQUARE, TOY_WIDTHS, FlopCount,
                              LayerSpec, ModelSpec, comparison_report, flop_conv,
                              flop_model, flop_ratios, layer_params, model_spec,
                              param_count, param_ratio, table_grid)
from lsksr.errors import InvalidSpecError

GRID = 512 * 512

# Frozen expected values for the six reference architectures at scale 2,
# derived by hand from the layer shapes (see tests below for the arithmetic).
EXPECTED_PARAMS = {
    "SRCNN": 57_281,
    "S-SRCNN": 21_473,       # includes the 32 extra-layer bias terms
    "ESPCN": 21_284,
    "S-ESPCN": 12_100,
    "VDSR-B1": 38_145,
    "S-VDSR-B1": 25_921,
    "VDSR-B2": 75_073,
    "S-VDSR-B2": 50_625,
    "VDSR-B3": 112_001,
    "S-VDSR-B3": 75_329,
}


def spec(name):
    return model_spec(name, scale=2)


def test_layer_params_square_by_hand():
    # 64 kernels of 1x9x9 plus 64 biases
    assert layer_params(LayerSpec(SQUARE, 1, 64, 9)) == 1 * 81 * 64 + 64 == 5248


def test_layer_params_separable_by_hand():
    # vertical 64->32 of length 5, horizontal 32->32 of length 5, 32+32 biases
    l = LayerSpec(SEPARABLE, 64, 32, 5, c_e=32)
    assert layer_params(l) == 64 * 5 * 32 + 32 * 5 * 32 + 32 + 32 == 15_424
    assert layer_params(l, count_extra_bias=False) == 15_392


@pytest.mark.parametrize("name,expected", sorted(EXPECTED_PARAMS.items()))
def test_param_counts(name, expected):
    assert param_count(spec(name)) == expected


def test_srcnn_param_arithmetic():
    # conv1 1->64 k9, conv2 64->32 k5, conv3 32->1 k5
    assert param_count(spec("SRCNN")) == (81 * 64 + 64) + (64 * 25 * 32 + 32) + (32 * 25 + 1)


def test_param_ratio_exact():
    assert param_ratio(64, 64, 64, 3) == Fraction(2, 3)
    assert param_ratio(64, 64, 64, 5) == Fraction(2, 5)
    assert param_ratio(8, 8, 8, 9) == Fraction(2, 9)
    # general form: (c_prev + c_next) * c_e / (k * c_prev * c_next)
    assert param_ratio(64, 32, 32, 5) == Fraction((64 + 32) * 32, 5 * 64 * 32)


def test_flop_ratios_exact():
    alpha, beta = flop_ratios(3)
    assert (alpha, beta) == (Fraction(3, 2), Fraction(2, 1))
    alpha, beta = flop_ratios(9)
    assert (alpha, beta) == (Fraction(9, 2), Fraction(5, 1))
    # finite-grid beta approaches (k+1)/2 from above
    _, beta_fin = flop_ratios(3, wh=GRID)
    assert abs(float(beta_fin) - 2.0) < 1e-4
    assert beta_fin != Fraction(2, 1)


def test_flopcount_integer_arithmetic():
    a = FlopCount(3, 4) + FlopCount(5, 6)
    assert (a.mul, a.add, a.total) == (8, 10, 18)
    assert isinstance(a.mul, int)


def test_flop_conv_square_by_hand():
    fc = flop_conv(3, 2, 4, 10, 10, SQUARE)
    assert fc.mul == 2 * 4 * 100 * 9
    assert fc.add == 2 * 4 * (100 * 8 + 1)


def test_flop_conv_separable_by_hand():
    fc = flop_conv(3, 2, 4, 10, 10, SEPARABLE, c_e=5)
    banks = 2 * 5 + 5 * 4
    assert fc.mul == banks * 100 * 3
    assert fc.add == banks * (100 * 2 + 1)


def test_flop_conv_bias_adds_fused_macs():
    base = flop_conv(3, 1, 4, 8, 8, SQUARE)
    biased = flop_conv(3, 1, 4, 8, 8, SQUARE, bias=True)
    assert biased.mul - base.mul == 4 * 64
    assert biased.add - base.add == 4 * 64


def test_published_table_reproduced_within_1pct():
    # Published figures: params (K) and FLOPs (G) for a 512x512 conv grid.
    published = {
        "SRCNN": (57.28, 15.01),
        "S-SRCNN": (21.47, 5.63),
        "ESPCN": (21.28, 5.58),
        "S-ESPCN": (12.10, 3.17),
        "VDSR-B1": (38.14, 10.00),
        "S-VDSR-B1": (25.92, 6.79),
        "VDSR-B2": (75.07, 19.68),
        "S-VDSR-B2": (50.62, 13.27),
        "VDSR-B3": (112.00, 29.36),
        "S-VDSR-B3": (75.33, 19.74),
    }
    for name, (pk, fg) in published.items():
        s = spec(name)
        params_k = param_count(s) / 1e3
        flops_g = flop_model(s, *table_grid(s)).mul / 1e9
        assert abs(params_k - pk) / pk <= 0.01, name
        assert abs(flops_g - fg) / fg <= 0.01, name


def test_table_grid_charges_espcn_conv_resolution():
    s = spec("ESPCN")
    assert table_grid(s) == (1024, 1024)
    assert table_grid(spec("SRCNN")) == (512, 512)


def test_post_upsampling_flops_at_low_res():
    s = spec("ESPCN")
    # convs run at out/scale; doubling output side quadruples cost
    f1 = flop_model(s, 64, 64)
    f2 = flop_model(s, 128, 128)
    assert f2.mul > 3.9 * f1.mul


def test_separable_models_swap_only_middle_layers():
    for a, b in (("SRCNN", "S-SRCNN"), ("ESPCN", "S-ESPCN"), ("VDSR-B2", "S-VDSR-B2")):
        sa, sb = spec(a), spec(b)
        assert sa.layers[0] == sb.layers[0]
        assert sa.layers[-1] == sb.layers[-1]
        for mid in sb.layers[1:-1]:
            assert mid.kind == SEPARABLE and mid.c_e == mid.c_out


def test_toy_widths():
    s = model_spec("S-SRCNN", widths=TOY_WIDTHS)
    assert s.layers[0].c_out == 16 and s.layers[1].c_out == 8
    assert param_count(s) < param_count(spec("S-SRCNN"))


def test_comparison_report_declines():
    rows = comparison_report([(spec("SRCNN"), spec("S-SRCNN")),
                              (spec("VDSR-B3"), spec("S-VDSR-B3"))])
    assert rows[0].decline_params_pct == pytest.approx(100 * (1 - 21_473 / 57_281))
    assert 0 < rows[1].decline_flops_pct < 100


def test_spec_validation():
    with pytest.raises(InvalidSpecError):
        LayerSpec(SQUARE, 1, 4, 4)           # even kernel
    with pytest.raises(InvalidSpecError):
        LayerSpec(SEPARABLE, 4, 4, 3)        # missing c_e
    with pytest.raises(InvalidSpecError):
        ModelSpec("bad", (LayerSpec(SQUARE, 1, 4, 3), LayerSpec(SQUARE, 8, 1, 3)))
    with pytest.raises(InvalidSpecError):
        model_spec("RESNET")
    with pytest.raises(InvalidSpecError):
        model_spec("ESPCN", scale=1)


def test_default_widths():
    assert DEFAULT_WIDTHS == {"n1": 64, "n2": 32, "vdsr": 64}
