import math

import numpy as np
import pytest

import oracles
from models.anchor_models import (
    DEFAULT_STRIDES,
    AnchorIndex,
    LevelSpec,
    PyramidConfig,
    format_aspect_ratio,
    parse_aspect_ratio,
)
from sampling.errors import ConfigError
from sampling.pyramid import generate_anchors


def test_default_pyramid_is_p3_to_p7_single_square_anchor():
    config = PyramidConfig()
    assert config.strides == DEFAULT_STRIDES == (8, 16, 32, 64, 128)
    assert all(level.templates_per_location == 1 for level in config.levels)
    assert all(level.scale_multiplier == 8.0 for level in config.levels)


def test_anchor_counts_for_800_by_1333():
    anchors = generate_anchors(1333, 800)
    expected = [
        math.ceil(800 / s) * math.ceil(1333 / s) for s in (8, 16, 32, 64, 128)
    ]
    assert [anchors.level_size(i) for i in range(5)] == expected
    assert anchors.num_anchors == sum(expected)
    assert anchors.grid_shapes[0] == (100, 167, 1)


def test_anchor_is_8s_square_centred_on_its_cell():
    anchors = generate_anchors(64, 64, PyramidConfig.default(strides=(16,)))
    index = anchors.index_of(0, row=1, col=2)
    np.testing.assert_array_equal(anchors.centers[index], [40.0, 24.0])
    np.testing.assert_array_equal(anchors.boxes[index], [40 - 64, 24 - 64, 40 + 64, 24 + 64])


def test_index_order_is_level_row_col_template():
    config = PyramidConfig.default(strides=(8, 16), aspect_ratios=(0.5, 1.0, 2.0), scales_per_octave=3)
    anchors = generate_anchors(40, 24, config)
    assert anchors.grid_shapes == ((3, 5, 9), (2, 3, 9))
    for index in range(anchors.num_anchors):
        located = anchors.locate(index)
        assert anchors.index_of(*located) == index
    assert anchors.locate(0) == AnchorIndex(0, 0, 0, 0)
    assert anchors.locate(9) == AnchorIndex(0, 0, 1, 0)
    assert anchors.locate(3 * 5 * 9) == AnchorIndex(1, 0, 0, 0)
    assert list(anchors.level_ids[:3]) == [0, 0, 0]


def test_templates_are_scale_major_then_ratio():
    spec = LevelSpec(stride=8, scale_multiplier=4, aspect_ratios=(0.5, 2.0), scales_per_octave=2)
    sizes = spec.template_sizes()
    side0, side1 = 32.0, 32.0 * 2 ** 0.5
    assert sizes[0] == pytest.approx((side0 * 0.5 ** 0.5, side0 / 0.5 ** 0.5))
    assert sizes[1] == pytest.approx((side0 * 2 ** 0.5, side0 / 2 ** 0.5))
    assert sizes[2] == pytest.approx((side1 * 0.5 ** 0.5, side1 / 0.5 ** 0.5))
    # every template of one scale has the same area
    assert sizes[0][0] * sizes[0][1] == pytest.approx(side0 * side0)


@pytest.mark.parametrize("width,height", [(128, 128), (100, 37), (1, 1), (257, 130)])
def test_matches_naive_tiling(width, height):
    config = PyramidConfig.default(strides=(8, 32), scale_multiplier=5, aspect_ratios=(0.25, 1.0), scales_per_octave=2)
    anchors = generate_anchors(width, height, config)
    naive = oracles.naive_anchors(width, height, (8, 32), 5.0, (0.25, 1.0), 2)
    assert anchors.num_anchors == len(naive)
    np.testing.assert_array_equal(anchors.boxes, np.array([box for box, _, _ in naive]))
    np.testing.assert_array_equal(anchors.centers, np.array([c for _, c, _ in naive]))
    np.testing.assert_array_equal(anchors.level_ids, np.array([level for _, _, level in naive]))


def test_centres_inside_padded_canvas():
    # exact multiples of the stride: every centre lies inside the image
    anchors = generate_anchors(256, 128, PyramidConfig.default(strides=(8, 16, 32, 64, 128)))
    assert (anchors.centers[:, 0] <= 256).all() and (anchors.centers[:, 1] <= 128).all()
    # otherwise a centre can overshoot by at most half a stride
    anchors = generate_anchors(100, 37, PyramidConfig.default(strides=(16, 64)))
    for level, stride in enumerate((16, 64)):
        centers = anchors.centers[anchors.level_slice(level)]
        assert (centers >= 0).all()
        assert (centers[:, 0] <= 100 + stride / 2).all()
        assert (centers[:, 1] <= 37 + stride / 2).all()


def test_anchors_are_cached_and_read_only():
    first = generate_anchors(320, 240)
    assert generate_anchors(320, 240) is first
    with pytest.raises(ValueError):
        first.boxes[0, 0] = 1.0


def test_locate_rejects_out_of_range():
    anchors = generate_anchors(16, 16, PyramidConfig.default(strides=(8,)))
    with pytest.raises(IndexError):
        anchors.locate(anchors.num_anchors)
    with pytest.raises(IndexError):
        anchors.index_of(0, 2, 0)


def test_invalid_configurations_name_the_field():
    with pytest.raises(ConfigError) as err:
        PyramidConfig.default(strides=(16, 8))
    assert err.value.field == "strides"
    with pytest.raises(ConfigError) as err:
        PyramidConfig.default(scale_multiplier=0)
    assert err.value.field == "anchor_scale"
    with pytest.raises(ConfigError) as err:
        PyramidConfig.default(aspect_ratios=())
    assert err.value.field == "aspect_ratios"
    with pytest.raises(ConfigError) as err:
        generate_anchors(0, 10)
    assert err.value.field == "image_size"


def test_sweep_copies_keep_strides():
    config = PyramidConfig().with_scale_multiplier(5).with_aspect_ratios((0.5,))
    assert config.strides == DEFAULT_STRIDES
    assert all(level.scale_multiplier == 5.0 for level in config.levels)
    assert all(level.aspect_ratios == (0.5,) for level in config.levels)


def test_aspect_ratio_parsing():
    assert parse_aspect_ratio("1:2") == 0.5
    assert parse_aspect_ratio("4:1") == 4.0
    assert parse_aspect_ratio("1.5") == 1.5
    assert format_aspect_ratio(0.25) == "1:4"
    assert format_aspect_ratio(2.0) == "2:1"
    for bad in ("a:b", "1:0", "-1:2"):
        with pytest.raises(ConfigError):
            parse_aspect_ratio(bad)


def test_single_anchor_on_8_by_8_image():
    anchors = generate_anchors(8, 8, PyramidConfig.default(strides=(8,)))
    assert anchors.num_anchors == 1
    np.testing.assert_array_equal(anchors.centers[0], [4.0, 4.0])
    np.testing.assert_array_equal(anchors.boxes[0], [-28.0, -28.0, 36.0, 36.0])


def test_two_level_count_on_32_by_32():
    assert generate_anchors(32, 32, PyramidConfig.default(strides=(8, 16))).num_anchors == 16 + 4


def test_three_scales_three_ratios_tile_nine_per_location():
    config = PyramidConfig.default(aspect_ratios=(0.5, 1.0, 2.0), scales_per_octave=3)
    assert all(level.templates_per_location == 9 for level in config.levels)
    anchors = generate_anchors(128, 128, config)
    assert anchors.level_size(0) == 16 * 16 * 9
    # ratio variants of one scale share their area
    boxes = anchors.boxes[:3]
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    np.testing.assert_allclose(areas, areas[0], rtol=1e-6)
