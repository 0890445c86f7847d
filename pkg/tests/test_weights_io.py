import numpy as np
import pytest

from mosaicseg.arch import DecoderConfig, EncoderConfig, ModelConfig, build_model
from mosaicseg.errors import ConfigError, FormatError, ShapeError
from mosaicseg.images import (
    read_image_ppm, read_labelmap_pgm, write_image_ppm, write_labelmap_pgm,
)
from mosaicseg.weights import (
    WeightStore, init_weights, load_weights, save_weights, validate_weights,
)


def small_model():
    return build_model(ModelConfig(
        m=32, num_classes=4, input_h=64, input_w=64,
        encoder=EncoderConfig(pyramid_bins=(2, 4), enc_filters=8),
        decoder=DecoderConfig(dec_filters=8),
    ))


def test_init_same_seed_identical():
    model = small_model()
    assert init_weights(model, 42) == init_weights(model, 42)


def test_init_different_seeds_differ():
    model = small_model()
    a, b = init_weights(model, 1), init_weights(model, 2)
    assert a != b
    assert any(not np.array_equal(a[k], b[k]) for k in a.keys())


def test_init_covers_model_exactly():
    model = small_model()
    validate_weights(model.graph, init_weights(model, 9))


def test_init_kernel_variance_tracks_fan_in():
    model = build_model(ModelConfig())  # full-size model has big kernel entries
    store = init_weights(model, 123)
    checked = 0
    for name in model.graph.order:
        spec = model.graph.nodes[name]
        if spec.kind != "Conv":
            continue
        conv = spec.params["conv"]
        entry = store[f"{name}/kernel"]
        if entry.size < 10_000:
            continue
        fan_in = conv.kernel_h * conv.kernel_w * conv.in_c // conv.groups
        var = float(np.var(entry.astype(np.float64)))
        assert abs(var - 1.0 / fan_in) <= 0.2 / fan_in, name
        assert abs(float(entry.mean())) < 0.05 / np.sqrt(fan_in) * 5
        checked += 1
    assert checked >= 10


def test_init_affine_identity():
    model = small_model()
    store = init_weights(model, 3)
    scales = [k for k in store.keys() if k.endswith("/scale")]
    assert scales
    for key in scales:
        assert np.array_equal(store[key], np.ones_like(store[key]))
        bias_key = key.replace("/scale", "/bias")
        assert np.array_equal(store[bias_key], np.zeros_like(store[bias_key]))


def test_save_load_round_trip(tmp_path):
    model = small_model()
    store = init_weights(model, 77)
    path = tmp_path / "model.mosw"
    save_weights(store, path)
    loaded = load_weights(path)
    assert loaded == store


def test_round_trip_random_stores(tmp_path, rng):
    for trial in range(100):
        store = WeightStore()
        for i in range(int(rng.integers(1, 6))):
            rank = int(rng.integers(1, 5))
            dims = tuple(int(rng.integers(1, 5)) for _ in range(rank))
            store[f"entry{trial}/{i}"] = rng.standard_normal(dims).astype(np.float32)
        path = tmp_path / f"s{trial}.mosw"
        save_weights(store, path)
        assert load_weights(path) == store


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.mosw"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        load_weights(path)


def test_load_rejects_bad_version(tmp_path):
    path = tmp_path / "bad.mosw"
    path.write_bytes(b"MOSW" + (99).to_bytes(4, "little") + (0).to_bytes(4, "little"))
    with pytest.raises(FormatError, match="version"):
        load_weights(path)


def test_load_truncated_reports_offset(tmp_path):
    model = small_model()
    path = tmp_path / "model.mosw"
    save_weights(init_weights(model, 5), path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError, match="byte"):
        load_weights(path)


def test_load_duplicate_entries_rejected(tmp_path):
    import struct
    path = tmp_path / "dup.mosw"
    entry = b""
    name = b"twin"
    payload = np.ones(2, dtype="<f4").tobytes()
    entry += struct.pack("<I", len(name)) + name
    entry += struct.pack("<I", 1) + struct.pack("<I", 2) + payload
    path.write_bytes(b"MOSW" + struct.pack("<II", 1, 2) + entry + entry)
    with pytest.raises(ConfigError, match="duplicate"):
        load_weights(path)


def test_validate_flags_missing_and_orphans():
    model = small_model()
    store = init_weights(model, 1)
    key = next(iter(store.keys()))
    del store.entries[key]
    with pytest.raises(ConfigError, match="missing"):
        validate_weights(model.graph, store)
    store = init_weights(model, 1)
    store["nobody/kernel"] = np.zeros((1, 1, 1, 1), np.float32)
    with pytest.raises(ConfigError, match="orphan"):
        validate_weights(model.graph, store)


def test_validate_flags_shape_mismatch():
    model = small_model()
    store = init_weights(model, 1)
    key = next(k for k in store.keys() if k.endswith("/kernel"))
    store[key] = np.zeros((1, 1, 1, 1), np.float32)
    with pytest.raises(ShapeError, match=key):
        validate_weights(model.graph, store)


# --- PPM / PGM ------------------------------------------------------------------


def test_ppm_black_and_white(tmp_path):
    path = tmp_path / "img.ppm"
    write_image_ppm(np.zeros((2, 2, 3), dtype=np.uint8), path)
    assert np.array_equal(read_image_ppm(path), np.full((2, 2, 3), -1.0, dtype=np.float32))
    write_image_ppm(np.full((2, 2, 3), 255, dtype=np.uint8), path)
    assert np.array_equal(read_image_ppm(path), np.full((2, 2, 3), 1.0, dtype=np.float32))


def test_ppm_scaling_invertible_on_byte_lattice(tmp_path, rng):
    path = tmp_path / "img.ppm"
    pixels = rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
    write_image_ppm(pixels, path)
    scaled = read_image_ppm(path)
    recovered = np.rint((scaled.astype(np.float64) + 1.0) * 127.5).astype(np.int64)
    assert np.array_equal(recovered, pixels.astype(np.int64))


def test_ppm_with_comment_header(tmp_path):
    path = tmp_path / "img.ppm"
    path.write_bytes(b"P6 # magic\n# a comment line\n2 1\n255\n" + bytes(6))
    assert read_image_ppm(path).shape == (1, 2, 3)


def test_ppm_rejects_wrong_magic(tmp_path):
    path = tmp_path / "img.ppm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
    with pytest.raises(FormatError, match="P6"):
        read_image_ppm(path)


def test_ppm_rejects_16bit(tmp_path):
    path = tmp_path / "img.ppm"
    path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
    with pytest.raises(FormatError, match="maxval"):
        read_image_ppm(path)


def test_ppm_rejects_truncation(tmp_path):
    path = tmp_path / "img.ppm"
    path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(FormatError, match="truncated"):
        read_image_ppm(path)


def test_pgm_label_round_trip(tmp_path, rng):
    path = tmp_path / "labels.pgm"
    labels = rng.integers(0, 256, size=(9, 13)).astype(np.int32)
    write_labelmap_pgm(labels, path)
    assert np.array_equal(read_labelmap_pgm(path), labels)


def test_pgm_rejects_labels_over_255(tmp_path):
    with pytest.raises(FormatError, match="255"):
        write_labelmap_pgm(np.array([[0, 256]]), tmp_path / "labels.pgm")
