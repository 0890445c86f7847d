"""Named parameter bundles: deterministic initialization and the MOSW file format.

MOSW layout (all integers little-endian u32, payloads little-endian float32):

    magic "MOSW" | version | entry count
    per entry: name length | name bytes (utf-8) | rank | dims... | payload

Initialization draws conv kernels from a zero-mean normal with standard
deviation 1/sqrt(fan_in) using NumPy's counter-based Philox4x32-10 generator
keyed by the seed, walking parameterized nodes in graph order; affine scale
is 1, all biases are 0. The generator choice is part of the format contract:
the same seed reproduces the same store bit-for-bit.
"""

import struct

import numpy as np

from .errors import ConfigError, FormatError
from .graph import Graph, check_weights, expected_weight_shape, weight_roles

MAGIC = b"MOSW"
VERSION = 1


class WeightStore:
    """Mapping from '<node>/<role>' to a float32 array."""

    def __init__(self, entries=None):
        self.entries: dict[str, np.ndarray] = {}
        if entries:
            for name, value in entries.items():
                self[name] = value

    def __setitem__(self, name: str, value):
        self.entries[name] = np.ascontiguousarray(value, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __contains__(self, name) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def keys(self):
        return self.entries.keys()

    def items(self):
        return self.entries.items()

    def __eq__(self, other):
        if not isinstance(other, WeightStore):
            return NotImplemented
        if self.entries.keys() != other.entries.keys():
            return False
        return all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())


def init_weights(model_or_graph, seed: int) -> WeightStore:
    """Seeded Philox initialization for every parameterized node."""
    graph: Graph = getattr(model_or_graph, "graph", model_or_graph)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    store = WeightStore()
    for name in graph.order:
        spec = graph.nodes[name]
        for role in weight_roles(spec):
            shape = expected_weight_shape(spec, role)
            if role == "kernel":
                conv = spec.params["conv"]
                fan_in = conv.kernel_h * conv.kernel_w * (conv.in_c // conv.groups)
                store[f"{name}/{role}"] = rng.normal(
                    0.0, 1.0 / np.sqrt(fan_in), size=shape
                ).astype(np.float32)
            elif role == "scale":
                store[f"{name}/{role}"] = np.ones(shape, dtype=np.float32)
            else:  # bias
                store[f"{name}/{role}"] = np.zeros(shape, dtype=np.float32)
    return store


def validate_weights(graph: Graph, store: WeightStore) -> None:
    check_weights(graph, store)


def save_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(store)))
        for name, value in store.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(value.astype("<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated weight file: needed {n} bytes for {what} at byte {self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic at byte 0: not a MOSW weight file")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported MOSW version {version} at byte 4")
    count = r.u32("entry count")
    store = WeightStore()
    for i in range(count):
        name_len = r.u32(f"entry {i} name length")
        name = r.take(name_len, f"entry {i} name").decode("utf-8")
        if name in store:
            raise ConfigError(f"duplicate weight entry {name!r} at byte {r.pos}")
        rank = r.u32(f"entry {i} rank")
        dims = tuple(r.u32(f"entry {i} dim") for _ in range(rank))
        n_values = 1
        for d in dims:
            if d < 1:
                raise FormatError(f"entry {name!r}: zero dimension at byte {r.pos}")
            n_values *= d
        payload = r.take(4 * n_values, f"entry {i} payload")
        store.entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise FormatError(f"trailing garbage at byte {r.pos}")
    return store
