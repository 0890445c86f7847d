"""Self-contained verification battery behind the ``mosaic selftest`` command.

Runs kernel-vs-oracle comparisons, the SAME shape law, exact cost-counter
checks against instrumented naive kernels, and the published-ordering checks.
The oracles here are deliberately naive loop implementations, independent of
the vectorized kernels they verify.

Two ordering checks against the published filter/skip ablation columns are
known to fail: the published numbers are not reproducible from the
architecture's structure alone (see the failure detail strings). They are
reported rather than hidden, so a clean build currently exits nonzero.
"""

from dataclasses import replace

import numpy as np

from . import kernels, reference
from .arch import cityscapes_config
from .cost import DEFAULT_POLICY, INCLUSIVE_POLICY, ablation_report, count_config, count_node
from .graph import NodeSpec
from .tensor import ConvParams, TensorShape

KNOWN_GAPS = ("published ordering: filters", "published ordering: skips")


def naive_conv2d(x, kern, bias, params: ConvParams, count_mults=False):
    """Direct SAME-padded convolution; optionally returns the multiply count.

    Every tap of the padded window is multiplied (zeros included), so the
    count equals out_h*out_w*out_c*kernel_h*kernel_w*in_c/groups exactly.
    """
    h, w_in, _ = x.shape
    out_h, pad_t, pad_b = kernels.same_pad(h, params.kernel_h, params.stride, params.dilation)
    out_w, pad_l, pad_r = kernels.same_pad(w_in, params.kernel_w, params.stride, params.dilation)
    padded = np.pad(x.astype(np.float64), ((pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    ig = params.in_c // params.groups
    og = params.out_c // params.groups
    out = np.zeros((out_h, out_w, params.out_c), dtype=np.float64)
    w64 = np.asarray(kern, dtype=np.float64)
    mults = 0
    for oy in range(out_h):
        for ox in range(out_w):
            for oc in range(params.out_c):
                g = oc // og
                acc = 0.0
                for ky in range(params.kernel_h):
                    for kx in range(params.kernel_w):
                        iy = oy * params.stride + ky * params.dilation
                        ix = ox * params.stride + kx * params.dilation
                        row = padded[iy, ix, g * ig:(g + 1) * ig]
                        acc += float(row @ w64[ky, kx, :, oc])
                        mults += ig
                if bias is not None:
                    acc += float(bias[oc])
                out[oy, ox, oc] = acc
    out32 = out.astype(np.float32)
    return (out32, mults) if count_mults else out32


def naive_depthwise(x, kern, params: ConvParams, count_mults=False):
    kern = np.asarray(kern, dtype=np.float64)
    if kern.ndim == 4:
        kern = kern.reshape(kern.shape[0], kern.shape[1], kern.shape[3])
    stacked = kern[:, :, None, :]  # layout (kh, kw, in_c/groups=1, out_c)
    return naive_conv2d(x, stacked, None, params, count_mults)


def naive_avg_pool(x, gh, gw):
    h, w, c = x.shape
    out = np.zeros((gh, gw, c), dtype=np.float64)
    for i in range(gh):
        for j in range(gw):
            r0, r1 = i * h // gh, (i + 1) * h // gh
            c0, c1 = j * w // gw, (j + 1) * w // gw
            total = np.zeros(c, dtype=np.float64)
            n = 0
            for r in range(r0, r1):
                for q in range(c0, c1):
                    total += x[r, q, :].astype(np.float64)
                    n += 1
            out[i, j, :] = total / n
    return out.astype(np.float32)


def naive_resize(x, oh, ow, mode="corner"):
    h, w, c = x.shape
    out = np.zeros((oh, ow, c), dtype=np.float64)
    for r in range(oh):
        for q in range(ow):
            if mode == "corner":
                sr = 0.0 if oh == 1 else r * (h - 1) / (oh - 1)
                sc = 0.0 if ow == 1 else q * (w - 1) / (ow - 1)
            else:
                sr = min(max((r + 0.5) * h / oh - 0.5, 0.0), h - 1)
                sc = min(max((q + 0.5) * w / ow - 0.5, 0.0), w - 1)
            r0, c0 = int(np.floor(sr)), int(np.floor(sc))
            r1, c1 = min(r0 + 1, h - 1), min(c0 + 1, w - 1)
            fr, fc = sr - r0, sc - c0
            x64 = x.astype(np.float64)
            top = x64[r0, c0] * (1 - fc) + x64[r0, c1] * fc
            bot = x64[r1, c0] * (1 - fc) + x64[r1, c1] * fc
            out[r, q, :] = top * (1 - fr) + bot * fr
    return out.astype(np.float32)


def _close(a, b, rtol=1e-5, atol=1e-6):
    return np.allclose(a, b, rtol=rtol, atol=atol)


def _random_conv_spec(rng):
    kernel = int(rng.choice([1, 3, 5]))
    stride = int(rng.choice([1, 2]))
    dilation = int(rng.choice([1, 2]))
    in_c = int(rng.choice([2, 4, 6, 8]))
    grouping = rng.choice(["one", "two", "depthwise"])
    if grouping == "depthwise":
        groups, out_c = in_c, in_c
    elif grouping == "two":
        groups = 2
        out_c = int(rng.choice([2, 4, 6]))
    else:
        groups = 1
        out_c = int(rng.choice([1, 3, 5, 8]))
    h = int(rng.integers(4, 13))
    w = int(rng.integers(4, 13))
    return h, w, ConvParams(kernel, kernel, stride, dilation, groups, in_c, out_c)


def _check_conv_oracle(n_cases=10, seed=11):
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        h, w, params = _random_conv_spec(rng)
        x = rng.standard_normal((h, w, params.in_c)).astype(np.float32)
        kern = rng.standard_normal(params.kernel_shape()).astype(np.float32)
        bias = rng.standard_normal(params.out_c).astype(np.float32)
        got = kernels.conv2d(x, kern, bias, params)
        want = naive_conv2d(x, kern, bias, params)
        if not _close(got, want):
            return False, f"conv2d mismatch for {params}"
    return True, f"{n_cases} random cases within 1e-5"


def _check_depthwise_oracle(n_cases=8, seed=12):
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        h, w = int(rng.integers(4, 11)), int(rng.integers(4, 11))
        c = int(rng.choice([1, 3, 4]))
        k = int(rng.choice([3, 5]))
        params = ConvParams(k, k, int(rng.choice([1, 2])), int(rng.choice([1, 2])), c, c, c)
        x = rng.standard_normal((h, w, c)).astype(np.float32)
        kern = rng.standard_normal((k, k, c)).astype(np.float32)
        got = kernels.depthwise_conv2d(x, kern, params)
        want = naive_depthwise(x, kern, params)
        if not _close(got, want):
            return False, f"depthwise mismatch for {params}"
    return True, f"{n_cases} random cases within 1e-5"


def _check_pool_oracle(n_cases=6, seed=13):
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        h, w = int(rng.integers(5, 20)), int(rng.integers(5, 20))
        c = int(rng.integers(1, 5))
        gh, gw = int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))
        x = rng.standard_normal((h, w, c)).astype(np.float32)
        if not _close(kernels.avg_pool_grid(x, gh, gw), naive_avg_pool(x, gh, gw)):
            return False, f"avg_pool_grid mismatch for {h}x{w} grid {gh}x{gw}"
    return True, f"{n_cases} random cases within 1e-5"


def _check_resize_oracle(n_cases=6, seed=14):
    rng = np.random.default_rng(seed)
    for mode in ("corner", "half"):
        for _ in range(n_cases):
            h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
            oh, ow = int(rng.integers(1, 17)), int(rng.integers(1, 17))
            c = int(rng.integers(1, 4))
            x = rng.standard_normal((h, w, c)).astype(np.float32)
            got = kernels.bilinear_resize(x, oh, ow, mode)
            if not _close(got, naive_resize(x, oh, ow, mode)):
                return False, f"bilinear mismatch {h}x{w}->{oh}x{ow} mode={mode}"
    return True, f"{2 * n_cases} random cases within 1e-5"


def _check_group_equivalence(n_cases=4, seed=15):
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        groups, in_c, out_c = 2, 8, 6
        params = ConvParams(3, 3, 1, 1, groups, in_c, out_c)
        x = rng.standard_normal((6, 6, in_c)).astype(np.float32)
        kern = rng.standard_normal(params.kernel_shape()).astype(np.float32)
        grouped = kernels.conv2d(x, kern, None, params)
        # groups=1 kernel zeroed outside the diagonal channel blocks
        full = np.zeros((3, 3, in_c, out_c), dtype=np.float32)
        ig, og = in_c // groups, out_c // groups
        for g in range(groups):
            full[:, :, g * ig:(g + 1) * ig, g * og:(g + 1) * og] = \
                kern[:, :, :, g * og:(g + 1) * og]
        dense = kernels.conv2d(x, full, None, ConvParams(3, 3, 1, 1, 1, in_c, out_c))
        if not _close(grouped, dense):
            return False, "group conv != block-masked dense conv"
    return True, f"{n_cases} random cases within 1e-5"


def _check_shape_law():
    rng = np.random.default_rng(16)
    for stride in (1, 2):
        for dilation in (1, 2):
            for kernel in (1, 3, 5):
                h, w = int(rng.integers(3, 12)), int(rng.integers(3, 12))
                params = ConvParams(kernel, kernel, stride, dilation, 1, 2, 3)
                x = rng.standard_normal((h, w, 2)).astype(np.float32)
                kern = rng.standard_normal(params.kernel_shape()).astype(np.float32)
                out = kernels.conv2d(x, kern, None, params)
                want = (-(-h // stride), -(-w // stride))
                if out.shape[:2] != want:
                    return False, f"out {out.shape[:2]} != ceil rule {want} for {params}"
    return True, "out = ceil(in/stride) over strides x dilations x kernels"


def _check_cost_oracle(n_cases=30, seed=17):
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        h, w, params = _random_conv_spec(rng)
        x = rng.standard_normal((h, w, params.in_c)).astype(np.float32)
        kern = rng.standard_normal(params.kernel_shape()).astype(np.float32)
        _, mults = naive_conv2d(x, kern, None, params, count_mults=True)
        kind = "DepthwiseConv" if params.is_depthwise else "Conv"
        spec = NodeSpec("probe", kind, {"conv": params})
        oh, _, _ = kernels.same_pad(h, params.kernel_h, params.stride, params.dilation)
        ow, _, _ = kernels.same_pad(w, params.kernel_w, params.stride, params.dilation)
        madds, _ = count_node(
            spec, [TensorShape(h, w, params.in_c)], TensorShape(oh, ow, params.out_c)
        )
        if madds != mults:
            return False, f"count_node {madds} != instrumented {mults} for {params}"
    return True, f"{n_cases} random specs, exact integer match"


def _ordering(rows):
    return [label for label, _ in sorted(rows, key=lambda kv: kv[1])]


def _check_skip_ordering():
    base = cityscapes_config()
    tokens = reference.sorted_by_reference(reference.SKIP_VARIANTS_B)
    rows = ablation_report(base, "skips", tokens)
    got = _ordering([(r.label, r.madds) for r in rows])
    if got == tokens:
        return True, "skip-variant totals follow the published order"
    return False, (
        f"computed order {got} != published {tokens}; the published total for "
        "'8-C,4-S,2-S' is only consistent with a ~19-channel merge at output "
        "stride 2, while this architecture projects the skip to the 64-wide "
        "semantic branch and classifies at the finest merge (see ledger)"
    )


def _check_filter_ordering():
    base = cityscapes_config()
    totals = {}
    for enc, dec in reference.FILTER_VARIANTS_B:
        cfg = replace(
            base,
            encoder=replace(base.encoder, enc_filters=enc),
            decoder=replace(base.decoder, dec_filters=dec),
        )
        totals[(enc, dec)] = count_config(cfg).total_madds
    want = reference.sorted_by_reference(reference.FILTER_VARIANTS_B)
    got = _ordering(totals.items())
    if got == want:
        return True, "filter-variant totals follow the published order"
    return False, (
        f"computed order {got} != published {want}; the published column "
        "implies encoder-filter scaling several times stronger than the "
        "structure supports (see ledger)"
    )


def _check_pyramid_ordering():
    base = cityscapes_config()
    tokens = reference.sorted_by_reference(reference.PYRAMID_VARIANTS_B)
    rows = ablation_report(base, "pyramid", tokens)
    got = _ordering([(r.label, r.madds) for r in rows])
    if got == tokens:
        return True, "pyramid-variant totals follow the published order"
    return False, f"computed order {got} != published {tokens}"


def _check_policy_invariance():
    base = cityscapes_config()
    tokens = list(reference.SKIP_VARIANTS_B)
    plain = _ordering([(r.label, r.madds) for r in ablation_report(base, "skips", tokens)])
    full = _ordering(
        [(r.label, r.madds) for r in ablation_report(base, "skips", tokens, INCLUSIVE_POLICY)]
    )
    if plain == full:
        return True, "include-everything policy changes totals but not the ordering"
    return False, f"policy changed the variant ordering: {plain} vs {full}"


def _check_headline_total():
    report = count_config(cityscapes_config(), DEFAULT_POLICY)
    gap = report.total_madds / (reference.CITYSCAPES_TOTAL_B * 1e9) - 1.0
    if abs(gap) <= 0.06:
        return True, f"total {report.total_madds} within 6% of published ({gap:+.2%})"
    return False, f"total {report.total_madds} off published by {gap:+.2%}"


CHECKS = (
    ("conv vs naive oracle", _check_conv_oracle),
    ("depthwise vs naive oracle", _check_depthwise_oracle),
    ("avg-pool vs naive oracle", _check_pool_oracle),
    ("bilinear vs naive oracle", _check_resize_oracle),
    ("group-conv block equivalence", _check_group_equivalence),
    ("SAME shape law", _check_shape_law),
    ("cost counter vs instrumented kernels", _check_cost_oracle),
    ("published ordering: pyramid", _check_pyramid_ordering),
    ("published ordering: filters", _check_filter_ordering),
    ("published ordering: skips", _check_skip_ordering),
    ("policy ordering invariance", _check_policy_invariance),
    ("headline total reconciliation", _check_headline_total),
)


def run_selftest(write=print) -> int:
    """Run every check, print one PASS/FAIL line each; returns the exit code."""
    failures = 0
    for name, fn in CHECKS:
        ok, detail = fn()
        status = "PASS" if ok else "FAIL"
        note = "" if ok or name not in KNOWN_GAPS else " [known gap]"
        write(f"{status}{note} {name}: {detail}")
        if not ok:
            failures += 1
    write(f"selftest: {len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return 0 if failures == 0 else 1
