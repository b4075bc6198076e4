"""
Built-in property suite.

Each property recomputes an independent oracle (decimal arithmetic, naive
permutations, closed-form counts, hand-zeroed weights) and compares.
"""
from dataclasses import dataclass
import logging

import numpy as np

from mambayolo import get_thread_cap, set_thread_cap
from mambayolo.config import Config
from mambayolo.exceptions import MambaYoloError
from mambayolo.models.feature_map import FeatureMap, MlpVariant
from mambayolo.models.model_config import ModelConfig
from mambayolo.models.scan_direction import MERGE_ORDER
from mambayolo.models.ssm import SsmParams
from mambayolo.services import layers
from mambayolo.services.analysis import (
    PolynomialTarget, SelectiveScanTarget, corrupted_backward, count_params, grad_check, mlp_params,
    output_shapes, scan_equivalence, zoh_oracle,
)
from mambayolo.services.backbone import model_forward, model_plan, simple_stem
from mambayolo.services.blocks import (
    ls_block, ls_plan, mlp_plan, mlp_variant_forward, odss_block, odss_plan, rg_block,
)
from mambayolo.services.initializer import allocate, init_weights
from mambayolo.services.ss2d import cross_scan_expand, cross_scan_merge
from mambayolo.services.ssm_scan import zoh_discretize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str = ''


def _scan_forms(seed, quick):
    trials = 20 if quick else 200
    reports = [scan_equivalence(16, 64, trials, seed, dtype) for dtype in ('f32', 'f64')]
    detail = ', '.join(f"{r.dtype} max dev {r.max_deviation:.3e}" for r in reports)
    return all(r.passed for r in reports), detail


def _zoh_accuracy(seed, quick):
    A = -np.logspace(-12, 0.7, 10)
    worst = 0.0
    for delta in np.logspace(-4, 0, 10):
        B = np.ones_like(A)
        disc = zoh_discretize(SsmParams(A=A, B=B, C=B, delta=delta))
        a_ref, b_ref = zoh_oracle(A, delta, B)
        worst = max(worst, float(np.max(np.abs(disc.a_bar - a_ref))), float(np.max(np.abs(disc.b_bar - b_ref))))
    return worst <= 1e-12, f"max abs err {worst:.3e} over 100 points"


def _selective_gradients(seed, quick):
    rng = np.random.default_rng(seed)
    worst = 0.0
    target = None
    for _ in range(3 if quick else 20):
        target = SelectiveScanTarget.random(
            rng, channels=int(rng.integers(1, 3)), state_dim=int(rng.integers(1, 5)), length=int(rng.integers(1, 9))
        )
        worst = max(worst, grad_check(target).max_rel_error)
    mutant = grad_check(corrupted_backward(target, 'A'))
    passed = worst <= Config.GRAD_TOL and not mutant.passed
    return passed, f"max rel err {worst:.3e}; sign-flip mutant rel err {mutant.max_rel_error:.3e}"


def _gradcheck_controls(seed, quick):
    rng = np.random.default_rng(seed)
    coefficients = rng.uniform(0.5, 2.0, 6) * rng.choice([-1.0, 1.0], 6)
    linear = grad_check(PolynomialTarget(rng.uniform(-1, 1, 6), coefficients))
    odd = PolynomialTarget(rng.uniform(-1, 1, 6), coefficients, rng.standard_normal(6))
    forward = grad_check(odd).max_rel_error
    negated = grad_check(odd.negated()).max_rel_error
    passed = linear.max_rel_error <= 1e-8 and forward == negated
    return passed, f"linear rel err {linear.max_rel_error:.3e}; odd target {forward:.3e} vs {negated:.3e}"


def _cross_scan_round_trip(seed, quick):
    rng = np.random.default_rng(seed)
    for height in (1, 2, 3, 8):
        for width in (1, 2, 3, 8):
            fm = rng.standard_normal((3, height, width)).astype(np.float32)
            seqs = cross_scan_expand(fm)
            flat = np.sort(fm.reshape(3, -1), axis=1)
            for direction in MERGE_ORDER:
                if not np.array_equal(np.sort(seqs[direction], axis=1), flat):
                    return False, f"{direction.value} is not a permutation at {height}x{width}"
            if not np.array_equal(cross_scan_merge(seqs), 4 * fm):
                return False, f"merge(expand) != 4*fm at {height}x{width}"
    return True, "H, W in {1, 2, 3, 8}"


def _shape_law(seed, quick):
    config = ModelConfig.shipped('tiny')
    weights = init_weights(config, seed)
    img = np.random.default_rng(seed).uniform(0, 1, (3, 64, 64)).astype(np.float32)
    stem = simple_stem(img, weights.scope('backbone.stem'))
    if stem.shape[1:] != (16, 16):
        return False, f"stem output {stem.shape} at 64x64"
    pyr = model_forward(img, config, weights)
    for (name, fm), stride in zip(pyr.items(), (8, 16, 32)):
        if fm.shape[1:] != (64 // stride, 64 // stride) or not np.all(np.isfinite(fm.tensor)):
            return False, f"{name} is {fm.shape} at 64x64"
    for size in (320, 640):
        shapes = output_shapes(ModelConfig.shipped('t'), (size, size))
        for (name, (_, h, w)), stride in zip(shapes.items(), (8, 16, 32)):
            if (h, w) != (size // stride, size // stride):
                return False, f"{name} is {h}x{w} at {size}x{size}"
    return True, "64 (forward), 320 and 640 (closed form)"


def _residual_collapse(seed, quick):
    config = ModelConfig.shipped('tiny')
    rng = np.random.default_rng(seed)
    x = FeatureMap(rng.uniform(-1, 1, (8, 5, 5)).astype(np.float32))

    ls = allocate(ls_plan('ls', 8, 16), seed)
    rg = allocate(mlp_plan('rg', 8, 16, MlpVariant.RG_BLOCK), seed)
    block = allocate(odss_plan('odss', 8, 8, config), seed)
    for w, keys in ((ls, ('ls.fc2.weight', 'ls.fc2.bias')),
                    (rg, ('rg.fc2.weight', 'rg.fc2.bias')),
                    (block, ('odss.ss2d.out_proj.weight', 'odss.mlp.fc2.weight', 'odss.mlp.fc2.bias'))):
        for key in keys:
            w.set(key, np.zeros_like(w[key]))

    if not np.array_equal(ls_block(x, ls.scope('ls')).tensor, x.tensor):
        return False, "ls_block with zero fc2 is not the identity"
    if not np.array_equal(rg_block(x, rg.scope('rg')).tensor, x.tensor):
        return False, "rg_block with zero fc2 is not the identity"
    scoped = block.scope('odss')
    pre = layers.conv_bn_act(x.tensor, scoped.scope('pre'))
    if not np.array_equal(odss_block(x, scoped, config.block_options()).tensor, pre):
        return False, "odss_block with zero SS2D and MLP outputs is not its input stage"
    return True, "ls, rg and odss collapse exactly"


def _param_accounting(seed, quick):
    details = []
    for name in Config.SHIPPED_CONFIGS:
        config = ModelConfig.shipped(name)
        counted = count_params(config).total_params
        planned = sum(spec.size for spec in model_plan(config) if not spec.buffer)
        if counted != planned:
            return False, f"{name}: closed form {counted} != allocated {planned}"
        details.append(f"{name}={counted}")
    if not quick:
        tiny = ModelConfig.shipped('tiny')
        allocated = init_weights(tiny, seed).parameter_count()
        if allocated != count_params(tiny).total_params:
            return False, f"tiny: init_weights allocated {allocated}"
    return True, ' '.join(details)


def _mlp_variants(seed, quick):
    counts = [mlp_params(16, 32, v) for v in
              (MlpVariant.ORIGINAL, MlpVariant.CONVOLUTIONAL, MlpVariant.RES_CONVOLUTIONAL)]
    if not counts[0] < counts[1] < counts[2]:
        return False, f"param counts not increasing: {counts}"
    weights = allocate(mlp_plan('mlp', 8, 16, MlpVariant.RG_BLOCK), seed).scope('mlp')
    x = FeatureMap(np.random.default_rng(seed).standard_normal((8, 6, 6)).astype(np.float32))
    if not np.array_equal(rg_block(x, weights).tensor, mlp_variant_forward(x, MlpVariant.RG_BLOCK, weights).tensor):
        return False, "rgblock variant differs from rg_block"
    return True, f"original/convolutional/res_convolutional params {counts}"


def _thread_determinism(seed, quick):
    config = ModelConfig.shipped('tiny')
    weights = init_weights(config, seed)
    img = np.random.default_rng(seed).uniform(0, 1, (3, 64, 64)).astype(np.float32)
    previous = get_thread_cap()
    try:
        set_thread_cap(1)
        single = model_forward(img, config, weights)
        set_thread_cap(4)
        multi = model_forward(img, config, weights)
    finally:
        set_thread_cap(previous)
    for (name, a), (_, b) in zip(single.items(), multi.items()):
        if not np.array_equal(a.tensor, b.tensor):
            return False, f"{name} differs between 1 and 4 threads"
    return True, "bit-identical at 1 and 4 threads"


PROPERTIES = (
    ('scan_forms_agree', _scan_forms, True),
    ('zoh_matches_decimal_oracle', _zoh_accuracy, True),
    ('selective_scan_gradients', _selective_gradients, True),
    ('gradcheck_controls', _gradcheck_controls, True),
    ('cross_scan_round_trip', _cross_scan_round_trip, True),
    ('architecture_shape_law', _shape_law, True),
    ('residual_collapse', _residual_collapse, True),
    ('param_accounting', _param_accounting, True),
    ('mlp_variant_ordering', _mlp_variants, True),
    ('thread_determinism', _thread_determinism, False),
)


def run_selftest(seed: int = 0, quick: bool = False) -> list:
    """Run every property (a reduced set with quick=True)."""
    results = []
    for name, check, in_quick in PROPERTIES:
        if quick and not in_quick:
            continue
        try:
            passed, detail = check(seed, quick)
        except (MambaYoloError, ValueError) as exc:
            logger.exception("Property %s raised", name)
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        logger.info("%s: %s (%s)", name, 'ok' if passed else 'FAILED', detail)
        results.append(PropertyResult(name=name, passed=bool(passed), detail=detail))
    return results
