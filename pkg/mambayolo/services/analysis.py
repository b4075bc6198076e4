"""
Verification and accounting instruments.

Costs are derived from closed-form per-layer formulas by walking the
architecture independently of the parameter plans that init_weights
allocates, so the two can check each other. The unit is the
multiply-accumulate (MAC); norms, activations, residual adds and gating are
listed as aux_ops and kept out of the MAC totals.
"""
from dataclasses import dataclass
import decimal
import logging
from typing import Protocol

import numpy as np

from mambayolo.config import Config
from mambayolo.exceptions import GradCheckError, ShapeError
from mambayolo.models.cost_report import BlockShape, CostReport, CostRow
from mambayolo.models.feature_map import MlpVariant
from mambayolo.models.scan_direction import MERGE_ORDER
from mambayolo.models.ssm import SequenceBatch, SsmParams
from mambayolo.services.backbone import check_input_size
from mambayolo.services.ss2d import dt_rank
from mambayolo.services.ssm_scan import (
    build_kernel, scan_convolutional, scan_recurrent, selective_scan, selective_scan_backward, zoh_discretize,
)

logger = logging.getLogger(__name__)

# Elementwise operations per element
_BN_OPS = 2
_LN_OPS = 5
_ACT_OPS = 1
_EW_OPS = 1
# Per state and step: a_bar * h, b_bar * x, c . h
_SCAN_MACS_PER_STATE = 3
# Per state and step: exp and phi of delta * A
_SCAN_AUX_PER_STATE = 2


def conv_cost(in_channels: int, out_channels: int, kernel: int = 1, height: int = 0, width: int = 0,
              stride: int = 1, groups: int = 1, bias: bool = False) -> tuple:
    """(params, macs, out_h, out_w) of a padded k x k convolution (padding k // 2)."""
    per_output = (in_channels // groups) * kernel * kernel
    params = out_channels * per_output + (out_channels if bias else 0)
    out_h = -(-height // stride)
    out_w = -(-width // stride)
    return params, out_h * out_w * out_channels * per_output, out_h, out_w


def mlp_params(channels: int, hidden: int, variant: MlpVariant) -> int:
    """Closed-form parameter count of one MLP variant body."""
    variant = MlpVariant(variant)
    gated = variant in (MlpVariant.GATED, MlpVariant.RG_BLOCK)
    fc1_out = 2 * hidden if gated else hidden
    params = channels * fc1_out + fc1_out
    if variant is not MlpVariant.ORIGINAL:
        params += 9 * hidden + hidden
    fc2_in = 2 * hidden if variant is MlpVariant.RES_CONVOLUTIONAL else hidden
    return params + fc2_in * channels + channels


class _CostWalker:
    """Walks the architecture, appending one CostRow per layer."""

    def __init__(self, config, height: int = 0, width: int = 0):
        self.config = config
        self.report = CostReport(input_shape=(3, height, width) if height else None)
        self.blocks = []
        self.outputs = None

    def conv(self, path, cin, cout, kernel, h, w, stride=1, groups=1, bias=False):
        params, macs, oh, ow = conv_cost(cin, cout, kernel, h, w, stride, groups, bias)
        self.report.add(CostRow(path, 'conv', params, macs))
        return oh, ow

    def bn(self, path, c, h, w):
        self.report.add(CostRow(path, 'norm', 2 * c, 0, _BN_OPS * c * h * w))

    def ln(self, path, c, h, w):
        self.report.add(CostRow(path, 'norm', 2 * c, 0, _LN_OPS * c * h * w))

    def act(self, path, c, h, w):
        self.report.add(CostRow(path, 'act', 0, 0, _ACT_OPS * c * h * w))

    def ew(self, path, c, h, w):
        self.report.add(CostRow(path, 'elementwise', 0, 0, _EW_OPS * c * h * w))

    def conv_bn_act(self, path, cin, cout, kernel, h, w, stride=1, act=True):
        oh, ow = self.conv(f"{path}.conv", cin, cout, kernel, h, w, stride)
        self.bn(f"{path}.bn", cout, oh, ow)
        if act:
            self.act(f"{path}.act", cout, oh, ow)
        return oh, ow

    def ss2d(self, path, c, h, w):
        cfg = self.config
        hidden = cfg.ssm_hidden(c)
        n = cfg.state_dim
        rank = dt_rank(c)
        k = len(MERGE_ORDER)
        length = h * w
        self.conv(f"{path}.in_proj", c, 2 * hidden, 1, h, w)
        self.conv(f"{path}.conv", hidden, hidden, 3, h, w, groups=hidden, bias=True)
        self.act(f"{path}.act", hidden, h, w)
        proj = k * (rank + 2 * n) * hidden
        self.report.add(CostRow(f"{path}.x_proj", 'projection', proj, proj * length))
        self.report.add(CostRow(f"{path}.dt_proj", 'projection', k * hidden * rank + k * hidden,
                                k * hidden * rank * length, k * hidden * length))
        self.report.add(CostRow(
            f"{path}.scan", 'scan', k * hidden * n + k * hidden,
            k * hidden * length * n * _SCAN_MACS_PER_STATE,
            k * hidden * length * (n * _SCAN_AUX_PER_STATE + 1),
        ))
        self.ew(f"{path}.merge", k * hidden, h, w)
        self.ln(f"{path}.out_norm", hidden, h, w)
        self.act(f"{path}.gate_act", hidden, h, w)
        self.ew(f"{path}.gate", hidden, h, w)
        self.conv(f"{path}.out_proj", hidden, c, 1, h, w)

    def mlp(self, path, c, h, w):
        cfg = self.config
        variant = cfg.mlp_variant
        hidden = cfg.mlp_hidden(c)
        gated = variant in (MlpVariant.GATED, MlpVariant.RG_BLOCK)
        self.conv(f"{path}.fc1", c, 2 * hidden if gated else hidden, 1, h, w, bias=True)
        if variant is not MlpVariant.ORIGINAL:
            self.conv(f"{path}.dw", hidden, hidden, 3, h, w, groups=hidden, bias=True)
        if variant is MlpVariant.RG_BLOCK:
            self.ew(f"{path}.position", hidden, h, w)
        wide = variant is MlpVariant.RES_CONVOLUTIONAL
        self.act(f"{path}.act", 2 * hidden if wide else hidden, h, w)
        if gated:
            self.ew(f"{path}.gate", hidden, h, w)
        self.conv(f"{path}.fc2", 2 * hidden if wide else hidden, c, 1, h, w, bias=True)

    def odss(self, path, cin, c, h, w):
        cfg = self.config
        start = len(self.report.rows)
        self.conv_bn_act(f"{path}.pre", cin, c, 1, h, w)
        if cfg.use_ls:
            hidden = cfg.ls_hidden(c)
            self.conv(f"{path}.ls.dw", c, c, 3, h, w, groups=c)
            self.bn(f"{path}.ls.bn", c, h, w)
            self.conv(f"{path}.ls.fc1", c, hidden, 1, h, w, bias=True)
            self.act(f"{path}.ls.act", hidden, h, w)
            self.conv(f"{path}.ls.fc2", hidden, c, 1, h, w, bias=True)
            self.ew(f"{path}.ls.add", c, h, w)
        self.ln(f"{path}.norm1", c, h, w)
        self.ss2d(f"{path}.ss2d", c, h, w)
        self.ew(f"{path}.add1", c, h, w)
        self.ln(f"{path}.norm2", c, h, w)
        self.mlp(f"{path}.mlp", c, h, w)
        self.ew(f"{path}.add2", c, h, w)
        self._block(path, (cin, h, w), (c, h, w), start)

    def _block(self, name, in_shape, out_shape, start):
        rows = self.report.rows[start:]
        self.blocks.append(BlockShape(
            name=name,
            in_shape=in_shape,
            out_shape=out_shape,
            params=sum(r.params for r in rows),
            macs=sum(r.macs for r in rows),
        ))

    def stage(self, prefix, cin, c, depth, h, w):
        for j in range(depth):
            self.odss(f"{prefix}.{j}", cin if j == 0 else c, c, h, w)
        return c

    def backbone(self, h, w):
        cfg = self.config
        stem = cfg.stem_channels
        start = len(self.report.rows)
        sh, sw = self.conv_bn_act('backbone.stem.conv1', 3, stem // 2, 3, h, w, stride=2)
        sh, sw = self.conv_bn_act('backbone.stem.conv2', stem // 2, stem, 3, sh, sw, stride=2)
        self._block('backbone.stem', (3, h, w), (stem, sh, sw), start)

        c = stem
        outputs = []
        for i, stage in enumerate(cfg.stages, start=1):
            if i > 1:
                path = f"backbone.merge{i - 1}"
                merged = cfg.merge_ratio * c
                start = len(self.report.rows)
                if cfg.downsample == 'conv':
                    nh, nw = self.conv_bn_act(path, c, merged, 3, sh, sw, stride=2, act=False)
                else:
                    nh, nw = self.conv(f"{path}.proj", 4 * c, merged, 1, sh // 2, sw // 2, bias=True)
                self._block(path, (c, sh, sw), (merged, nh, nw), start)
                c, sh, sw = merged, nh, nw
            c = self.stage(f"backbone.stage{i}", c, stage.channels, stage.depth, sh, sw)
            outputs.append((c, sh, sw))
        return outputs[1:]

    def down(self, path, c, h, w):
        start = len(self.report.rows)
        oh, ow = self.conv_bn_act(path, c, c, 3, h, w, stride=2)
        self._block(path, (c, h, w), (c, oh, ow), start)

    def neck(self, pyramid):
        cfg = self.config
        (c3, h3, w3), (c4, h4, w4), (c5, h5, w5) = pyramid
        n3, n4, n5 = cfg.neck_channels
        depth = cfg.neck_depth
        self.stage('neck.top4', c5 + c4, n4, depth, h4, w4)
        self.stage('neck.top3', n4 + c3, n3, depth, h3, w3)
        self.down('neck.down3', n3, h3, w3)
        self.stage('neck.bottom4', n3 + n4, n4, depth, h4, w4)
        self.down('neck.down4', n4, h4, w4)
        self.stage('neck.bottom5', n4 + c5, n5, depth, h5, w5)
        return (n3, h3, w3), (n4, h4, w4), (n5, h5, w5)


def _walk(config, input_shape: tuple = None) -> _CostWalker:
    if input_shape is None:
        height = width = 0
    else:
        height, width = input_shape
        if height < 1 or width < 1:
            raise ShapeError(f"input size must be positive, got {height}x{width}")
        check_input_size(height, width)
    walker = _CostWalker(config, height, width)
    walker.outputs = walker.neck(walker.backbone(height, width))
    return walker


def count_params(config) -> CostReport:
    """Per-layer parameter counts (MAC columns are zero)."""
    return _walk(config).report


def count_macs(config, input_shape: tuple = (640, 640)) -> CostReport:
    """Per-layer parameters and MACs for an H x W input."""
    return _walk(config, input_shape).report


def block_table(config, input_shape: tuple = (640, 640)) -> list:
    """Per-block in/out shapes, params and MACs, in forward order."""
    return _walk(config, input_shape).blocks


def output_shapes(config, input_shape: tuple) -> dict:
    """Closed-form P3/P4/P5 shapes of the full model for an H x W input."""
    return dict(zip(('p3', 'p4', 'p5'), _walk(config, input_shape).outputs))


def reference_comparison(report: CostReport, variant: str) -> dict:
    """Reported size against the published figures for the variant, if any."""
    reference = Config.REFERENCE_SIZES.get(variant.lower())
    if reference is None:
        return None
    params_m = report.total_params / 1e6
    comparison = {
        'params_m': params_m,
        'reference_params_m': reference['params_m'],
        'params_ratio': params_m / reference['params_m'],
    }
    if report.input_shape is not None:
        gflops = report.flops / 1e9
        comparison.update(gflops=gflops, reference_gflops=reference['gflops'],
                          gflops_ratio=gflops / reference['gflops'])
    return comparison


# Gradient checking

class GradTarget(Protocol):
    """A scalar function of named f64 arrays with an analytic gradient."""

    def inputs(self) -> dict: ...

    def value(self, inputs: dict) -> float: ...

    def gradient(self, inputs: dict) -> dict: ...


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst: tuple
    coordinates: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(target: GradTarget, step: float = Config.GRAD_STEP, tol: float = Config.GRAD_TOL) -> GradCheckReport:
    """
    Compare target.gradient against central differences at every coordinate.

    The relative error of a coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    inputs = {name: np.array(value, dtype=np.float64) for name, value in target.inputs().items()}
    analytic = target.gradient(inputs)
    worst_err = 0.0
    worst = None
    count = 0
    for name, arr in inputs.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != arr.shape:
            raise ShapeError(f"grad_check: gradient of {name} has shape {grad.shape}, expected {arr.shape}")
        for idx in np.ndindex(arr.shape):
            original = arr[idx]
            arr[idx] = original + step
            f_plus = target.value(inputs)
            arr[idx] = original - step
            f_minus = target.value(inputs)
            arr[idx] = original
            a = grad[idx]
            if not (np.isfinite(f_plus) and np.isfinite(f_minus) and np.isfinite(a)):
                raise GradCheckError(
                    f"grad_check: non-finite value at {name}{list(idx)} "
                    f"(f+={f_plus}, f-={f_minus}, analytic={a})"
                )
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            count += 1
            if worst is None or err > worst_err:
                worst_err = err
                worst = (name, idx)
    logger.debug("grad_check: %d coordinates, max rel err %.3e at %s", count, worst_err, worst)
    return GradCheckReport(max_rel_error=float(worst_err), worst=worst, coordinates=count, tol=tol)


class SelectiveScanTarget:
    """sum(upstream * selective_scan(...)) as a function of every scan input."""

    def __init__(self, batch: SequenceBatch, A, upstream, d_skip=None):
        self.batch = batch.astype(np.float64)
        self.A = np.asarray(A, dtype=np.float64)
        self.upstream = np.asarray(upstream, dtype=np.float64)
        self.d_skip = None if d_skip is None else np.asarray(d_skip, dtype=np.float64)

    @classmethod
    def random(cls, rng: np.random.Generator, channels: int = 1, state_dim: int = 2, length: int = 4,
               with_skip: bool = True) -> 'SelectiveScanTarget':
        batch = SequenceBatch(
            values=rng.standard_normal((channels, length)),
            delta=rng.uniform(0.1, 1.0, (channels, length)),
            b=rng.standard_normal((state_dim, length)),
            c=rng.standard_normal((state_dim, length)),
        )
        A = -rng.uniform(0.5, 2.0, (channels, state_dim))
        d_skip = rng.standard_normal(channels) if with_skip else None
        return cls(batch, A, rng.standard_normal((channels, length)), d_skip)

    def inputs(self) -> dict:
        inputs = {'x': self.batch.values, 'delta': self.batch.delta, 'b': self.batch.b,
                  'c': self.batch.c, 'A': self.A}
        if self.d_skip is not None:
            inputs['d_skip'] = self.d_skip
        return inputs

    @staticmethod
    def _batch(inputs: dict) -> SequenceBatch:
        return SequenceBatch(values=inputs['x'], delta=inputs['delta'], b=inputs['b'], c=inputs['c'])

    def value(self, inputs: dict) -> float:
        y = selective_scan(self._batch(inputs), inputs['A'], d_skip=inputs.get('d_skip'))
        return float(np.sum(self.upstream * y))

    def gradient(self, inputs: dict) -> dict:
        grads = selective_scan_backward(self._batch(inputs), inputs['A'], self.upstream, d_skip=inputs.get('d_skip'))
        return grads.as_dict()


class PolynomialTarget:
    """f(x) = sum(linear * x + cubic * x**3); odd in x."""

    def __init__(self, x, linear, cubic=0.0):
        self.x = np.asarray(x, dtype=np.float64)
        self.linear = np.broadcast_to(np.asarray(linear, dtype=np.float64), self.x.shape)
        self.cubic = np.broadcast_to(np.asarray(cubic, dtype=np.float64), self.x.shape)

    def inputs(self) -> dict:
        return {'x': self.x}

    def value(self, inputs: dict) -> float:
        x = inputs['x']
        return float(np.sum(self.linear * x + self.cubic * (x * x * x)))

    def gradient(self, inputs: dict) -> dict:
        x = inputs['x']
        return {'x': self.linear + 3.0 * self.cubic * x * x}

    def negated(self) -> 'PolynomialTarget':
        return PolynomialTarget(-self.x, self.linear, self.cubic)


class _SignFlipped:
    def __init__(self, target: GradTarget, name: str):
        self.target = target
        self.name = name

    def inputs(self) -> dict:
        return self.target.inputs()

    def value(self, inputs: dict) -> float:
        return self.target.value(inputs)

    def gradient(self, inputs: dict) -> dict:
        grads = dict(self.target.gradient(inputs))
        grads[self.name] = -np.asarray(grads[self.name])
        return grads


def corrupted_backward(target: GradTarget, name: str = 'A') -> GradTarget:
    """The same target with the sign of one gradient flipped; grad_check must reject it."""
    return _SignFlipped(target, name)


# Discretization and scan-form oracles

def zoh_oracle(A, delta, B, digits: int = 50) -> tuple:
    """(a_bar, b_bar) of a diagonal ZOH step evaluated in `digits`-digit decimal arithmetic."""
    A, delta, B = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (A, delta, B)))
    a_bar = np.empty(A.shape)
    b_bar = np.empty(A.shape)
    with decimal.localcontext() as ctx:
        ctx.prec = digits
        for idx in np.ndindex(A.shape):
            d = decimal.Decimal(float(delta[idx]))
            z = decimal.Decimal(float(A[idx])) * d
            e = z.exp()
            phi = decimal.Decimal(1) if z == 0 else (e - 1) / z
            a_bar[idx] = float(e)
            b_bar[idx] = float(phi * d * decimal.Decimal(float(B[idx])))
    return a_bar, b_bar


@dataclass(frozen=True)
class EquivalenceReport:
    max_deviation: float
    trials: int
    state_dim: int
    length: int
    dtype: str
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def scan_equivalence(n: int, l: int, trials: int, seed: int, dtype: str = 'f32') -> EquivalenceReport:
    """Max |recurrent - convolutional| over random time-invariant scans."""
    if n < 1 or l < 1 or trials < 1:
        raise ShapeError(f"scan_equivalence: n, l and trials must be >= 1, got {n}, {l}, {trials}")
    if dtype not in ('f32', 'f64'):
        raise ValueError(f"scan_equivalence: dtype must be 'f32' or 'f64', got {dtype!r}")
    np_dtype = np.float32 if dtype == 'f32' else np.float64
    tol = Config.SCAN_TOL_F32 if dtype == 'f32' else Config.SCAN_TOL_F64
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        params = SsmParams(
            A=-rng.uniform(0.05, 1.0, n),
            B=rng.standard_normal(n),
            C=rng.standard_normal(n),
            delta=rng.uniform(0.01, 0.5),
        )
        x = rng.standard_normal(l).astype(np_dtype)
        disc = zoh_discretize(params)
        recurrent = scan_recurrent(disc, params.C, x).astype(np.float64)
        convolutional = scan_convolutional(build_kernel(disc, params.C, l), x).astype(np.float64)
        worst = max(worst, float(np.max(np.abs(recurrent - convolutional))))
    return EquivalenceReport(max_deviation=worst, trials=trials, state_dim=n, length=l, dtype=dtype, tol=tol)
