"""Central-difference verification of tape gradients.

Used both as a unit-test helper and behind the `gradcheck` CLI command:
perturb every parameter entry by +-h, compare (f(x+h)-f(x-h))/2h
against the analytic gradient, and report the worst relative error per
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Param


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol

    def format_table(self) -> str:
        width = max((len(n) for n in self.per_param), default=10)
        lines = [f"{'parameter':<{width}}  max_rel_error"]
        for name in sorted(self.per_param):
            lines.append(f"{name:<{width}}  {self.per_param[name]:.3e}")
        lines.append(f"{'WORST':<{width}}  {self.max_rel_error:.3e}")
        return "\n".join(lines)


def gradient_check(loss_fn, params: list[Param], h: float = 1e-5) -> GradCheckReport:
    """loss_fn() -> scalar Tensor, recomputed from current param values.

    The analytic pass must be deterministic given parameter values:
    anything stochastic (augmentation draws, dropout-style masks) has
    to be frozen inside loss_fn before calling this.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise FloatingPointError("gradcheck loss is non-finite")
    ad.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    report = GradCheckReport(max_rel_error=0.0)
    for p in params:
        flat = p.data.reshape(-1)
        ana = analytic[p.name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f1 = float(loss_fn().data)
            flat[i] = orig - h
            f2 = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(f1) and np.isfinite(f2)):
                raise FloatingPointError(f"non-finite loss while perturbing {p.name}")
            num = (f1 - f2) / (2.0 * h)
            denom = max(abs(ana[i]), abs(num), 1e-8)
            worst = max(worst, abs(ana[i] - num) / denom)
        report.per_param[p.name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report


def full_network_check(config=None, seed: int = 1, n_points: int = 20,
                       h: float = 1e-5) -> GradCheckReport:
    """End-to-end check of every parameter tensor through the summed
    training objective on one small random sample.

    The sample recipe is fixed: coordinates uniform in [-3, 3]^2 so the
    cluster is dense under the default toy radius, RCS/Doppler normal
    with scale 10 (the network conditions its inputs by 0.1, so this
    keeps post-conditioning activations near unit size where the
    finite-difference step is accurate), random targets over all classes
    and random instance groupings.  Norm layers run on batch statistics
    with running-stat tracking frozen, so repeated forwards are bitwise
    identical while every norm parameter still participates.
    """
    from .losses import total_loss
    from .neighborhood import ball_query
    from .network import RadFinerNet, toy_config

    if config is None:
        config = toy_config()
    net = RadFinerNet(config)
    net.set_bn_tracking(False)

    rng = np.random.default_rng(seed)
    coords = rng.uniform(-3.0, 3.0, (n_points, 2))
    features = np.zeros((n_points, 5))
    features[:, 0:2] = coords * 10.0
    features[:, 3] = rng.normal(size=n_points) * 10.0
    features[:, 4] = rng.normal(size=n_points) * 10.0
    targets = rng.integers(0, config.classes, n_points)
    instance_ids = rng.integers(0, 4, n_points)
    nb = ball_query(coords, config.radius, config.n_max)

    def loss_fn():
        logits = net.forward(coords, features, training=True, nb=nb)
        total, _ = total_loss(logits, targets, instance_ids)
        return total

    return gradient_check(loss_fn, net.params(), h=h)
