"""Levenberg-Marquardt fitting of the edged-plateau model to one line profile.

Damped Gauss-Newton steps with Marquardt diagonal scaling and an analytic
Jacobian; coefficients held on a bound are frozen and every trial point is
projected onto the lower bounds.
"""
import logging
from typing import Sequence

import numpy as np

from src.core import sigmoid_model
from src.models import (FitConfig, FitResult, LineProfile, ModelCoefficients,
                        TerminationReason)
from src.utils.errors import DegenerateProfileError, LengthMismatchError

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny
_EPS = np.finfo(float).eps

# Per-sample residual, relative to the data scale, below which a fit is exact
_EXACT_RESIDUAL = 1e-10

# Coefficients whose lower bound marks a collapsed model: a, b, d
_BOUNDED_SHAPE = ((1, 'a'), (2, 'b'), (4, 'd'))


def rmse(observed: Sequence[float], predicted: Sequence[float]) -> float:
    """Root mean square difference of two equal-length sequences"""
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape or observed.size == 0:
        raise LengthMismatchError(
            f'Cannot compare sequences of length {observed.size} and {predicted.size}')
    return float(np.sqrt(np.mean((observed - predicted) ** 2)))


def initial_guess(profile: LineProfile) -> ModelCoefficients:
    """
    Data-driven starting point.

    F0 is the minimum sample, a the maximum minus the smallest positive sample
    (the global minimum when no sample is positive), c and e the first and last
    P-region coordinates and b = d = 1.

    Raises:
        DegenerateProfileError: if all samples are equal
    """
    values = profile.values
    low, high = float(values.min()), float(values.max())
    if high == low:
        raise DegenerateProfileError(
            f'{profile.axis.value} {profile.index}: constant profile at {low:g} HU')

    positive = values[values > 0]
    if positive.size:
        amplitude = high - float(positive.min())
    else:
        logger.warning(f'{profile.axis.value} {profile.index}: no positive sample, '
                       f'amplitude guess falls back to the global minimum')
        amplitude = high - low
    if amplitude <= 0:
        amplitude = high - low

    start, end = profile.span
    return ModelCoefficients(f0=low, a=amplitude, b=1.0, c=float(start), d=1.0, e=float(end))


def _model(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    return sigmoid_model.evaluate(ModelCoefficients.from_array(params), x)


def _jacobian(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    return sigmoid_model.gradient(ModelCoefficients.from_array(params), x)


def _free_parameters(params: np.ndarray, grad: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Parameters the step may move: off their bound, or on it and pulled inward"""
    return ~((params <= lower) & (grad < 0))


def _stationary(grad: np.ndarray, normal: np.ndarray, free: np.ndarray, cost: float,
                exact_cost: float, tolerance: float) -> bool:
    """
    True when the residual is at the noise floor of an exact fit, or when no
    free Jacobian column has a cosine above ``tolerance`` with the residual
    """
    if cost <= exact_cost:
        return True
    norms = np.sqrt(np.maximum(np.diag(normal), _TINY) * cost)
    cosines = np.abs(grad[free]) / norms[free]
    return bool(cosines.size == 0 or cosines.max() <= tolerance)


def fit_line(profile: LineProfile, init: ModelCoefficients, config: FitConfig = FitConfig()) -> FitResult:
    """
    Minimize the sum of squared residuals between the profile and the model

    Coefficients held on a lower bound by a gradient pointing out of the
    feasible region are frozen for the step; the rest take the damped
    Gauss-Newton step, which is then projected onto the bounds.

    Args:
        profile: samples to fit
        init: starting coefficients, projected onto the bounds first
        config: solver settings

    Returns:
        FitResult; ``converged`` is True only when a cost or step tolerance
        is met at a point where the projected gradient is negligible, and
        never when a, b or d end on their lower bound.
    """
    x = profile.coordinates
    y = profile.values
    lower = np.asarray(config.lower_bounds, dtype=float)
    exact_cost = y.size * (_EXACT_RESIDUAL * max(1.0, float(np.abs(y).max()))) ** 2

    params = np.maximum(init.as_array(), lower)
    residuals = y - _model(params, x)
    cost = float(residuals @ residuals)
    damping = config.damping_init

    reason = TerminationReason.MAX_ITERATIONS
    converged = False
    iterations = 0

    while iterations < config.max_iterations:
        iterations += 1
        jac = _jacobian(params, x)
        normal = jac.T @ jac
        grad = jac.T @ residuals
        free = _free_parameters(params, grad, lower)
        scale = np.diag(normal).copy()
        scale = np.maximum(scale, max(scale.max(), 1.0) * _EPS)

        accepted = False
        step_norm = np.inf
        param_scale = float(np.linalg.norm(params)) + config.step_tolerance
        for _ in range(config.max_escalations + 1):
            step = np.zeros_like(params)
            block = np.ix_(free, free)
            try:
                step[free] = np.linalg.solve((normal + damping * np.diag(scale))[block], grad[free])
            except np.linalg.LinAlgError:
                step = None

            if step is not None and np.all(np.isfinite(step)):
                trial = np.maximum(params + step, lower)
                step_norm = float(np.linalg.norm(trial - params))
                trial_residuals = y - _model(trial, x)
                trial_cost = float(trial_residuals @ trial_residuals)
                if trial_cost <= cost:
                    accepted = True
                    break
                # A rejected step this small means we sit on a stationary point
                if step_norm <= config.step_tolerance * param_scale:
                    break
            damping *= config.damping_up

        if not accepted:
            if _stationary(grad, normal, free, cost, exact_cost, config.gradient_tolerance):
                converged = True
                reason = TerminationReason.STEP_TOLERANCE
            else:
                reason = TerminationReason.SINGULAR_NORMAL_EQUATIONS
                logger.debug(f'{profile.axis.value} {profile.index}: damping escalated '
                             f'{config.max_escalations} times without cost reduction')
            break

        reduction = (cost - trial_cost) / max(cost, _TINY)
        params, residuals, cost = trial, trial_residuals, trial_cost
        damping = max(damping * config.damping_down, 1e-15)

        small_step = step_norm <= config.step_tolerance * param_scale
        # Only trust a stalled cost once the solver is back in the Gauss-Newton regime
        stalled = reduction <= config.cost_tolerance and damping <= config.damping_init
        if small_step or stalled:
            jac = _jacobian(params, x)
            grad = jac.T @ residuals
            if _stationary(grad, jac.T @ jac, _free_parameters(params, grad, lower), cost,
                           exact_cost, config.gradient_tolerance):
                converged = True
                reason = TerminationReason.STEP_TOLERANCE if small_step else TerminationReason.COST_TOLERANCE
                break

    pinned = [name for k, name in _BOUNDED_SHAPE if params[k] <= lower[k]]
    if converged and pinned:
        converged = False
        reason = TerminationReason.LOWER_BOUND
        logger.debug(f'{profile.axis.value} {profile.index}: {", ".join(pinned)} left on the lower bound')

    coefficients = ModelCoefficients.from_array(params)
    return FitResult(
        coefficients=coefficients,
        rmse=float(np.sqrt(cost / y.size)),
        iterations=iterations,
        converged=converged,
        residuals=residuals,
        termination_reason=reason,
        profile=profile
    )
