import logging

import numpy as np
import pytest

from src.core import sigmoid_model
from src.core.lm_fitter import fit_line, initial_guess, rmse
from src.core.phantom import generate_line
from src.models import COEFFICIENT_NAMES, FitConfig, LineProfile, ModelCoefficients, TerminationReason
from src.utils.errors import DegenerateProfileError, LengthMismatchError


def _random_truth(rng) -> ModelCoefficients:
    b, d = rng.uniform(0.5, 1.5, size=2)
    return ModelCoefficients(f0=rng.uniform(-100.0, -20.0), a=rng.uniform(100.0, 500.0),
                             b=b, c=b * rng.uniform(15.0, 22.0), d=d, e=d * rng.uniform(42.0, 49.0))


def test_rmse():
    assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    with pytest.raises(LengthMismatchError):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(LengthMismatchError):
        rmse([], [])


def test_initial_guess_from_profile(coefficients):
    profile, _ = generate_line(coefficients, 40)
    guess = initial_guess(profile)
    values = profile.values
    assert guess.f0 == pytest.approx(values.min())
    assert guess.a == pytest.approx(values.max() - values[values > 0].min())
    assert (guess.b, guess.d) == (1.0, 1.0)
    assert (guess.c, guess.e) == profile.span


def test_initial_guess_without_positive_samples_falls_back_to_minimum(caplog):
    values = np.array([-90.0, -90.0, -80.0, -40.0, -30.0, -30.0, -70.0, -90.0, -90.0])
    profile = LineProfile(values, span=(2.0, 6.0))
    with caplog.at_level(logging.WARNING, logger='src.core.lm_fitter'):
        guess = initial_guess(profile)
    assert guess.a == pytest.approx(60.0)
    assert 'no positive sample' in caplog.text


def test_initial_guess_rejects_constant_profile():
    profile = LineProfile(np.full(12, 40.0), span=(2.0, 9.0))
    with pytest.raises(DegenerateProfileError):
        initial_guess(profile)


def test_noiseless_lines_recover_their_coefficients():
    rng = np.random.default_rng(2023)
    recovered = 0
    for _ in range(100):
        truth = _random_truth(rng)
        profile, _ = generate_line(truth, 64)
        result = fit_line(profile, initial_guess(profile))
        fitted = result.coefficients
        if all(getattr(fitted, name) == pytest.approx(getattr(truth, name), rel=1e-3)
               for name in COEFFICIENT_NAMES):
            recovered += 1
    assert recovered >= 99, f'only {recovered}/100 lines recovered'


def test_fit_result_records_convergence():
    profile, _ = generate_line(ModelCoefficients(-60.0, 300.0, 1.0, 16.0, 1.0, 46.0), 64)
    result = fit_line(profile, initial_guess(profile))
    assert result.converged
    assert result.termination_reason in (TerminationReason.COST_TOLERANCE, TerminationReason.STEP_TOLERANCE)
    assert result.rmse < 1e-3
    assert result.profile is profile
    assert result.residuals.shape == profile.values.shape
    np.testing.assert_allclose(result.residuals,
                               profile.values - sigmoid_model.evaluate(result.coefficients, profile.coordinates))


def test_noisy_line_rmse_is_close_to_noise_level():
    sigma = 10.0
    profile, _ = generate_line(ModelCoefficients(-60.0, 300.0, 1.0, 16.0, 1.0, 46.0), 64,
                               noise_sigma=sigma, seed=5)
    result = fit_line(profile, initial_guess(profile))
    assert 0.6 * sigma < result.rmse < 1.4 * sigma


def test_iteration_cap_is_reported(coefficients):
    profile, _ = generate_line(coefficients, 40)
    start = ModelCoefficients(f0=0.0, a=50.0, b=1.0, c=1.0, d=1.0, e=39.0)
    result = fit_line(profile, start, FitConfig(max_iterations=1))
    assert result.iterations == 1
    assert not result.converged
    assert result.termination_reason is TerminationReason.MAX_ITERATIONS


def test_fitted_coefficients_respect_lower_bounds(rng):
    values = rng.normal(0.0, 30.0, 24)
    profile = LineProfile(values, span=(4.0, 19.0))
    result = fit_line(profile, initial_guess(profile))
    fitted = result.coefficients
    assert fitted.a >= 0 and fitted.c >= 0 and fitted.e >= 0
    assert fitted.b >= 1e-6 and fitted.d >= 1e-6
    assert np.isfinite(result.rmse)


def test_initial_point_is_projected_onto_bounds(coefficients):
    profile, _ = generate_line(coefficients, 40)
    start = ModelCoefficients(f0=0.0, a=-10.0, b=-1.0, c=-5.0, d=0.0, e=-1.0)
    result = fit_line(profile, start, FitConfig(max_iterations=3))
    fitted = result.coefficients
    assert fitted.a >= 0 and fitted.b >= 1e-6 and fitted.c >= 0 and fitted.d >= 1e-6 and fitted.e >= 0


def test_fit_config_rejects_bad_settings():
    with pytest.raises(ValueError):
        FitConfig(max_iterations=0)
    with pytest.raises(ValueError):
        FitConfig(cost_tolerance=0.0)
    with pytest.raises(ValueError):
        FitConfig(lower_bounds=(0.0, 0.0, 0.0, 0.0, 1e-6, 0.0))


def test_fit_held_on_a_lower_bound_is_not_converged():
    profile, _ = generate_line(ModelCoefficients(-60.0, 300.0, 1.0, 16.0, 1.0, 46.0), 64)
    bounds = (-np.inf, 0.0, 3.0, 0.0, 1e-6, 0.0)
    result = fit_line(profile, initial_guess(profile), FitConfig(lower_bounds=bounds))
    assert result.coefficients.b == 3.0
    assert not result.converged
    assert result.termination_reason in (TerminationReason.LOWER_BOUND, TerminationReason.MAX_ITERATIONS,
                                         TerminationReason.SINGULAR_NORMAL_EQUATIONS)
    assert result.rmse > 1.0


def test_converged_fits_are_stationary():
    profile, _ = generate_line(ModelCoefficients(-60.0, 300.0, 1.0, 16.0, 1.0, 46.0), 64,
                               noise_sigma=10.0, seed=5)
    result = fit_line(profile, initial_guess(profile))
    assert result.converged
    jac = sigmoid_model.gradient(result.coefficients, profile.coordinates)
    cosines = np.abs(jac.T @ result.residuals) / (np.linalg.norm(jac, axis=0) * np.linalg.norm(result.residuals))
    assert cosines.max() <= FitConfig().gradient_tolerance


def test_fit_config_rejects_non_positive_gradient_tolerance():
    with pytest.raises(ValueError):
        FitConfig(gradient_tolerance=0.0)
    assert FitConfig().to_dict()['gradient_tolerance'] == 1e-4
