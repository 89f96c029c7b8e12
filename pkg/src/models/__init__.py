from .coefficients import ModelCoefficients, AccuracyPolicy, EdgeMetrics, Edge, COEFFICIENT_NAMES
from .profile import (LineProfile, FitConfig, FitResult, Axis, TerminationReason,
                      MIN_PROFILE_LENGTH, DEFAULT_LOWER_BOUNDS)
from .statistics import TestResult, TestMethod
from .slice import (SliceData, CaidcField, LineFit, LineFits, Zone, DirectionReport,
                    GoodnessOfFit, SliceOutcome)
from .cohort import LineMetrics, CohortReport, DiameterClass
from .volume import Volume
from .scenario import Scenario, ScenarioKind, SliceTruth

__all__ = [
    # Model
    'ModelCoefficients',
    'AccuracyPolicy',
    'EdgeMetrics',
    'Edge',
    'COEFFICIENT_NAMES',

    # Fitting
    'LineProfile',
    'FitConfig',
    'FitResult',
    'Axis',
    'TerminationReason',
    'MIN_PROFILE_LENGTH',
    'DEFAULT_LOWER_BOUNDS',

    # Statistics
    'TestResult',
    'TestMethod',

    # Slice
    'SliceData',
    'CaidcField',
    'LineFit',
    'LineFits',
    'Zone',
    'DirectionReport',
    'GoodnessOfFit',
    'SliceOutcome',

    # Cohorts
    'LineMetrics',
    'CohortReport',
    'DiameterClass',

    # Volumes and phantoms
    'Volume',
    'Scenario',
    'ScenarioKind',
    'SliceTruth'
]
