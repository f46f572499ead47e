__version__ = "1.0.0"

# Only import what actually exists
try:
    from .models import (
        Classification,
        ClassKind,
        ExperimentConfig,
        RateFit,
        RatePrediction,
        RunSummary,
        ScaleInvariantModel,
    )
except ImportError:
    pass

try:
    from .coeffs import CoefficientProfile, make_profile, profile_from_spec
except ImportError:
    pass

try:
    from .classify import classify
except ImportError:
    pass

try:
    from .scaleinv import predict_rates, verify_rates
except ImportError:
    pass

try:
    from .lab import load_config, run_experiment
except ImportError:
    pass

try:
    from .database import Database
except ImportError:
    pass

try:
    from .config import settings
except ImportError:
    pass


__all__ = []

if 'ExperimentConfig' in dir():
    __all__.extend(['Classification', 'ClassKind', 'ExperimentConfig', 'RateFit', 'RatePrediction',
                    'RunSummary', 'ScaleInvariantModel'])
if 'CoefficientProfile' in dir():
    __all__.extend(['CoefficientProfile', 'make_profile', 'profile_from_spec'])
if 'classify' in dir():
    __all__.append('classify')
if 'predict_rates' in dir():
    __all__.extend(['predict_rates', 'verify_rates'])
if 'run_experiment' in dir():
    __all__.extend(['load_config', 'run_experiment'])
if 'Database' in dir():
    __all__.append('Database')
if 'settings' in dir():
    __all__.append('settings')
