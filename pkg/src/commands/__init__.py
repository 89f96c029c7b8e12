# One click command per CLI subcommand, registered in src/main.py
from .analyze import analyze_command
from .eliminate import eliminate_command
from .fit import fit_command
from .phantom import phantom_command
from .stats import stats_command

__all__ = ['analyze_command', 'eliminate_command', 'fit_command', 'phantom_command', 'stats_command']
