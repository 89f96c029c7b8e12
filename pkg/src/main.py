import logging
import os
import sys
# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import click
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from src.commands import analyze_command, eliminate_command, fit_command, phantom_command, stats_command
from src.utils.errors import CaidcError

logger = logging.getLogger('caidc')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


class CaidcGroup(click.Group):
    """Command group mapping outcomes to exit codes: 0 success, 1 usage error, 2 data error"""

    def main(self, *args, standalone_mode: bool = True, **kwargs):
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.ClickException as e:
            e.show()
            code = EXIT_USAGE
        except click.Abort:
            click.echo('Aborted!', err=True)
            code = EXIT_USAGE
        except CaidcError as e:
            logger.error(f'{type(e).__name__} error: {str(e)}')
            code = EXIT_DATA
        if standalone_mode:
            sys.exit(code)
        return code


def create_cli() -> click.Group:
    @click.group(cls=CaidcGroup, context_settings={'help_option_names': ['-h', '--help']})
    @click.option('--log-level', type=click.Choice(LOG_LEVELS, case_sensitive=False),
                  default=lambda: os.getenv('CAIDC_LOG_LEVEL', 'INFO').upper(), show_default='INFO',
                  help='Diagnostics level on standard error (env CAIDC_LOG_LEVEL)')
    def cli(log_level):
        """CAiDC modeling of contrast-agent profiles in CT vessel slices.

        Settings come from, highest first: command-line flags, the --config
        JSON file, CAIDC_* environment variables (also read from .env),
        built-in defaults.
        """
        logging.basicConfig(level=getattr(logging, log_level.upper()), stream=sys.stderr,
                            format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    # Register commands
    cli.add_command(phantom_command)
    cli.add_command(fit_command)
    cli.add_command(analyze_command)
    cli.add_command(eliminate_command)
    cli.add_command(stats_command)

    return cli


def dispatch(argv=None) -> int:
    """Run the CLI on ``argv`` and return its exit code"""
    return create_cli().main(args=argv, prog_name='caidc', standalone_mode=False)


if __name__ == '__main__':
    sys.exit(dispatch())
