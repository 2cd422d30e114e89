"""
Shared plumbing for the toolkit commands: the global `--seed`, `--threads`
and `--out-dir` flags, `run.json` provenance and the exit-code mapping
(2 for input or usage problems, 1 for computation failures).
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from perfusion.conf import perfusion_settings
from perfusion.exceptions import PerfusionComputationError, PerfusionInputError
from perfusion.services.pipeline import resolve_threads, write_run_json

logger = logging.getLogger(__name__)

DJANGO_OPTIONS = {"verbosity", "settings", "pythonpath", "traceback", "no_color", "force_color", "skip_checks"}


class ExperimentCommand(BaseCommand):
    command_name = ""

    def add_arguments(self, parser):
        block = perfusion_settings()
        parser.add_argument(
            '--seed',
            type=int,
            default=int(block.get('seed', 0)),
            help='Seed for every random draw of the run (default: %(default)s)'
        )
        parser.add_argument(
            '--threads',
            type=int,
            default=int(block.get('threads', 0)),
            help='Worker processes for voxel fitting, 0 = all cores (default: %(default)s)'
        )
        parser.add_argument(
            '--out-dir',
            default=str(block.get('out_dir', 'runs')),
            help='Directory receiving run.json and all artifacts (default: %(default)s)'
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, out_dir: Path, options: dict):
        raise NotImplementedError

    def resolved_options(self, options):
        return {
            key: (str(value) if isinstance(value, Path) else value)
            for key, value in sorted(options.items())
            if key not in DJANGO_OPTIONS
        }

    def handle(self, *args, **options):
        out_dir = Path(options['out_dir'])
        options['threads'] = resolve_threads(options['threads'])
        try:
            write_run_json(out_dir, self.command_name, self.resolved_options(options))
            self.run(out_dir, options)
        except FileNotFoundError as e:
            raise CommandError(f"Missing input: {e}", returncode=2)
        except PerfusionInputError as e:
            raise CommandError(str(e), returncode=2)
        except PerfusionComputationError as e:
            logger.error(f"❌ {self.command_name} failed: {e}")
            raise CommandError(str(e), returncode=1)

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def warn(self, message):
        self.stdout.write(self.style.WARNING(message))
