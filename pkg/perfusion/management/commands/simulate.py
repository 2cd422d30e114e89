from perfusion.services.phantom_sim import AcquisitionConfig, GammaVariateParams, NoiseMotionConfig
from perfusion.services.pipeline import SimulationPlan, simulate_cohort

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    """🧪 Write seeded builtin stroke phantoms with their ground truth."""

    help = "Simulate CT perfusion phantoms into <out-dir>/cases"
    command_name = "simulate"

    def add_command_arguments(self, parser):
        parser.add_argument('--cases', type=int, default=1, help='Number of cases (default: %(default)s)')
        parser.add_argument(
            '--healthy-cases',
            type=int,
            default=0,
            help='How many of the cases show normal perfusion, chosen from the seed (default: %(default)s)'
        )
        parser.add_argument('--first-index', type=int, default=0, help='Index of the first case (default: %(default)s)')
        parser.add_argument('--nx', type=int, default=64, help='Matrix width (default: %(default)s)')
        parser.add_argument('--ny', type=int, default=64, help='Matrix height (default: %(default)s)')
        parser.add_argument('--nt', type=int, default=None, help='Frames (default: 89 from settings)')
        parser.add_argument('--dt', type=float, default=None, help='Frame interval in s (default: 0.5 from settings)')
        parser.add_argument('--noise-sigma', type=float, default=None, help='Gaussian noise sigma in HU')
        parser.add_argument('--max-shift', type=int, default=None, help='Largest random in-plane shift in px')
        parser.add_argument(
            '--recirculation',
            type=float,
            default=None,
            help='Recirculation bolus as a fraction of the first pass'
        )

    def run(self, out_dir, options):
        plan = SimulationPlan(
            n_cases=options['cases'],
            first_index=options['first_index'],
            healthy_cases=options['healthy_cases'],
            nx=options['nx'],
            ny=options['ny'],
            seed=options['seed'],
            acquisition=AcquisitionConfig.from_settings(nt=options['nt'], dt=options['dt']),
            bolus=GammaVariateParams.from_settings(recirculation_fraction=options['recirculation']),
            noise_motion=NoiseMotionConfig.from_settings(
                noise_sigma_hu=options['noise_sigma'], max_shift_px=options['max_shift']
            ),
        )
        written = simulate_cohort(plan, out_dir / "cases")
        self.success(f"🧪 Simulated {len(written)} cases into {out_dir / 'cases'}")
