from perfusion.models import ExperimentRun
from perfusion.services.pipeline import ExperimentConfig, ExperimentPipeline
from perfusion.tasks import run_experiment

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    """
    🔁 simulate → fit → train → infer → validate in one seeded run.

    With --queue the run is recorded and handed to the Celery worker instead
    of running inline.
    """

    help = "Run the full learning experiment into <out-dir>"
    command_name = "pipeline"

    def add_command_arguments(self, parser):
        parser.add_argument('--train-cases', type=int, default=100, help='Training cases (default: %(default)s)')
        parser.add_argument('--val-cases', type=int, default=15, help='Validation cases (default: %(default)s)')
        parser.add_argument('--test-cases', type=int, default=12, help='Test cases (default: %(default)s)')
        parser.add_argument('--healthy-fraction', type=float, default=0.2,
                            help='Share of normal-perfusion cases in every split (default: %(default)s)')
        parser.add_argument('--nx', type=int, default=64, help='Matrix width (default: %(default)s)')
        parser.add_argument('--ny', type=int, default=64, help='Matrix height (default: %(default)s)')
        parser.add_argument('--nt', type=int, default=None, help='Frames (default: 89 from settings)')
        parser.add_argument('--noise-sigma', type=float, default=None, help='Gaussian noise sigma in HU')
        parser.add_argument('--max-shift', type=int, default=None, help='Largest random in-plane shift in px')
        parser.add_argument('--epochs', type=int, default=None, help='Maximum training epochs (default: 200)')
        parser.add_argument('--depth', type=int, default=None, help='Encoder levels (default: 2)')
        parser.add_argument('--base-channels', type=int, default=None, help='Channels at the first level (default: 8)')
        parser.add_argument('--time-stride', type=int, default=None, help='Use every n-th frame (default: 1)')
        parser.add_argument('--no-refine', action='store_true', help='Grid search only when fitting')
        parser.add_argument('--svd', action='store_true', help='Also write SVD baseline maps')
        parser.add_argument('--queue', action='store_true', help='Queue the run for the Celery worker')

    def run(self, out_dir, options):
        config = ExperimentConfig(
            out_dir=str(out_dir),
            seed=options['seed'],
            threads=options['threads'],
            train_cases=options['train_cases'],
            val_cases=options['val_cases'],
            test_cases=options['test_cases'],
            healthy_fraction=options['healthy_fraction'],
            nx=options['nx'],
            ny=options['ny'],
            nt=options['nt'],
            noise_sigma_hu=options['noise_sigma'],
            max_shift_px=options['max_shift'],
            epochs=options['epochs'],
            depth=options['depth'],
            base_channels=options['base_channels'],
            time_stride=options['time_stride'],
            refine=False if options['no_refine'] else None,
            svd=options['svd'],
        )

        if options['queue']:
            run = ExperimentRun.objects.create(config=config.to_dict())
            run_experiment.delay(str(run.id))
            self.success(f"📨 Queued experiment {run.id}")
            return

        result = ExperimentPipeline(config).run()
        for lesion, block in result['validation'].items():
            if block['dice_mean'] is not None:
                self.stdout.write(f"🎯 {lesion}: Dice {block['dice_mean']:.2f} ± {block['dice_sd']:.2f}, r = {block['pearson_r']}")
        self.success(
            f"✅ Experiment done: val MSE {result['initial_val_mse']:.5f} -> {result['final_val_mse']:.5f}, "
            f"{result['n_excluded']} test cases excluded"
        )
