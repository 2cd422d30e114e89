from pathlib import Path

from perfusion.services.map_regressor import (
    InputNormalization,
    MapRegressorTrainer,
    TrainConfig,
    UNet,
    UNetConfig,
    save_model,
    write_history,
)
from perfusion.services.pipeline import collect_samples
from perfusion.services.volume_model import read_volume

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    """🏋️ Train the map regressor on fitted cases."""

    help = "Train the CNN map regressor from fitted cases into <out-dir>/model"
    command_name = "train"

    def add_command_arguments(self, parser):
        parser.add_argument('--fit-dir', default=None, help='Fitted case directories (default: <out-dir>/fit)')
        parser.add_argument('--train', nargs='+', required=True, metavar='CASE', help='Training case names')
        parser.add_argument('--val', nargs='+', required=True, metavar='CASE', help='Validation case names')
        parser.add_argument('--epochs', type=int, default=None, help='Maximum epochs (default: 200)')
        parser.add_argument('--lr', type=float, default=None, help='Initial learning rate (default: 0.05)')
        parser.add_argument('--batch-size', type=int, default=None, help='Slices per update (default: 4)')
        parser.add_argument('--patience', type=int, default=None, help='Epochs without gain before lr halves')
        parser.add_argument('--depth', type=int, default=None, help='Encoder levels (default: 2)')
        parser.add_argument('--base-channels', type=int, default=None, help='Channels at the first level (default: 8)')
        parser.add_argument('--time-stride', type=int, default=None, help='Use every n-th frame (default: 1)')

    def run(self, out_dir, options):
        fit_dir = Path(options['fit_dir']) if options['fit_dir'] else out_dir / "fit"
        train_dirs = [fit_dir / name for name in options['train']]
        val_dirs = [fit_dir / name for name in options['val']]

        n_frames = read_volume(train_dirs[0] / "preprocessed").nt
        model = UNet(UNetConfig.for_frames(
            n_frames,
            seed=options['seed'],
            depth=options['depth'],
            base_channels=options['base_channels'],
            time_stride=options['time_stride'],
        ))
        norm = InputNormalization.for_config(model.config)
        train_set = collect_samples(train_dirs, norm)
        val_set = collect_samples(val_dirs, norm)
        self.stdout.write(
            f"🏋️ {len(train_set)} training and {len(val_set)} validation slices, {model.n_parameters} weights"
        )

        config = TrainConfig.from_settings(
            max_epochs=options['epochs'],
            lr0=options['lr'],
            batch_size=options['batch_size'],
            patience=options['patience'],
            rng_seed=options['seed'],
        )
        model, history = MapRegressorTrainer(config).train(model, train_set, val_set)
        save_model(model, out_dir / "model" / "model", extra={"train_cases": options['train'], "val_cases": options['val']})
        write_history(history, out_dir / "model" / "history.csv")
        self.success(
            f"✅ Trained {history.epochs[-1]} epochs, val MSE {history.val_mse[0]:.5f} -> {min(history.val_mse):.5f}"
        )
