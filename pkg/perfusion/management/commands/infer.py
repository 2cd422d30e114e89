from pathlib import Path

from perfusion.services.map_regressor import load_model
from perfusion.services.pipeline import case_dirs, infer_case

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    """🔮 Predict maps from the time series and a trained model; no AIF is involved."""

    help = "Infer CBV/CBF/TTP/MTT maps for cases into <out-dir>/infer"
    command_name = "infer"

    def add_command_arguments(self, parser):
        parser.add_argument('--model', default=None, help='Model stem (default: <out-dir>/model/model)')
        parser.add_argument('--cases-dir', default=None, help='Case directories (default: <out-dir>/cases)')
        parser.add_argument('--case', nargs='+', default=None, help='Only these case names')
        parser.add_argument('--skip-register', action='store_true', help='Skip motion correction')
        parser.add_argument('--skip-filter', action='store_true', help='Skip the bilateral filter')

    def run(self, out_dir, options):
        model_stem = Path(options['model']) if options['model'] else out_dir / "model" / "model"
        model, descriptor = load_model(model_stem)
        cases_root = Path(options['cases_dir']) if options['cases_dir'] else out_dir / "cases"
        dirs = case_dirs(cases_root)
        if options['case']:
            wanted = set(options['case'])
            dirs = [d for d in dirs if d.name in wanted]
            missing = wanted - {d.name for d in dirs}
            if missing:
                raise FileNotFoundError(f"cases {sorted(missing)} not in {cases_root}")
        if not dirs:
            raise FileNotFoundError(f"no cases to infer in {cases_root}")

        for case_dir in dirs:
            infer_case(
                model,
                case_dir,
                out_dir / "infer" / case_dir.name,
                register=not options['skip_register'],
                smooth=not options['skip_filter'],
            )
        self.success(f"🔮 Inferred {len(dirs)} cases with model v{descriptor['format_version']} into {out_dir / 'infer'}")
