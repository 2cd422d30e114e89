from pathlib import Path

from perfusion.services.pipeline import AIF_SOURCES, FitOptions, case_dirs, fit_case

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    """⚙️ Register, filter, extract AIF/VOF and fit perfusion maps per case."""

    help = "Fit perfusion maps for simulated or imported cases into <out-dir>/fit"
    command_name = "fit"

    def add_command_arguments(self, parser):
        parser.add_argument('--cases-dir', default=None, help='Case directories to fit (default: <out-dir>/cases)')
        parser.add_argument('--case', nargs='+', default=None, help='Only these case names')
        parser.add_argument('--skip-register', action='store_true', help='Skip motion correction')
        parser.add_argument('--skip-filter', action='store_true', help='Skip the bilateral filter')
        parser.add_argument('--reference-frame', type=int, default=None,
                            help='Registration reference frame (default: the most textured frame)')
        parser.add_argument('--aif-source', choices=AIF_SOURCES, default='auto',
                            help='auto = selected from the volume, generator = aif.csv of the case (default: %(default)s)')
        parser.add_argument('--pvc', action='store_true', help='Rescale the AIF to the venous output area')
        parser.add_argument('--ttp-raw', action='store_true', help='Read TTP off the measured curve')
        parser.add_argument('--zero-signal-factor', type=float, default=None,
                            help='Peak-to-noise ratio below which a voxel is ZERO_SIGNAL (default: 3)')
        parser.add_argument('--no-refine', action='store_true', help='Grid search only')
        parser.add_argument('--svd', action='store_true', help='Also write truncated-SVD baseline maps (*_svd)')
        parser.add_argument('--svd-threshold', type=float, default=None,
                            help='Singular value cut-off as a fraction of the largest (default: 0.2)')

    def run(self, out_dir, options):
        cases_root = Path(options['cases_dir']) if options['cases_dir'] else out_dir / "cases"
        dirs = case_dirs(cases_root)
        if options['case']:
            wanted = set(options['case'])
            dirs = [d for d in dirs if d.name in wanted]
            missing = wanted - {d.name for d in dirs}
            if missing:
                raise FileNotFoundError(f"cases {sorted(missing)} not in {cases_root}")

        overrides = (
            ('ttp_raw', True if options['ttp_raw'] else None),
            ('zero_signal_factor', options['zero_signal_factor']),
            ('refine', False if options['no_refine'] else None),
        )
        fit_options = FitOptions(
            register=not options['skip_register'],
            smooth=not options['skip_filter'],
            reference_index=options['reference_frame'],
            aif_source=options['aif_source'],
            pvc=True if options['pvc'] else None,
            svd=options['svd'],
            svd_threshold=options['svd_threshold'],
            threads=options['threads'],
            fit_overrides=overrides,
        )
        for case_dir in dirs:
            summary = fit_case(case_dir, out_dir / "fit" / case_dir.name, fit_options)
            self.stdout.write(
                f"⚙️ {case_dir.name}: {summary['voxels_ok']}/{summary['voxels_total']} voxels ok in {summary['seconds']}s"
            )
            if summary['voxels_zero_signal'] or summary['voxels_boundary']:
                self.warn(
                    f"⚠️ {case_dir.name}: {summary['voxels_zero_signal']} zero-signal, "
                    f"{summary['voxels_boundary']} boundary voxels"
                )
        self.success(f"✅ Fitted {len(dirs)} cases into {out_dir / 'fit'}")
