from perfusion.services.lesion_validation import LesionValidator, SegmentationThresholds

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    """🎯 Compare lesion segmentations of two map sets over a cohort."""

    help = "Validate test maps against reference maps, report into <out-dir>/validation"
    command_name = "validate"

    def add_command_arguments(self, parser):
        parser.add_argument('--reference', required=True, help='Reference map root, one directory per case')
        parser.add_argument('--test', required=True, help='Test map root, one directory per case')
        parser.add_argument(
            '--mask-name',
            default='tissue_mask',
            help='Mask stem inside each reference case; fit writes tissue_mask without vessels (default: %(default)s)'
        )
        parser.add_argument('--core-cbv-max', type=float, default=None, help='Core CBV ceiling in ml/100g (default: 1.5)')
        parser.add_argument('--core-cbf-fraction', type=float, default=None,
                            help='Core CBF ceiling as a fraction of healthy median (default: 0.3)')
        parser.add_argument('--penumbra-ttp-delta', type=float, default=None,
                            help='Penumbra TTP excess over healthy median in s (default: 4)')
        parser.add_argument('--penumbra-cbf-fraction', type=float, default=None,
                            help='Optional penumbra CBF ceiling as a fraction of healthy median')
        parser.add_argument('--min-component', type=int, default=None,
                            help='Smallest kept lesion component in voxels (default: 5)')

    def run(self, out_dir, options):
        thresholds = SegmentationThresholds.from_settings(
            core_cbv_max=options['core_cbv_max'],
            core_cbf_fraction=options['core_cbf_fraction'],
            penumbra_ttp_delta_s=options['penumbra_ttp_delta'],
            penumbra_cbf_fraction=options['penumbra_cbf_fraction'],
            min_component=options['min_component'],
        )
        validator = LesionValidator(thresholds, mask_name=options['mask_name'])
        report = validator.validate(options['reference'], options['test'], out_dir=out_dir / "validation")

        for lesion, block in report.summary.items():
            if block['dice_mean'] is None:
                self.warn(f"⚠️ No {lesion} lesions in the reference maps")
                continue
            self.stdout.write(
                f"🎯 {lesion}: Dice {block['dice_mean']:.2f} ± {block['dice_sd']:.2f} "
                f"over {block['n']} cases, r = {block['pearson_r']}"
            )
        if report.n_excluded:
            self.warn(f"⚠️ {report.n_excluded} cases excluded as normal perfusion: {', '.join(report.excluded_cases)}")
        self.success(f"✅ Report for {report.n_cases} cases written to {out_dir / 'validation'}")
