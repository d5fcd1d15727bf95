from pathlib import Path

from hsdt_app.management.base import HsdtCommand

from restoration_app.api.serializers import MetricReportSerializer
from restoration_app.containers import read_hsi
from restoration_app.metrics import evaluate


class Command(HsdtCommand):
    help = 'Band-averaged PSNR and SSIM and mean spectral angle of an estimate against a reference.'

    def add_arguments(self, parser):
        parser.add_argument('reference')
        parser.add_argument('estimate')
        parser.add_argument('--data-range', type=float, default=1.0)
        parser.add_argument('--output', help='report JSON; stdout when omitted')

    def run(self, reference, estimate, data_range, output, **options):
        report = evaluate(read_hsi(reference), read_hsi(estimate), data_range, name=Path(estimate).name)
        self.write_json(MetricReportSerializer(report).data, output)
