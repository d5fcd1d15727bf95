from hsdt_app.api.views import params_report
from hsdt_app.configfile import load_model_config
from hsdt_app.management.base import HsdtCommand
from hsdt_app.network import build_model, conv3d_baseline


class Command(HsdtCommand):
    help = 'Total parameter count and per-tensor table of a preset or config file.'

    def add_arguments(self, parser):
        parser.add_argument('--config', default='hsdt-s', help='preset name or key=value config file')
        parser.add_argument('--conv3d', action='store_true',
                            help='count the same network with dense Conv3D instead of S3Conv')
        parser.add_argument('--format', choices=['text', 'json'], default='text')

    def run(self, config, conv3d, format, **options):
        config = load_model_config(config)
        if conv3d:
            config = conv3d_baseline(config)
        report = params_report(config, build_model(config, seed=0))
        if format == 'json':
            self.write_json(report)
            return

        width = max(len(row['name']) for row in report['layers'])
        for row in report['layers']:
            shape = 'x'.join(str(extent) for extent in row['shape'])
            self.stdout.write(f"{row['name'].ljust(width)}  {shape:>16}  {row['count']:>9,}")
        self.stdout.write(f"{'total'.ljust(width)}  {'':>16}  {report['total']:>9,}")
