from django.core.management.base import CommandError

from hsdt_app.api.serializers import GradcheckResultSerializer
from hsdt_app.gradcheck import SUITE, run_suite
from hsdt_app.management.base import HsdtCommand


class Command(HsdtCommand):
    help = 'Compare analytic gradients of every differentiable operation with central differences.'

    def add_arguments(self, parser):
        parser.add_argument('--seed', required=True, type=int)
        parser.add_argument('--only', nargs='+', choices=[name for name, _ in SUITE], metavar='CHECK',
                            help='run a subset of the suite')
        parser.add_argument('--output', help='results JSON')

    def run(self, seed, only, output, **options):
        results = run_suite(only, seed=seed)
        for result in results:
            status = 'ok' if result.passed else 'FAIL'
            self.stdout.write(f"{result.name:<28} {result.max_relative_error:.2e}  {status}")
        if output:
            self.write_json(GradcheckResultSerializer(results, many=True).data, output)

        failed = [result.name for result in results if not result.passed]
        if failed:
            raise CommandError(f"Gradient check failed for: {', '.join(failed)}.")
