from rest_framework.exceptions import ValidationError
from rest_framework.permissions import AllowAny
from rest_framework.response import Response
from rest_framework.views import APIView

from hsdt_app.exceptions import HsdtError

from restoration_app.containers import read_hsi
from restoration_app.metrics import evaluate

from .serializers import MetricReportSerializer, MetricsRequestSerializer


class MetricsView(APIView):
    """
    PSNR, SSIM and SAM of an estimate against a reference.

    POST: multipart `ref` and `est` HSI containers, optional `data_range`.
    """
    permission_classes = [AllowAny]

    def post(self, request):
        serializer = MetricsRequestSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        try:
            report = evaluate(read_hsi(data['ref']), read_hsi(data['est']), data['data_range'],
                              name=data['est'].name)
        except HsdtError as exc:
            raise ValidationError({'detail': str(exc)})
        return Response(MetricReportSerializer(report).data)
