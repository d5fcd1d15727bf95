"""
URL configuration for core project.

    api/configs/<preset>/params/   parameter report of a preset
    api/attention-maps/            per-block band attention of an uploaded HSI
    api/metrics/                   PSNR / SSIM / SAM of two uploaded HSIs
"""
from django.urls import include, path

urlpatterns = [
    path('api/', include('hsdt_app.api.urls')),
    path('api/', include('restoration_app.api.urls')),
]
