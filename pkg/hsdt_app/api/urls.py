from django.urls import path

from . import views

urlpatterns = [
    path('configs/<str:preset>/params/', views.ParamsView.as_view(), name='config-params'),
    path('attention-maps/', views.AttentionMapView.as_view(), name='attention-maps'),
]
