from django.urls import include, path
from rest_framework.routers import DefaultRouter

from .views import ParamsView, ScenarioRunViewSet

router = DefaultRouter()
router.register(r"runs", ScenarioRunViewSet)

urlpatterns = [
    path("", include(router.urls)),
    path("params/", ParamsView.as_view(), name="params"),
]
