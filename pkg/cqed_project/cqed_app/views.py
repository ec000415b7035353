from rest_framework import filters, mixins, permissions, status, viewsets
from rest_framework.response import Response
from rest_framework.views import APIView

from .exceptions import WeakFieldError
from .hilbert import derived_params
from .models import ScenarioRun
from .permissions import IsAdmin
from .serializers import ScenarioRunSerializer, SystemParamsSerializer
from .weakfield import constants, emission_ratio


# A viewset for browsing recorded runs. Runs are created by the
# correlator command only, so there is no create or update action.
class ScenarioRunViewSet(
    mixins.ListModelMixin,
    mixins.RetrieveModelMixin,
    mixins.DestroyModelMixin,
    viewsets.GenericViewSet,
):

    queryset = ScenarioRun.objects.all()
    serializer_class = ScenarioRunSerializer

    # Allows dynamic filtering based on query parameters
    filter_backends = [filters.SearchFilter]
    search_fields = ["name", "mode"]

    def get_permissions(self):
        # Allow unrestricted GET operations
        if self.action in ["list", "retrieve"]:
            permission_classes = [permissions.AllowAny]
        # Allow only admins to delete a run record
        else:
            permission_classes = [IsAdmin]
        return [permission() for permission in permission_classes]


# Derived and weak-field constants for a posted parameter set
class ParamsView(APIView):
    permission_classes = [permissions.AllowAny]

    def post(self, request):
        serializer = SystemParamsSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        params = serializer.to_params()

        data = {
            "params": params.as_dict(),
            "derived": derived_params(params).as_dict(),
            "emission_ratio": emission_ratio(params),
        }
        try:
            data["weak_field"] = constants(params).as_dict()
        except WeakFieldError as exc:
            data["weak_field"] = None
            data["weak_field_error"] = str(exc)
        return Response(data, status=status.HTTP_200_OK)
