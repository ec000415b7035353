from rest_framework import serializers

from .exceptions import ParameterError
from .hilbert import SystemParams
from .models import ScenarioRun
from .trajectory import TrajectoryMode

MODES = ["params", "qrt", "correlate", "trajectory-dump", "fwhm-scan", "regression"]
N_MAX_LIMIT = 40


class SystemParamsSerializer(serializers.Serializer):
    g = serializers.FloatField()
    kappa = serializers.FloatField()
    gamma = serializers.FloatField()
    epsilon = serializers.FloatField(default=0.0, min_value=0.0)
    N = serializers.ChoiceField(choices=[1, 2], default=1)
    n_max = serializers.IntegerField(default=3, min_value=1, max_value=N_MAX_LIMIT)
    r = serializers.FloatField(default=0.5, min_value=0.0, max_value=1.0)
    theta = serializers.FloatField(default=0.0)
    Gamma_bw = serializers.FloatField(default=100.0)
    eta = serializers.FloatField(default=1.0)

    # Let SystemParams own the physical checks so both entry points agree
    def validate(self, attrs):
        try:
            self.build_params(attrs)
        except ParameterError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def build_params(self, attrs):
        fields = {name: attrs[name] for name in SystemParams.__dataclass_fields__ if name in attrs}
        return SystemParams(**fields)

    def to_params(self):
        return self.build_params(self.validated_data)


class ScenarioSerializer(SystemParamsSerializer):
    name = serializers.CharField(default="scenario", max_length=100)
    mode = serializers.ChoiceField(choices=MODES)
    # Overridden: a scenario may give the drive as a target X instead
    epsilon = serializers.FloatField(default=None, allow_null=True, min_value=0.0)
    target_X = serializers.FloatField(default=None, allow_null=True)
    n_max = serializers.CharField(default="auto")
    seed = serializers.IntegerField(default=0, min_value=0)
    starts = serializers.IntegerField(default=1000, min_value=1)
    duration = serializers.FloatField(default=20.0)
    n_traj = serializers.IntegerField(default=32, min_value=1)
    tau_max = serializers.FloatField(default=None, allow_null=True)
    nu_max = serializers.FloatField(default=80.0)
    nu_points = serializers.IntegerField(default=801, min_value=3)
    detection = serializers.ChoiceField(
        choices=[mode.value for mode in TrajectoryMode], default=TrajectoryMode.HOMODYNE.value
    )
    drive_over_kappa = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=list)
    gamma_values = serializers.ListField(child=serializers.FloatField(), default=list)
    normalization = serializers.ChoiceField(choices=["kappa", "gamma", "both"], default="kappa")
    dt = serializers.FloatField(default=None, allow_null=True)

    def validate_n_max(self, value):
        if str(value).strip().lower() == "auto":
            return "auto"
        try:
            n_max = int(value)
        except ValueError:
            raise serializers.ValidationError("n_max must be an integer or 'auto'")
        if not 2 <= n_max <= N_MAX_LIMIT:
            raise serializers.ValidationError(f"n_max must lie in [2, {N_MAX_LIMIT}]")
        return n_max

    def validate_target_X(self, value):
        if value is not None and not value > 0:
            raise serializers.ValidationError("target_X must be positive")
        return value

    def validate_duration(self, value):
        if value < 0:
            raise serializers.ValidationError("duration must be non-negative")
        return value

    def validate_gamma_values(self, value):
        if any(not gamma > 0 for gamma in value):
            raise serializers.ValidationError("every gamma value must be positive")
        return value

    def validate(self, attrs):
        drive_given = [attrs.get("target_X") is not None, attrs.get("epsilon") is not None]
        if attrs["mode"] == "fwhm-scan":
            if not attrs.get("drive_over_kappa"):
                raise serializers.ValidationError("fwhm-scan needs a drive_over_kappa grid")
        elif sum(drive_given) != 1:
            raise serializers.ValidationError("give exactly one of target_X and epsilon")
        return super().validate(attrs)

    def build_params(self, attrs):
        attrs = dict(attrs)
        if attrs.get("epsilon") is None:
            attrs["epsilon"] = 0.0
        if attrs.get("n_max") == "auto":
            attrs["n_max"] = 3
        return super().build_params(attrs)


class ScenarioRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ScenarioRun
        fields = [
            "id",
            "name",
            "mode",
            "seed",
            "output_dir",
            "manifest",
            "created_at",
        ]
        read_only_fields = fields
