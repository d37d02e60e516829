from django.conf import settings
from rest_framework import serializers

from .services import EXPERIMENTS, ExperimentConfig, SimulationConfig
from measures.utils import TEST_FUNCTIONS
from noise.samplers import DoaLaw, StableParams, stable_target_of
from noise.serializers import DoaLawSerializer, StableParamsSerializer
from noise.streams import UINT64_MASK
from particles.coefficients import ModelSpec
from particles.serializers import ModelSpecSerializer

THRESHOLD_KEYS = {
    "ks_cutoff": "KS_CUTOFF",
    "ks_trend_slack": "KS_TREND_SLACK",
    "p_value_floor": "P_VALUE_FLOOR",
    "pass_fraction": "PASS_FRACTION",
    "selfcheck_factor": "SELFCHECK_FACTOR",
}


def build_laws(data):
    """Turn the nested model/doa/stable sections into objects, filling the defaults from alpha."""
    try:
        model = ModelSpec(**data["model"])
    except ValueError as e:
        raise serializers.ValidationError({"model": str(e)})
    alpha = model.alpha

    doa = DoaLaw(**data["doa"]) if "doa" in data else DoaLaw.symmetric(alpha)
    if doa.alpha != alpha:
        raise serializers.ValidationError({"doa": f"alpha {doa.alpha} differs from the model alpha {alpha}."})

    # 별도 지정이 없으면 collateral 분포가 끌려가는 stable law를 limit system의 구동 잡음으로 사용
    stable = StableParams(**data["stable"]) if "stable" in data else stable_target_of(doa)
    if stable.alpha != alpha:
        raise serializers.ValidationError({"stable": f"alpha {stable.alpha} differs from the model alpha {alpha}."})
    return model, doa, stable


def validate_times(times, T, field="output_times"):
    if any(t < 0 or t > T for t in times):
        raise serializers.ValidationError({field: f"all times must lie in [0, {T}]."})
    if any(b <= a for a, b in zip(times, times[1:])):
        raise serializers.ValidationError({field: "times must be strictly increasing."})


class ExperimentConfigSerializer(serializers.Serializer):
    experiment = serializers.ChoiceField(choices=EXPERIMENTS)
    model = ModelSpecSerializer()
    doa = DoaLawSerializer(required=False)
    stable = StableParamsSerializer(required=False)
    N_grid = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False, default=lambda: [16, 64, 256, 1024])
    M = serializers.IntegerField(min_value=1, required=False)
    T = serializers.FloatField(default=1.0)
    h = serializers.FloatField(required=False)
    replicas = serializers.IntegerField(min_value=1, default=100)
    output_times = serializers.ListField(child=serializers.FloatField(), required=False)
    root_seed = serializers.IntegerField(min_value=0, max_value=UINT64_MASK, default=0)
    out_path = serializers.CharField(required=False, allow_blank=True, default="")
    drift_step = serializers.FloatField(required=False)
    test_function = serializers.ChoiceField(choices=list(TEST_FUNCTIONS), required=False)
    threads = serializers.IntegerField(min_value=1, required=False)
    bootstrap_resamples = serializers.IntegerField(min_value=10, required=False)
    thresholds = serializers.DictField(child=serializers.FloatField(), required=False)

    def validate(self, data):
        defaults = settings.SIMULATION
        if data["T"] <= 0:
            raise serializers.ValidationError({"T": "T must be positive."})
        data.setdefault("M", defaults["LIMIT_PARTICLES"])
        data.setdefault("h", defaults["LIMIT_STEP"])
        data.setdefault("drift_step", defaults["DRIFT_STEP"])
        data.setdefault("test_function", defaults["TEST_FUNCTION"])
        data.setdefault("threads", defaults["THREADS"])
        data.setdefault("bootstrap_resamples", defaults["BOOTSTRAP_RESAMPLES"])
        data.setdefault("output_times", [data["T"]])

        if not 0 < data["h"] < data["T"]:
            raise serializers.ValidationError({"h": "h must lie in (0, T)."})
        if data["drift_step"] <= 0:
            raise serializers.ValidationError({"drift_step": "drift_step must be positive."})
        validate_times(data["output_times"], data["T"])

        unknown = set(data.get("thresholds", {})) - set(THRESHOLD_KEYS)
        if unknown:
            raise serializers.ValidationError({"thresholds": f"unknown thresholds {sorted(unknown)}."})
        data["thresholds"] = {key: data.get("thresholds", {}).get(key, defaults[name]) for key, name in THRESHOLD_KEYS.items()}

        experiment = data["experiment"]
        grid = data["N_grid"]
        if experiment in ("chaos_sweep", "common_noise", "stable_clt", "collateral_limit") and any(b <= a for a, b in zip(grid, grid[1:])):
            raise serializers.ValidationError({"N_grid": "N_grid must be strictly increasing."})
        if experiment in ("conditional_iid", "limit_selfcheck") and data["replicas"] < 2:
            raise serializers.ValidationError({"replicas": f"{experiment} needs at least two replicas."})
        if experiment == "conditional_iid" and data["M"] < 2:
            raise serializers.ValidationError({"M": "conditional_iid needs at least two particles."})

        data["model"], data["doa"], data["stable"] = build_laws(data)
        if experiment == "stable_clt" and not data["model"].is_pure_collateral:
            raise serializers.ValidationError({"model": "stable_clt needs b = 0, psi = 0 and a constant rate."})
        return data

    def create(self, validated_data):
        validated_data["N_grid"] = tuple(validated_data["N_grid"])
        validated_data["output_times"] = tuple(validated_data["output_times"])
        return ExperimentConfig(**validated_data)


class SimulationConfigSerializer(serializers.Serializer):
    model = ModelSpecSerializer()
    doa = DoaLawSerializer(required=False)
    stable = StableParamsSerializer(required=False)
    N = serializers.IntegerField(min_value=1, default=100)
    M = serializers.IntegerField(min_value=1, required=False)
    T = serializers.FloatField(default=1.0)
    h = serializers.FloatField(required=False)
    output_times = serializers.ListField(child=serializers.FloatField(), required=False)
    drift_step = serializers.FloatField(required=False)
    collateral_scale = serializers.FloatField(min_value=0.0, default=1.0)
    root_seed = serializers.IntegerField(min_value=0, max_value=UINT64_MASK, default=0)

    def validate(self, data):
        defaults = settings.SIMULATION
        if data["T"] < 0:
            raise serializers.ValidationError({"T": "T must be non-negative."})
        data.setdefault("M", defaults["LIMIT_PARTICLES"])
        data.setdefault("h", defaults["LIMIT_STEP"])
        data.setdefault("drift_step", defaults["DRIFT_STEP"])
        if "output_times" in data:
            validate_times(data["output_times"], data["T"])
        data["model"], data["doa"], data["stable"] = build_laws(data)
        return data

    def create(self, validated_data):
        if "output_times" in validated_data:
            validated_data["output_times"] = tuple(validated_data["output_times"])
        return SimulationConfig(**validated_data)
