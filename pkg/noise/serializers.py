from rest_framework import serializers

from .samplers import DoaKind, DoaLaw, StableParams


def validate_alpha_field(value):
    if not (0.0 < value < 2.0) or value == 1.0:
        raise serializers.ValidationError("alpha must lie in (0,1) or (1,2).")
    return value


class StableParamsSerializer(serializers.Serializer):
    alpha = serializers.FloatField(validators=[validate_alpha_field])
    a_plus = serializers.FloatField(min_value=0.0)
    a_minus = serializers.FloatField(min_value=0.0)

    def validate(self, data):
        if data["a_plus"] + data["a_minus"] <= 0:
            raise serializers.ValidationError({"a_plus": "a_plus + a_minus must be strictly positive."})
        return data

    # save() 호출 시 create()가 실행되어 검증된 값으로 StableParams를 생성
    def create(self, validated_data):
        return StableParams(**validated_data)


class DoaLawSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=[kind.value for kind in DoaKind], default=DoaKind.SYMMETRIC_PARETO.value)
    alpha = serializers.FloatField(validators=[validate_alpha_field])
    p_plus = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    x0 = serializers.FloatField(default=1.0)

    def validate(self, data):
        if data["x0"] <= 0:
            raise serializers.ValidationError({"x0": "x0 must be positive."})
        if data["kind"] == DoaKind.SYMMETRIC_PARETO.value and data["p_plus"] != 0.5:
            raise serializers.ValidationError({"p_plus": "a symmetric Pareto law has p_plus = 0.5."})
        return data

    def create(self, validated_data):
        return DoaLaw(**validated_data)
