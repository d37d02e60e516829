from rest_framework import serializers

from .coefficients import DRIFTS, INITIAL_LAWS, MAIN_JUMPS, RATES, STATISTICS, ModelSpec
from noise.serializers import validate_alpha_field


class DescriptorSerializer(serializers.Serializer):
    """Base for one coefficient family: ``kind`` selects the class, the other fields are its parameters.

    ``validate`` returns the descriptor instance itself, so a parent serializer receives
    ready-made descriptors in its validated data.
    """

    families = {}

    def validate(self, data):
        data = dict(data)
        kind = data.pop("kind")
        try:
            return self.families[kind](**data)
        except TypeError:
            raise serializers.ValidationError({"kind": f"invalid parameters {sorted(data)} for kind '{kind}'."})
        except ValueError as e:
            raise serializers.ValidationError({"kind": str(e)})


class DriftSerializer(DescriptorSerializer):
    families = DRIFTS

    kind = serializers.ChoiceField(choices=list(DRIFTS))
    value = serializers.FloatField(required=False)
    beta = serializers.FloatField(required=False)
    statistic = serializers.ChoiceField(choices=list(STATISTICS), required=False)
    kernel = serializers.ChoiceField(choices=["tanh", "gaussian"], required=False)
    strength = serializers.FloatField(required=False)
    width = serializers.FloatField(required=False)


class MainJumpSerializer(DescriptorSerializer):
    families = MAIN_JUMPS

    kind = serializers.ChoiceField(choices=list(MAIN_JUMPS))
    delta = serializers.FloatField(required=False)
    kappa = serializers.FloatField(required=False)


class RateSerializer(DescriptorSerializer):
    families = RATES

    kind = serializers.ChoiceField(choices=list(RATES))
    value = serializers.FloatField(required=False)
    c0 = serializers.FloatField(required=False)
    c1 = serializers.FloatField(required=False)


class InitialLawSerializer(DescriptorSerializer):
    families = INITIAL_LAWS

    kind = serializers.ChoiceField(choices=list(INITIAL_LAWS))
    at = serializers.FloatField(required=False)
    low = serializers.FloatField(required=False)
    high = serializers.FloatField(required=False)
    mean = serializers.FloatField(required=False)
    std = serializers.FloatField(required=False)
    width = serializers.FloatField(required=False)


class ModelSpecSerializer(serializers.Serializer):
    alpha = serializers.FloatField(validators=[validate_alpha_field])
    drift = DriftSerializer(required=False)
    main_jump = MainJumpSerializer(required=False)
    rate = RateSerializer(required=False)
    initial_law = InitialLawSerializer(required=False)

    def validate(self, data):
        main_jump = data.get("main_jump")
        if data["alpha"] > 1.0 and main_jump is not None and not main_jump.is_zero:
            raise serializers.ValidationError({"main_jump": "main jumps must vanish when alpha > 1."})
        return data

    def create(self, validated_data):
        return ModelSpec(**validated_data)
