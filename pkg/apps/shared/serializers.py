from rest_framework import serializers


class IntervalValidationMixin:
    """Interval checks shared by the hyperparameter serializers"""

    def _validate_open_unit(self, value, field_name):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError(f"{field_name} must lie in (0, 1)")
        return value

    def _validate_half_open_unit(self, value, field_name):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError(f"{field_name} must lie in (0, 1]")
        return value

    def _validate_closed_unit(self, value, field_name):
        if not 0.0 <= value <= 1.0:
            raise serializers.ValidationError(f"{field_name} must lie in [0, 1]")
        return value


class SplitSerializer(serializers.Serializer):
    """Train/validation/test lengths"""
    train = serializers.IntegerField(min_value=1)
    validate = serializers.IntegerField(min_value=0)
    test = serializers.IntegerField(min_value=0)
