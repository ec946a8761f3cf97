from rest_framework import serializers


class SceneSerializer(serializers.Serializer):
    setting = serializers.CharField()
    action = serializers.CharField(required=False, allow_blank=True, default='')


class ScenarioSerializer(serializers.Serializer):
    """An open-ended scenario: the observer's situation and the scenes Alice is seen in."""

    id = serializers.SlugField(max_length=100)
    subject = serializers.CharField(max_length=100)
    observer = serializers.CharField(max_length=100, required=False, default='')
    situation = serializers.CharField()
    facts = serializers.ListField(child=serializers.CharField(), required=False, default=list)
    persona = serializers.CharField(required=False, allow_blank=True, default='')
    hypotheses = serializers.CharField(required=False, allow_blank=True, default='')
    scenes = SceneSerializer(many=True, allow_empty=False)
