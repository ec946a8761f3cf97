from collections import deque

from rest_framework import serializers


class EnvironmentSpecSerializer(serializers.Serializer):
    """Validates an environment description before it becomes a RoomGraph."""

    name = serializers.CharField(max_length=100, required=False, default='custom')
    rooms = serializers.ListField(child=serializers.IntegerField(), allow_empty=False)
    edges = serializers.DictField(
        child=serializers.ListField(child=serializers.IntegerField()),
        required=False,
        default=dict,
    )
    restaurants = serializers.DictField(child=serializers.IntegerField(), required=False, default=dict)
    visibility = serializers.DictField(
        child=serializers.ListField(child=serializers.IntegerField()),
        required=False,
        default=dict,
    )

    def validate_rooms(self, value):
        """Rooms must be unique."""
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Room identifiers must be unique.")
        return sorted(value)

    def validate_edges(self, value):
        """Edge keys arrive as strings in JSON; convert them to room ids."""
        edges = {}
        for key, targets in value.items():
            try:
                room = int(key)
            except (TypeError, ValueError):
                raise serializers.ValidationError(f"Edge key {key!r} is not a room id.")
            edges[room] = sorted(set(targets))
        return edges

    def validate(self, attrs):
        """Check the graph invariants: symmetric, irreflexive, connected, visible restaurants."""
        rooms = set(attrs['rooms'])
        edges = attrs['edges']
        restaurants = attrs['restaurants']
        visibility = attrs['visibility']

        for room, targets in edges.items():
            if room not in rooms:
                raise serializers.ValidationError(f"Edge from unknown room {room}.")
            for target in targets:
                if target not in rooms:
                    raise serializers.ValidationError(f"Edge {room}->{target} targets an unknown room.")
                if target == room:
                    raise serializers.ValidationError(f"Room {room} cannot connect to itself.")
                if room not in edges.get(target, []):
                    raise serializers.ValidationError(
                        f"Edge {room}->{target} is not symmetric: Room {target} does not list Room {room}."
                    )

        occupied = {}
        for restaurant, room in restaurants.items():
            if room not in rooms:
                raise serializers.ValidationError(f"Restaurant {restaurant} is placed in unknown room {room}.")
            if room in occupied:
                raise serializers.ValidationError(
                    f"Room {room} already holds the {occupied[room]} restaurant."
                )
            occupied[room] = restaurant

        for restaurant in visibility:
            if restaurant not in restaurants:
                raise serializers.ValidationError(f"Visibility listed for unknown restaurant {restaurant}.")
        for restaurant, room in restaurants.items():
            seen_from = visibility.get(restaurant, [])
            if room not in seen_from:
                raise serializers.ValidationError(
                    f"The {restaurant} restaurant must be visible from its own room {room}."
                )
            for viewer in seen_from:
                if viewer not in rooms:
                    raise serializers.ValidationError(
                        f"The {restaurant} restaurant is visible from unknown room {viewer}."
                    )

        start = min(rooms)
        reached = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for neighbor in edges.get(current, []):
                if neighbor not in reached:
                    reached.add(neighbor)
                    queue.append(neighbor)
        if reached != rooms:
            missing = sorted(rooms - reached)
            raise serializers.ValidationError(f"Graph is disconnected; unreachable rooms: {missing}.")

        return attrs


class TrajectoryEntrySerializer(serializers.Serializer):
    """One row of the trajectory table."""

    id = serializers.CharField(max_length=50)
    cells = serializers.ListField(child=serializers.CharField(max_length=50), allow_empty=True)
    closed = serializers.ListField(child=serializers.CharField(max_length=50), required=False, default=list)
    start_room = serializers.IntegerField(required=False)
    note = serializers.CharField(required=False, default='', allow_blank=True)


class TrajectoryCorpusSerializer(serializers.Serializer):
    """A trajectory corpus file: table rows plus the label-to-room mapping."""

    environment = serializers.CharField(max_length=100)
    start_room = serializers.IntegerField()
    room_labels = serializers.DictField(child=serializers.IntegerField())
    trajectories = TrajectoryEntrySerializer(many=True)

    def validate_trajectories(self, value):
        """Trajectory ids must be unique."""
        ids = [row['id'] for row in value]
        if len(set(ids)) != len(ids):
            raise serializers.ValidationError("Trajectory ids must be unique.")
        return value
