from django.conf import settings
from django.template.loader import render_to_string

from .graph import Observation, RoomGraph, join_rooms

NUMBER_WORDS = {
    1: 'one', 2: 'two', 3: 'three', 4: 'four', 5: 'five', 6: 'six',
    7: 'seven', 8: 'eight', 9: 'nine', 10: 'ten', 11: 'eleven', 12: 'twelve',
}


def environment_context(graph: RoomGraph):
    """Sentences describing rooms, connections and visibility."""
    room_lines = []
    for room in graph.rooms:
        restaurant = graph.restaurant_at(room)
        if restaurant is not None:
            room_lines.append(f"Room {room} has a {restaurant} restaurant in it.")
        elif graph.neighbors(room):
            room_lines.append(f"Room {room} connects to {join_rooms(graph.neighbors(room))}.")
        else:
            room_lines.append(f"Room {room} has no exits.")

    visibility_lines = []
    for restaurant in graph.restaurants:
        home = graph.restaurant_rooms[restaurant]
        seen = sorted(r for r in graph.visibility[restaurant] if r != home)
        unseen = sorted(r for r in graph.rooms if r not in graph.visibility[restaurant])
        if seen:
            visibility_lines.append(f"The {restaurant} restaurant is **visible** from {join_rooms(seen)}.")
        if unseen:
            visibility_lines.append(
                f"The {restaurant} restaurant is **not visible** from {join_rooms(unseen, 'or')}."
            )

    return {
        'room_count': NUMBER_WORDS.get(len(graph.rooms), str(len(graph.rooms))),
        'room_lines': room_lines,
        'visibility_lines': visibility_lines,
        'restaurants': graph.restaurants,
    }


def render_environment(graph: RoomGraph, version: str = None) -> str:
    """The rule text every restaurant-task prompt starts from."""
    version = version or settings.LAIP['PROMPT_VERSION']
    return render_to_string(f"laip/{version}/environment.txt", environment_context(graph)).strip()


def render_observation(observation: Observation, version: str = None) -> str:
    """Current room, visible restaurants with status, reachable rooms."""
    version = version or settings.LAIP['PROMPT_VERSION']
    context = {
        'room': observation.room,
        'visible': [
            {'restaurant': restaurant, 'status': 'open' if is_open else 'closed'}
            for restaurant, is_open in observation.visible
        ],
        'reachable': join_rooms(observation.reachable),
    }
    return render_to_string(f"laip/{version}/observation.txt", context).strip()
