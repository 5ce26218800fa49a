"""Deterministic synthetic geography: worlds, scenes, and pure tool adapters.

A world is a seeded three-level region tree (country, provinces, cities)
plus clue material: per-region attribute tags, per-city sign texts, and
per-city POIs with exact coordinates. Scene descriptors stand in for
images; the adapter family answers every tool from world content alone, so
whole episodes run offline and reproducibly.

Construction guarantees the properties the clue system leans on: region
names are unique equal-length words (no accidental substring matches), sign
texts and POI names embed their city's name and are globally unique, every
city shares at least one tag with its province, and at least two provinces
share a macro tag whenever the world has two or more provinces.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import random
from dataclasses import dataclass

from .actions import Action, Tool
from .executor import ToolResult
from .geo import (
    AdminRegion,
    Gazetteer,
    GeoPoint,
    RegionLevel,
    haversine_km,
    region_contains,
)

COUNTRY_RADIUS_KM = 3000.0
PROVINCE_RADIUS_KM = 350.0
CITY_RADIUS_KM = 22.0
PROVINCE_SPREAD_KM = 2500.0     # provinces stay within this of the country centroid
PROVINCE_SEPARATION_KM = 760.0  # pairwise centroid separation between provinces
CITY_SPREAD_KM = 260.0          # cities stay within this of their province centroid
CITY_SEPARATION_KM = 56.0       # pairwise separation inside one province

SIGN_WORDS = ("bakery", "garage", "laundry", "pharmacy", "tavern", "cinema",
              "market", "florist")
POI_WORDS = ("lighthouse", "museum", "stadium", "harbor", "cathedral",
             "observatory", "gardens", "fortress")
VEGETATION_TAGS = ("palm-groves", "pine-forest", "terraced-fields", "mangrove-swamp",
                   "bamboo-thicket", "olive-orchards", "steppe-grass", "mossy-heath")
TERRAIN_TAGS = ("karst-hills", "river-delta", "coastal-cliffs", "high-plateau",
                "dune-fields", "glacial-valley", "volcanic-slopes", "limestone-gorge")
ARCHITECTURE_TAGS = ("brick-rowhouses", "stilt-houses", "whitewashed-domes",
                     "timber-chalets", "tiled-shophouses", "adobe-compounds",
                     "glass-towers", "stone-terraces")
VEHICLE_TAGS = ("tuk-tuks", "cable-trams", "fishing-skiffs", "yellow-cabs", "horse-carts")

_CONSONANTS = "bdfglkmnprstvz"
_VOWELS = "aeiou"
_RESERVED_WORDS = frozenset(SIGN_WORDS + POI_WORDS)


class ClueKind(enum.Enum):
    VEGETATION = "Vegetation"
    TERRAIN = "Terrain"
    ARCHITECTURE = "Architecture"
    SIGN_TEXT = "SignText"
    POI = "Poi"
    VEHICLE = "Vehicle"


class Difficulty(enum.Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"


@dataclass(frozen=True)
class Clue:
    kind: ClueKind
    value: str
    salience: float

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "value": self.value, "salience": self.salience}

    @classmethod
    def from_json(cls, obj: dict) -> "Clue":
        return cls(ClueKind(obj["kind"]), str(obj["value"]), float(obj["salience"]))


@dataclass(frozen=True)
class Poi:
    name: str
    point: GeoPoint

    def to_json(self) -> dict:
        return {"name": self.name, "lat": self.point.lat, "lon": self.point.lon}

    @classmethod
    def from_json(cls, obj: dict) -> "Poi":
        return cls(str(obj["name"]), GeoPoint(float(obj["lat"]), float(obj["lon"])))


@dataclass(frozen=True)
class Truth:
    point: GeoPoint
    city_id: str

    def to_json(self) -> dict:
        return {"lat": self.point.lat, "lon": self.point.lon, "city_id": self.city_id}

    @classmethod
    def from_json(cls, obj: dict) -> "Truth":
        return cls(GeoPoint(float(obj["lat"]), float(obj["lon"])), str(obj["city_id"]))


@dataclass(frozen=True)
class SceneDescriptor:
    """Structured clue bundle standing in for an image."""

    clues: tuple[Clue, ...]
    truth: Truth
    difficulty: Difficulty

    def __post_init__(self):
        if not self.clues:
            raise ValueError("a scene descriptor needs at least one clue")

    def clues_of(self, *kinds: ClueKind) -> tuple[Clue, ...]:
        return tuple(c for c in self.clues if c.kind in kinds)

    def to_json(self) -> dict:
        return {
            "clues": [c.to_json() for c in self.clues],
            "truth": self.truth.to_json(),
            "difficulty": self.difficulty.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SceneDescriptor":
        return cls(
            clues=tuple(Clue.from_json(c) for c in obj["clues"]),
            truth=Truth.from_json(obj["truth"]),
            difficulty=Difficulty(obj["difficulty"]),
        )


class SynthWorld:
    """Immutable bundle of gazetteer plus clue material."""

    def __init__(
        self,
        seed: int,
        gazetteer: Gazetteer,
        attributes: dict[str, tuple[str, ...]],
        signs: dict[str, tuple[str, ...]],
        pois: dict[str, tuple[Poi, ...]],
    ):
        self.seed = seed
        self.gazetteer = gazetteer
        self.attributes = attributes
        self.signs = signs
        self.pois = pois
        self._sign_city = {
            text.casefold(): cid for cid, texts in signs.items() for text in texts
        }
        self._poi_city = {
            poi.name.casefold(): (cid, poi) for cid, plist in pois.items() for poi in plist
        }

    @property
    def country_id(self) -> str:
        return self.gazetteer.roots()[0].id

    def province_ids(self) -> list[str]:
        return list(self.gazetteer.children(self.country_id))

    def city_ids(self) -> list[str]:
        return [c.id for c in self.gazetteer.cities()]

    def cities_of(self, province_id: str) -> list[str]:
        return list(self.gazetteer.children(province_id))

    def province_of(self, city_id: str) -> str:
        parent = self.gazetteer.get(city_id).parent_id
        assert parent is not None
        return parent

    def tags_of(self, region_id: str) -> tuple[str, ...]:
        return self.attributes.get(region_id, ())

    def regions_with_tag(self, tag: str) -> frozenset[str]:
        return frozenset(rid for rid, tags in self.attributes.items() if tag in tags)

    def tag_table(self) -> dict[str, frozenset[str]]:
        """Caption-extraction table: every known tag to its carrier regions."""
        table: dict[str, set[str]] = {}
        for rid, tags in self.attributes.items():
            for tag in tags:
                table.setdefault(tag, set()).add(rid)
        return {tag: frozenset(rids) for tag, rids in table.items()}

    def sign_city(self, text: str) -> str | None:
        return self._sign_city.get(text.casefold())

    def find_poi(self, name: str) -> tuple[str, Poi] | None:
        return self._poi_city.get(name.casefold())

    def to_json(self) -> dict:
        return {
            "format": "synthworld/1",
            "seed": self.seed,
            "regions": self.gazetteer.to_json(),
            "attributes": {rid: list(tags) for rid, tags in sorted(self.attributes.items())},
            "signs": {cid: list(texts) for cid, texts in sorted(self.signs.items())},
            "pois": {
                cid: [p.to_json() for p in plist] for cid, plist in sorted(self.pois.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SynthWorld":
        if obj.get("format") != "synthworld/1":
            raise ValueError(f"unsupported world format: {obj.get('format')!r}")
        return cls(
            seed=int(obj["seed"]),
            gazetteer=Gazetteer([AdminRegion.from_json(r) for r in obj["regions"]]),
            attributes={rid: tuple(tags) for rid, tags in obj["attributes"].items()},
            signs={cid: tuple(texts) for cid, texts in obj["signs"].items()},
            pois={
                cid: tuple(Poi.from_json(p) for p in plist)
                for cid, plist in obj["pois"].items()
            },
        )


def save_world(world: SynthWorld, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(world.to_json(), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def load_world(path: str) -> SynthWorld:
    with open(path, encoding="utf-8") as f:
        return SynthWorld.from_json(json.load(f))


def _gen_name(rng: random.Random, taken: set[str]) -> str:
    # Equal-length generated words cannot be proper substrings of each
    # other, which keeps name scanning in extraction unambiguous.
    while True:
        word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3))
        if word not in taken and word not in _RESERVED_WORDS:
            taken.add(word)
            return word.capitalize()


def _offset_point(rng: random.Random, center: GeoPoint, max_km: float) -> GeoPoint:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    dist = rng.uniform(0.0, max_km)
    dlat = dist * math.cos(angle) / 111.19492664455889
    dlon = dist * math.sin(angle) / (111.19492664455889 * max(0.2, math.cos(math.radians(center.lat))))
    return GeoPoint(max(-89.0, min(89.0, center.lat + dlat)), center.lon + dlon)


def _place(
    rng: random.Random,
    center: GeoPoint,
    spread_km: float,
    others: list[GeoPoint],
    min_sep_km: float,
    attempts: int = 4000,
) -> GeoPoint:
    for _ in range(attempts):
        p = _offset_point(rng, center, spread_km)
        if all(haversine_km(p, o) >= min_sep_km for o in others):
            return p
    raise ValueError("could not place a region; too many for the configured geometry")


def generate_world(seed: int, n_provinces: int, cities_per_province: int) -> SynthWorld:
    """Build a seeded world; identical arguments give identical worlds."""
    if n_provinces < 1 or cities_per_province < 1:
        raise ValueError("need at least one province and one city per province")
    rng = random.Random(f"world|{seed}|{n_provinces}|{cities_per_province}")
    taken: set[str] = set()

    country_center = GeoPoint(rng.uniform(-15.0, 15.0), rng.uniform(-60.0, 60.0))
    country_id = "r0"
    regions = [
        AdminRegion(country_id, RegionLevel.COUNTRY, _gen_name(rng, taken),
                    country_center, COUNTRY_RADIUS_KM)
    ]

    province_centers: list[GeoPoint] = []
    province_ids: list[str] = []
    for i in range(n_provinces):
        center = _place(rng, country_center, PROVINCE_SPREAD_KM, province_centers,
                        PROVINCE_SEPARATION_KM)
        province_centers.append(center)
        pid = f"{country_id}-p{i}"
        province_ids.append(pid)
        regions.append(
            AdminRegion(pid, RegionLevel.PROVINCE, _gen_name(rng, taken),
                        center, PROVINCE_RADIUS_KM, country_id)
        )

    city_ids: list[str] = []
    for i, pid in enumerate(province_ids):
        centers_here: list[GeoPoint] = []
        for j in range(cities_per_province):
            center = _place(rng, province_centers[i], CITY_SPREAD_KM, centers_here,
                            CITY_SEPARATION_KM)
            centers_here.append(center)
            cid = f"{pid}-c{j}"
            city_ids.append(cid)
            regions.append(
                AdminRegion(cid, RegionLevel.CITY, _gen_name(rng, taken),
                            center, CITY_RADIUS_KM, pid)
            )

    gaz = Gazetteer(regions)

    # Macro tags: a small pool forces natural sharing between provinces,
    # and the first two provinces are pinned to a common vegetation tag so
    # the shared-macro invariant always holds once the world has two.
    veg_pool = list(VEGETATION_TAGS[: max(2, n_provinces // 2)])
    terrain_pool = list(TERRAIN_TAGS[: max(2, n_provinces // 2)])
    attributes: dict[str, tuple[str, ...]] = {
        country_id: (rng.choice(TERRAIN_TAGS),)
    }
    for i, pid in enumerate(province_ids):
        veg = veg_pool[0] if i < 2 and n_provinces >= 2 else rng.choice(veg_pool)
        terrain = rng.choice(terrain_pool)
        arch = (ARCHITECTURE_TAGS[i] if i < len(ARCHITECTURE_TAGS)
                else f"arch-style-{i:02d}")
        attributes[pid] = (veg, terrain, arch)

    signs: dict[str, tuple[str, ...]] = {}
    pois: dict[str, tuple[Poi, ...]] = {}
    for cid in city_ids:
        city = gaz.get(cid)
        pid = city.parent_id
        assert pid is not None
        macro = rng.choice(attributes[pid][:2])  # inherit vegetation or terrain
        vehicle = rng.choice(VEHICLE_TAGS)
        attributes[cid] = (macro, vehicle)

        words = rng.sample(SIGN_WORDS, 2)
        signs[cid] = tuple(f"{city.name} {w}" for w in words)
        poi_words = rng.sample(POI_WORDS, 2)
        pois[cid] = tuple(
            Poi(f"{city.name} {w}", _offset_point(rng, city.centroid, 0.8 * city.radius_km))
            for w in poi_words
        )

    return SynthWorld(seed, gaz, attributes, signs, pois)


def tag_kind(tag: str) -> ClueKind:
    if tag in VEGETATION_TAGS:
        return ClueKind.VEGETATION
    if tag in ARCHITECTURE_TAGS or tag.startswith("arch-style-"):
        return ClueKind.ARCHITECTURE
    if tag in VEHICLE_TAGS:
        return ClueKind.VEHICLE
    return ClueKind.TERRAIN


def _shared_macro_tags(world: SynthWorld) -> list[str]:
    """Vegetation/terrain tags carried by at least two provinces, sorted."""
    provinces = world.province_ids()
    counts: dict[str, int] = {}
    for pid in provinces:
        for tag in world.tags_of(pid)[:2]:
            counts[tag] = counts.get(tag, 0) + 1
    return sorted(tag for tag, n in counts.items() if n >= 2)


def sample_episode(world: SynthWorld, seed: int, difficulty: Difficulty) -> SceneDescriptor:
    """Draw a deterministic scene of the requested difficulty.

    Easy scenes carry a unique sign or POI clue (solvable to the exact
    city); Medium scenes carry an architecture tag unique to one province
    plus ambiguous within-province clues; Hard scenes carry only macro tags
    shared by two or more provinces. Truth is drawn uniformly among the
    cities compatible with the emitted clues.
    """
    rng = random.Random(f"episode|{world.seed}|{seed}|{difficulty.value}")
    g = world.gazetteer

    if difficulty is Difficulty.EASY:
        cid = rng.choice(sorted(world.city_ids()))
        pid = world.province_of(cid)
        macro = rng.choice(world.tags_of(pid)[:2])
        if rng.random() < 0.5:
            text = rng.choice(sorted(world.signs[cid]))
            micro = Clue(ClueKind.SIGN_TEXT, text, 0.9)
            point = _offset_point(rng, g.get(cid).centroid, 0.7 * CITY_RADIUS_KM)
        else:
            poi = rng.choice(sorted(world.pois[cid], key=lambda p: p.name))
            micro = Clue(ClueKind.POI, poi.name, 0.9)
            point = poi.point
        clues = (micro, Clue(tag_kind(macro), macro, 0.4))
        return SceneDescriptor(clues, Truth(point, cid), difficulty)

    if difficulty is Difficulty.MEDIUM:
        pid = rng.choice(sorted(world.province_ids()))
        cid = rng.choice(sorted(world.cities_of(pid)))
        arch = world.tags_of(pid)[2]
        macro = rng.choice(world.tags_of(pid)[:2])
        vehicle = next(t for t in world.tags_of(cid) if tag_kind(t) is ClueKind.VEHICLE)
        clues = (
            Clue(ClueKind.ARCHITECTURE, arch, 0.6),
            Clue(tag_kind(macro), macro, 0.4),
            Clue(ClueKind.VEHICLE, vehicle, 0.3),
        )
        point = _offset_point(rng, g.get(cid).centroid, 0.7 * CITY_RADIUS_KM)
        return SceneDescriptor(clues, Truth(point, cid), difficulty)

    shared = _shared_macro_tags(world)
    if shared:
        tag = rng.choice(shared)
        carriers = {p for p in world.province_ids() if tag in world.tags_of(p)[:2]}
        extra = [
            t for t in shared
            if t != tag
            and len(carriers & {p for p in world.province_ids() if t in world.tags_of(p)[:2]}) >= 2
        ]
        clue_tags = [tag]
        if extra and rng.random() < 0.5:
            second = rng.choice(extra)
            clue_tags.append(second)
            carriers &= {p for p in world.province_ids() if second in world.tags_of(p)[:2]}
    else:
        # Single-province world: no cross-province ambiguity is possible.
        clue_tags = [rng.choice(world.tags_of(world.province_ids()[0])[:2])]
        carriers = set(world.province_ids())
    compatible = sorted(c for p in carriers for c in world.cities_of(p))
    cid = rng.choice(compatible)
    point = _offset_point(rng, g.get(cid).centroid, 0.7 * CITY_RADIUS_KM)
    clues = tuple(Clue(tag_kind(t), t, 0.5) for t in clue_tags)
    return SceneDescriptor(clues, Truth(point, cid), difficulty)


def compatible_cities(world: SynthWorld, desc: SceneDescriptor) -> frozenset[str]:
    """Brute-force the set of cities a descriptor's clues allow.

    Independent of the engine's projection logic on purpose: it re-derives
    compatibility straight from world content, clue by clue.
    """
    g = world.gazetteer
    allowed = set(world.city_ids())
    for clue in desc.clues:
        if clue.kind is ClueKind.SIGN_TEXT:
            cid = world.sign_city(clue.value)
            this = {cid} if cid else set()
        elif clue.kind is ClueKind.POI:
            hit = world.find_poi(clue.value)
            this = {hit[0]} if hit else set()
        else:
            this = set()
            for rid in world.regions_with_tag(clue.value):
                level = g.get(rid).level
                if level is RegionLevel.CITY:
                    this.add(rid)
                else:
                    this.update(c for c in g.descendants(rid) if g.get(c).level is RegionLevel.CITY)
        allowed &= this
    return frozenset(allowed)


# ---------------------------------------------------------------------------
# Synthetic adapters

_RANK_WINDOW = {Difficulty.EASY: 1, Difficulty.MEDIUM: 3, Difficulty.HARD: 5}
_MATCH_SCORES = (0.95, 0.87, 0.79, 0.71, 0.63)


def _stable_digest(*parts: str) -> int:
    return int.from_bytes(hashlib.sha256("|".join(parts).encode("utf-8")).digest()[:8], "big")


def match_candidates(world: SynthWorld, desc: SceneDescriptor) -> list[dict]:
    """Ranked image-match candidates: truth within the difficulty window.

    Distractors are the nearest same-province cities first, so even a
    mid-ranked truth keeps the candidate list province-consistent.
    """
    g = world.gazetteer
    truth_id = desc.truth.city_id
    truth_region = g.get(truth_id)
    same = [
        c for c in world.cities_of(world.province_of(truth_id)) if c != truth_id
    ]
    other = [c for c in world.city_ids() if c != truth_id and c not in same]
    by_dist = lambda cid: (haversine_km(g.get(cid).centroid, truth_region.centroid), cid)
    distractors = sorted(same, key=by_dist) + sorted(other, key=by_dist)

    total = min(5, 1 + len(distractors))
    window = min(_RANK_WINDOW[desc.difficulty], total)
    digest = _stable_digest(
        "match", str(world.seed), truth_id, desc.difficulty.value,
        *(c.value for c in desc.clues),
    )
    rank = digest % window + 1

    ordered: list[str] = []
    di = iter(distractors)
    for pos in range(1, total + 1):
        ordered.append(truth_id if pos == rank else next(di))
    return [
        {"region_id": cid, "score": _MATCH_SCORES[i]} for i, cid in enumerate(ordered)
    ]


def _base_ref(ref: str) -> str:
    return ref.split("#", 1)[0]


class _SynthAdapter:
    tool: Tool

    def __init__(self, toolbox: "SyntheticToolbox"):
        self._box = toolbox

    @property
    def world(self) -> SynthWorld:
        return self._box.world

    def execute(self, action: Action) -> ToolResult:
        try:
            payload = self.run(action)
        except KeyError as e:
            return ToolResult.fail(action, "UnknownImage", detail=str(e))
        return ToolResult.succeed(action, payload)

    def run(self, action: Action) -> dict:
        raise NotImplementedError

    def scene(self, action: Action) -> SceneDescriptor:
        return self._box.resolve(str(action.args["image"]))


class _CaptionAdapter(_SynthAdapter):
    tool = Tool.CAPTION

    def run(self, action: Action) -> dict:
        desc = self.scene(action)
        tags = [
            c.value
            for c in desc.clues_of(
                ClueKind.VEGETATION, ClueKind.TERRAIN, ClueKind.ARCHITECTURE, ClueKind.VEHICLE
            )
        ]
        caption = "A scene with " + (", ".join(tags) if tags else "no distinctive features")
        return {"caption": caption, "tags": tags}


class _OcrAdapter(_SynthAdapter):
    tool = Tool.OCR

    def run(self, action: Action) -> dict:
        desc = self.scene(action)
        spans = [
            {"text": c.value, "box": [0.1, round(min(0.1 + 0.2 * i, 0.7), 2), 0.6,
                                      round(min(0.25 + 0.2 * i, 0.85), 2)]}
            for i, c in enumerate(desc.clues_of(ClueKind.SIGN_TEXT))
        ]
        return {"spans": spans}


class _KnowledgeBaseAdapter(_SynthAdapter):
    tool = Tool.KNOWLEDGE_BASE

    def run(self, action: Action) -> dict:
        q = str(action.args["query"]).strip().casefold()
        g = self.world.gazetteer
        records = []
        cid = self.world.sign_city(q)
        if cid is not None:
            records.append({
                "title": q,
                "body": f"Shopfront signage registered in {g.get(cid).name}.",
            })
        poi_hit = self.world.find_poi(q)
        if poi_hit is not None:
            cid, poi = poi_hit
            records.append({
                "title": poi.name,
                "body": f"{poi.name}, a landmark in {g.get(cid).name}.",
                "lat": poi.point.lat,
                "lon": poi.point.lon,
            })
        for rid in g.lookup_name(q):
            r = g.get(rid)
            parent = g.get(r.parent_id).name if r.parent_id else "no parent"
            records.append({
                "title": r.name,
                "body": f"{r.name} is a {r.level.value} ({parent}).",
            })
        records.sort(key=lambda rec: rec["title"])
        return {"query": str(action.args["query"]), "records": records}


class _TextSearchAdapter(_SynthAdapter):
    tool = Tool.TEXT_SEARCH

    def run(self, action: Action) -> dict:
        q = str(action.args["query"]).strip().casefold()
        world = self.world
        g = world.gazetteer
        hits = []
        cid = world.sign_city(q)
        if cid is not None:
            c = g.get(cid)
            hits.append({
                "title": q,
                "snippet": f"Local directory listing in {c.name}.",
                "lat": c.centroid.lat,
                "lon": c.centroid.lon,
            })
        poi_hit = world.find_poi(q)
        if poi_hit is not None:
            _, poi = poi_hit
            hits.append({
                "title": poi.name,
                "snippet": f"Visitor guide for {poi.name}.",
                "lat": poi.point.lat,
                "lon": poi.point.lon,
            })
        for rid in g.lookup_name(q):
            r = g.get(rid)
            hit = {"title": r.name, "snippet": f"About {r.name}, a {r.level.value}."}
            if r.level is RegionLevel.CITY:
                hit["lat"] = r.centroid.lat
                hit["lon"] = r.centroid.lon
            hits.append(hit)
        carriers = world.regions_with_tag(q)
        for rid in sorted(carriers):
            r = g.get(rid)
            hits.append({
                "title": r.name,
                "snippet": f"{r.name}: known for {q}.",
            })
        hits.sort(key=lambda h: (h["title"], h["snippet"]))
        return {"query": str(action.args["query"]), "hits": hits}


class _ImageSearchAdapter(_SynthAdapter):
    tool = Tool.IMAGE_SEARCH

    def run(self, action: Action) -> dict:
        desc = self.scene(action)
        candidates = match_candidates(self.world, desc)
        return {"candidates": candidates, "count": len(candidates)}


class _GeocodeAdapter(_SynthAdapter):
    tool = Tool.GEOCODE

    def run(self, action: Action) -> dict:
        q = str(action.args["query"]).strip().casefold()
        world = self.world
        g = world.gazetteer
        matches = []
        poi_hit = world.find_poi(q)
        if poi_hit is not None:
            cid, poi = poi_hit
            matches.append({
                "name": poi.name,
                "lat": poi.point.lat,
                "lon": poi.point.lon,
                "region_id": cid,
            })
        for rid in g.lookup_name(q):
            r = g.get(rid)
            matches.append({
                "name": r.name,
                "lat": r.centroid.lat,
                "lon": r.centroid.lon,
                "region_id": rid,
            })
        matches.sort(key=lambda m: (m["name"], m["region_id"]))
        return {"query": str(action.args["query"]), "matches": matches}


class _CropAdapter(_SynthAdapter):
    tool = Tool.CROP

    def run(self, action: Action) -> dict:
        ref = str(action.args["image"])
        self._box.resolve(ref)  # validate the ref
        box = list(action.args["box"])
        suffix = ",".join(f"{v:.2f}" for v in box)
        return {"image": f"{_base_ref(ref)}#crop({suffix})", "box": box}


class SyntheticToolbox:
    """Adapter set answering all seven tools from one world.

    Scene descriptors are registered under reference strings (the values
    that flow through image args); crop-derived refs resolve back to their
    base scene.
    """

    def __init__(self, world: SynthWorld):
        self.world = world
        self._scenes: dict[str, SceneDescriptor] = {}

    def register(self, ref: str, desc: SceneDescriptor) -> None:
        self._scenes[ref] = desc

    def resolve(self, ref: str) -> SceneDescriptor:
        base = _base_ref(ref)
        if base not in self._scenes:
            raise KeyError(f"unregistered image ref: {base!r}")
        return self._scenes[base]

    def adapters(self) -> dict[Tool, _SynthAdapter]:
        kinds = (
            _CaptionAdapter, _CropAdapter, _OcrAdapter, _KnowledgeBaseAdapter,
            _TextSearchAdapter, _ImageSearchAdapter, _GeocodeAdapter,
        )
        return {cls.tool: cls(self) for cls in kinds}


def synthetic_adapters(world: SynthWorld) -> SyntheticToolbox:
    return SyntheticToolbox(world)
