"""Geographic primitives: points, geodesic distance, administrative regions.

The Earth is modeled as a sphere of mean radius 6371.0 km; region footprints
are discs (centroid + radius). Both are deliberate simplifications: the
evaluation thresholds are coarse (>= 1 km) and discs keep containment checks
exactly testable. Polygons and ellipsoids are out of scope.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

from .canonical import canonical_hash
from .errors import GazetteerFileError, UnknownRegionError

EARTH_RADIUS_KM = 6371.0

#: Default fallback radius for reverse geocoding: a point outside every city
#: disc still maps to the nearest city if it is within this many km.
DEFAULT_FALLBACK_KM = 100.0


def _normalize_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


@dataclass(frozen=True, order=True)
class GeoPoint:
    """A point on the sphere. lat in [-90, 90], lon normalized to [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        object.__setattr__(self, "lon", _normalize_lon(float(self.lon)))
        object.__setattr__(self, "lat", float(self.lat))

    def to_json(self) -> dict:
        return {"lat": self.lat, "lon": self.lon}

    @classmethod
    def from_json(cls, obj: dict) -> "GeoPoint":
        return cls(lat=float(obj["lat"]), lon=float(obj["lon"]))


class RegionLevel(enum.Enum):
    COUNTRY = "country"
    PROVINCE = "province"
    CITY = "city"
    DISTRICT = "district"

    @property
    def depth(self) -> int:
        return _LEVEL_DEPTH[self]

    @property
    def child(self) -> "RegionLevel | None":
        return _LEVEL_ORDER[self.depth + 1] if self.depth + 1 < len(_LEVEL_ORDER) else None


_LEVEL_ORDER = [RegionLevel.COUNTRY, RegionLevel.PROVINCE, RegionLevel.CITY, RegionLevel.DISTRICT]
_LEVEL_DEPTH = {lvl: i for i, lvl in enumerate(_LEVEL_ORDER)}


@dataclass(frozen=True)
class AdminRegion:
    """An administrative region approximated as a disc around its centroid."""

    id: str
    level: RegionLevel
    name: str
    centroid: GeoPoint
    radius_km: float
    parent_id: str | None = None

    def __post_init__(self):
        if self.radius_km <= 0:
            raise ValueError(f"region {self.id!r}: radius_km must be positive")
        if (self.parent_id is None) != (self.level is RegionLevel.COUNTRY):
            raise ValueError(f"region {self.id!r}: parent_id must be absent iff level is country")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "level": self.level.value,
            "name": self.name,
            "parent_id": self.parent_id,
            "lat": self.centroid.lat,
            "lon": self.centroid.lon,
            "radius_km": self.radius_km,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AdminRegion":
        return cls(
            id=str(obj["id"]),
            level=RegionLevel(obj["level"]),
            name=str(obj["name"]),
            parent_id=obj.get("parent_id"),
            centroid=GeoPoint(float(obj["lat"]), float(obj["lon"])),
            radius_km=float(obj["radius_km"]),
        )


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on the R=6371 sphere."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def region_contains(region: AdminRegion, p: GeoPoint) -> bool:
    """Disc containment; the boundary (distance == radius) counts as inside."""
    return haversine_km(region.centroid, p) <= region.radius_km


# Suffixes stripped by normalize_city_name, checked after case-folding.
DEFAULT_CITY_SUFFIXES = ("市", " city", " shi")


def normalize_city_name(
    raw: str,
    suffixes: tuple[str, ...] = DEFAULT_CITY_SUFFIXES,
    aliases: dict[str, str] | None = None,
) -> str:
    """Canonicalize a city name: trim, case-fold, strip suffixes, apply aliases.

    Suffixes are stripped repeatedly and aliases chased to a fixed point so
    the function is idempotent. Alias keys and values are themselves
    normalized (minus aliasing) before lookup.
    """
    name = raw.strip().casefold()
    stripped = True
    while stripped and name:
        stripped = False
        for suffix in suffixes:
            sfx = suffix.casefold()
            if name.endswith(sfx) and len(name) > len(sfx):
                name = name[: -len(sfx)].strip()
                stripped = True
    if aliases:
        table = {
            normalize_city_name(k, suffixes): normalize_city_name(v, suffixes)
            for k, v in aliases.items()
        }
        seen = set()
        while name in table and name not in seen:
            seen.add(name)
            name = table[name]
    return name


class Gazetteer:
    """Immutable directory of admin regions with hierarchy and name indexes.

    Construction validates all structural invariants (forest rooted at
    countries, level steps, centroid nesting, unique ids) and precomputes
    ancestor chains and subtree closures for O(1) consistency checks.
    """

    def __init__(self, regions: list[AdminRegion]):
        self._regions: dict[str, AdminRegion] = {}
        for r in regions:
            if r.id in self._regions:
                raise ValueError(f"duplicate region id {r.id!r}")
            self._regions[r.id] = r

        self._children: dict[str, tuple[str, ...]] = {}
        kids: dict[str, list[str]] = {r.id: [] for r in regions}
        for r in regions:
            if r.parent_id is not None:
                parent = self._regions.get(r.parent_id)
                if parent is None:
                    raise ValueError(f"region {r.id!r}: parent {r.parent_id!r} does not exist")
                if parent.level.depth + 1 != r.level.depth:
                    raise ValueError(
                        f"region {r.id!r}: level {r.level.value} is not one step below "
                        f"parent level {parent.level.value}"
                    )
                if haversine_km(r.centroid, parent.centroid) > parent.radius_km:
                    raise ValueError(f"region {r.id!r}: centroid outside parent disc")
                kids[r.parent_id].append(r.id)
        self._children = {rid: tuple(sorted(ids)) for rid, ids in kids.items()}

        # Ancestor chains double as the cycle check: parent levels strictly
        # decrease, so any walk terminates at a country root.
        self._ancestors: dict[str, tuple[str, ...]] = {}
        for r in regions:
            chain = []
            cur = r.parent_id
            while cur is not None:
                chain.append(cur)
                cur = self._regions[cur].parent_id
            self._ancestors[r.id] = tuple(chain)

        self._descendants: dict[str, frozenset[str]] = {}
        self._leaves: dict[str, frozenset[str]] = {}
        for rid in sorted(self._regions, key=lambda i: -self._regions[i].level.depth):
            desc: set[str] = set()
            leaf: set[str] = set()
            for child in self._children[rid]:
                desc.add(child)
                desc |= self._descendants[child]
                leaf |= self._leaves[child]
            self._descendants[rid] = frozenset(desc)
            self._leaves[rid] = frozenset(leaf) if leaf else frozenset({rid})

        self._name_index: dict[str, tuple[str, ...]] = {}
        by_name: dict[str, list[str]] = {}
        for r in regions:
            by_name.setdefault(normalize_city_name(r.name), []).append(r.id)
        self._name_index = {n: tuple(sorted(ids)) for n, ids in by_name.items()}

        self._cities: tuple[AdminRegion, ...] = tuple(
            sorted((r for r in regions if r.level is RegionLevel.CITY), key=lambda r: r.id)
        )

    def __len__(self) -> int:
        return len(self._regions)

    def __contains__(self, region_id: str) -> bool:
        return region_id in self._regions

    def get(self, region_id: str) -> AdminRegion:
        try:
            return self._regions[region_id]
        except KeyError:
            raise UnknownRegionError(region_id) from None

    def regions(self) -> list[AdminRegion]:
        return [self._regions[rid] for rid in sorted(self._regions)]

    def roots(self) -> list[AdminRegion]:
        return [r for r in self.regions() if r.parent_id is None]

    def children(self, region_id: str) -> tuple[str, ...]:
        self.get(region_id)
        return self._children[region_id]

    def ancestors(self, region_id: str) -> tuple[str, ...]:
        """Ancestor ids from parent up to the country root."""
        self.get(region_id)
        return self._ancestors[region_id]

    def descendants(self, region_id: str) -> frozenset[str]:
        self.get(region_id)
        return self._descendants[region_id]

    def leaf_cover(self, region_id: str) -> frozenset[str]:
        """Ids of the leaf regions under ``region_id`` (itself if childless)."""
        self.get(region_id)
        return self._leaves[region_id]

    def is_ancestor(self, maybe_ancestor: str, region_id: str) -> bool:
        return maybe_ancestor in self._ancestors.get(region_id, ())

    def cities(self) -> tuple[AdminRegion, ...]:
        return self._cities

    def lookup_name(self, name: str) -> tuple[str, ...]:
        """Region ids whose normalized name equals the normalized input."""
        return self._name_index.get(normalize_city_name(name), ())

    def city_ancestor(self, region_id: str) -> AdminRegion | None:
        """The city-level region at or above ``region_id``, if any."""
        r = self.get(region_id)
        if r.level is RegionLevel.CITY:
            return r
        for aid in self._ancestors[region_id]:
            a = self._regions[aid]
            if a.level is RegionLevel.CITY:
                return a
        return None

    def content_hash(self) -> str:
        return canonical_hash([r.to_json() for r in self.regions()])

    def to_json(self) -> list[dict]:
        return [r.to_json() for r in self.regions()]


def reverse_geocode(
    g: Gazetteer, p: GeoPoint, fallback_km: float = DEFAULT_FALLBACK_KM
) -> AdminRegion | None:
    """Map a point to a city-level region.

    Preference order: containing city disc with the smallest centroid
    distance; otherwise the nearest city centroid within ``fallback_km``.
    Ties break on lexicographic region id. None when nothing qualifies.
    """
    best: tuple[float, str] | None = None
    nearest: tuple[float, str] | None = None
    for city in g.cities():
        d = haversine_km(city.centroid, p)
        if d <= city.radius_km and (best is None or (d, city.id) < best):
            best = (d, city.id)
        if nearest is None or (d, city.id) < nearest:
            nearest = (d, city.id)
    if best is not None:
        return g.get(best[1])
    if nearest is not None and nearest[0] <= fallback_km:
        return g.get(nearest[1])
    return None


def _iter_json_array(text: str):
    """Yield (1-based line, element) for each element of a JSON array.

    Elements are decoded one at a time so structural errors can be reported
    with the line the offending record starts on.
    """
    decoder = json.JSONDecoder()
    i = 0
    n = len(text)

    def skip_ws(j: int) -> int:
        while j < n and text[j] in " \t\r\n":
            j += 1
        return j

    def line_at(j: int) -> int:
        return text.count("\n", 0, j) + 1

    i = skip_ws(i)
    if i >= n or text[i] != "[":
        raise GazetteerFileError(line_at(min(i, n - 1)) if n else 1, "expected a JSON array")
    i = skip_ws(i + 1)
    if i < n and text[i] == "]":
        return
    while True:
        start = i
        try:
            value, i = decoder.raw_decode(text, i)
        except json.JSONDecodeError as e:
            raise GazetteerFileError(line_at(start), f"invalid JSON element: {e.msg}") from None
        yield line_at(start), value
        i = skip_ws(i)
        if i < n and text[i] == ",":
            i = skip_ws(i + 1)
            continue
        if i < n and text[i] == "]":
            return
        raise GazetteerFileError(line_at(min(i, n - 1)), "expected ',' or ']' after element")


def load_gazetteer(path: str) -> Gazetteer:
    """Load and validate a gazetteer from a JSON array of region records.

    Record shape: {id, level, name, parent_id, lat, lon, radius_km}.
    Any structural or invariant violation raises GazetteerFileError naming
    the line of the offending record.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()

    regions: list[AdminRegion] = []
    lines: dict[str, int] = {}
    for line, obj in _iter_json_array(text):
        if not isinstance(obj, dict):
            raise GazetteerFileError(line, "region record must be an object")
        try:
            region = AdminRegion.from_json(obj)
        except (KeyError, ValueError, TypeError) as e:
            raise GazetteerFileError(line, f"bad region record: {e}") from None
        if region.id in lines:
            raise GazetteerFileError(line, f"duplicate region id {region.id!r}")
        lines[region.id] = line
        regions.append(region)

    try:
        return Gazetteer(regions)
    except ValueError as e:
        # Attribute cross-record violations to the child record's line.
        msg = str(e)
        for rid, line in lines.items():
            if f"{rid!r}" in msg:
                raise GazetteerFileError(line, msg) from None
        raise GazetteerFileError(1, msg) from None


def save_gazetteer(g: Gazetteer, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(g.to_json(), f, ensure_ascii=False, indent=2)
        f.write("\n")
