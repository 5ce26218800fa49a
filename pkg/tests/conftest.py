import time

import pytest
from hypothesis import settings

from geoprobe.geo import AdminRegion, Gazetteer, GeoPoint, RegionLevel

SESSION_START = time.monotonic()

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def pytest_collection_modifyitems(config, items):
    # The gate checks in test_acceptance.py run last so their whole-suite
    # runtime measurement covers everything else.
    items.sort(key=lambda item: "test_acceptance" in item.nodeid)


def small_gazetteer() -> Gazetteer:
    """Hand-built two-country tree used across the unit tests.

    Layout (radii chosen so children sit inside parents and city discs
    do not overlap):

        cn (country, 30N 110E, r=3000)
          cn-a (province, 30N 114E, r=400)
            cn-a-1 (city, 30.5N 114.3E, r=50)
              cn-a-1-x (district, 30.6N 114.25E, r=10)
              cn-a-1-y (district, 30.4N 114.35E, r=10)
            cn-a-2 (city, 29.0N 113.0E, r=40)
          cn-b (province, 39N 117E, r=300)
            cn-b-1 (city, 39.1N 117.2E, r=45)
        jp (country, 36N 138E, r=1500)
          jp-a (province, 35.5N 139.5E, r=200)
            jp-a-1 (city, 35.68N 139.76E, r=35)
    """
    regions = [
        AdminRegion("cn", RegionLevel.COUNTRY, "Chinaland", GeoPoint(30.0, 110.0), 3000.0),
        AdminRegion("cn-a", RegionLevel.PROVINCE, "Aprov", GeoPoint(30.0, 114.0), 400.0, "cn"),
        AdminRegion("cn-a-1", RegionLevel.CITY, "Rivertown", GeoPoint(30.5, 114.3), 50.0, "cn-a"),
        AdminRegion(
            "cn-a-1-x", RegionLevel.DISTRICT, "North Ward", GeoPoint(30.6, 114.25), 10.0, "cn-a-1"
        ),
        AdminRegion(
            "cn-a-1-y", RegionLevel.DISTRICT, "South Ward", GeoPoint(30.4, 114.35), 10.0, "cn-a-1"
        ),
        AdminRegion("cn-a-2", RegionLevel.CITY, "Lakeside", GeoPoint(29.0, 113.0), 40.0, "cn-a"),
        AdminRegion("cn-b", RegionLevel.PROVINCE, "Bprov", GeoPoint(39.0, 117.0), 300.0, "cn"),
        AdminRegion("cn-b-1", RegionLevel.CITY, "Harborville", GeoPoint(39.1, 117.2), 45.0, "cn-b"),
        AdminRegion("jp", RegionLevel.COUNTRY, "Nihonia", GeoPoint(36.0, 138.0), 1500.0),
        AdminRegion("jp-a", RegionLevel.PROVINCE, "Kanto", GeoPoint(35.5, 139.5), 200.0, "jp"),
        AdminRegion("jp-a-1", RegionLevel.CITY, "Edotown", GeoPoint(35.68, 139.76), 35.0, "jp-a"),
    ]
    return Gazetteer(regions)


@pytest.fixture
def gaz() -> Gazetteer:
    return small_gazetteer()
