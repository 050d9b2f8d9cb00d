import pathlib

import pytest

from rttcheck.system import ReactiveSystem, parse_system
from rttcheck.table import RelationalTable, parse_table

REPO = pathlib.Path(__file__).resolve().parent.parent
ASSETS = REPO / "assets"


def read_asset(*parts: str) -> str:
    return (ASSETS.joinpath(*parts)).read_text()


def asset_table(name: str) -> RelationalTable:
    return parse_table(read_asset("tables", name))


def asset_system(name: str) -> ReactiveSystem:
    return parse_system(read_asset("systems", name))


@pytest.fixture(scope="session")
def stamp_table() -> RelationalTable:
    return asset_table("stamp_pair.rtt")


@pytest.fixture(scope="session")
def stamp_systems() -> dict[str, ReactiveSystem]:
    return {
        "old": asset_system("stamp_old.rsl"),
        "new": asset_system("stamp_new.rsl"),
    }
