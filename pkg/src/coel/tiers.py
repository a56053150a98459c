"""Resolution tiers, parsed from the markdown table shipped with the package."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .errors import ConfigError

TIERS = ("draft", "reference", "fine")
_FIELDS = ("h", "T", "r_max", "per_octave", "h_factor")


def parse_tier_table(text: str) -> dict:
    """{(experiment, tier): {field: float or None}} from a markdown table."""
    rows = [ln.strip() for ln in text.splitlines() if ln.strip().startswith("|")]
    if len(rows) < 3:
        raise ConfigError("tier table has no rows")
    header = [c.strip() for c in rows[0].strip("|").split("|")]
    missing = {"experiment", "tier", *_FIELDS} - set(header)
    if missing:
        raise ConfigError(f"tier table lacks columns {sorted(missing)}")
    table = {}
    for ln in rows[2:]:
        cells = [c.strip() for c in ln.strip("|").split("|")]
        if len(cells) != len(header):
            raise ConfigError(f"malformed tier row: {ln}")
        rec = dict(zip(header, cells))
        if rec["tier"] not in TIERS:
            raise ConfigError(f"unknown tier {rec['tier']!r} in row: {ln}")
        vals = {}
        for f in _FIELDS:
            try:
                vals[f] = float(rec[f]) if rec[f] else None
            except ValueError:
                raise ConfigError(f"non-numeric {f}={rec[f]!r} in row: {ln}") from None
        table[(rec["experiment"], rec["tier"])] = vals
    return table


@lru_cache(maxsize=1)
def tier_table() -> dict:
    text = resources.files("coel").joinpath("tiers.md").read_text()
    return parse_tier_table(text)


def tier(experiment: str, name: str) -> dict:
    """Parameters of one (experiment, tier) row; ConfigError if absent."""
    if name not in TIERS:
        raise ConfigError(f"unknown tier {name!r}; choose from {', '.join(TIERS)}")
    try:
        return dict(tier_table()[(experiment, name)])
    except KeyError:
        raise ConfigError(f"no tier row for experiment {experiment!r} at tier {name!r}") from None
