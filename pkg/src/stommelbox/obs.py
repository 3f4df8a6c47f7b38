"""Ocean-profile pipeline: selection, box assignment, averaging, forcing fits.

Works on a columnar table of gridded profile data (one row per time, column
and depth level) with the schema

    time_month, lat, lon, cell_area_m2, depth_m, thickness_m,
    T_degC, S_ppt, sigT_degC, sigS_ppt

``time_month`` is an integer month index, 0 = January 2004. ``depth_m`` is
the midpoint of a layer of the given thickness. Missing cells are simply
absent rows; all averages renormalize their weights accordingly. Real-world
input (e.g. converted from the EN4 analysis files) and the synthetic
generator below share this format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import MONTH_SECONDS, YEAR_SECONDS, BoxGeometry, Harmonic, SurfaceForcing
from .errors import EmptySelectionError

PROFILE_COLUMNS = (
    "time_month",
    "lat",
    "lon",
    "cell_area_m2",
    "depth_m",
    "thickness_m",
    "T_degC",
    "S_ppt",
    "sigT_degC",
    "sigS_ppt",
)

SERIES_COLUMNS = (
    "time_month",
    "Tp",
    "Te",
    "Sp",
    "Se",
    "varTp",
    "varTe",
    "varSp",
    "varSe",
)

POLAR = "polar"
EQUATORIAL = "equatorial"

EARTH_RADIUS = 6.371e6  # m

#: Default selection window: North Atlantic poleward of the intertropical
#: convergence zone. The eastern bound is deliberately generous and
#: configurable.
LAT_BOUNDS = (23.5, 89.0)
LON_BOUNDS = (-90.0, 90.0)


@dataclass(frozen=True)
class ProfileColumn:
    """One vertical profile: location, footprint and its layers."""

    lat: float
    lon: float
    cell_area: float
    depths: np.ndarray
    thicknesses: np.ndarray

    @property
    def total_depth(self):
        return float(np.max(self.depths + 0.5 * self.thicknesses))


@dataclass
class BoxAssignment:
    """Polar/equatorial label per selected column, keyed by (lat, lon)."""

    labels: dict

    def of(self, lat, lon):
        return self.labels[(lat, lon)]

    def columns(self, label):
        return [key for key, v in self.labels.items() if v == label]


@dataclass
class BoxObservationSeries:
    """Monthly box-averaged observations plus the derived error covariance.

    ``d`` rows are [Tp, Te, Sp, Se]; ``sigma_d`` is diagonal with each
    variance set to the largest monthly value over the series. ``surface``
    maps each forcing field (Te_a, Tp_a, Se_a, Sp_a) to its (months, values,
    variances) triple for the seasonal regression.
    """

    months: np.ndarray
    d: np.ndarray
    variances: np.ndarray
    sigma_d: np.ndarray
    surface: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.months)

    def time_seconds(self, i):
        return float(self.months[i]) * MONTH_SECONDS


def read_profiles(path):
    df = pd.read_csv(path)
    missing = set(PROFILE_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"profile table is missing columns: {sorted(missing)}")
    df["time_month"] = df["time_month"].astype(int)
    return df


def write_profiles(df, path):
    df.to_csv(path, index=False, float_format="%.17g", columns=list(PROFILE_COLUMNS))


def select_profiles(
    df,
    lat_bounds=LAT_BOUNDS,
    lon_bounds=LON_BOUNDS,
    min_total_depth=1500.0,
    truncation_depth=3500.0,
):
    """Keep deep-enough columns inside the window; drop levels below the cutoff.

    A column's total depth is the bottom of its deepest layer. Truncation
    removes layers whose midpoint lies below ``truncation_depth``.
    """
    inside = (
        (df["lat"] >= lat_bounds[0])
        & (df["lat"] <= lat_bounds[1])
        & (df["lon"] >= lon_bounds[0])
        & (df["lon"] <= lon_bounds[1])
    )
    df = df[inside]
    if len(df) == 0:
        raise EmptySelectionError("no profiles inside the selection window")
    bottom = (df["depth_m"] + 0.5 * df["thickness_m"]).groupby(
        [df["lat"], df["lon"]]
    ).transform("max")
    df = df[bottom >= min_total_depth]
    df = df[df["depth_m"] <= truncation_depth]
    if len(df) == 0:
        raise EmptySelectionError("profile selection is empty after depth filtering")
    return df.reset_index(drop=True)


def _monthly_column_stats(df):
    """Per (lat, lon, month): surface temperature and depth-averaged temperature."""
    key = ["lat", "lon", "time_month"]
    grouped = df.groupby(key, sort=True)
    surf_idx = grouped["depth_m"].idxmin()
    surf = df.loc[surf_idx, key + ["T_degC"]].rename(columns={"T_degC": "T_surf"})
    weighted = df.assign(wT=df["T_degC"] * df["thickness_m"])
    sums = weighted.groupby(key, sort=True)[["wT", "thickness_m"]].sum()
    sums["T_avg"] = sums["wT"] / sums["thickness_m"]
    merged = surf.merge(sums["T_avg"].reset_index(), on=key)
    return merged


def assign_boxes(df):
    """Label each column polar or equatorial from its own surface history.

    A column joins the polar box when its surface is colder than its
    depth-averaged temperature for one month per year or more on average
    (boundary inclusive); such columns can ventilate deep heat by convection.
    """
    if df["time_month"].nunique() < 12:
        raise ValueError("box assignment needs at least 12 monthly snapshots")
    stats = _monthly_column_stats(df)
    stats["cold"] = stats["T_surf"] < stats["T_avg"]
    per_col = stats.groupby(["lat", "lon"], sort=True)["cold"].agg(["sum", "count"])
    labels = {}
    for (lat, lon), row in per_col.iterrows():
        years = row["count"] / 12.0
        labels[(lat, lon)] = POLAR if row["sum"] >= years else EQUATORIAL
    return BoxAssignment(labels=labels)


def _reference_columns(df):
    """Level structure of each column, taken from its earliest month."""
    first = df.groupby(["lat", "lon"], sort=True)["time_month"].transform("min")
    ref = df[df["time_month"] == first]
    columns = {}
    for (lat, lon), sub in ref.groupby(["lat", "lon"], sort=True):
        sub = sub.sort_values("depth_m")
        columns[(lat, lon)] = ProfileColumn(
            lat=lat,
            lon=lon,
            cell_area=float(sub["cell_area_m2"].iloc[0]),
            depths=sub["depth_m"].to_numpy(),
            thicknesses=sub["thickness_m"].to_numpy(),
        )
    return columns


def _grid_steps(columns):
    lats = np.unique([k[0] for k in columns])
    lons = np.unique([k[1] for k in columns])
    dlat = float(np.min(np.diff(lats))) if len(lats) > 1 else 1.0
    dlon = float(np.min(np.diff(lons))) if len(lons) > 1 else 1.0
    return dlat, dlon


def compute_geometry(df, assignment, earth_radius=EARTH_RADIUS):
    """Box dimensions from column volumes, surface areas and the box interface.

    The interface cross-section sums, over grid-adjacent column pairs with
    different labels, the shared edge length times the shallower of the two
    truncated column depths. Edges follow the spherical grid: a meridional
    edge has length R*dlat and a zonal edge R*cos(lat)*dlon (radians).
    """
    columns = _reference_columns(df)
    volumes = {}
    areas = {}
    depths = {}
    for key, col in columns.items():
        thickness = float(np.sum(col.thicknesses))
        volumes[key] = col.cell_area * thickness
        areas[key] = col.cell_area
        depths[key] = thickness

    v_tot = {POLAR: 0.0, EQUATORIAL: 0.0}
    a_tot = {POLAR: 0.0, EQUATORIAL: 0.0}
    for key, label in assignment.labels.items():
        if key not in volumes:
            continue
        v_tot[label] += volumes[key]
        a_tot[label] += areas[key]
    if a_tot[POLAR] == 0.0 or a_tot[EQUATORIAL] == 0.0:
        raise EmptySelectionError("both boxes must contain at least one column")

    dlat, dlon = _grid_steps(columns)
    dlat_rad = math.radians(dlat)
    dlon_rad = math.radians(dlon)
    interface = 0.0
    for (lat, lon), label in assignment.labels.items():
        if (lat, lon) not in depths:
            continue
        # eastern neighbour: shared meridional edge
        east = (lat, lon + dlon)
        if east in assignment.labels and east in depths and assignment.labels[east] != label:
            edge = earth_radius * dlat_rad
            interface += edge * min(depths[(lat, lon)], depths[east])
        # northern neighbour: shared zonal edge at the boundary latitude
        north = (lat + dlat, lon)
        if north in assignment.labels and north in depths and assignment.labels[north] != label:
            edge = earth_radius * math.cos(math.radians(lat + 0.5 * dlat)) * dlon_rad
            interface += edge * min(depths[(lat, lon)], depths[north])
    if interface <= 0.0:
        raise EmptySelectionError("boxes share no interface on the grid")

    dz = (v_tot[POLAR] + v_tot[EQUATORIAL]) / (a_tot[POLAR] + a_tot[EQUATORIAL])
    dx = interface / dz
    return BoxGeometry(dx=dx, dy_p=a_tot[POLAR] / dx, dy_e=a_tot[EQUATORIAL] / dx, dz=dz)


@dataclass(frozen=True)
class BoxMoments:
    T_mean: float
    S_mean: float
    var_T: float
    var_S: float


def _weighted_moments(sub):
    w = (sub["cell_area_m2"] * sub["thickness_m"]).to_numpy()
    wsum = w.sum()
    return BoxMoments(
        T_mean=float(np.dot(w, sub["T_degC"].to_numpy()) / wsum),
        S_mean=float(np.dot(w, sub["S_ppt"].to_numpy()) / wsum),
        var_T=float(np.dot(w, sub["sigT_degC"].to_numpy() ** 2) / wsum),
        var_S=float(np.dot(w, sub["sigS_ppt"].to_numpy() ** 2) / wsum),
    )


def _split_surface(sub):
    """Partition one month of rows into surface-layer and sub-surface rows."""
    surf_depth = sub.groupby(["lat", "lon"])["depth_m"].transform("min")
    is_surface = sub["depth_m"] == surf_depth
    return sub[is_surface], sub[~is_surface]


def box_average(df, assignment, month, surface=False):
    """Volume-weighted box means and variances for one month.

    By default averages the sub-surface cells (the surface layer is excluded);
    with ``surface=True`` averages the surface layer instead, yielding the
    series the forcing regression uses.
    """
    sub = df[df["time_month"] == month]
    if len(sub) == 0:
        raise EmptySelectionError(f"no data for month {month}")
    label_of = assignment.labels
    keys = list(zip(sub["lat"], sub["lon"]))
    sub = sub[[label_of.get(k) in (POLAR, EQUATORIAL) for k in keys]]
    surf_rows, deep_rows = _split_surface(sub)
    rows = surf_rows if surface else deep_rows
    out = {}
    for label in (POLAR, EQUATORIAL):
        keys = list(zip(rows["lat"], rows["lon"]))
        box_rows = rows[[label_of.get(k) == label for k in keys]]
        if len(box_rows) == 0:
            raise EmptySelectionError(f"no {'surface' if surface else 'sub-surface'} data in {label} box, month {month}")
        out[label] = _weighted_moments(box_rows)
    return out


def build_obs_series(df, assignment, months=None):
    """Monthly observation vectors and the derived diagonal error covariance."""
    available = np.sort(df["time_month"].unique())
    if months is None:
        months = available
    else:
        months = np.asarray(sorted(months))
        if not np.isin(months, available).all():
            raise ValueError("requested months not present in the profile data")
    d = np.empty((len(months), 4))
    var = np.empty((len(months), 4))
    surf_vals = np.empty((len(months), 4))
    surf_var = np.empty((len(months), 4))
    for i, month in enumerate(months):
        deep = box_average(df, assignment, month)
        d[i] = [
            deep[POLAR].T_mean,
            deep[EQUATORIAL].T_mean,
            deep[POLAR].S_mean,
            deep[EQUATORIAL].S_mean,
        ]
        var[i] = [
            deep[POLAR].var_T,
            deep[EQUATORIAL].var_T,
            deep[POLAR].var_S,
            deep[EQUATORIAL].var_S,
        ]
        surf = box_average(df, assignment, month, surface=True)
        surf_vals[i] = [
            surf[EQUATORIAL].T_mean,
            surf[POLAR].T_mean,
            surf[EQUATORIAL].S_mean,
            surf[POLAR].S_mean,
        ]
        surf_var[i] = [
            surf[EQUATORIAL].var_T,
            surf[POLAR].var_T,
            surf[EQUATORIAL].var_S,
            surf[POLAR].var_S,
        ]
    surface = {
        name: (months.copy(), surf_vals[:, j].copy(), surf_var[:, j].copy())
        for j, name in enumerate(("Te_a", "Tp_a", "Se_a", "Sp_a"))
    }
    return BoxObservationSeries(
        months=months,
        d=d,
        variances=var,
        sigma_d=np.diag(var.max(axis=0)),
        surface=surface,
    )


def fit_seasonal(t, y, variance, tau=YEAR_SECONDS):
    """Weighted least-squares fit of c0 + c_cos*cos + c_sin*sin to a series.

    ``t`` is in seconds, weights are the inverse variances. Needs at least
    three points spanning more than half a period.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if len(t) < 3:
        raise ValueError("seasonal fit needs at least 3 points")
    if t.max() - t.min() <= tau / 2:
        raise ValueError("seasonal fit needs points spanning more than half a period")
    arg = 2.0 * np.pi * t / tau
    X = np.column_stack([np.ones_like(t), np.cos(arg), np.sin(arg)])
    w = 1.0 / variance
    XtW = X.T * w
    lhs = XtW @ X
    rhs = XtW @ y
    try:
        beta = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular normal equations in the seasonal fit") from exc
    return float(beta[0]), float(beta[1]), float(beta[2])


def fit_surface_forcing(series):
    """Seasonal regression of all four surface series into a SurfaceForcing."""
    harmonics = {}
    for name in ("Te_a", "Tp_a", "Se_a", "Sp_a"):
        months, values, variances = series.surface[name]
        t = months * MONTH_SECONDS
        c0, c_cos, c_sin = fit_seasonal(t, values, variances)
        harmonics[name] = Harmonic(c0=c0, c_cos=c_cos, c_sin=c_sin)
    return SurfaceForcing(**harmonics)


def write_obs_series(series, path):
    frame = pd.DataFrame(
        {
            "time_month": series.months,
            "Tp": series.d[:, 0],
            "Te": series.d[:, 1],
            "Sp": series.d[:, 2],
            "Se": series.d[:, 3],
            "varTp": series.variances[:, 0],
            "varTe": series.variances[:, 1],
            "varSp": series.variances[:, 2],
            "varSe": series.variances[:, 3],
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g", columns=list(SERIES_COLUMNS))


def read_obs_series(path):
    frame = pd.read_csv(path)
    missing = set(SERIES_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"observation series is missing columns: {sorted(missing)}")
    months = frame["time_month"].to_numpy(dtype=int)
    d = frame[["Tp", "Te", "Sp", "Se"]].to_numpy(dtype=float)
    var = frame[["varTp", "varTe", "varSp", "varSe"]].to_numpy(dtype=float)
    return BoxObservationSeries(
        months=months,
        d=d,
        variances=var,
        sigma_d=np.diag(var.max(axis=0)),
    )


# ---------------------------------------------------------------------------
# Synthetic profiles


@dataclass(frozen=True)
class SynthProfileSpec:
    """Deterministic synthetic profile set on a regular lat/lon grid.

    The northernmost ``polar_rows`` rows mimic polar columns: their interior
    values and seasonal surface harmonics are the first entry of each pair
    below, the remaining rows use the second. Noise (when nonzero) is
    Gaussian, applied to every value, and fully determined by ``seed``.
    """

    n_lat: int = 4
    n_lon: int = 4
    lat0: float = 55.0
    lon0: float = -40.0
    dlat: float = 1.0
    dlon: float = 1.0
    polar_rows: int = 2
    n_months: int = 24
    levels: tuple = ((25.0, 50.0), (75.0, 50.0), (125.0, 50.0), (175.0, 50.0))
    interior_T: tuple = (1.0, 5.0)
    interior_S: tuple = (34.8, 35.2)
    surface_T: tuple = ((1.5, -1.5, -1.1), (16.0, -2.0, -2.0))
    surface_S: tuple = ((33.0, 0.2, 0.3), (35.8, 0.04, 0.05))
    sigT: float = 0.1
    sigS: float = 0.05
    noise_std: float = 0.0
    seed: int = 0


def _harmonic_value(coeffs, month):
    c0, c_cos, c_sin = coeffs
    arg = 2.0 * math.pi * month / 12.0
    return c0 + c_cos * math.cos(arg) + c_sin * math.sin(arg)


def synth_profiles(spec):
    """Generate a profile table from a SynthProfileSpec (seeded, bit-stable)."""
    rng = np.random.default_rng(spec.seed)
    records = []
    for month in range(spec.n_months):
        for i in range(spec.n_lat):
            lat = spec.lat0 + i * spec.dlat
            is_polar = i >= spec.n_lat - spec.polar_rows
            box = 0 if is_polar else 1
            area = (
                EARTH_RADIUS**2
                * math.cos(math.radians(lat))
                * math.radians(spec.dlat)
                * math.radians(spec.dlon)
            )
            for j in range(spec.n_lon):
                lon = spec.lon0 + j * spec.dlon
                for level_index, (depth, thickness) in enumerate(spec.levels):
                    if level_index == 0:
                        T = _harmonic_value(spec.surface_T[box], month)
                        S = _harmonic_value(spec.surface_S[box], month)
                    else:
                        T = spec.interior_T[box]
                        S = spec.interior_S[box]
                    if spec.noise_std > 0.0:
                        T += spec.noise_std * rng.standard_normal()
                        S += spec.noise_std * rng.standard_normal()
                    records.append(
                        (month, lat, lon, area, depth, thickness, T, S, spec.sigT, spec.sigS)
                    )
    return pd.DataFrame.from_records(records, columns=list(PROFILE_COLUMNS))
