from datetime import date, timedelta

import pytest

from conftest import human_province_records, human_region_records
from wnvdb import analytics, pipeline
from wnvdb.errors import DuplicateWeatherKey
from wnvdb.geo import load_registry
from wnvdb.pipeline import SliceKey, WeeklySeries
from wnvdb.schema import AgeClass, GeoUnit, Host, InfectionType, SurveillanceRecord

VENETO = GeoUnit("05", "Veneto")
ER = GeoUnit("08", "Emilia-Romagna")


def rec(year, new, geo=VENETO, host=Host.HUMANS, **kw):
    return SurveillanceRecord("u", date(year, 8, 1), host, 0, new, geo, season=year, **kw)


def test_yearly_totals():
    records = [rec(2018, 5), rec(2018, 3), rec(2019, 2), rec(2019, None), rec(2020, 1, host=Host.EQUIDS)]
    report = analytics.yearly_totals(records)
    assert report.count("2018") == 8 and report.count(2019) == 2
    assert report.total == 10 and report.mean == 5.0
    assert report.excluded["unattributable"] == 1
    assert analytics.yearly_totals(records, exclude_years=[2018]).total == 2


def test_yearly_totals_empty():
    report = analytics.yearly_totals([])
    assert report.total == 0 and report.rows == () and report.mean == 0.0


def test_regional_breakdown_sorted_descending():
    records = [rec(2018, 2), rec(2018, 9, ER), rec(2019, 4)]
    report = analytics.regional_breakdown(records)
    assert [r.key[0] for r in report.rows] == ["Emilia-Romagna", "Veneto"]
    assert report.share("Emilia-Romagna") == pytest.approx(9 / 15)


def test_single_region_has_full_share():
    report = analytics.regional_breakdown([rec(2018, 2), rec(2019, 3)])
    assert report.share("Veneto") == 1.0


def test_province_breakdown_names_and_not_indicated():
    padova = GeoUnit("05", "Veneto", "028", "Padova", "PD")
    unknown = GeoUnit("05", "Veneto", None, "Non indicata", None)
    report = analytics.regional_breakdown([rec(2018, 3, padova), rec(2018, 1, unknown)], level="province")
    assert report.count("Padova") == 3
    assert report.count("Not indicated (Veneto)") == 1
    with pytest.raises(ValueError):
        analytics.regional_breakdown([], level="comune")


def test_age_composition():
    records = [rec(2018, 2, age=AgeClass.FROM_45_TO_64), rec(2018, 6, age=AgeClass.FROM_75),
               rec(2018, 4, age=AgeClass.MISSING), rec(2019, 1, age=AgeClass.FROM_75)]
    pooled = analytics.age_composition(records)
    assert pooled.share(">=75") == pytest.approx(7 / 9)
    assert pooled.excluded["missing"] == 4
    assert analytics.age_composition(records, 2019).share(">=75") == 1.0
    by_year = analytics.age_composition(records, by_year=True)
    assert by_year.share("2018", "45-64") == pytest.approx(0.25)


def test_infection_composition_bases():
    records = [rec(2014, 7, infection_type=InfectionType.NEUROINVASIVE),
               rec(2014, 1, infection_type=InfectionType.FEVER),
               rec(2014, 5, infection_type=InfectionType.BLOOD_DONOR)]
    sym = analytics.infection_composition(records, 2014)
    assert sym.share("neuroinvasive") == pytest.approx(0.875)
    assert sym.total == 8
    assert analytics.infection_composition(records, 2014, basis="all").total == 13
    with pytest.raises(ValueError):
        analytics.infection_composition(records, basis="some")


def test_host_region_composition():
    records = [rec(2018, 4, ER, Host.MOSQUITOES), rec(2018, 4, VENETO, Host.MOSQUITOES),
               rec(2019, 2, ER, Host.MOSQUITOES), rec(2019, 9, ER, Host.HUMANS)]
    yearly = analytics.host_region_composition(records, Host.MOSQUITOES)
    assert yearly.share("2018", "Veneto") == 0.5 and yearly.share("2019", "Emilia-Romagna") == 1.0
    pooled = analytics.host_region_composition(records, Host.MOSQUITOES, pooled=True)
    assert pooled.share("Emilia-Romagna") == pytest.approx(0.6)
    assert analytics.host_region_composition(records, Host.MOSQUITOES, [2019]).total == 2


def test_region_report_equals_provinces_summed_by_region():
    registry = load_registry()
    region = analytics.regional_breakdown(human_region_records(), level="region")
    by_region: dict[str, int] = {}
    for row in analytics.regional_breakdown(human_province_records(), level="province").rows:
        entry = registry.province_by_name(row.key[0])
        name = registry.regions[entry.region_code].name
        by_region[name] = by_region.get(name, 0) + row.count
    assert {r.key[0]: r.count for r in region.rows} == by_region


def test_report_outputs_are_deterministic():
    report = analytics.regional_breakdown(human_province_records(), level="province")
    text = analytics.format_report_csv(report)
    assert text == analytics.format_report_csv(analytics.regional_breakdown(human_province_records(), level="province"))
    assert text.splitlines()[0] == "group_key,count,share"
    assert '"rows"' in analytics.format_report_json(report)


# weather join

START = date(2022, 7, 6)


def province_series(code="028", weeks=2):
    dates = [START + timedelta(weeks=i) for i in range(weeks)]
    return WeeklySeries.from_cumulative([1, 3, 6][:weeks], dates, SliceKey(2022, Host.HUMANS, "province", code))


def test_join_without_weather():
    rows = analytics.join_weather([province_series()], [])
    assert len(rows) == 2
    assert all(r.tmax_c is None and r.n_weather_days == 0 for r in rows)
    assert [r.new_cases for r in rows] == [1, 2]


def test_join_one_to_one():
    weather = [analytics.WeatherWeek("28", START, 31.0, 2.0, 10.0),
               analytics.WeatherWeek("028", START + timedelta(weeks=1), 29.0, 0.0, 12.0)]
    rows = analytics.join_weather([province_series()], weather)
    assert [(r.tmax_c, r.precip_mm, r.wind_kmh) for r in rows] == [(31.0, 2.0, 10.0), (29.0, 0.0, 12.0)]


def test_join_daily_weather_is_averaged():
    temps = [30, 31, 32, 33, 34, 35, 36, 20, 21, 22, 23, 24, 25, 26]
    weather = [analytics.WeatherWeek("028", START - timedelta(days=6) + timedelta(days=i), float(t), float(i % 2), 5.0)
               for i, t in enumerate(temps)]
    rows = analytics.join_weather([province_series()], weather)
    assert rows[0].tmax_c == pytest.approx(33.0) and rows[1].tmax_c == pytest.approx(23.0)
    assert rows[0].precip_mm == pytest.approx(3 / 7) and rows[1].precip_mm == pytest.approx(4 / 7)
    assert rows[0].n_weather_days == rows[1].n_weather_days == 7


def test_join_preserves_rows_and_rejects_duplicates():
    series = [province_series("028", 3), province_series("029", 2)]
    weather = [analytics.WeatherWeek("999", START, 20.0, None, None)]
    assert len(analytics.join_weather(series, weather)) == 5
    with pytest.raises(DuplicateWeatherKey):
        analytics.join_weather(series, weather * 2)


def test_weather_ranges():
    with pytest.raises(ValueError):
        analytics.WeatherWeek("028", START, 60.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        analytics.WeatherWeek("028", START, 20.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        analytics.WeatherWeek("028", START, 20.0, 0.0, -3.0)


def test_weather_csv_round_trip():
    text = "codice_provincia,data,tmax_c,precip_mm,wind_kmh\n28,2022-07-06,31.5,NA,9\n"
    (w,) = analytics.parse_weather_csv(text)
    assert (w.province_code, w.precip_mean, w.wind_mean) == ("028", None, 9.0)
    joined = analytics.format_joined_csv(analytics.join_weather([province_series()], [w]))
    lines = joined.splitlines()
    assert lines[0].split(",") == list(analytics.JOINED_COLUMNS)
    assert lines[1].endswith(",31.5,NA,9.0,1")
    with pytest.raises(ValueError):
        analytics.parse_weather_csv("codice_provincia,data\n")


def test_series_from_pipeline_join_directly():
    series = [s for s in pipeline.build_series(human_province_records(), "province")]
    rows = analytics.join_weather(series, [])
    assert len(rows) == sum(s.T for s in series)
