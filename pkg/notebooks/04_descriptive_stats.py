"""
Counting cases by year, place, age and presentation
===================================================
"""

from datetime import date

from wnvdb import analytics
from wnvdb.schema import AgeClass, GeoUnit, Host, InfectionType, SurveillanceRecord

padova = GeoUnit("05", "Veneto", "028", "Padova", "PD")
modena = GeoUnit("08", "Emilia-Romagna", "036", "Modena", "MO")


def case(year, n, geo, kind, age):
    return SurveillanceRecord("https://example.org/b.pdf", date(year, 8, 10), Host.HUMANS, n, n, geo,
                              infection_type=kind, age=age)


records = [
    case(2018, 12, padova, InfectionType.NEUROINVASIVE, AgeClass.FROM_65_TO_74),
    case(2018, 5, modena, InfectionType.FEVER, AgeClass.FROM_45_TO_64),
    case(2022, 20, padova, InfectionType.NEUROINVASIVE, AgeClass.FROM_75),
    case(2022, 4, modena, InfectionType.BLOOD_DONOR, AgeClass.MISSING),
]

yearly = analytics.yearly_totals(records)
print(yearly.total, yearly.mean, [(r.key, r.count) for r in yearly.rows])

print(analytics.format_report_csv(analytics.regional_breakdown(records, level="province")))

# age shares leave the missing class out and report it separately
ages = analytics.age_composition(records)
print({r.key[0]: round(r.share, 3) for r in ages.rows}, ages.excluded)

# blood donors are asymptomatic, so they drop out of the default basis
print(analytics.infection_composition(records).total, analytics.infection_composition(records, basis="all").total)
