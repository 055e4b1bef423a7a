#!/usr/bin/env python3
"""Regenerates fixtures/triplets.tsv and fixtures/company_revenue.csv.

All entities are fictional. Output is deterministic.
"""

import csv
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"
rng = random.Random(20240)

SYL = ["ar", "bel", "cor", "dan", "el", "fen", "gar", "hol", "is", "jor", "kel", "lun",
       "mor", "nev", "or", "pel", "quin", "ros", "sal", "tor", "ul", "vin", "wes", "yar", "zen"]
SUFFIX = ["Industries", "Systems", "Labs", "Holdings", "Works", "Partners", "Group", "Foods",
          "Motors", "Energy", "Media", "Logistics"]
SECTORS = ["software", "retail", "energy", "biotech", "logistics", "media", "finance", "food"]

used = set()


def name(n_syl=2):
    while True:
        s = "".join(rng.choice(SYL) for _ in range(n_syl)).capitalize()
        if s not in used:
            used.add(s)
            return s
        n_syl += rng.random() < 0.2


triples = []


def add(s, p, o):
    triples.append((s, p, str(o)))


# Cities first so companies can reference them.
cities = [name() + "ville" for _ in range(9)]
countries = [name(3) + "ia" for _ in range(9)]

companies = [f"{name()}_{rng.choice(SUFFIX)}" for _ in range(120)]
revenue = {}
for c in companies:
    add(c, "rdf:type", "Company")
for i, c in enumerate(companies):
    sector = rng.choice(SECTORS)
    employees = int(math.exp(rng.uniform(3, 10)))
    base = 0.9 * math.log(employees) + SECTORS.index(sector) * 0.15 + rng.gauss(0, 0.4)
    revenue[c] = round(math.exp(base) / 10, 2)
    add(c, "hasSector", sector)
    add(c, "locatedInCity", rng.choice(cities))
    if rng.random() < 0.9:
        add(c, "numEmployees", employees)
    add(c, "foundedYear", rng.randint(1890, 2020))
    add(c, "hasCEO", name() + " " + name())
    for _ in range(rng.randint(1, 3)):
        add(c, "makesProduct", name() + "-" + str(rng.randint(1, 99)))
    add(c, "stockTicker", c[:4].upper() + str(i))
    if rng.random() < 0.75:
        add(c, "marketCap", round(revenue[c] * rng.uniform(1, 5), 1))
    for _ in range(rng.randint(0, 2)):
        add(c, "ownsSubsidiary", name() + "_Ltd")
    add(c, "hasWebsite", f"www.{c.lower()}.example")

OTHER = {
    "City": ["locatedInCountry", "population", "density", "hasMayor", "twinnedWith"],
    "Country": ["hasCapital", "hasCurrency", "hasTLD", "areaKm2", "officialLanguage"],
    "Person": ["bornIn", "birthYear", "worksFor", "hasNationality", "heightCm"],
    "Athlete": ["playsSport", "memberOfTeam", "wonMedals", "debutYear", "hasCoach"],
    "Artist": ["hasGenre", "signedTo", "firstAlbumYear", "hasInstrument", "influencedBy"],
    "Film": ["directedBy", "releaseYear", "runtimeMin", "hasGenreFilm", "producedBy"],
    "Book": ["writtenBy", "publishedYear", "pageCount", "publishedBy", "hasSubject"],
    "River": ["flowsThrough", "lengthKm", "hasSource", "hasMouth", "dischargeM3s"],
    "University": ["locatedInTown", "foundedIn", "studentCount", "hasRector", "hasMotto"],
    "Airport": ["servesCity", "iataCode", "runwayCount", "elevationM", "hubFor"],
    "Team": ["basedIn", "hasStadium", "foundedSeason", "playsInLeague", "hasOwner"],
    "Planet": ["orbits", "massEarths", "hasMoonCount", "discoveredYear", "discoveredBy"],
}
NUMERIC_HINT = ("Year", "population", "density", "Km", "Cm", "Medals", "Min", "Count", "M3s",
                "Season", "Earths", "M", "areaKm2")

for cls, preds in OTHER.items():
    subjects = cities if cls == "City" else countries if cls == "Country" else [
        name() + "_" + cls.lower() for _ in range(9)]
    for s in subjects:
        add(s, "rdf:type", cls)
    for s in subjects:
        for p in preds:
            if rng.random() < 0.12:
                continue
            if p == "worksFor":
                obj = rng.choice(companies)
            elif p == "locatedInCountry":
                obj = rng.choice(countries)
            elif any(h in p for h in NUMERIC_HINT):
                obj = rng.randint(1, 5000)
            else:
                obj = name()
            add(s, p, obj)
            if p in ("twinnedWith", "influencedBy", "hasInstrument") and rng.random() < 0.5:
                add(s, p, name())

n_pred = len({p for _, p, _ in triples if p != "rdf:type"})
assert n_pred == 70, n_pred

OUT.mkdir(exist_ok=True)
with open(OUT / "triplets.tsv", "w", newline="") as f:
    f.write("# subject\tpredicate\tobject\n")
    for t in triples:
        f.write("\t".join(t) + "\n")

base = rng.sample(companies, 110)
with open(OUT / "company_revenue.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["company", "revenue", "listed", "region"])
    for c in base:
        w.writerow([c, revenue[c], rng.choice(["yes", "no"]), rng.choice(["north", "south", "east", "west"])])

print(f"{len(triples)} triples, {n_pred} predicates, {len(base)} base rows")
