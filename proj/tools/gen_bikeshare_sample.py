#!/usr/bin/env python3
"""Writes data/bikeshare_sample.csv: hourly rentals at a handful of stations."""
import csv
import datetime as dt
import math
import random
import sys

STATIONS = [
    # name, city population, station lat/lon, nearest metro lat/lon
    ("Dupont_Circle", 689545, 38.9097, -77.0434, 38.9096, -77.0434),
    ("Union_Station", 689545, 38.8973, -77.0063, 38.8977, -77.0074),
    ("Navy_Yard", 689545, 38.8766, -77.0031, 38.8764, -77.0050),
    ("Columbia_Heights", 689545, 38.9283, -77.0323, 38.9281, -77.0325),
    ("Rosslyn", 238643, 38.8960, -77.0720, 38.8964, -77.0712),
    ("Clarendon", 238643, 38.8870, -77.0960, 38.8867, -77.0952),
    ("King_Street", 159467, 38.8047, -77.0600, 38.8063, -77.0609),
    ("Braddock_Road", 159467, 38.8140, -77.0530, 38.8141, -77.0535),
]


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(a))


def main(path, rows=600, seed=7):
    rng = random.Random(seed)
    start = dt.datetime(2023, 1, 1)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["datetime", "station", "temp_c", "humidity", "windspeed", "avg_speed_ms",
                    "avg_load_kg", "docked_bikes", "station_lat", "station_lon", "metro_lat",
                    "metro_lon", "rentals"])
        for _ in range(rows):
            t = start + dt.timedelta(hours=rng.randrange(365 * 24))
            name, pop, slat, slon, mlat, mlon = rng.choice(STATIONS)
            season = math.sin((t.timetuple().tm_yday - 100) / 365 * 2 * math.pi)
            temp = round(14 + 12 * season + rng.gauss(0, 3), 1)
            humidity = round(min(100, max(15, 60 - 0.8 * (temp - 14) + rng.gauss(0, 12))), 1)
            wind = round(abs(rng.gauss(12, 6)), 1)
            speed = round(rng.uniform(3, 7), 2)
            load = round(rng.uniform(55, 105), 1)
            docked = rng.randrange(0, 21)
            weekend = t.weekday() >= 5
            rush = (7 <= t.hour < 10) or (16 <= t.hour < 19)
            dist = haversine(slat, slon, mlat, mlon)
            y = (20 + (45 if rush and not weekend else 0) + (18 if weekend and 11 <= t.hour <= 17 else 0)
                 + 1.4 * temp - 0.15 * humidity - 0.3 * wind - 120 * dist + pop / 40000
                 - 0.6 * docked + rng.gauss(0, 5))
            w.writerow([t.strftime("%Y-%m-%dT%H:%M:%S"), name, temp, humidity, wind, speed, load,
                        docked, slat, slon, mlat, mlon, max(0, round(y))])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/bikeshare_sample.csv")
