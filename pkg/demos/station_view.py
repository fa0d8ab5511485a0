"""What the spoofed reference station itself computes.

The station keeps broadcasting its surveyed coordinates, but its own code-only
position walks to wherever the spoofer puts it. The rover trusts the surveyed
coordinates and the spoofed measurements together, and that mismatch is what
breaks its baseline.

The solver applies no atmosphere model, so the authentic fix sits about 28 m high.
The spoofer renders no ionosphere, which is why the height drops during the
attack: the rover sees the real ionosphere, the station does not.

    python3 demos/station_view.py
"""

from rtkspoof.geodesy import EcefCoord, ecef_to_enu, geodetic_to_ecef
from rtkspoof.rtk import InsufficientSatellites, single_point
from rtkspoof.scenario import StationSimulator, load_scenario, shipped_scenario


def main():
    cfg = load_scenario(shipped_scenario("async_spoof"))
    eph = cfg.ephemeris()
    station = StationSimulator(cfg, eph)
    survey = geodetic_to_ecef(cfg.station_survey).array()
    print("   t   valid  station single-point offset from survey (E, N, U) m")
    for k in range(cfg.n_epochs):
        t = cfg.epoch_time(k)
        epoch = station.observe(t)
        if k % 25:
            continue
        try:
            pos, _, n = single_point(epoch, eph, survey)
        except InsufficientSatellites:
            print(f"{t:5.0f}  {epoch.n_valid():5d}  (no solution: reacquiring)")
            continue
        e, n_, u = ecef_to_enu(EcefCoord.from_array(pos), cfg.station_survey).array()
        tag = "  <- spoofed" if station.under_attack(t) else ""
        print(f"{t:5.0f}  {n:5d}  {e:8.2f} {n_:8.2f} {u:8.2f}{tag}")


if __name__ == "__main__":
    main()
