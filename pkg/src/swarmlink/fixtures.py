"""Golden fixture scenarios: the four shipped experiment configurations and
the recorded digests of their deterministic outputs.

The channel calibration (rssi0, path-loss exponent) is the least-squares fit
of the accuracy-table interval centers ((4 m, -5 dB), (8 m, -12.5 dB),
(12 m, -17 dB)); noise_sigma 3.7 puts the widest 8 m interval near 50%
accuracy. The slam fixtures carry the reference simulation parameters
(5 m / 240 deg / 684-beam scanner at 10 Hz, dt 50 ms, 94.95 s moving run,
5 s static run, v_max 0.2 / a_max 0.1 or 0 / 0).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

CAL_RSSI0 = 10.144106146390435
CAL_N = 2.5125385564716973

RECONNECT = """\
# three-device chain, scripted outages on both pairs, five averaged runs
[sim]
name = reconnect
seed = 42
dt = 0.05
duration = 10.0

[env]
bounds = -10,-10,60,10

[uav.1]
x = 0
y = 0

[uav.2]
x = 8
y = 0

[uav.3]
x = 16
y = 0

[link]
comm_range = 20
heartbeat_period = 1
miss_threshold = 5
beacon_period = 2
handshake_timeout = 20
latency = 1

[disruption.1]
pair = 1,2
start = 2.0
end = 4.0

[disruption.2]
pair = 2,3
start = 2.5
end = 4.5

[experiment]
kind = reconnect
runs = 5
"""

RSSI_ACCURACY = """\
# interval-accuracy table: two devices, three spacings, nine intervals
[sim]
name = rssi_accuracy
seed = 42
dt = 0.05
duration = 25.6

[env]
bounds = -10,-10,30,10

[uav.1]
x = 0
y = 0

[uav.2]
x = 4
y = 0

[channel]
rssi0 = 10.144106146390435
d0 = 1.0
path_loss_exponent = 2.5125385564716973
noise_sigma = 3.7

[experiment]
kind = rssi_accuracy
distances = 4,8,12
interval1 = 4,-8,-2
interval2 = 4,-7,-3
interval3 = 4,-6,-2
interval4 = 8,-15,-10
interval5 = 8,-14,-11
interval6 = 8,-13,-12
interval7 = 12,-20,-14
interval8 = 12,-19,-15
interval9 = 12,-18,-16
samples_per_row = 512
"""

SEPARATION = """\
# closed-loop separation: two devices starting 2 m apart, d_min 4 m
[sim]
name = separation
seed = 42
dt = 0.05
duration = 60.0

[env]
bounds = -50,-50,50,50

[uav.1]
x = -1
y = 0

[uav.2]
x = 1
y = 0

[channel]
rssi0 = 10.144106146390435
d0 = 1.0
path_loss_exponent = 2.5125385564716973
noise_sigma = 0.0

[link]
comm_range = 30

[separation]
d_min = 4.0
d_max = 8.0
hysteresis = 0.0
speed = 0.2

[experiment]
kind = rssi_accuracy
settle_ticks = 500
"""

SLAM_MOVING = """\
# moving mapper: closed square lap inside a walled room with three obstacles
[sim]
name = slam_moving
seed = 42
dt = 0.05
duration = 94.95

[env]
bounds = 0,0,10,10
obstacle1 = 0.5,0.5,9.5,0.9
obstacle2 = 0.5,9.1,9.5,9.5
obstacle3 = 0.5,0.5,0.9,9.5
obstacle4 = 9.1,0.5,9.5,9.5
obstacle5 = 4.2,4.2,4.8,4.8
obstacle6 = 4.0,7.6,5.0,8.2
obstacle7 = 7.6,4.6,8.2,5.6

[uav.1]
x = 2.4
y = 2.4
heading = 0
v_max = 0.2
a_max = 0.1

[laser]
max_range = 5.0
fov_deg = 240
beam_count = 684
scan_rate_hz = 10

[path.1]
uav = 1
closed = true
cruise_speed = 0.2
capture_radius = 0.05
waypoint1 = 2.4,2.4
waypoint2 = 6.6,2.4
waypoint3 = 6.6,6.6
waypoint4 = 2.4,6.6

[experiment]
kind = slam_moving
grid_side = 240
grid_resolution = 0.05
grid_origin = -1,-1
hole_width = 0.6
quality = 50
search_iterations = 200
search_sigma = 0.05,0.05,0.015
odom_sigma_xy = 0.004
odom_sigma_theta = 0.002
"""

SLAM_STATIC = """\
# static mapper: more obstacles and corridors, the platform never moves
[sim]
name = slam_static
seed = 42
dt = 0.05
duration = 5.0

[env]
bounds = 0,0,10,10
obstacle1 = 0.5,0.5,9.5,0.9
obstacle2 = 0.5,9.1,9.5,9.5
obstacle3 = 0.5,0.5,0.9,9.5
obstacle4 = 9.1,0.5,9.5,9.5
obstacle5 = 6.8,0.9,7.2,4.0
obstacle6 = 6.8,6.0,7.2,9.1
obstacle7 = 2.6,6.4,3.4,7.2
obstacle8 = 2.0,2.2,2.8,3.0
obstacle9 = 4.6,6.9,4.9,7.2
obstacle10 = 3.71,7.16,3.75,7.2

[uav.1]
x = 5.0
y = 5.0
heading = 0
v_max = 0.0
a_max = 0.0

[laser]
max_range = 5.0
fov_deg = 240
beam_count = 684
scan_rate_hz = 10

[experiment]
kind = slam_static
grid_side = 240
grid_resolution = 0.05
grid_origin = -1,-1
hole_width = 0.6
quality = 50
search_iterations = 200
search_sigma = 0.05,0.05,0.015
odom_sigma_xy = 0.004
odom_sigma_theta = 0.002
"""

# the four shipped experiment fixtures; the separation closed-loop config
# above is a library-level preset used by tests and docs
FIXTURES = {
    "reconnect": RECONNECT,
    "rssi_accuracy": RSSI_ACCURACY,
    "slam_moving": SLAM_MOVING,
    "slam_static": SLAM_STATIC,
}

# sha256 of deterministic outputs, recorded when the fixtures were created
# (regenerating with `swarmlink fixtures` + `swarmlink run` must reproduce
# them bit for bit; figures are excluded: PNG bytes track the plotting
# library version)
EXPECTED_DIGESTS: dict[str, dict[str, str]] = {
    "reconnect": {
        "reconnect_mean.csv": "5ea4d79cb383d32734714b2b58a5acf48b1a5a3ac9115885e4f6f8dfd796dfbc",
        "reconnect_runs.csv": "a33e4c7863677288944427b5237220dacafcce9f37aa60f4815ff0b6f28f0506",
        "reconnect_table.csv": "2dca2eae9c358e73646abd9ecd7ea7dd495bfb5c42bd6d5b03aa80eeb0728ec1",
        "summary.txt": "0c5dd13408a842a98ed55c47ecf42450ed1a947a81d6c4ea17b52e14e2c946f8",
    },
    "rssi_accuracy": {
        "accuracy.csv": "fadb6ef0ee7b536b01145fb818b417e1c4f585494af319820c814f86fec7dc10",
        "summary.txt": "7e5b9198d30001a5744906e3b6e7e7fe5a861325753912ef1e76b57bb71cf54d",
    },
    "slam_moving": {
        "map.pgm": "bba6bc1d0a43eaf8dc920acec38921f48280293022a3f79a42a76e3882d5031b",
        "pose_trace.csv": "92753ce625814fa91fb7286965e2c2221e051ada89d700d7a9044b4d216855ae",
        "summary.txt": "baa2c9551e75026b83b813f75f6ef430744f871e01476daaec67e96745de66ae",
        "true_pose_trace.csv": "af7d6921ff49b88b0dcbcad37562ba519a513ac0867cb329687a1ac78ef055a2",
    },
    "slam_static": {
        "map.pgm": "1458de739442225ae4e5e4456441fb3c2f2f86d71b34cd422ff006a0214fe459",
        "pose_trace.csv": "8492105148bfffcdd2910ca2542d3fefa574150f00d19bda64abc2311b4ee7b9",
        "summary.txt": "d776ceda8ddeb5d6f0cca114b0dab34a44422796df1613c190ed47791f3b0146",
        "true_pose_trace.csv": "0f570a30048093e7c800ad586f1b9472425d3e806c88597def11882bc419c45d",
    },
}


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_fixtures(out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in FIXTURES.items():
        path = out / f"{name}.ini"
        path.write_text(text)
        written.append(path)
    digest_path = out / "digests.json"
    digest_path.write_text(json.dumps(EXPECTED_DIGESTS, indent=2, sort_keys=True) + "\n")
    written.append(digest_path)
    return written
