"""Independent oracles shared by the unit and acceptance suites."""

from swarmlink.link import LinkParams


def reconnect_oracle(window_start: int, window_end: int, params: LinkParams):
    """Hand-traceable message schedule for one scripted outage.

    Returns (disruption_tick, reconnect_tick). The last pre-outage heartbeat
    lands at send + latency; detection fires when the silence exceeds the
    miss threshold; beacons repeat from detection until one is sent at or
    after the window end; the beacon, the handshake request, and the
    acknowledge each cost one latency.
    """
    hb, m, b, lat = (params.heartbeat_period, params.miss_threshold,
                     params.beacon_period, params.latency)
    t_send = ((window_start - 1) // hb) * hb
    last_hb = t_send + lat
    detect = last_hb + m + 1
    t_beacon = detect
    while t_beacon < window_end:
        t_beacon += b
    return last_hb + 1, t_beacon + 3 * lat
