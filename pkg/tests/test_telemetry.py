"""Event log reducers, export round-trips, hashing."""

from icnsim.telemetry import (EventLog, RunArtifacts, Telemetry,
                              canonical_json, conservation_from_events,
                              disruption_intervals, drops_by_reason,
                              events_hash, export, export_csv,
                              import_artifacts, link_bytes_from_events,
                              merge_ratios, render_summary,
                              stalls_from_events, summarize)


def ev(t, el, event, **fields):
    return {"t": t, "el": el, "ev": event, **fields}


def test_canonical_json_is_key_sorted_and_compact():
    rec = {"b": 2, "a": 1, "c": [1, 2]}
    assert canonical_json(rec) == '{"a":1,"b":2,"c":[1,2]}'
    assert canonical_json(rec) == canonical_json({"c": [1, 2], "a": 1, "b": 2})


def test_event_log_hash_is_order_sensitive():
    a, b = EventLog(), EventLog()
    a.append(1, "x", "pkt_inject", size=10)
    a.append(2, "y", "pkt_deliver", size=10)
    b.append(2, "y", "pkt_deliver", size=10)
    b.append(1, "x", "pkt_inject", size=10)
    assert a.hash() != b.hash()
    c = EventLog()
    c.append(1, "x", "pkt_inject", size=10)
    c.append(2, "y", "pkt_deliver", size=10)
    assert a.hash() == c.hash()
    assert events_hash(a.records) == a.hash()


def test_disabled_telemetry_records_nothing():
    tel = Telemetry(enabled=False)
    empty = tel.hash()
    tel.record(1, "sw", "tx_bytes", 100)
    assert tel.samples == []
    assert tel.hash() == empty


def test_conservation_balances_branch_surplus():
    events = [
        ev(0, "a", "pkt_inject", size=1000),
        ev(1, "b", "pkt_branch", size=1000, extra=1),
        ev(2, "c", "pkt_deliver", size=1000),
        ev(2, "d", "pkt_deliver", size=1000),
    ]
    cons = conservation_from_events(events)
    assert cons["balanced"]
    assert cons["injected_bytes"] == 1000
    assert cons["branch_extra_bytes"] == 1000
    assert cons["delivered_bytes"] == 2000
    lost = conservation_from_events(events[:-1])
    assert not lost["balanced"]
    assert lost["in_flight_bytes"] == 1000


def test_link_bytes_split_by_class():
    events = [
        ev(0, "a", "pkt_fwd", link="l1:a->b", size=100, kind="chunk"),
        ev(1, "a", "pkt_fwd", link="l1:a->b", size=50, kind="stream"),
        ev(2, "b", "pkt_fwd", link="l2:b->c", size=70, kind="chunk"),
    ]
    out = link_bytes_from_events(events)
    assert out["total"] == {"l1:a->b": 150, "l2:b->c": 70}
    assert out["by_class"]["l1:a->b"] == {"chunk": 100, "stream": 50}


def test_drops_grouped_by_reason():
    events = [
        ev(0, "a", "pkt_drop", size=1, reason="queue_cap"),
        ev(1, "a", "pkt_drop", size=1, reason="queue_cap"),
        ev(2, "a", "pkt_drop", size=1, reason="zero_fid"),
    ]
    assert drops_by_reason(events) == {"queue_cap": 2, "zero_fid": 1}


def test_merge_ratios_for_fetches_and_streams():
    events = []
    for _ in range(2):
        events.append(ev(0, "srv", "server_resp", kind="chunk", path="/x",
                         status=200, size=1))
    for _ in range(20):
        events.append(ev(1, "c", "http_resp", kind="chunk", path="/x",
                         status=200, size=1, elapsed_us=1))
    for _ in range(3):
        events.append(ev(2, "snap", "pkt_inject", kind="stream", size=1400))
    for _ in range(30):
        events.append(ev(3, "stb", "stb_rx", name="ch:ch1", size=1400))
    ratios = merge_ratios(events)
    assert ratios["chunk"] == {"server_tx": 2, "client_rx": 20, "ratio": 10.0}
    assert ratios["stream"] == {"server_tx": 3, "client_rx": 30, "ratio": 10.0}


def test_merge_ratio_without_transmissions_is_undefined():
    ratios = merge_ratios([ev(0, "c", "http_resp", kind="chunk", path="/x",
                              status=200, size=1, elapsed_us=1)])
    assert ratios["chunk"]["ratio"] is None


def test_disruption_intervals_report_large_gaps_only():
    times = [100, 200, 300, 1000, 1100]
    assert disruption_intervals(times, 0, 2000, 500) == [(300, 1000)]
    # a gap exactly at the threshold is normal jitter
    assert disruption_intervals([0, 500], 0, 1000, 500) == []
    # arrivals outside the active span are ignored
    assert disruption_intervals([5, 700, 2500], 600, 800, 50) == []


def test_no_arrivals_count_as_whole_span_disruption():
    assert disruption_intervals([], 10, 50, 5) == [(10, 50)]
    assert disruption_intervals([], 10, 10, 5) == []


def test_stall_replay_matches_live_accounting():
    events = [
        ev(1_000, "c1", "chunk_done", path="/live/2/0", size=1, ewma_bps=1, n=1),
        ev(2_751_000, "c1", "chunk_done", path="/live/2/1", size=1,
           ewma_bps=1, n=2),
        ev(5_800_000, "c1", "chunk_done", path="/live/2/2", size=1,
           ewma_bps=1, n=3),
    ]
    out = stalls_from_events(events, chunk_duration_us=2_000_000,
                             startup_hold_us=750_000)
    assert out == {"c1": {"total_us": 1_049_000, "events": 1}}


def make_artifacts():
    events = [
        ev(0, "snap", "pkt_inject", size=1000, kind="chunk", pid=1),
        ev(5, "cnap", "pkt_deliver", size=1000, kind="chunk", pid=1,
           consumers=1),
    ]
    samples = [{"t": 10, "el": "sw", "metric": "tx_bytes", "value": 1000}]
    config = {"scenario": "tiny", "params": {"seed": 1}}
    meta = {"mode": "icn", "seed": 1, "events_hash": events_hash(events)}
    return RunArtifacts(config=config, mode="icn", seed=1, events=events,
                        samples=samples, meta=meta)


def test_export_import_round_trip(tmp_path):
    artifacts = make_artifacts()
    paths = export(artifacts, str(tmp_path / "out"))
    assert sorted(paths) == ["effective_config.json", "events.jsonl",
                             "meta.json", "metrics.csv", "summary.txt"]
    back = import_artifacts(str(tmp_path / "out"))
    assert back.events == artifacts.events
    assert back.samples == artifacts.samples
    assert back.config == artifacts.config
    assert back.meta == artifacts.meta
    assert events_hash(back.events) == artifacts.meta["events_hash"]


def test_export_csv_layout():
    text = export_csv([{"t": 1, "el": "sw", "metric": "m", "value": 2}])
    assert text == "t,el,metric,value\n1,sw,m,2\n"


def test_summary_renders_every_section():
    artifacts = make_artifacts()
    summary = summarize(artifacts)
    assert summary["conservation"]["balanced"]
    assert summary["merge_ratios"] == {}
    text = render_summary(summary)
    assert "mode: icn" in text
    assert "conservation: injected=1000" in text
    assert "balanced=True" in text
