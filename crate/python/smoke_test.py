"""Build, synthesize and simulate through the Python bindings."""

import sirs_etc


def main():
    cfg = sirs_etc.Config()
    f = sirs_etc.vector_field(0.6, 0.05, 0.2)
    d = sirs_etc.decomposition((0.6, 0.05), 0.2, (0.6, 0.05), 0.2)
    assert max(abs(a - b) for a, b in zip(f, d)) < 1e-12

    lo, hi = sirs_etc.reach_box((0.595, 0.045), (0.605, 0.055), 0.17, 1.0)
    assert lo[0] <= hi[0] and lo[1] <= hi[1]

    model = sirs_etc.Model.build(cfg)
    assert model.num_states == 5151
    print("set sizes (initial, safe, terminal):", model.set_sizes())

    syn = sirs_etc.synthesize_model(model)
    assert syn.feasible and syn.covers_initial_set()
    syn.verify()
    print("terminal", len(syn.terminal_states()), "initial rank", syn.initial_rank)

    run = sirs_etc.simulate(cfg, syn, 0.8, 0.07)
    rep = run["report"]
    assert rep["passed"], rep
    print("events", rep["event_count"], "ranks", rep["rank_sequence"], "settle", rep["settle_time"])

    try:
        sirs_etc.simulate(cfg, syn, 0.3, 0.07)
    except ValueError:
        pass
    else:
        raise AssertionError("expected a domain error")

    try:
        sirs_etc.Config.from_toml("thresholds = [0.015]\n")
    except ValueError:
        pass
    else:
        raise AssertionError("expected a config error")
    print("ok")


if __name__ == "__main__":
    main()
