"""Builds a tiny scenario, runs it through the bindings and checks the results."""

import pathlib
import tempfile

import deasy


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        net = deasy.grid_network(3, 4, block_m=150.0)
        assert sum(line.startswith("node ") for line in net.splitlines()) == 12
        (tmp / "net.txt").write_text(net)
        # Trips across the grid from the west column to the east column.
        trips = [f"{5 * i} {4 * (i % 3)} {4 * (i % 3) + 3}" for i in range(20)]
        (tmp / "demand.txt").write_text("\n".join(trips) + "\n")
        (tmp / "s.cfg").write_text("network_path = net.txt\ndemand_path = demand.txt\nsim_duration = 400\n")

        cfg = deasy.Config.from_file(str(tmp / "s.cfg"))
        assert cfg.get("sim_duration") == "400"
        cfg = cfg.set("seed", 7).set("rerouting_policy", "deasy")
        assert cfg.get("seed") == "7"

        a = deasy.run(cfg)
        assert a == deasy.run(cfg), "same seed must reproduce"
        assert a["vehicles"] == 20 and a["policy"] == "deasy"
        assert 0.0 <= a["channel_busy_ratio"] <= 1.0

        rows = deasy.compare(cfg, ["none", "deasy"], [1, 2])
        assert [r["policy"] for r in rows] == ["none", "none", "deasy", "deasy"]
        assert rows[0]["vehicles"] == rows[2]["vehicles"]

        header = "seed,policy,dissemination,penetration_rate,travel_time_s"
        body = [f"{r['seed']},{r['policy']},{r['dissemination']},{r['penetration_rate']},{r['travel_time_s']}" for r in rows]
        summary = deasy.summarize("\n".join([header] + body) + "\n")
        assert summary.splitlines()[0].startswith("policy,dissemination,penetration_rate,metric")
        assert len(summary.splitlines()) == 3

        try:
            cfg.set("warp_speed", 9)
        except ValueError as e:
            assert "warp_speed" in str(e)
        else:
            raise AssertionError("unknown key accepted")

    print("smoke test ok:", a["travel_time_s"], "s mean travel time")


if __name__ == "__main__":
    main()
