#!/usr/bin/env python3
"""Quick-look plots for a feedersim telemetry CSV (not part of the library
contract; the CSV format is documented in docs/telemetry_columns.md)."""

import csv
import sys

import matplotlib.pyplot as plt


def main() -> int:
    if len(sys.argv) != 2:
        print(f"usage: {sys.argv[0]} telemetry.csv", file=sys.stderr)
        return 2
    cols: dict[str, list[float]] = {}
    with open(sys.argv[1], newline="") as f:
        for row in csv.DictReader(f):
            for key, value in row.items():
                cols.setdefault(key, []).append(float(value))

    t = cols["t_s"]
    fig, axes = plt.subplots(4, 1, sharex=True, figsize=(10, 11))

    axes[0].plot(t, cols["p_pv1_kw"], label="PV1")
    axes[0].plot(t, cols["p_pv2_kw"], label="PV2")
    axes[0].plot(t, cols["p_bat_kw"], label="battery")
    axes[0].set_ylabel("P [kW]")
    axes[0].legend(loc="best")

    axes[1].plot(t, cols["f_pv1_hz"], label="PV1")
    axes[1].plot(t, cols["f_bat_hz"], label="battery")
    axes[1].set_ylabel("f [Hz]")
    axes[1].legend(loc="best")

    axes[2].plot(t, cols["v_pcc_peak_v"], label="PCC peak")
    axes[2].set_ylabel("V [V]")
    axes[2].legend(loc="best")

    ax3b = axes[3].twinx()
    axes[3].plot(t, cols["theta_gi_deg"], color="tab:blue", label="island-grid angle")
    ax3b.step(t, cols["breaker_closed"], color="tab:red", label="breaker", where="post")
    axes[3].set_ylabel("angle [deg]")
    ax3b.set_ylabel("breaker")
    axes[3].set_xlabel("t [s]")

    fig.tight_layout()
    plt.show()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
