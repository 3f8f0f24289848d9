"""Smoke test for the nvsim_py extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or put a directory holding the built `nvsim_py` shared object on PYTHONPATH.
"""

import pathlib

import nvsim_py

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    cfg = nvsim_py.Config(str(ROOT / "config" / "default.toml"))
    sim = nvsim_py.Simulator(cfg)

    freqs = sim.transitions()
    assert abs(freqs["C"] - 127.0) < 0.5, freqs
    assert abs(freqs["D"] - 3.0) < 0.03, freqs

    clean = sim.noiseless()
    for k in range(1, 5):
        f, rho = clean.crot(k)
        assert len(rho) == 4 and isinstance(rho[0][0], complex)
    f, _ = nvsim_py.Simulator(nvsim_py.Config(str(ROOT / "config" / "noiseless.toml"))).crot(1)
    assert abs(f - 1.0) < 1e-9, f

    rows = sim.tomography()
    fids = [round(r[1], 4) for r in rows]
    for got, want in zip(fids, (0.89, 0.89, 0.88, 1.0)):
        assert abs(got - want) <= 0.05, fids

    rho = [[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
    back = sim.reconstruct(rho)
    assert abs(nvsim_py.fidelity(back, rho) - 1.0) < 1e-9

    text = nvsim_py.format_sequence("init 3us\r\nmw pi @A  # map\nrf pi @freq:127.4448812\n")
    assert text == "init 3us\nmw pi @A\nrf pi @freq:127.444881\n", text
    try:
        nvsim_py.format_sequence("mw pi @Z")
    except nvsim_py.NvsimError as e:
        assert str(e).startswith("1:"), e
    else:
        raise AssertionError("expected a diagnostic")

    state, shot = sim.run_sequence("init 3us\nmw pi @A\nrf pi @C\nmw pi @A\nreadout 3us", seed=1)
    assert shot is not None and shot[1] in ("ms0", "ms1")

    rabi = clean.rabi("A", [k * 0.005 for k in range(201)])
    assert abs(rabi["fitted_frequency"][0] - 10.0) < 0.01

    cal = sim.readout_calibrate(20000)
    assert abs(cal["fidelity"] - 0.80) < 0.02, cal

    print(f"nvsim_py {nvsim_py.__version__}: C = {freqs['C']:.6f} MHz, fidelities {fids}")


if __name__ == "__main__":
    main()
