import numpy as np
import pytest
import scipy.ndimage

from pqlab.beads import (
    BeadsSpec,
    beads_experiment,
    build_beads,
    disk_submasks,
    mask_pgm,
    single_disk_domain,
)
from pqlab.discretization import ProblemParams

SMALL = (96, 48)  # keeps eigensolves fast; channel resolved for eps >= 0.1


def test_spec_validation():
    with pytest.raises(ValueError):
        BeadsSpec(k=0)
    with pytest.raises(ValueError):
        BeadsSpec(r=0.6)
    with pytest.raises(ValueError):
        BeadsSpec(eps=-0.1)
    with pytest.raises(ValueError):
        BeadsSpec(r=0.2, eps=0.3)  # channel wider than disk


def test_channel_resolution_guard():
    with pytest.raises(ValueError, match="too coarse"):
        build_beads(BeadsSpec(eps=0.02, resolution=SMALL))


def test_mask_connected_with_margin():
    dom = build_beads(BeadsSpec(k=2, r=0.45, eps=0.2, resolution=SMALL))
    mask = dom.mask
    _, n_comp = scipy.ndimage.label(mask)
    assert n_comp == 1
    # the builder leaves an empty frame so the zero extension is honest
    assert not mask[:2, :].any() and not mask[-2:, :].any()
    assert not mask[:, :2].any() and not mask[:, -2:].any()


def test_three_disks_connected():
    dom = build_beads(BeadsSpec(k=3, r=0.45, eps=0.2, resolution=(128, 48)))
    _, n_comp = scipy.ndimage.label(dom.mask)
    assert n_comp == 1


def test_channel_height_is_plateau():
    spec = BeadsSpec(k=2, r=0.45, eps=0.2, resolution=SMALL)
    dom = build_beads(spec)
    # at the midpoint between disk centers the cross-section is the bare
    # channel: 2*eps tall, so 2*eps/h pixels up to rounding
    xs = dom.origin[0] + (np.arange(dom.mask.shape[1]) + 0.5) * dom.h
    jmid = int(np.argmin(np.abs(xs - 1.5)))
    height = int(dom.mask[:, jmid].sum())
    expect = 2.0 * spec.eps / dom.h
    assert abs(height - expect) <= 1.5


def test_masks_nest_in_eps():
    specs = [BeadsSpec(eps=e, resolution=SMALL) for e in (0.3, 0.2, 0.1)]
    masks = [build_beads(s).mask for s in specs]
    for big, small in zip(masks, masks[1:]):
        assert big.shape == small.shape  # same lattice
        assert np.all(big[small])  # wider channel contains the narrower


def test_disk_submasks_disjoint():
    spec = BeadsSpec(k=2, r=0.45, eps=0.2, resolution=SMALL)
    dom = build_beads(spec)
    subs = disk_submasks(spec, dom)
    assert len(subs) == 2
    assert not np.any(subs[0] & subs[1])
    for s in subs:
        assert np.all(dom.mask[s])  # inside the domain
        assert s.sum() > 0


def test_single_disk_domain():
    spec = BeadsSpec(k=2, r=0.45, eps=0.0, resolution=SMALL)
    dom = single_disk_domain(spec)
    _, n_comp = scipy.ndimage.label(dom.mask)
    assert n_comp == 1
    # roughly a disk: area ~ pi r^2 in pixel units
    area = dom.mask.sum() * dom.h**2
    assert area == pytest.approx(np.pi * spec.r**2, rel=0.05)


def test_mask_pgm(tmp_path):
    dom = build_beads(BeadsSpec(eps=0.2, resolution=SMALL))
    path = tmp_path / "m.pgm"
    mask_pgm(dom, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "P2"
    ny, nx = dom.mask.shape
    assert lines[1].split() == [str(nx), str(ny)]


def test_experiment_validation():
    pp = ProblemParams(3.0, 1.5)
    with pytest.raises(ValueError):  # eps not strictly decreasing
        beads_experiment([BeadsSpec(eps=0.1, resolution=SMALL),
                          BeadsSpec(eps=0.2, resolution=SMALL)], pp)
    with pytest.raises(ValueError):  # mixed geometry
        beads_experiment([BeadsSpec(eps=0.2, resolution=SMALL),
                          BeadsSpec(eps=0.1, resolution=(64, 32))], pp)


def test_experiment_small_grid():
    pp = ProblemParams(3.0, 1.5)
    specs = [BeadsSpec(eps=e, resolution=SMALL) for e in (0.2, 0.1)]
    report = beads_experiment(specs, pp)
    assert [r["status"] for r in report.rows] == ["ok", "ok"]
    assert report.flags["lambda1_monotone"]
    assert report.flags["bound_eps_independent"]
    assert report.flags["gaps"] == []
    # margin grows as the channel shrinks, even on this coarse grid
    assert report.rows[1]["margin"] > report.rows[0]["margin"]


def test_report_csv(tmp_path):
    pp = ProblemParams(3.0, 1.5)
    report = beads_experiment([BeadsSpec(eps=0.2, resolution=SMALL)], pp)
    path = tmp_path / "b.csv"
    report.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["eps", "lambda1_p", "lambda1_q"]
    assert len(lines) == 2
