"""
Tests for link classes, distance profiles, fits, frustration, the r-body oracle and spectra
"""
import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent))

from models.schemas import BinaryImage, DistanceProfile, EmpiricalMoments, Histogram, IsingModel, PatchSet
from services.analysis import (
    classify_link, coupling_histogram, distance_profile, field_and_magnetization_histograms,
    fit_exponential, fourier_amplitudes, fourier_spectrum, frustration_count, interaction_ray,
    lattice_links, r_body_solution, site_index, write_profile_csv,
)
from services.errors import BmPriorError, FitDomainError, FitFailedError, LinkClassError
from services.invising import infer_nmf
from services.json_utils import read_csv


def lattice_model(L, link_value):
    """Model whose NN couplings are link_value((x1, y1), (x2, y2))"""
    n = L * L
    w = np.zeros((n, n))
    for ri, rj in lattice_links(L, "NN"):
        i, j = site_index(L, *ri), site_index(L, *rj)
        w[i, j] = w[j, i] = link_value(ri, rj)
    return IsingModel(L=L, w=w, h=np.zeros(n))


def exp_profile(a, b, r_max=7, noise=None):
    r = np.arange(1, r_max + 1)
    w_bar = a * np.exp(-(r - 2) / b)
    stderr = np.zeros_like(w_bar)
    if noise is not None:
        rng, scale = noise
        stderr = scale * w_bar
        w_bar = w_bar * (1 + scale * rng.standard_normal(w_bar.size))
    return DistanceProfile(
        origin_parity="A", r_values=r.tolist(), w_bar=w_bar.tolist(), stderr=stderr.tolist(),
    )


class TestClassifyLink:
    @pytest.mark.parametrize("ri, rj, kind, cls", [
        ((1, 1), (2, 1), "NN", 1),
        ((2, 3), (2, 4), "NN", 1),
        ((5, 2), (6, 3), "NNN", 2),
        ((2, 1), (3, 1), "NN", 2),
        ((3, 1), (2, 2), "NNN", 1),
        ((2, 2), (1, 1), "NNN", 1),
    ])
    def test_examples(self, ri, rj, kind, cls):
        link = classify_link(ri, rj)
        assert (link.kind, link.cls) == (kind, cls)

    @pytest.mark.parametrize("rj", [(1, 1), (3, 1), (3, 2)])
    def test_other_pairs_rejected(self, rj):
        with pytest.raises(LinkClassError):
            classify_link((1, 1), rj)

    def test_link_counts_on_three_by_three(self):
        assert len(list(lattice_links(3, "NN"))) == 12
        assert len(list(lattice_links(3, "NNN"))) == 8

    def test_every_link_gets_one_class(self):
        for kind in ("NN", "NNN"):
            links = list(lattice_links(6, kind))
            assert len({frozenset(pair) for pair in links}) == len(links)
            assert all(classify_link(ri, rj).kind == kind for ri, rj in links)


class TestDistanceProfile:
    def test_zero_model(self):
        model = IsingModel(L=5, w=np.zeros((25, 25)), h=np.zeros(25))
        for origin in ("A", "B"):
            profile = distance_profile(model, origin)
            assert all(v == 0.0 for v in profile.w_bar)
            assert all(s == 0.0 for s in profile.stderr)

    def test_constant_couplings(self):
        n = 36
        w = np.full((n, n), 0.37)
        np.fill_diagonal(w, 0.0)
        profile = distance_profile(IsingModel(L=6, w=w, h=np.zeros(n)), (2, 2))
        assert profile.origin_parity == "B"
        assert profile.r_values == [1, 2, 3, 4]
        assert all(v == 0.37 for v in profile.w_bar)
        assert all(s == 0.0 for s in profile.stderr)

    def test_hand_built_four_by_four(self):
        rng = np.random.default_rng(0)
        w = np.triu(rng.uniform(-1, 1, size=(16, 16)), 1)
        model = IsingModel(L=4, w=w + w.T, h=np.zeros(16))
        # rows 2, 3 from column 1 and columns 2, 3 from row 1
        terms = np.array([model.w[4, 5], model.w[8, 9], model.w[1, 5], model.w[2, 6]])
        profile = distance_profile(model, "A")
        assert profile.r_values == [1, 2, 3]
        assert profile.w_bar[0] == pytest.approx(terms.mean(), abs=1e-15)
        assert profile.stderr[0] == pytest.approx(terms.std() / 2.0, abs=1e-15)

    def test_small_lattice_rejected(self):
        with pytest.raises(BmPriorError):
            distance_profile(IsingModel(L=3, w=np.zeros((9, 9)), h=np.zeros(9)))

    def test_bad_origin(self):
        with pytest.raises(ValueError):
            distance_profile(IsingModel(L=4, w=np.zeros((16, 16)), h=np.zeros(16)), (1, 2))

    def test_csv(self, tmp_path):
        model = IsingModel(L=4, w=np.zeros((16, 16)), h=np.zeros(16))
        write_profile_csv(distance_profile(model), tmp_path / "profile.csv")
        rows = read_csv(tmp_path / "profile.csv")
        assert list(rows[0]) == ["r", "w_bar", "stderr"]
        assert len(rows) == 3

    def test_interaction_ray(self):
        model = lattice_model(4, lambda ri, rj: 0.5)
        ray = interaction_ray(model, (1, 1), "right")
        assert [r for r, _ in ray] == [1.0, 2.0, 3.0]
        assert ray[0][1] == 0.5 and ray[1][1] == 0.0
        assert interaction_ray(model, (1, 1), "diagonal")[0][0] == pytest.approx(np.sqrt(2))


class TestHistograms:
    def test_zero_model_lands_in_zero_bin(self):
        model = IsingModel(L=4, w=np.zeros((16, 16)), h=np.zeros(16))
        hist = coupling_histogram(model, "NN")
        assert sum(hist[1].counts) == 16 and sum(hist[2].counts) == 8
        for cls in (1, 2):
            assert hist[cls].edges[0] <= 0.0 < hist[cls].edges[1]
            assert hist[cls].mass == [1.0]

    def test_three_by_three_totals(self):
        model = IsingModel(L=3, w=np.zeros((9, 9)), h=np.zeros(9))
        assert sum(sum(h.counts) for h in coupling_histogram(model, "NN").values()) == 12
        assert sum(sum(h.counts) for h in coupling_histogram(model, "NNN").values()) == 8

    def test_class_values_give_delta_histograms(self):
        model = lattice_model(6, lambda ri, rj: -0.85 if classify_link(ri, rj).cls == 1 else 0.2)
        hist = coupling_histogram(model, "NN", bin_width=0.02)
        for cls, value in ((1, -0.85), (2, 0.2)):
            occupied = [k for k, c in enumerate(hist[cls].counts) if c]
            assert len(occupied) == 1
            lo, hi = hist[cls].edges[occupied[0]], hist[cls].edges[occupied[0] + 1]
            assert lo - 1e-12 <= value <= hi + 1e-12

    def test_edges_are_multiples_of_width(self):
        rng = np.random.default_rng(1)
        w = np.triu(rng.uniform(-0.3, 0.3, size=(25, 25)), 1)
        hist = coupling_histogram(IsingModel(L=5, w=w + w.T, h=np.zeros(25)), "NNN", bin_width=0.05)
        for h in hist.values():
            ratios = np.asarray(h.edges) / 0.05
            np.testing.assert_allclose(ratios, np.round(ratios), atol=1e-9)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            coupling_histogram(IsingModel(L=3, w=np.zeros((9, 9)), h=np.zeros(9)), "NN", bin_width=0.0)

    def test_constant_magnetization(self):
        mu = np.full(9, 0.3)
        m = EmpiricalMoments(L=3, B=10, mu=mu, gamma=np.diag(1 - mu ** 2))
        model = IsingModel(L=3, w=np.zeros((9, 9)), h=np.linspace(-1, 1, 9))
        hists = field_and_magnetization_histograms(model, m)
        assert hists["mu"].mass == [1.0]
        assert hists["mu"].centers == [pytest.approx(0.3)]
        assert len(hists["h"].counts) == 40
        assert sum(hists["h"].counts) == 9

    def test_independent_spins_give_field_peak(self):
        mu = np.full(4, 0.3)
        m = EmpiricalMoments(L=2, B=10, mu=mu, gamma=np.diag(1 - mu ** 2))
        hists = field_and_magnetization_histograms(infer_nmf(m), m)
        assert hists["h"].mass == [1.0]
        assert hists["h"].centers[0] == pytest.approx(0.3095, abs=1e-4)

    def test_normalized_mass_is_serialized(self):
        dumped = Histogram(edges=[0.0, 0.1, 0.2, 0.3], counts=[1, 3, 0]).model_dump()
        assert dumped["mass"] == [0.25, 0.75, 0.0]
        assert json.loads(Histogram(edges=[0.0, 1.0], counts=[0]).model_dump_json())["mass"] == [0.0]


class TestFitExponential:
    @pytest.mark.parametrize("a", [0.1, 0.16, 0.3])
    @pytest.mark.parametrize("b", [0.7, 1.1, 1.5])
    def test_noiseless_profiles(self, a, b):
        fit = fit_exponential(exp_profile(a, b))
        assert fit.a == pytest.approx(a, abs=1e-9)
        assert fit.b == pytest.approx(b, abs=1e-9)
        assert fit.r_range == (2, 6)

    def test_noisy_profiles_are_covered(self):
        rng = np.random.default_rng(5)
        covered = 0
        for _ in range(1000):
            fit = fit_exponential(exp_profile(0.16, 1.5, noise=(rng, 0.05)))
            if abs(fit.a - 0.16) <= 3 * fit.a_err and abs(fit.b - 1.5) <= 3 * fit.b_err:
                covered += 1
        assert covered >= 950

    def test_zero_in_range_is_a_domain_error(self):
        profile = exp_profile(0.16, 1.5)
        profile.w_bar[3] = 0.0
        with pytest.raises(FitDomainError) as info:
            fit_exponential(profile)
        assert type(info.value) is FitDomainError

    def test_too_few_points(self):
        with pytest.raises(FitDomainError):
            fit_exponential(exp_profile(0.16, 1.5), r_min=5, r_max=6)

    def test_flat_profile_fails(self):
        profile = DistanceProfile(origin_parity="A", r_values=[1, 2, 3, 4, 5, 6], w_bar=[0.1] * 6, stderr=[0.0] * 6)
        with pytest.raises(FitFailedError):
            fit_exponential(profile)


class TestFrustration:
    def test_ferromagnet(self):
        assert frustration_count(lattice_model(5, lambda ri, rj: 1.0)).count == 0

    def test_single_negative_link(self):
        model = lattice_model(3, lambda ri, rj: -1.0 if (ri, rj) == ((1, 1), (2, 1)) else 1.0)
        result = frustration_count(model)
        assert result.count == 1
        assert result.plaquettes == [(1, 1)]

    def test_checkerboard_classes_are_unfrustrated(self):
        model = lattice_model(8, lambda ri, rj: -0.5 if classify_link(ri, rj).cls == 1 else 0.5)
        assert frustration_count(model).count == 0

    def test_small_links_are_ignored(self):
        model = lattice_model(3, lambda ri, rj: -0.01 if (ri, rj) == ((1, 1), (2, 1)) else 1.0)
        assert frustration_count(model, threshold=0.05).count == 0

    def test_invariant_under_scaling_and_field_flip(self):
        rng = np.random.default_rng(7)
        w = np.triu(rng.uniform(-1, 1, size=(36, 36)), 1)
        w = w + w.T
        h = rng.uniform(-1, 1, size=36)
        base = frustration_count(IsingModel(L=6, w=w, h=h), threshold=0.0)
        assert base.count > 0
        assert frustration_count(IsingModel(L=6, w=3.0 * w, h=h), threshold=0.0) == base
        assert frustration_count(IsingModel(L=6, w=w, h=-h), threshold=0.0) == base


class TestRBody:
    @pytest.mark.parametrize("K", [0.2, 1.0, -0.7])
    def test_one_body(self, K):
        sol = r_body_solution(1, K, N=64)
        assert sol.w_pair == 0.0
        assert sol.h == pytest.approx(K, abs=1e-12)
        assert sol.m == pytest.approx(np.tanh(K), abs=1e-12)

    @pytest.mark.parametrize("K", [0.1, 1.0, 2.0])
    def test_two_body_field_vanishes(self, K):
        assert r_body_solution(2, K, N=64).h == 0.0

    def test_three_body_field_changes_sign(self):
        sol = r_body_solution(3, 1.0, N=64)
        assert sol.m > 0 and sol.h < 0
        assert sol.m == pytest.approx(0.995, abs=1e-3)
        assert sol.h == pytest.approx(-2.97, abs=0.01)
        assert sol.w_pair == pytest.approx(6 * sol.m / 64, rel=1e-12)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            r_body_solution(0, 1.0, N=4)


class TestSpectrum:
    def test_constant_image(self):
        spectrum = fourier_spectrum(np.ones((16, 16)))
        assert spectrum.frequencies[0] == 1.0
        assert max(spectrum.amplitude) < 1e-9

    def test_small_side_rejected(self):
        with pytest.raises(BmPriorError):
            fourier_spectrum(np.ones((4, 4)))

    def test_one_over_f_field(self):
        rng = np.random.default_rng(11)
        side = 64
        f = np.fft.fftfreq(side) * side
        radius = np.hypot(f[:, None], f[None, :])
        radius[0, 0] = np.inf
        fields = []
        for _ in range(16):
            phases = np.exp(2j * np.pi * rng.random((side, side)))
            fields.append(np.fft.ifft2(phases / radius).real)
        spectrum = fourier_spectrum(np.stack(fields))
        assert spectrum.slope == pytest.approx(-1.0, abs=0.1)

    def test_cosine_peak(self):
        x = np.arange(64)
        image = np.tile(np.cos(2 * np.pi * 5 * x / 64), (64, 1))
        spectrum = fourier_spectrum(image)
        assert spectrum.frequencies[int(np.argmax(spectrum.amplitude))] == 5.0

    def test_parseval_on_patches(self):
        rng = np.random.default_rng(12)
        ps = PatchSet(L=8, patches=rng.choice([-1, 1], size=(5, 8, 8)))
        power = (fourier_amplitudes(ps) ** 2).sum(axis=(1, 2)) / 64
        np.testing.assert_allclose(power, 64.0, rtol=1e-9)

    def test_binary_image_input(self):
        rng = np.random.default_rng(13)
        img = BinaryImage(width=16, height=16, spins=rng.choice([-1, 1], size=(16, 16)))
        spectrum = fourier_spectrum(img)
        assert len(spectrum.amplitude) == 8
        assert spectrum.slope is not None


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
