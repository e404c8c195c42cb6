"""Tests for the population and conditional limit laws.

The oracles are: exact closed forms for the one-atom (flat) model, a naive
loop-by-loop reimplementation of the defining expectations, the independent
unwhitened route for positive-semidefinite models, invariance under
signature-preserving maps, and brute-force double sums for the conditional
variance.
"""

import numpy as np
import pytest
import scipy.linalg

from speclab.errors import (
    DegenerateVariance,
    NotSimpleSpectrum,
    RequiresPositiveSemidefinite,
    SingularDelta,
    ValidationError,
)
from speclab.model import (
    BlockModelParams,
    LatentMixture,
    Signature,
    indefinite_orthogonal_transform,
    sbm_to_grdpg,
)
from speclab.sampling import probability_matrix, sample_adjacency, sample_latents
from speclab.spectral import dense_eigen_oracle, probability_eigenpairs
from speclab.limits import (
    ConditionalLaw,
    LimitLaw,
    conditional_law,
    conditional_mean_offsets,
    conditional_variances,
    decomposition_diagnostic,
    limit_covariance,
    limit_covariance_rdpg,
    limit_law,
    limit_mean_offsets,
    limit_mean_offsets_rdpg,
    load_conditional_law,
    load_limit_law,
    population_moments,
    save_conditional_law,
    save_limit_law,
)


def er_mixture(p):
    return LatentMixture(atoms=[[np.sqrt(p)]], weights=[1.0], signature=Signature(1, 0))


def two_block_mixture():
    return sbm_to_grdpg(BlockModelParams(B=[[0.3, 0.5], [0.5, 0.3]], pi=[0.3, 0.7]))


def three_block_mixture():
    B = 0.2 * np.eye(3) + 0.3 * np.ones((3, 3))
    return sbm_to_grdpg(BlockModelParams(B=B, pi=np.full(3, 1 / 3)))


def naive_population_law(mix):
    """Loop-by-loop evaluation of the defining expectations."""
    atoms, w = mix.atoms, mix.weights
    d = mix.dim
    J = mix.signature.matrix()
    delta = sum(w[k] * np.outer(atoms[k], atoms[k]) for k in range(len(w)))
    mu = sum(w[k] * atoms[k] for k in range(len(w)))
    dv, dV = np.linalg.eigh(delta)
    half = dV @ np.diag(np.sqrt(dv)) @ dV.T
    inv_half = dV @ np.diag(1 / np.sqrt(dv)) @ dV.T
    sv, sV = np.linalg.eigh(half @ J @ half)
    order = sorted(range(d), key=lambda i: (-abs(sv[i]), -sv[i], i))
    lam = sv[order]
    xi = sV[:, order]
    eta = np.zeros(d)
    for i in range(d):
        acc = 0.0
        for k in range(len(w)):
            coef = float(xi[:, i] @ inv_half @ atoms[k]) ** 2
            bias = float(atoms[k] @ J @ mu) - float(atoms[k] @ J @ delta @ J @ atoms[k])
            acc += w[k] * coef * bias
        eta[i] = acc / lam[i]
    gamma = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            m = np.zeros(d)
            M = np.zeros((d, d))
            for k in range(len(w)):
                ci = float(xi[:, i] @ inv_half @ atoms[k])
                cj = float(xi[:, j] @ inv_half @ atoms[k])
                m += w[k] * ci * cj * atoms[k]
                M += w[k] * ci * cj * np.outer(atoms[k], atoms[k])
            gamma[i, j] = 2.0 * float(m @ J @ m) - 2.0 * float(np.trace(M @ J @ M @ J))
    return lam, eta, gamma


def brute_conditional_variance(P, u):
    """O(n^2) double sum over vertex pairs."""
    n = P.shape[0]
    var = P * (1.0 - P)
    w = u**2
    total = 0.0
    for k in range(n):
        for l in range(k + 1, n):
            total += 4.0 * w[k] * w[l] * var[k, l]
        total += (w[k] ** 2) * var[k, k]
    return total


class TestPopulationMoments:
    def test_two_block_moments_closed_form(self):
        mix = two_block_mixture()
        mom = population_moments(mix)
        delta_expected = np.array([[0.4, -0.08], [-0.08, 0.1]])
        mean_expected = np.array([np.sqrt(0.4), -0.4 * np.sqrt(0.1)])
        np.testing.assert_allclose(mom.second_moment, delta_expected, atol=1e-14)
        np.testing.assert_allclose(mom.mean, mean_expected, atol=1e-14)
        assert mom.all_simple

    def test_values_match_product_spectrum(self):
        # The symmetrized reference spectrum must equal the eigenvalues of
        # (second moment) @ J, computed by the generic nonsymmetric solver.
        mix = two_block_mixture()
        mom = population_moments(mix)
        J = mix.signature.matrix()
        raw = np.linalg.eigvals(mom.second_moment @ J)
        raw = np.real(raw)
        raw = raw[np.argsort(-np.abs(raw))]
        np.testing.assert_allclose(mom.values, raw, atol=1e-12)

    def test_three_block_moments_exact_diagonal(self):
        mom = population_moments(three_block_mixture())
        np.testing.assert_allclose(
            mom.values, [11 / 30, 1 / 15, 1 / 15], atol=1e-12
        )
        np.testing.assert_array_equal(mom.simple_flags, [True, False, False])

    def test_singular_second_moment(self):
        mix = LatentMixture(
            atoms=[[0.4, 0.0], [0.2, 0.0]],
            weights=[0.5, 0.5],
            signature=Signature(2, 0),
        )
        with pytest.raises(SingularDelta):
            population_moments(mix)


class TestPopulationLaw:
    def test_flat_model_closed_form_both_routes(self):
        for p in [0.1, 0.25, 0.5, 0.75, 0.9]:
            mix = er_mixture(p)
            mom = population_moments(mix)
            np.testing.assert_allclose(
                limit_mean_offsets(mom, mix), [1.0 - p], atol=1e-12
            )
            np.testing.assert_allclose(
                limit_covariance(mom, mix), [[2.0 * p * (1.0 - p)]], atol=1e-12
            )
            np.testing.assert_allclose(
                limit_mean_offsets_rdpg(mix), [1.0 - p], atol=1e-12
            )
            np.testing.assert_allclose(
                limit_covariance_rdpg(mix), [[2.0 * p * (1.0 - p)]], atol=1e-12
            )

    def test_matches_naive_reimplementation(self):
        rng = np.random.default_rng(404)
        checked_indefinite = 0
        for _ in range(10):
            K = int(rng.integers(1, 5))
            M = rng.uniform(0.05, 0.95, size=(K, K))
            B = (M + M.T) / 2
            pi = rng.dirichlet(np.ones(K))
            mix = sbm_to_grdpg(BlockModelParams(B=B, pi=pi / pi.sum()))
            mom = population_moments(mix)
            if not mom.all_simple:
                continue
            lam, eta_naive, gamma_naive = naive_population_law(mix)
            np.testing.assert_allclose(mom.values, lam, atol=1e-12)
            scale = max(1.0, float(np.max(np.abs(gamma_naive))))
            np.testing.assert_allclose(
                limit_mean_offsets(mom, mix), eta_naive, atol=1e-12 * scale
            )
            np.testing.assert_allclose(
                limit_covariance(mom, mix), gamma_naive, atol=1e-12 * scale
            )
            if mix.signature.minus > 0:
                checked_indefinite += 1
        assert checked_indefinite >= 1

    def test_general_route_equals_psd_route(self):
        mix = three_block_mixture()
        # Three-block mixture is not simple, so build simple q=0 mixtures.
        rng = np.random.default_rng(11)
        done = 0
        while done < 5:
            K = int(rng.integers(1, 4))
            atoms = rng.uniform(0.1, 0.7, size=(K, K))
            atoms /= np.maximum(1.0, np.linalg.norm(atoms, axis=1))[:, None] * 1.05
            w = rng.dirichlet(np.ones(K))
            try:
                mix = LatentMixture(
                    atoms=atoms, weights=w / w.sum(), signature=Signature(K, 0)
                )
                mom = population_moments(mix)
                if not mom.all_simple:
                    continue
                eta_a = limit_mean_offsets(mom, mix)
                eta_b = limit_mean_offsets_rdpg(mix)
                gam_a = limit_covariance(mom, mix)
                gam_b = limit_covariance_rdpg(mix)
            except (SingularDelta, NotSimpleSpectrum):
                continue
            np.testing.assert_allclose(eta_a, eta_b, atol=1e-10)
            np.testing.assert_allclose(gam_a, gam_b, atol=1e-10)
            done += 1

    def test_invariance_under_signature_preserving_map(self):
        mix = two_block_mixture()
        mom = population_moments(mix)
        eta0 = limit_mean_offsets(mom, mix)
        gam0 = limit_covariance(mom, mix)
        # Generator of the invariance group: off-diagonal symmetric block.
        generator = np.array([[0.0, 0.4], [0.4, 0.0]])
        W = scipy.linalg.expm(generator)
        moved = indefinite_orthogonal_transform(mix, W)
        mom_moved = population_moments(moved)
        np.testing.assert_allclose(
            limit_mean_offsets(mom_moved, moved), eta0, atol=1e-10
        )
        np.testing.assert_allclose(
            limit_covariance(mom_moved, moved), gam0, atol=1e-10
        )

    def test_covariance_symmetric_psd(self):
        mix = two_block_mixture()
        mom = population_moments(mix)
        gam = limit_covariance(mom, mix)
        np.testing.assert_array_equal(gam, gam.T)
        evals = np.linalg.eigvalsh(gam)
        assert evals.min() >= -1e-10 * max(evals.max(), 1.0)

    def test_not_simple_raises(self):
        mix = three_block_mixture()
        mom = population_moments(mix)
        with pytest.raises(NotSimpleSpectrum):
            limit_mean_offsets(mom, mix)
        with pytest.raises(NotSimpleSpectrum):
            limit_covariance(mom, mix)
        with pytest.raises(NotSimpleSpectrum):
            limit_mean_offsets_rdpg(mix)

    def test_psd_route_requires_psd(self):
        mix = two_block_mixture()
        with pytest.raises(RequiresPositiveSemidefinite):
            limit_mean_offsets_rdpg(mix)
        with pytest.raises(RequiresPositiveSemidefinite):
            limit_covariance_rdpg(mix)


class TestConditionalLaw:
    def test_flat_model_exact_values(self):
        p, n = 0.37, 150
        mix = er_mixture(p)
        s = sample_latents(mix, n, seed=5)
        eigs = probability_eigenpairs(s)
        law = conditional_law(s, eigs)
        np.testing.assert_allclose(law.mean_offset, [1.0 - p], rtol=1e-12)
        np.testing.assert_allclose(
            law.variances, [2.0 * p * (1.0 - p) * (1.0 - 1.0 / (2.0 * n))], rtol=1e-12
        )
        np.testing.assert_allclose(
            law.variances_matrix_form, [2.0 * p * (1.0 - p)], rtol=1e-12
        )

    def test_deterministic_probabilities_give_exact_zero(self):
        mix = LatentMixture(
            atoms=np.eye(2), weights=[0.4, 0.6], signature=Signature(2, 0)
        )
        s = sample_latents(mix, 40, seed=9)
        eigs = probability_eigenpairs(s)
        law = conditional_law(s, eigs)
        assert law.mean_offset[0] == 0.0 and law.mean_offset[1] == 0.0
        assert law.variances[0] == 0.0 and law.variances[1] == 0.0

    def test_variance_matches_brute_force(self):
        rng = np.random.default_rng(606)
        models = [er_mixture(0.5), two_block_mixture(), three_block_mixture()]
        for trial in range(6):
            mix = models[trial % len(models)]
            n = int(rng.integers(40, 120))
            s = sample_latents(mix, n, seed=int(rng.integers(1 << 40)))
            eigs = probability_eigenpairs(s)
            got = conditional_variances(s, eigs, form="exact")
            P = probability_matrix(s).P
            for i in range(mix.dim):
                want = brute_conditional_variance(P, eigs.vectors[:, i])
                assert abs(got[i] - want) <= 1e-12 * max(1.0, abs(want))

    def test_asymptotic_form_differs_by_diagonal_correction(self):
        mix = two_block_mixture()
        s = sample_latents(mix, 90, seed=14)
        eigs = probability_eigenpairs(s)
        exact = conditional_variances(s, eigs, form="exact")
        asym = conditional_variances(s, eigs, form="asymptotic")
        P = probability_matrix(s).P
        dvar = np.diag(P) * (1 - np.diag(P))
        for i in range(2):
            corr = float((eigs.vectors[:, i] ** 4) @ dvar)
            np.testing.assert_allclose(asym[i] - exact[i], corr, atol=1e-13)

    def test_grouped_route_asserts_against_literal(self):
        # The literal evaluation runs inside every call; this exercises it on
        # an indefinite-signature sample.
        mix = two_block_mixture()
        s = sample_latents(mix, 300, seed=21)
        eigs = probability_eigenpairs(s)
        offsets = conditional_mean_offsets(s, eigs)
        assert offsets.shape == (2,)
        assert np.all(np.isfinite(offsets))

    def test_shape_validation(self):
        mix = two_block_mixture()
        s1 = sample_latents(mix, 50, seed=1)
        s2 = sample_latents(mix, 60, seed=1)
        eigs = probability_eigenpairs(s1)
        with pytest.raises(ValidationError):
            conditional_mean_offsets(s2, eigs)
        with pytest.raises(ValidationError):
            conditional_variances(s1, eigs, form="other")


class TestDecompositionDiagnostic:
    def test_matches_dense_formulas(self):
        mix = two_block_mixture()
        s = sample_latents(mix, 80, seed=31)
        g = sample_adjacency(s, seed=32)
        eigs = probability_eigenpairs(s)
        hat = dense_eigen_oracle(g, d=2)
        diag = decomposition_diagnostic(g, s, eigs, hat.values)
        A = g.to_dense()
        P = probability_matrix(s).P
        E = A - P
        for i in range(2):
            u = eigs.vectors[:, i]
            lam, lam_hat = eigs.values[i], hat.values[i]
            t1 = (lam / lam_hat) * float(u @ E @ u)
            t2 = (lam / lam_hat**2) * float(u @ E @ E @ u)
            np.testing.assert_allclose(diag.linear_term[i], t1, atol=1e-10)
            np.testing.assert_allclose(diag.quadratic_term[i], t2, atol=1e-10)
            np.testing.assert_allclose(
                diag.residual[i], (lam_hat - lam) - t1 - t2, atol=1e-10
            )

    def test_rejects_zero_matched_value(self):
        mix = er_mixture(0.5)
        s = sample_latents(mix, 30, seed=2)
        g = sample_adjacency(s, seed=3)
        eigs = probability_eigenpairs(s)
        with pytest.raises(DegenerateVariance):
            decomposition_diagnostic(g, s, eigs, np.zeros(1))


class TestScalingConsistency:
    def test_probability_spectrum_approaches_reference(self):
        # Per-coordinate gap between the scaled probability eigenvalues and
        # the reference values must shrink as n grows, at fixed seeds.
        mix = two_block_mixture()
        mom = population_moments(mix)
        gaps = []
        for idx, n in enumerate([250, 2000, 16000]):
            s = sample_latents(mix, n, seed=7000 + idx)
            eigs = probability_eigenpairs(s)
            gaps.append(float(np.max(np.abs(eigs.values / n - mom.values))))
        assert gaps[2] < gaps[1] < gaps[0]


class TestLawIo:
    def test_limit_law_roundtrip(self, tmp_path):
        law = limit_law(two_block_mixture())
        path = tmp_path / "law.json"
        save_limit_law(law, path)
        loaded = load_limit_law(path)
        np.testing.assert_array_equal(loaded.mean_offset, law.mean_offset)
        np.testing.assert_array_equal(loaded.covariance, law.covariance)

    def test_conditional_law_roundtrip(self, tmp_path):
        mix = two_block_mixture()
        s = sample_latents(mix, 70, seed=3)
        law = conditional_law(s, probability_eigenpairs(s))
        path = tmp_path / "cond.json"
        save_conditional_law(law, path)
        loaded = load_conditional_law(path)
        np.testing.assert_array_equal(loaded.mean_offset, law.mean_offset)
        np.testing.assert_array_equal(loaded.variances, law.variances)
        np.testing.assert_array_equal(
            loaded.variances_matrix_form, law.variances_matrix_form
        )

    def test_load_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"eta": [0.5]}')
        with pytest.raises(ValidationError):
            load_limit_law(path)
        path.write_text('{"eta_tilde": [0.5]}')
        with pytest.raises(ValidationError):
            load_conditional_law(path)
