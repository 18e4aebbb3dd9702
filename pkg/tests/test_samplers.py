import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from epbp.bench import generate_observations
from epbp.densities import Laplace, Normal
from epbp.exceptions import InvalidInputError
from epbp.gaussian_ep import UNIT, GaussianFactor, moments, project_tilted
from epbp.mesh import Mesh, brute_force_marginals, default_mesh, l1_error, run_mesh_lbp
from epbp.model import build_grid, build_tree, make_grid_mrf, make_mrf
from epbp.particles import INIT_MESSAGE, ParticleMessage, SubsampledMessage
from epbp.samplers import (
    EPBP,
    PBP,
    PureEP,
    metropolis_hastings,
    mh_sample_from_belief,
    rng_stream,
    run_epbp,
    run_pbp,
    run_pure_ep,
)
from epbp.schedule import Schedule


class Pots:
    def __init__(self, node, edge):
        self._node, self._edge = node, edge

    def node_kernel(self):
        return self._node

    def edge_kernel(self):
        return self._edge


def gaussian_single(mu=0.7, sigma=0.8):
    return make_mrf(build_grid(1, 1), np.array([0.0]), Pots(Normal(mu, sigma), Laplace()))


# -- schedule ---------------------------------------------------------------

def test_grid_schedule_orderings():
    s = Schedule.for_grid(2, 3)
    assert s.sweep(0) == (0, 1, 2, 3, 4, 5)
    assert s.sweep(1) == (0, 3, 1, 4, 2, 5)
    assert s.sweep(2) == (5, 4, 3, 2, 1, 0)
    assert s.sweep(3) == (5, 2, 4, 1, 3, 0)
    assert s.sweep(4) == s.sweep(0)


def test_schedule_validation():
    with pytest.raises(InvalidInputError):
        Schedule(((0, 0, 1),))
    with pytest.raises(InvalidInputError):
        Schedule(())


# -- Metropolis-Hastings -----------------------------------------------------

def test_mh_gaussian_variance():
    mrf = gaussian_single(0.0, 1.5)
    x = mh_sample_from_belief(mrf, 0, {}, 10 ** 4, np.zeros(10 ** 4), 20, 1.0,
                              np.random.default_rng(0))
    assert x.var() == pytest.approx(1.5 ** 2, rel=0.1)


def test_mh_vanishing_proposal():
    rng = np.random.default_rng(1)
    init = rng.normal(size=1000)
    std = 1e-6
    x, _, rate = metropolis_hastings(lambda z: -0.5 * z * z, init, 20, std, rng)
    assert rate > 0.999
    assert np.abs(x - init).max() <= 5 * std * 20


def test_mh_stationarity_ks():
    mrf = make_grid_mrf(np.zeros(1), shape=(1, 1))
    mesh = Mesh(-12, 12, 2000)
    dens = mesh.normalize_log(mrf.log_node(0, mesh.points))
    cdf = np.cumsum(dens) * mesh.spacing
    rng = np.random.default_rng(2)
    start = mesh.points[np.minimum(np.searchsorted(cdf, rng.random(10 ** 4)), 1999)]
    start = start + rng.uniform(-0.5, 0.5, start.size) * mesh.spacing
    x = mh_sample_from_belief(mrf, 0, {}, 10 ** 4, start, rng=rng)
    emp = np.searchsorted(np.sort(x), mesh.points, side="right") / x.size
    assert np.abs(emp - cdf).max() < 0.03


def test_mh_init_length_checked():
    with pytest.raises(InvalidInputError):
        mh_sample_from_belief(gaussian_single(), 0, {}, 3, [0.0, 1.0])


def test_rng_streams_are_independent_and_reproducible():
    a = rng_stream(5, 1, 2).random(4)
    np.testing.assert_array_equal(a, rng_stream(5, 1, 2).random(4))
    assert not np.array_equal(a, rng_stream(5, 2, 1).random(4))


# -- EPBP ------------------------------------------------------------------

def test_estimator_params_roundtrip():
    est = EPBP(n_particles=17, subquad_m=4, random_state=3)
    assert est.get_params()["n_particles"] == 17
    assert clone(est).get_params() == est.get_params()
    assert PBP().set_params(mh_steps=5).mh_steps == 5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        EPBP().predict()
    with pytest.raises(NotFittedError):
        PureEP().predict_mean()


@pytest.mark.parametrize("bad", [dict(n_particles=0), dict(n_particles=2.5),
                                 dict(subquad_m=0), dict(n_iterations=0)])
def test_invalid_params(bad, grid_mrf):
    with pytest.raises(InvalidInputError):
        EPBP(**bad).fit(grid_mrf)


def test_fit_rejects_non_mrf():
    with pytest.raises(InvalidInputError):
        EPBP().fit(np.zeros(3))


def test_isolated_node_reduces_to_ep():
    mrf = make_mrf(build_grid(1, 1), np.array([0.4]),
                   Pots(Laplace(0.0, 0.7), Laplace()))
    est = EPBP(n_particles=50, n_iterations=2, ep_range=(-10, 10), random_state=0).fit(mrf)
    mean, var = moments(est.proposals_[0].product)
    x = np.linspace(-30, 30, 600001)
    w = np.exp(mrf.log_node(0, x))
    m = (w @ x) / w.sum()
    # equals the single-factor projection, which in turn is close to the exact moments
    direct = project_tilted(lambda z: mrf.log_node(0, z), UNIT, fallback_range=(-10, 10))
    assert (mean, var) == pytest.approx((direct.mean, direct.variance), abs=1e-12)
    assert mean == pytest.approx(m, abs=1e-2)
    assert var == pytest.approx((w @ (x - m) ** 2) / w.sum(), rel=2e-2)


def test_epbp_invariants(grid_mrf, grid_mesh):
    def check(it, est):
        for p in est.proposals_:
            assert p.product.proper
        for m in est.messages_.values():
            if m is not INIT_MESSAGE:
                assert abs(m.weights.sum() - 1) <= 1e-12

    est = EPBP(n_particles=30, n_iterations=4, random_state=1).fit(grid_mrf, grid_mesh, check)
    assert est.n_iter_ == 4
    assert len(est.iteration_times_) == 4
    assert len(est.diagnostics_) == 4 * 9
    row = est.diagnostics_[0]
    assert set(row) == {"iteration", "node", "wall_us", "min_ess", "ep_reverts"}
    b = est.predict(grid_mesh)
    np.testing.assert_allclose(b.values.sum(axis=1) * grid_mesh.spacing, 1, atol=1e-10)


def test_epbp_deterministic(grid_mrf, grid_mesh):
    a = EPBP(n_particles=20, n_iterations=3, subquad_m=5, random_state=9).fit(grid_mrf, grid_mesh)
    b = EPBP(n_particles=20, n_iterations=3, subquad_m=5, random_state=9).fit(grid_mrf, grid_mesh)
    np.testing.assert_array_equal(a.predict(grid_mesh).values, b.predict(grid_mesh).values)
    c = EPBP(n_particles=20, n_iterations=3, random_state=10).fit(grid_mrf, grid_mesh)
    assert not np.array_equal(a.predict(grid_mesh).values, c.predict(grid_mesh).values)


def test_subquad_messages_are_subsampled(grid_mrf, grid_mesh):
    est = EPBP(n_particles=20, n_iterations=1, subquad_m=3, random_state=0).fit(grid_mrf)
    assert all(isinstance(m, SubsampledMessage) for m in est.messages_.values())
    shared = EPBP(n_particles=20, n_iterations=1, subquad_m=3, subquad_shared=True,
                  random_state=0).fit(grid_mrf)
    assert all(m.shared for m in shared.messages_.values())


def test_epbp_beats_prior(grid_mrf, grid_mesh):
    truth = run_mesh_lbp(grid_mrf, grid_mesh, 20)
    res = run_epbp(grid_mrf, grid_mesh, n_particles=100, seed=0)
    assert l1_error(res.beliefs, truth) < 0.1
    assert res.diagnostics is res.estimator.diagnostics_


def test_epbp_error_halves_when_n_quadruples(grid_mrf, grid_mesh):
    truth = run_mesh_lbp(grid_mrf, grid_mesh, 20)
    err = {n: np.mean([l1_error(EPBP(n_particles=n, random_state=s).fit(grid_mrf, grid_mesh)
                                .predict(grid_mesh), truth) for s in range(5)])
           for n in (100, 400)}
    assert 0.35 <= err[400] / err[100] <= 0.7


@pytest.mark.slow
def test_tree_monotone_and_accurate(tree_mrf, tree_mesh):
    truth = brute_force_marginals(tree_mrf, tree_mesh)
    err = [np.mean([l1_error(EPBP(n_particles=n, random_state=s).fit(tree_mrf, tree_mesh)
                             .predict(tree_mesh), truth) for s in range(10)])
           for n in (10, 50, 100, 500)]
    assert all(a > b for a, b in zip(err, err[1:]))
    assert err[-1] < 0.1


def test_predict_mean_close_to_truth(grid_mrf, grid_mesh):
    truth = run_mesh_lbp(grid_mrf, grid_mesh, 20)
    exact = truth.values @ grid_mesh.points * grid_mesh.spacing
    est = EPBP(n_particles=200, random_state=0).fit(grid_mrf, grid_mesh)
    np.testing.assert_allclose(est.predict_mean(), exact, atol=0.25)


# -- PBP -----------------------------------------------------------------------

def test_pbp_single_particle(grid_mrf, grid_mesh):
    res = run_pbp(grid_mrf, grid_mesh, n_particles=1, iterations=2, seed=0)
    np.testing.assert_allclose(res.beliefs.values.sum(axis=1) * grid_mesh.spacing, 1, atol=1e-10)


def test_pbp_last_belief(grid_mrf, grid_mesh):
    truth = run_mesh_lbp(grid_mrf, grid_mesh, 20)
    est = PBP(n_particles=100, random_state=0).fit(grid_mrf, grid_mesh)
    assert l1_error(est.predict(grid_mesh), truth) < 0.1
    assert 0 < np.mean(est.acceptance_) < 1
    assert est.predict_mean().shape == (9,)


def test_pbp_fixed_ep(tree_mrf, tree_mesh):
    truth = brute_force_marginals(tree_mrf, tree_mesh)
    ep = PureEP().fit(tree_mrf, tree_mesh)
    est = PBP(n_particles=100, proposal="fixed-ep", ep_proposals=ep.belief_factors_,
              random_state=0).fit(tree_mrf, tree_mesh)
    assert l1_error(est.predict(tree_mesh), truth) < 0.3
    # same result when the estimator runs EP itself
    own = PBP(n_particles=100, proposal="fixed-ep", random_state=0).fit(tree_mrf, tree_mesh)
    np.testing.assert_array_equal(own.predict(tree_mesh).values, est.predict(tree_mesh).values)


def test_pbp_bad_proposal(grid_mrf):
    with pytest.raises(InvalidInputError):
        PBP(proposal="prior").fit(grid_mrf)
    with pytest.raises(InvalidInputError):
        PBP(proposal="fixed-ep", ep_proposals=[GaussianFactor(-1, 0)] * 9).fit(grid_mrf)


# -- pure EP -------------------------------------------------------------------

def test_pure_ep_single_gaussian_node():
    mrf = gaussian_single(0.7, 0.8)
    res = run_pure_ep(mrf, Mesh(-10, 10, 200), iterations=2)
    f = res.estimator.belief_factors_[0]
    assert f.r == pytest.approx(1 / 0.64, abs=1e-6)
    assert f.s == pytest.approx(0.7 / 0.64, abs=1e-6)
    assert res.estimator.predict_mean()[0] == pytest.approx(0.7, abs=1e-6)


def test_pure_ep_gaussian_chain_matches_brute_force():
    mrf = make_mrf(build_tree([(0, 1)]), np.array([-1.0, 1.5]),
                   Pots(Normal(0.0, 1.0), Normal(0.0, 0.8)))
    mesh = Mesh(-9, 9, 200)
    res = run_pure_ep(mrf, mesh, iterations=5)
    truth = brute_force_marginals(mrf, mesh)
    per_node = np.abs(res.beliefs.values - truth.values).sum(axis=1) * mesh.spacing
    assert per_node.max() <= 1e-3


def test_pure_ep_is_worse_than_epbp_on_bimodal_tree(tree_mrf, tree_mesh):
    truth = brute_force_marginals(tree_mrf, tree_mesh)
    ep = l1_error(run_pure_ep(tree_mrf, tree_mesh).beliefs, truth)
    epbp = np.median([l1_error(run_epbp(tree_mrf, tree_mesh, 100, seed=s).beliefs, truth)
                      for s in range(5)])
    assert epbp < ep
