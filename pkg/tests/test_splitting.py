from dataclasses import replace

import numpy as np
import pytest

from stratum import splitting
from stratum.chemistry import ReactionModel, react_step
from stratum.meshkit import build_structured
from stratum.scenario_io import ScenarioConfig, MeshSection, PhysicsSection, ChemistrySection, BoundarySection, \
    TimeSection, OutputSection
from stratum.splitting import StepError, SERIES_COLUMNS, Problem, initial_state, update_fraction, \
    rescale_concentrations, extrapolate_w, predict_geometry, correct_fraction, advance, run
from stratum.transport import total_content


def small_config(**chemistry):
    return ScenarioConfig(mesh=MeshSection(n_per_unit=10), time=TimeSection(t_final=0.01, n_steps=5),
                          chemistry=ChemistrySection(**chemistry))


def make_state(config=None, mesh=None):
    config = config or small_config()
    mesh = mesh or build_structured(10)
    problem = Problem.from_config(mesh, config)
    return initial_state(mesh, problem), problem


def set_history(state, name, older, newer):
    buffer = state.w_history[name]
    n = len(buffer.latest())
    buffer.write(np.full(n, float(older)), error=False)
    buffer.write(np.full(n, float(newer)), error=False)


def test_initial_state():
    state, problem = make_state()
    assert state.step == 0 and state.time == 0.0
    assert set(state.u) == set(state.mesh.subdomains)
    assert np.all(state.fraction['matrix'] == 0.2)
    assert np.all(state.fraction['fracture'] == 1e-3)
    assert np.all(state.thickness['layer_plus'] == 1e-8)
    assert np.array_equal(state.w['matrix'], state.w_prev['matrix'])
    capacity = state.capacity()
    assert np.allclose(capacity['layer_minus'], 0.2 * 1e-8)
    assert problem.model == ReactionModel('linear', 100.0)


def test_extrapolate_w():
    state, _ = make_state()
    set_history(state, 'matrix', 1.0, 3.0)
    w_star = extrapolate_w(state)
    assert np.all(w_star['matrix'] == 5.0)
    assert state.events['extrapolation_clamps'] == 0

    set_history(state, 'fracture', 1.0, 0.0)
    w_star = extrapolate_w(state)
    assert np.all(w_star['fracture'] == 0.0), 'negative extrapolation is clamped'
    assert state.events['extrapolation_clamps'] == state.mesh.fracture.num_cells


def test_update_fraction():
    assert update_fraction(0.2, 0.05, 0.4) == pytest.approx(0.196078, abs=1e-6)
    assert update_fraction(1e-3, 0.05, 1.0) == pytest.approx(9.52381e-4, rel=1e-6)
    value = np.array([0.2, 0.3])
    assert np.array_equal(update_fraction(value, 0.0, np.array([5.0, -3.0])), value)
    with pytest.raises(ValueError, match='fracture cell 1'):
        update_fraction(np.ones(2), 1.0, np.array([0.0, -2.0]), 'fracture')


def test_predict_geometry():
    state, problem = make_state()
    set_history(state, 'matrix', 0.0, 1.0)
    w_star = extrapolate_w(state)
    predicted = predict_geometry(state, w_star, {name: 0.0 for name in state.fraction})
    for name in state.fraction:
        assert np.array_equal(predicted[name], state.fraction[name]), 'eta = 0 keeps the geometry'

    predicted = predict_geometry(state, w_star, {'matrix': 0.05})
    assert np.allclose(predicted['matrix'], 0.2 / 1.05)
    assert np.array_equal(predicted['fracture'], state.fraction['fracture'])


def test_predict_geometry_failure():
    state, problem = make_state()
    set_history(state, 'matrix', 0.0, 1.0)
    problem = replace(problem, eta=dict(problem.eta, matrix=-10.0))
    with pytest.raises(StepError, match='step 2') as info:
        advance(state, problem, 0.002)
    assert info.value.step == 2 and info.value.index == 0
    assert 'matrix cell 0' in str(info.value)


def test_rescale_concentrations():
    capacity = {'matrix': np.full(3, 0.2)}
    fields = {'matrix': np.array([1.0, 2.0, 3.0])}
    assert np.array_equal(rescale_concentrations(fields, capacity, capacity)['matrix'], fields['matrix'])

    predicted = {'matrix': np.full(3, 0.2 / 1.02)}
    scaled = rescale_concentrations({'matrix': np.ones(3)}, capacity, predicted)
    assert np.allclose(scaled['matrix'], 1.02, rtol=1e-14)

    rng = np.random.default_rng(3)
    values = rng.uniform(0.0, 1.0, 3)
    scaled = rescale_concentrations({'matrix': values}, capacity, predicted)['matrix']
    assert abs(np.dot(predicted['matrix'], scaled) - np.dot(capacity['matrix'], values)) <= 1e-14

    with pytest.raises(ValueError):
        rescale_concentrations(fields, capacity, {'matrix': np.zeros(3)})


def test_no_reaction_no_growth():
    config = small_config(lam=0.0)
    state, problem = make_state(config)
    first = advance(state, problem, 0.002)
    second = advance(first, problem, 0.002)
    for name in state.fraction:
        assert np.array_equal(second.fraction[name], state.fraction[name])
        assert np.array_equal(second.w[name], state.w[name])
    for name in state.mesh.subdomains:
        assert np.array_equal(first.flow.pressure[name], second.flow.pressure[name]), 'flow must not change'
    assert second.step == 2


def test_closed_box_decay():
    mesh = build_structured(4, None, mode='fracture_only')
    config = ScenarioConfig(physics=PhysicsSection(mode='fracture_only', d_matrix=0.0),
                            boundary=BoundarySection(p_in=0.0, p_out=0.0),
                            chemistry=ChemistrySection(lam=2.0, u_matrix=1.0))
    state, problem = make_state(config, mesh)
    model = ReactionModel('linear', 2.0)
    u, w = np.ones(1), np.zeros(1)
    dt = 0.05
    for _ in range(10):
        state = advance(state, problem, dt)
        u, w, _ = react_step(model, u, w, dt)
        assert np.allclose(state.u['matrix'], u[0], rtol=1e-12, atol=0)
        assert np.allclose(state.w['matrix'], w[0], rtol=1e-12, atol=0)
    assert np.abs(state.flow.face_flux).max() <= 1e-12


def test_geometry_correction():
    config = ScenarioConfig(mesh=MeshSection(n_per_unit=10),
                            physics=PhysicsSection(eta_matrix=0.05, eta_fracture=0.05, eta_layer=0.05),
                            chemistry=ChemistrySection(lam=0.0))
    state, problem = make_state(config)
    set_history(state, 'matrix', 0.0, 0.5)
    new = advance(state, problem, 0.002)

    # w* = 1 predicts 0.2 / 1.025; without reaction the precipitate content and so the porosity stay put
    assert np.allclose(new.fraction['matrix'], 0.2, rtol=1e-12)
    assert np.allclose(new.fraction['matrix'] * new.w['matrix'], 0.2 * 0.5, rtol=1e-12), \
        'precipitate content must be kept without reaction'
    assert np.allclose(new.w['matrix'], 0.5, rtol=1e-12)
    assert np.array_equal(new.fraction_prev['matrix'], state.fraction['matrix'])


def test_correct_fraction_matches_prediction():
    state, problem = make_state()
    set_history(state, 'matrix', 0.0, 0.5)
    set_history(state, 'layer_plus', 0.2, 0.3)
    eta = {name: 0.05 for name in state.fraction}
    w_star = extrapolate_w(state)
    predicted = predict_geometry(state, w_star, eta)
    capacity_old, capacity_star = state.capacity(), state.capacity(predicted)
    rescaled = rescale_concentrations(w_star, capacity_old, capacity_star)

    corrected = correct_fraction(state.fraction, eta, state.w, rescaled, capacity_old, capacity_star)
    for name in state.fraction:
        assert np.allclose(corrected[name], predicted[name], rtol=1e-14), name


def test_correct_fraction_amount_basis():
    fraction = {'matrix': np.array([0.2, 0.1])}
    w = {'matrix': np.array([0.5, 10.0])}
    capacity_star = {'matrix': np.array([0.18, 0.05])}
    # 0.01 precipitated per unit capacity on the predicted level
    reacted = {'matrix': w['matrix'] * fraction['matrix'] / capacity_star['matrix'] + 0.01}
    corrected = correct_fraction(fraction, {'matrix': 20.0}, w, reacted, fraction, capacity_star)
    dw = 0.01 * capacity_star['matrix'] / fraction['matrix']
    assert np.allclose(corrected['matrix'], fraction['matrix'] / (1 + 20.0 * dw), rtol=1e-12)
    assert np.all(corrected['matrix'] > 0), 'w above 1 / eta is no special point'


def test_flow_layer_storage_uses_layer_thickness(monkeypatch):
    config = ScenarioConfig(mesh=MeshSection(n_per_unit=10), physics=PhysicsSection(eta_layer=0.05),
                            chemistry=ChemistrySection(lam=0.0))
    state, problem = make_state(config)
    grown = np.full(len(state.thickness['layer_plus']), 0.05)
    state.thickness['layer_plus'] = grown
    state.thickness_prev['layer_plus'] = grown.copy()
    set_history(state, 'layer_plus', 0.0, 0.5)

    lower_rates = []
    solve = splitting.assemble_and_solve

    def recording_solve(mesh, props, matrix_rate, rates):
        lower_rates.append(rates)
        return solve(mesh, props, matrix_rate, rates)

    monkeypatch.setattr(splitting, 'assemble_and_solve', recording_solve)
    dt = 0.002
    advance(state, problem, dt)
    rate = (0.2 / 1.025 - 0.2) / dt
    assert np.allclose(lower_rates[0]['layer_plus'], grown * rate, rtol=1e-12)
    assert np.allclose(lower_rates[0]['layer_minus'], 0.0), 'no precipitate change, no storage rate'


def test_run_balance():
    result = run(small_config())
    assert len(result.series) == 6
    assert result.state.step == 5
    assert result.state.time == pytest.approx(0.01)
    assert np.all(result.column('balance_error') <= 1e-8)
    assert np.all(np.diff(result.column('time')) > 0)
    assert result.column('precipitate')[-1] > 0
    assert result.columns == SERIES_COLUMNS

    state = result.state
    capacity = state.capacity()
    solute = total_content(state.mesh, capacity, state.u)
    assert result.column('solute')[-1] == pytest.approx(solute, rel=1e-14)


def test_run_zero_steps():
    config = small_config()
    result = run(config, steps=0)
    assert len(result.series) == 1 and len(result.snapshots) == 1
    assert result.state.step == 0
    initial, _ = make_state(config)
    for name in initial.u:
        assert np.array_equal(result.state.u[name], initial.u[name])


def test_snapshots_follow_interval():
    config = small_config().model_copy(update={'output': OutputSection(interval=2)})
    result = run(config, steps=3)
    assert [s.step for s in result.snapshots] == [0, 2, 3], 'the last step is always kept'
    assert result.snapshots[-1] is not result.state


def test_advance_errors():
    state, problem = make_state()
    with pytest.raises(ValueError):
        advance(state, problem, 0.0)


if __name__ == '__main__':
    test_update_fraction()
    test_rescale_concentrations()
    test_run_balance()
    print('All tests finished successfully!')
