import numpy as np
import pytest

from odnet import autodiff as ad
from odnet.errors import CoverageError, ShapeError
from odnet.networks import MLPConfig, init_mlp
from odnet.partition import Patch, PatchSet, pou_weight_matrix
from odnet.pod import compute_pod
from odnet.trunks import (
    EnsembleModel,
    PODTrunk,
    PoUTrunk,
    VanillaTrunk,
    export_basis,
)


def make_vanilla(p=3, seed=0, d=2, activation="tanh"):
    return VanillaTrunk(
        init_mlp(MLPConfig(d, (8, 8), p, activation, activate_last=True), seed)
    )


def make_pou(p=3, seed=1, activation="tanh"):
    # two overlapping patches on [-1, 1]^2 plus generous radii
    ps = PatchSet([Patch([-0.5, 0.0], 1.4), Patch([0.5, 0.0], 1.4)], delta=0.1)
    cfg = MLPConfig(2, (8, 8), p, activation, activate_last=True)
    experts = [init_mlp(cfg, seed + k) for k in range(len(ps))]
    return PoUTrunk(ps, experts, p)


def make_branch(n_x, total_p, seed=5, activation="tanh"):
    return init_mlp(
        MLPConfig(n_x, (8, 8), total_p, activation, activate_last=False), seed
    )


def test_pou_single_active_expert_equals_expert():
    trunk = make_pou()
    # strictly inside patch 0 only
    y = np.array([[-1.5, 0.0]])
    assert np.linalg.norm(y[0] - trunk.patchset.centers[0]) < trunk.patchset.radii[0]
    assert np.linalg.norm(y[0] - trunk.patchset.centers[1]) > trunk.patchset.radii[1]
    out = trunk.forward(y).data
    expert = trunk.experts[0].forward(y).data
    np.testing.assert_array_equal(out, expert)


def test_pou_symmetric_point_is_mean_of_experts():
    trunk = make_pou()
    y = np.array([[0.0, 0.3]])  # equidistant from both centers
    out = trunk.forward(y).data
    e0 = trunk.experts[0].forward(y).data
    e1 = trunk.experts[1].forward(y).data
    np.testing.assert_allclose(out, 0.5 * (e0 + e1), atol=1e-14)


def test_pou_matches_dense_sum_oracle():
    trunk = make_pou(p=4, seed=7)
    rng = np.random.default_rng(3)
    y = rng.uniform(-1.2, 1.2, size=(40, 2))
    w = pou_weight_matrix(trunk.patchset, y, strict=False)
    keep = w.sum(axis=1) > 0
    y = y[keep]
    w = w[keep]
    dense = np.zeros((y.shape[0], 4))
    for k, expert in enumerate(trunk.experts):
        dense += w[:, k][:, None] * expert.forward(y).data  # includes zero-weight experts
    np.testing.assert_allclose(trunk.forward(y).data, dense, atol=1e-14)


def test_pou_uncovered_point_errors():
    trunk = make_pou()
    with pytest.raises(CoverageError):
        trunk.forward(np.array([[5.0, 5.0]]))


def test_ensemble_width_law():
    members = [make_vanilla(p=2, seed=0), make_vanilla(p=3, seed=1)]
    model = EnsembleModel(members, make_branch(6, 5), ad.Tensor(np.zeros(()), requires_grad=True))
    y = np.random.default_rng(0).uniform(-1, 1, size=(4, 2))
    assert model.trunk_forward(y).data.shape == (4, 5)
    assert model.total_p == sum(m.p for m in members) == model.branch.config.output_dim


def test_single_member_trunk_identical_to_member():
    member = make_vanilla(p=4, seed=2)
    model = EnsembleModel([member], make_branch(5, 4), None)
    y = np.random.default_rng(1).uniform(-1, 1, size=(6, 2))
    np.testing.assert_array_equal(model.trunk_forward(y).data, member.forward(y).data)


def test_full_scale_widths_vanilla_pod():
    # (vanilla p=100, pod p=20) stacks to a width-120 trunk
    rng = np.random.default_rng(0)
    snapshots = rng.normal(size=(30, 40))
    y_locs = rng.uniform(-1, 1, size=(40, 2))
    pod_member = PODTrunk(compute_pod(snapshots, 20, y_locations=y_locs), 20, modified=False)
    vanilla = make_vanilla(p=100, seed=3)
    model = EnsembleModel(
        [vanilla, pod_member],
        make_branch(7, 120),
        ad.Tensor(np.zeros(()), requires_grad=True),
    )
    assert model.total_p == 120
    assert model.trunk_forward(y_locs).data.shape == (40, 120)


def test_p_plus_one_vanilla_width_700():
    # seven global trunks of p=100 express the overparametrized ensemble
    members = [make_vanilla(p=100, seed=s) for s in range(7)]
    model = EnsembleModel(members, make_branch(4, 700), ad.Tensor(np.zeros(()), requires_grad=True))
    assert model.total_p == 700


def test_predict_zero_branch_zero_bias_is_zero():
    member = make_vanilla(p=3, seed=4)
    branch = make_branch(5, 3)
    for w in branch.weights:
        w.data[:] = 0.0
    model = EnsembleModel([member], branch, ad.Tensor(np.zeros(()), requires_grad=True))
    u = np.random.default_rng(2).uniform(-1, 1, size=(2, 5))
    y = np.random.default_rng(3).uniform(-1, 1, size=(7, 2))
    np.testing.assert_array_equal(model.predict(u, y).data, np.zeros((2, 7)))


def test_ensemble_of_one_equals_standalone_inner_product():
    # ensemble path vs a plain numpy branch.trunk + b0 computation
    member = make_vanilla(p=6, seed=5)
    branch = make_branch(9, 6, seed=6)
    bias = ad.Tensor(np.array(0.37), requires_grad=True)
    model = EnsembleModel([member], branch, bias)
    rng = np.random.default_rng(4)
    u = rng.uniform(-1, 1, size=(3, 9))
    y = rng.uniform(-1, 1, size=(11, 2))
    pred = model.predict(u, y).data
    manual = branch.forward(u).data @ member.forward(y).data.T + 0.37
    assert np.max(np.abs(pred - manual)) < 1e-14


def test_predict_hand_computed_tiny_case():
    # 2 functions x 3 points with hand-set weights on 1-layer nets
    mcfg = MLPConfig(1, (1,), 2, "relu", activate_last=True)
    trunk_mlp = init_mlp(mcfg, 0)
    trunk_mlp.weights[0].data[:] = [[1.0]]
    trunk_mlp.biases[0].data[:] = [0.0]
    trunk_mlp.weights[1].data[:] = [[1.0, -1.0]]
    trunk_mlp.biases[1].data[:] = [0.0, 0.5]
    bcfg = MLPConfig(2, (1,), 2, "relu", activate_last=False)
    branch = init_mlp(bcfg, 0)
    branch.weights[0].data[:] = [[1.0], [1.0]]
    branch.biases[0].data[:] = [0.0]
    branch.weights[1].data[:] = [[2.0, 1.0]]
    branch.biases[1].data[:] = [0.0, 1.0]
    model = EnsembleModel(
        [VanillaTrunk(trunk_mlp)], branch, ad.Tensor(np.array(0.25), requires_grad=True)
    )
    u = np.array([[1.0, 1.0], [0.5, 0.0]])  # hidden: relu(2)=2, relu(0.5)=0.5
    y = np.array([[1.0], [2.0], [-1.0]])
    # trunk rows: h=relu(y); [relu(h), relu(-h+0.5)]
    trunk_rows = []
    for yy in (1.0, 2.0, -1.0):
        h = max(yy, 0.0)
        trunk_rows.append([max(h, 0.0), max(-h + 0.5, 0.0)])
    trunk_rows = np.array(trunk_rows)
    branch_rows = np.array([[4.0, 3.0], [1.0, 1.5]])  # [2h, h+1]
    expected = branch_rows @ trunk_rows.T + 0.25
    np.testing.assert_allclose(model.predict(u, y).data, expected, atol=1e-14)


def test_standard_pod_offset_and_no_bias():
    rng = np.random.default_rng(5)
    snapshots = rng.normal(size=(8, 12)) + 2.0
    y_locs = rng.uniform(0, 1, size=(12, 2))
    member = PODTrunk(compute_pod(snapshots, 4, y_locations=y_locs), 4, modified=False)
    branch = make_branch(6, 4, seed=8)
    for w in branch.weights:
        w.data[:] = 0.0
    model = EnsembleModel([member], branch, None)  # standalone standard POD: no b0
    u = rng.uniform(-1, 1, size=(3, 6))
    pred = model.predict(u, y_locs).data
    # zero branch coefficients leave exactly the mean-function offset
    expected = np.tile(snapshots.mean(axis=0), (3, 1))
    np.testing.assert_allclose(pred, expected, atol=1e-14)


def test_pod_member_rejects_off_grid_points():
    rng = np.random.default_rng(6)
    snapshots = rng.normal(size=(6, 10))
    y_locs = rng.uniform(0, 1, size=(10, 2))
    member = PODTrunk(compute_pod(snapshots, 3, y_locations=y_locs), 3, modified=True)
    with pytest.raises(IndexError):
        member.forward(rng.uniform(0, 1, size=(4, 2)))


def test_pod_member_has_no_parameters():
    rng = np.random.default_rng(7)
    member = PODTrunk(
        compute_pod(rng.normal(size=(6, 10)), 3, y_locations=rng.uniform(0, 1, (10, 2))),
        3,
        modified=True,
    )
    assert member.parameters() == []


def test_pou_locality_perturbation():
    trunk = make_pou(p=3, seed=9)
    branch = make_branch(4, 3, seed=10)
    model = EnsembleModel([trunk], branch, ad.Tensor(np.zeros(()), requires_grad=True))
    rng = np.random.default_rng(8)
    u = rng.uniform(-1, 1, size=(2, 4))
    y = rng.uniform(-1.2, 1.2, size=(60, 2))
    w = pou_weight_matrix(trunk.patchset, y, strict=False)
    y = y[w.sum(axis=1) > 0]
    w = pou_weight_matrix(trunk.patchset, y)
    before = model.predict(u, y).data.copy()
    trunk.experts[1].weights[0].data += 0.1
    after = model.predict(u, y).data
    inactive = w[:, 1] == 0.0
    assert np.any(inactive) and np.any(~inactive)
    # machine-exact zeros where the perturbed expert has no weight
    assert np.array_equal(before[:, inactive], after[:, inactive])
    assert np.all(np.abs(before[:, ~inactive] - after[:, ~inactive]).max(axis=0) > 0)


def test_branch_trunk_activation_rules_enforced():
    with pytest.raises(ValueError):
        VanillaTrunk(init_mlp(MLPConfig(2, (4,), 3, "tanh", activate_last=False), 0))
    member = make_vanilla(p=3)
    bad_branch = init_mlp(MLPConfig(5, (4,), 3, "tanh", activate_last=True), 0)
    with pytest.raises(ValueError):
        EnsembleModel([member], bad_branch, None)


def test_branch_width_mismatch_rejected():
    member = make_vanilla(p=3)
    with pytest.raises(ShapeError):
        EnsembleModel([member], make_branch(5, 4), None)


def test_predict_input_width_mismatch():
    member = make_vanilla(p=3)
    model = EnsembleModel([member], make_branch(5, 3), None)
    with pytest.raises(ShapeError, match="N_x"):
        model.predict(np.zeros((2, 4)), np.zeros((3, 2)))


def test_export_basis_pod_phi0_exact():
    rng = np.random.default_rng(9)
    snapshots = rng.normal(size=(6, 10)) + 1.5
    y_locs = rng.uniform(0, 1, size=(10, 2))
    member = PODTrunk(compute_pod(snapshots, 3, y_locations=y_locs), 3, modified=True)
    vanilla = make_vanilla(p=2, seed=11)
    model = EnsembleModel(
        [vanilla, member], make_branch(4, 5, seed=12),
        ad.Tensor(np.zeros(()), requires_grad=True),
    )
    # member columns start after the vanilla block: column 2 is phi0
    np.testing.assert_array_equal(
        export_basis(model, y_locs, 2), snapshots.mean(axis=0)
    )
    # vanilla column equals the MLP output component
    np.testing.assert_array_equal(
        export_basis(model, y_locs, 1), vanilla.forward(y_locs).data[:, 1]
    )


def test_export_basis_pou_zero_outside_coverage():
    trunk = make_pou(p=3, seed=13)
    model = EnsembleModel([trunk], make_branch(4, 3, seed=14), None)
    y = np.array([[0.1, 0.2], [5.0, 5.0], [-1.5, 0.0]])
    col = export_basis(model, y, 0)
    assert col[1] == 0.0
    assert col[0] != 0.0 and col[2] != 0.0
    # single-active-expert point matches that expert's component
    np.testing.assert_allclose(
        col[2], trunk.experts[0].forward(y[2:3]).data[0, 0], atol=1e-15
    )


def test_export_basis_out_of_range():
    member = make_vanilla(p=3)
    model = EnsembleModel([member], make_branch(5, 3), None)
    with pytest.raises(IndexError):
        export_basis(model, np.zeros((2, 2)), 3)


def test_checkpointable_parameter_hash_changes():
    member = make_vanilla(p=3, seed=15)
    model = EnsembleModel([member], make_branch(5, 3, seed=16), None)
    h1 = model.parameter_hash()
    member.mlp.weights[0].data += 1.0
    assert model.parameter_hash() != h1
