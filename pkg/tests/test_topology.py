import numpy as np
import pytest

from posebranch import topology as T
from posebranch.nn import layers as L

RGBD = T.LabelSpace(51, 16)
PASCAL = T.LabelSpace(11, 16)
SMALL = T.LabelSpace(4, 16)

# Weight products written out layer by layer from the AlexNet shapes.
CONVS = 96 * 11 * 11 * 3 + 256 * 5 * 5 * 48 + 384 * 3 * 3 * 256 + 384 * 3 * 3 * 192 + 256 * 3 * 3 * 192
FC67 = 9216 * 4096 + 4096 * 4096


@pytest.mark.parametrize(
    "kind,labels,expected",
    [
        ("pm", RGBD, 113_991_744),
        ("lbm", RGBD, 57_133_088),
        ("cpm", RGBD, 60_200_992),
        ("ebm", PASCAL, 111_495_200),
        ("lbm", PASCAL, 56_969_248),
        ("cpm", PASCAL, 57_579_552),
        ("pm", PASCAL, 113_827_904),
    ],
)
def test_full_scale_counts(kind, labels, expected):
    assert T.count_parameters(T.build_topology(kind, labels, T.FULL)) == expected


def test_pm_halves():
    cat, pose = T.build_topology("pm", RGBD, T.FULL)
    assert T.count_parameters(cat) == 57_067_552
    assert T.count_parameters(pose) == 56_924_192


def test_ebm_rgbd_is_the_per_layer_sum():
    per_layer = CONVS + 2 * FC67 + 4096 * 16 + 4096 * 51
    assert per_layer == 111_659_040
    assert T.count_parameters(T.build_topology("ebm", RGBD, T.FULL)) == per_layer


def test_hand_products_match_table():
    rows = T.parameter_table(T.build_topology("base", RGBD, T.FULL))
    assert sum(n for _, _, n in rows) == CONVS + FC67 + 4096 * 51
    assert rows[0] == ("conv1", (96, 3, 11, 11), 34_848)


@pytest.mark.parametrize("kind", T.MODEL_KINDS)
@pytest.mark.parametrize("width", [800, 200])
def test_desk_count_equals_instantiated_arrays(kind, width):
    spec = T.build_topology(kind, SMALL, T.DESK, ebm_width=width)
    model = T.instantiate(spec, seed=0)
    weights = sum(p.value.size for k, p in model.named_parameters().items() if k.endswith(".weight"))
    allp = sum(p.value.size for p in model.named_parameters().values())
    assert T.count_parameters(spec) == weights
    assert T.count_parameters(spec, include_bias=True) == allp


def test_ebm_widths():
    assert T.DESK.ebm_width(800) == 64
    assert [T.FULL.ebm_width(w) for w in T.FULL_EBM_WIDTHS] == list(T.FULL_EBM_WIDTHS)
    with pytest.raises(ValueError):
        T.DESK.ebm_width(123)


def test_branch_points():
    ebm = T.build_topology("ebm", SMALL)
    lbm = T.build_topology("lbm", SMALL)
    assert [n for n, *_ in ebm.qualified_blocks()][ebm.branch_point] == "category/fc6"
    assert ebm.shared_prefix[-1][0] == "pool5"
    assert lbm.shared_prefix[-1][0] == "drop7"
    assert T.build_topology("cpm", SMALL).branch_names == ("joint",)
    cat, pose = T.build_topology("pm", SMALL)
    assert (cat.role, pose.role) == ("category", "pose")


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown model kind"):
        T.build_topology("xbm", SMALL)


def test_cpm_bijection():
    labels = T.LabelSpace(5, 16)
    codes = [T.cpm_encode(c, p, labels) for c in range(5) for p in range(16)]
    assert sorted(codes) == list(range(80))
    assert T.cpm_encode(2, 3, labels) == 35
    for j in range(80):
        assert T.cpm_encode(*T.cpm_decode(j, labels), labels) == j
    with pytest.raises(ValueError):
        T.cpm_encode(5, 0, labels)
    with pytest.raises(ValueError):
        T.cpm_decode(80, labels)


def test_forward_shapes_and_layer_order():
    x = np.random.default_rng(0).random((3, 3, 32, 32))
    for kind in T.MODEL_KINDS:
        model = T.instantiate(T.build_topology(kind, SMALL), init_std=None)
        logits, acts = T.forward_with_activations(model, x)
        assert list(acts) == model.layer_names
        for head, z in logits.items():
            size = {"category": 4, "pose": 16, "joint": 64}[head]
            assert z.shape == (3, size)
    with pytest.raises(ValueError, match="does not match input"):
        model.forward(np.zeros((1, 3, 28, 28)))


def test_paired_networks_use_distinct_seeds():
    pm = T.instantiate(T.build_topology("pm", SMALL), seed=4)
    sd = pm.state_dict()
    assert not np.array_equal(sd["category/conv1.weight"], sd["pose/conv1.weight"])


def test_seeded_init_is_reproducible():
    a = T.instantiate(T.build_topology("ebm", SMALL), seed=3).state_dict()
    b = T.instantiate(T.build_topology("ebm", SMALL), seed=3).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)


@pytest.fixture(scope="module")
def base_state():
    return T.instantiate(T.build_topology("base", SMALL), seed=11).state_dict()


class TestWarmStart:
    def test_ebm_copies_convs_and_category_fcs(self, base_state):
        ebm = T.instantiate(T.build_topology("ebm", SMALL), seed=0, warm_start=base_state)
        params = ebm.named_parameters()
        for name in ("conv1", "conv5", "category/fc6", "category/fc7"):
            src = name.split("/")[-1]
            assert np.array_equal(params[f"{name}.weight"].value, base_state[f"{src}.weight"])
            assert params[f"{name}.weight"].lr_mult == 1.0
        for name in ("pose/fc6", "pose/fc7", "pose/fc8", "category/fc8"):
            assert params[f"{name}.weight"].lr_mult == 10.0
        assert not np.array_equal(params["pose/fc6.weight"].value, base_state["fc6.weight"])

    def test_narrow_ebm_keeps_only_convs(self, base_state):
        ebm = T.instantiate(T.build_topology("ebm", SMALL, ebm_width=800), warm_start=base_state)
        mult = {k: p.lr_mult for k, p in ebm.named_parameters().items()}
        assert mult["conv3.weight"] == 1.0 and mult["category/fc6.weight"] == 10.0

    def test_lbm_and_pm_copy_everything_but_heads(self, base_state):
        lbm = T.instantiate(T.build_topology("lbm", SMALL), warm_start=base_state)
        mult = {k: p.lr_mult for k, p in lbm.named_parameters().items()}
        assert all(v == 10.0 for k, v in mult.items() if "/fc8" in k)
        assert all(v == 1.0 for k, v in mult.items() if "/fc8" not in k)
        pm = T.instantiate(T.build_topology("pm", SMALL), warm_start=base_state)
        sd = pm.state_dict()
        assert np.array_equal(sd["pose/fc7.weight"], base_state["fc7.weight"])

    def test_parallel_category_half_as_source(self, base_state):
        prefixed = {f"category/{k}": v for k, v in base_state.items()}
        cpm = T.instantiate(T.build_topology("cpm", SMALL), warm_start=prefixed)
        assert np.array_equal(cpm.state_dict()["fc6.weight"], base_state["fc6.weight"])

    def test_shape_mismatch_names_layer(self, base_state):
        bad = dict(base_state)
        bad["conv2.weight"] = np.zeros((1, 1, 1, 1))
        with pytest.raises(ValueError, match="conv2"):
            T.instantiate(T.build_topology("lbm", SMALL), warm_start=bad)

    def test_cold_start_is_all_tenfold(self):
        ebm = T.instantiate(T.build_topology("ebm", SMALL))
        assert {p.lr_mult for p in ebm.named_parameters().values()} == {10.0}


def test_lbm_branch_gradients_sum_at_branch_point():
    model = T.instantiate(T.build_topology("lbm", SMALL), seed=0, init_std=None)
    x = np.random.default_rng(1).random((2, 3, 32, 32))
    rng = np.random.default_rng(2)
    gc, gp = rng.standard_normal((2, 4)), rng.standard_normal((2, 16))

    def grads(heads):
        model.zero_grad()
        model.forward(x, train=False)
        model.backward(heads)
        return {k: p.gradient.copy() for k, p in model.named_parameters().items()}

    a, b, both = grads({"category": gc}), grads({"pose": gp}), grads({"category": gc, "pose": gp})
    for k in both:
        np.testing.assert_allclose(both[k], a[k] + b[k], rtol=1e-10, atol=1e-12)
    assert np.all(a["pose/fc8.weight"] == 0) and np.all(b["category/fc8.weight"] == 0)


def test_state_dict_strict_mismatch():
    model = T.instantiate(T.build_topology("lbm", SMALL))
    sd = model.state_dict()
    sd.pop("conv1.weight")
    with pytest.raises(ValueError, match="conv1.weight"):
        model.load_state_dict(sd)


def test_save_and_load_round_trip(tmp_path):
    x = np.random.default_rng(0).random((2, 3, 32, 32))
    for kind in ("ebm", "pm", "cpm"):
        model = T.instantiate(T.build_topology(kind, SMALL, ebm_width=400), seed=5, init_std=None)
        T.save_model(model, tmp_path / f"{kind}.pbl")
        back = T.load_model(tmp_path / f"{kind}.pbl")
        a, b = model.forward(x), back.forward(x)
        assert all(np.array_equal(a[h], b[h]) for h in a)
        assert T.describe(back.spec)["ebm_width"] == (400 if kind == "ebm" else 4096)


def test_topology_file_rejects_unknown_key(tmp_path):
    p = tmp_path / "m.topo"
    p.write_text("kind = ebm\ncategories = 4\ncolour = red\n")
    with pytest.raises(ValueError, match="colour"):
        T.read_topology(p)


def test_layer_kinds_on_full_profile():
    spec = T.build_topology("base", RGBD, T.FULL)
    kinds = {n: k for n, _, k in spec.qualified_blocks()}
    assert isinstance(kinds["norm1"], L.LocalResponseNorm)
    assert kinds["conv2"].groups == 2 and kinds["conv3"].groups == 1 and kinds["conv5"].groups == 2
    assert spec.input_shape == (3, 227, 227)
