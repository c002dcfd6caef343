from src.services import ABLATION_ROWS, ablate, ablation_configs, compare_fusions, parameter_deltas
from src.model import block_parameter_count

from .conftest import TINY


def test_ablation_configs_apply_each_row_to_the_same_seed(fast_run):
    configs = dict(ablation_configs(fast_run))
    assert len(configs) == len(ABLATION_ROWS) == 13
    assert configs["w/o positional embeddings"].model.no_pe
    assert configs["w/o L_KL"].effective_gammas[2] == 0.0
    assert configs["Audio + Visual"].model.modalities == ["a", "v"]
    assert {c.seed for c in configs.values()} == {fast_run.seed}


def test_parameter_deltas_match_removed_components(fast_run):
    deltas = parameter_deltas(fast_run)
    block = block_parameter_count(TINY["d_model"], TINY["d_ff"])
    assert deltas["SDT"] == 0
    assert deltas["w/o positional embeddings"] == 0
    assert deltas["w/o L_CE"] == deltas["w/o L_KL"] == 0
    assert deltas["w/o intra-modal transformers"] == -3 * block
    assert deltas["w/o speaker embeddings"] == -TINY["d_model"] * (TINY["num_speakers"] + 1)
    assert all(deltas[name] < 0 for name in ("Text", "Audio", "Visual", "Text + Audio"))


def test_ablation_grid_trains_every_row(fast_run, small_dataset):
    table = ablate(fast_run.model_copy(update={"epochs": 1}), small_dataset)
    assert [row.name for row in table.rows] == [name for name, _ in ABLATION_ROWS]
    markdown = table.to_markdown().splitlines()
    assert markdown[0] == "| Setting | ACC | w-F1 | Parameters |"
    assert len(markdown) == 2 + 13
    rows = table.to_dict()
    assert rows[0]["num_parameters"] > rows[7]["num_parameters"]


def test_fusion_comparison(fast_run, small_dataset):
    table = compare_fusions(fast_run.model_copy(update={"epochs": 1}), small_dataset)
    assert [row.name for row in table.rows] == ["gated", "add", "concat", "unicat"]
    assert all(0.0 <= r["accuracy"] <= 1.0 for r in table.to_dict())
