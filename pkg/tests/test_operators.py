import pytest

from archevo.arch import build_graph, cost_report
from archevo.evaluate import StaticEvaluator
from archevo.genome import (
    genome_fingerprint,
    parse_genome,
    render_backbone_block,
    render_head_block,
    render_params_block,
    serialize_genome,
)
from archevo.llm import ChatClient
from archevo.operators import (
    EmptyResponseError,
    LlmOperators,
    MockOperators,
    ModeMismatchError,
    OperatorFeedback,
    PromptBuilder,
    extract_yaml_payload,
)
from llm_stub import StubServer, echo_first_fence, echo_second_fence, fixed_text


# --- extraction -----------------------------------------------------------------


def test_extract_fenced():
    assert extract_yaml_payload("Here you go:\n```yaml\nnc: 80\n```") == "nc: 80"


def test_extract_no_fence_returns_whole():
    assert extract_yaml_payload("  nc: 80\n") == "nc: 80"


def test_extract_first_of_two_fences():
    text = "```\nfirst: 1\n```\nand\n```\nsecond: 2\n```"
    assert extract_yaml_payload(text) == "first: 1"


def test_extract_empty_raises():
    with pytest.raises(EmptyResponseError):
        extract_yaml_payload("   \n ")


# --- prompt construction -----------------------------------------------------------


def test_mutation_prompt_embeds_only_target_block(yolov3):
    req = PromptBuilder(mode="split").build_mutation(yolov3, "backbone")
    user = req.messages[1]["content"]
    assert "[-1, 8, Bottleneck, [256]]" in user  # backbone tuple present
    assert "depth_multiple" not in user  # parameters block absent
    assert "Detect" not in user or "[[27, 22, 15]" not in user  # head tuples absent
    assert user.count("```") == 2  # exactly one embedded document


def test_mutation_prompt_whole_mode_embeds_file(corpus_genomes):
    g = corpus_genomes["evolved_v10_scaled.yaml"]
    req = PromptBuilder(mode="whole").build_mutation(g, "parameters")
    user = req.messages[1]["content"]
    assert "scales:" in user and "v10Detect" in user  # whole file present
    assert "parameters part" in user  # instruction names the part


def test_crossover_prompt_embeds_both_parents(yolov3, corpus_genomes):
    other = corpus_genomes["evolved_deep_spp.yaml"]
    req = PromptBuilder(mode="split").build_crossover(yolov3, other, "head")
    user = req.messages[1]["content"]
    assert user.count("```") == 4  # two embedded documents
    assert "[[27, 22, 15], 1, Detect, [nc]]" in user


def test_prompt_deterministic(yolov3):
    builder = PromptBuilder(mode="split")
    a = builder.build_mutation(yolov3, "backbone")
    b = builder.build_mutation(yolov3, "backbone")
    assert a == b


def test_prompt_includes_feedback(yolov3):
    fb = OperatorFeedback("mutate", True, params_delta=1000, precision_delta=0.01)
    with_fb = PromptBuilder(mode="split").build_mutation(yolov3, "backbone", fb)
    without = PromptBuilder(mode="split").build_mutation(yolov3, "backbone")
    assert "previous mutate" in with_fb.messages[1]["content"]
    assert with_fb.messages[1]["content"] != without.messages[1]["content"]


def test_prompt_uses_persona_system_message(yolov3):
    req = PromptBuilder(mode="split").build_mutation(yolov3, "head")
    assert req.messages[0]["role"] == "system"
    assert req.messages[0]["content"].strip()


# --- llm operators ------------------------------------------------------------------


def _ops(server, mode):
    client = ChatClient(endpoint=server.endpoint, sleep=lambda s: None)
    return LlmOperators(client, PromptBuilder(mode=mode))


def test_echo_stub_is_fingerprint_fixpoint(yolov3):
    with StubServer([echo_first_fence]) as server:
        result = _ops(server, "split").mutate(yolov3, "backbone")
    child = parse_genome(result.child_text, "split")
    assert genome_fingerprint(child) == genome_fingerprint(yolov3)


def test_stub_emitting_corpus_text_yields_that_genome(corpus_texts, yolov3):
    target_text = corpus_texts["evolved_v10_scaled.yaml"]
    with StubServer([fixed_text(f"```yaml\n{target_text}```")]) as server:
        g = parse_genome(target_text, "whole")
        result = _ops(server, "whole").mutate(g, "backbone")
    child = parse_genome(result.child_text, "whole")
    assert child == parse_genome(target_text, "whole")


def test_malformed_payload_retained_and_counted_invalid(yolov3):
    with StubServer([fixed_text("```yaml\nbackbone: [oops\n```")]) as server:
        result = _ops(server, "split").mutate(yolov3, "backbone")
    assert "oops" in result.child_text
    outcome = StaticEvaluator().evaluate_text(result.child_text)
    assert outcome.status == "invalid"
    assert result.transcript  # transcript kept regardless of validity


def test_mutation_locality(yolov3):
    with StubServer([fixed_text("```yaml\nbackbone:\n  - [-1, 1, Conv, [16, 3, 1]]\n```")]) as server:
        result = _ops(server, "split").mutate(yolov3, "backbone")
    child = parse_genome(result.child_text, "split")
    # untouched blocks reserialize byte-identically
    assert render_params_block(child) == render_params_block(yolov3)
    assert render_head_block(child) == render_head_block(yolov3)
    assert render_backbone_block(child) != render_backbone_block(yolov3)


def test_crossover_splices_against_parent_a(yolov3, corpus_genomes):
    other = corpus_genomes["evolved_deep_spp.yaml"]
    with StubServer([echo_second_fence]) as server:
        result = _ops(server, "split").crossover(yolov3, other, "backbone")
    child = parse_genome(result.child_text, "split")
    assert render_backbone_block(child) == render_backbone_block(other)
    assert render_params_block(child) == render_params_block(yolov3)
    assert render_head_block(child) == render_head_block(yolov3)
    assert result.parent_fingerprints == (
        genome_fingerprint(yolov3),
        genome_fingerprint(other),
    )


def test_transcript_replays_prompt(yolov3):
    builder = PromptBuilder(mode="split")
    with StubServer([echo_first_fence]) as server:
        client = ChatClient(endpoint=server.endpoint, sleep=lambda s: None)
        result = LlmOperators(client, builder).mutate(yolov3, "head")
    replayed = builder.build_mutation(yolov3, "head")
    assert replayed.messages[1]["content"] in result.transcript
    assert replayed.messages[0]["content"] in result.transcript


# --- mock operators -----------------------------------------------------------------


def test_mock_mutate_deterministic(yolov3):
    ops = MockOperators("split")
    a = ops.mutate(yolov3, seed=42)
    b = ops.mutate(yolov3, seed=42)
    assert a.child_text == b.child_text
    assert a.notes == b.notes


def test_mock_mutate_different_seeds_vary(yolov3):
    ops = MockOperators("split")
    texts = {ops.mutate(yolov3, seed=s).child_text for s in range(12)}
    assert len(texts) > 1


def test_mock_width_edit_increases_params(yolov3):
    ops = MockOperators("split")
    base = cost_report(build_graph(yolov3)).total_params
    for seed in range(40):
        result = ops.mutate(yolov3, seed=seed)
        if "scale width multiple by 1.25" in result.notes:
            child = parse_genome(result.child_text, "split")
            assert cost_report(build_graph(child)).total_params > base
            return
    pytest.fail("no width-increase edit drawn in 40 seeds")


def test_mock_repeats_edit_changes_effective_repeats(yolov3):
    ops = MockOperators("split")
    for seed in range(60):
        result = ops.mutate(yolov3, seed=seed)
        if result.notes.startswith("repeats"):
            child = parse_genome(result.child_text, "split")
            idx = int(result.notes.rsplit(" ", 1)[1])
            before = yolov3.layers[idx].repeats
            after = child.layers[idx].repeats
            assert after != before
            if StaticEvaluator().evaluate(child).is_valid:
                node = build_graph(child).nodes[idx]
                assert max(node.seq_repeats, node.internal_n) == after
            return
    pytest.fail("no repeats edit drawn in 60 seeds")


def test_mock_duplicate_bottleneck_stays_valid(yolov3):
    ops = MockOperators("split")
    for seed in range(80):
        result = ops.mutate(yolov3, seed=seed)
        if result.notes.startswith("duplicate Bottleneck"):
            child = parse_genome(result.child_text, "split")
            assert len(child.layers) == len(yolov3.layers) + 1
            assert StaticEvaluator().evaluate(child).is_valid
            return
    pytest.fail("no duplicate edit drawn in 80 seeds")


def test_mock_crossover_identical_parents_is_identity(yolov3):
    ops = MockOperators("split")
    for seed in range(10):
        result = ops.crossover(yolov3, yolov3, seed=seed)
        child = parse_genome(result.child_text, "split")
        assert genome_fingerprint(child) == genome_fingerprint(yolov3)


def test_mock_crossover_whole_mode_identical_parents(corpus_genomes):
    g = corpus_genomes["evolved_v10_scaled.yaml"]
    ops = MockOperators("whole")
    for seed in range(10):
        child = parse_genome(ops.crossover(g, g, seed=seed).child_text, "whole")
        assert genome_fingerprint(child) == genome_fingerprint(g)


def test_mock_crossover_block_pattern(yolov3, corpus_genomes):
    other = corpus_genomes["evolved_deep_spp.yaml"]
    ops = MockOperators("split")
    seen_mixed = False
    for seed in range(40):
        result = ops.crossover(yolov3, other, seed=seed)
        picks = dict(p.split("=") for p in result.notes.removeprefix("blocks ").split(","))
        child = parse_genome(result.child_text, "split")
        expect = {"a": yolov3, "b": other}
        assert child.params == expect[picks["parameters"]].params
        assert child.backbone == expect[picks["backbone"]].backbone
        assert child.head == expect[picks["head"]].head
        seen_mixed = seen_mixed or len(set(picks.values())) > 1
    assert seen_mixed


def test_mock_crossover_mode_mismatch(yolov3, corpus_genomes):
    g2 = corpus_genomes["evolved_v10_scaled.yaml"]
    with pytest.raises(ModeMismatchError):
        MockOperators("split").crossover(yolov3, g2, seed=0)


def test_mock_handles_scales_genomes(corpus_genomes):
    g = corpus_genomes["evolved_v10_scaled.yaml"]
    ops = MockOperators("whole")
    for seed in range(20):
        result = ops.mutate(g, seed=seed)
        if result.notes.startswith("scale "):
            child = parse_genome(result.child_text, "whole")
            assert child.params.scales != g.params.scales
            return
    pytest.fail("no multiple-scaling edit drawn in 20 seeds")
