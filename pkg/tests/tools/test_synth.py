"""Tests for the synthetic scenes in ``dcrnn_sed.tools.synth``."""

import numpy
import pytest

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.tools.features import logmel
from dcrnn_sed.tools.metrics import events_to_roll
from dcrnn_sed.tools.synth import (
    KINDS,
    EventTemplate,
    SceneRecipe,
    chunk_sequences,
    default_templates,
    envelope_roll,
    event_envelope,
    place_events,
    render_event,
    split_corpus,
    synthesize_scene,
)


def test_zero_density_gives_pure_background():
    clip, events = synthesize_scene(SceneRecipe(duration_seconds=2.0, events_per_minute=0.0, seed=3))
    assert events == []
    assert clip.samples.size == 32000
    assert numpy.abs(clip.samples).max() == pytest.approx(0.9)


def test_polyphony_cap_of_one_forbids_overlaps():
    recipe = SceneRecipe(duration_seconds=20.0, max_polyphony=1, events_per_minute=60.0, seed=5)
    _, events = synthesize_scene(recipe)
    assert len(events) > 1
    for previous, current in zip(events, events[1:]):
        assert previous.offset <= current.onset


def test_polyphony_cap_holds_at_every_sample():
    recipe = SceneRecipe(duration_seconds=10.0, max_polyphony=2, events_per_minute=120.0, seed=1)
    placed, _ = place_events(recipe, default_templates(4))
    active = numpy.zeros(recipe.n_samples, dtype=int)
    for event in placed:
        active[event.start : event.start + event.n_samples] += 1
    assert active.max() <= 2


def test_annotations_match_the_rendered_envelopes():
    recipe = SceneRecipe(duration_seconds=10.0, max_polyphony=3, seed=11)
    templates = default_templates(4)
    labels = [template.label for template in templates]
    clip, events = synthesize_scene(recipe, templates)
    placed, _ = place_events(recipe, templates)
    features = logmel(clip)
    annotated = events_to_roll(
        events, labels, features.n_frames, features.frame_hop_seconds, features.frame_len_seconds
    )
    oracle = envelope_roll(placed, labels, features.n_frames, recipe.sample_rate)
    assert annotated.active.any()
    numpy.testing.assert_array_equal(annotated.active, oracle)


def test_scenes_are_reproducible():
    recipe = SceneRecipe(duration_seconds=3.0, seed=42)
    first, second = synthesize_scene(recipe), synthesize_scene(recipe)
    numpy.testing.assert_array_equal(first[0].samples, second[0].samples)
    assert first[1] == second[1]


@pytest.mark.parametrize("kind", KINDS)
def test_render_event(kind):
    template = EventTemplate("x", kind, (500.0, 1500.0))
    rendered, envelope = render_event(template, 8000, 16000, seed=0)
    assert rendered.shape == envelope.shape == (8000,)
    assert (envelope > 0).all()
    assert numpy.abs(rendered).max() <= 1.0


def test_envelope_fades():
    envelope = event_envelope(1000, 16000)
    assert envelope[0] < 0.2
    assert envelope[-1] < 0.2
    assert envelope[500] == 1.0


def test_default_templates_stay_below_nyquist():
    templates = default_templates(16, 16000)
    assert len({template.label for template in templates}) == 16
    for template in templates:
        template.check_sample_rate(16000)
    assert [template.kind for template in templates[:4]] == list(KINDS)


def test_template_above_nyquist_is_rejected():
    with pytest.raises(InputValidationError, match="Nyquist"):
        synthesize_scene(SceneRecipe(sample_rate=8000), [EventTemplate("x", "tone", (1000.0, 5000.0))])


def test_ten_scenes_split_six_two_two():
    scenes = [f"scene_{index}" for index in range(10)]
    train, val, test = split_corpus(scenes, seed=3)
    assert (len(train), len(val), len(test)) == (6, 2, 2)
    assert sorted(train + val + test) == sorted(scenes)
    assert split_corpus(scenes, seed=3) == (train, val, test)


def test_invalid_fractions():
    with pytest.raises(InputValidationError):
        split_corpus(list(range(5)), fractions=(0.5, 0.5, 0.5))


def test_full_chunks(rng):
    chunks = chunk_sequences(rng.normal(size=(512, 4)), rng.random((512, 2)) < 0.5, chunk_frames=256)
    assert len(chunks) == 2
    assert all(chunk.mask.all() for chunk in chunks)


def test_padded_last_chunk(rng):
    features, roll = rng.normal(size=(300, 4)), rng.random((300, 2)) < 0.5
    chunks = chunk_sequences(features, roll, chunk_frames=256)
    assert len(chunks) == 2
    assert chunks[1].mask.sum() == 44
    assert not chunks[1].roll[44:].any()
    assert (chunks[1].features[44:] == 0).all()
    restored = numpy.concatenate([chunk.roll[chunk.mask] for chunk in chunks])
    numpy.testing.assert_array_equal(restored, roll)
    numpy.testing.assert_array_equal(numpy.concatenate([chunk.features[chunk.mask] for chunk in chunks]), features)


@pytest.mark.parametrize(("n_frames", "chunk_frames"), [(1, 256), (255, 256), (256, 256), (257, 256), (700, 64)])
def test_chunks_concatenate_back_to_the_recording(rng, n_frames, chunk_frames):
    features, roll = rng.normal(size=(n_frames, 3)), rng.random((n_frames, 2)) < 0.5
    chunks = chunk_sequences(features, roll, chunk_frames=chunk_frames)
    assert len(chunks) == -(-n_frames // chunk_frames)
    assert all(chunk.features.shape == (chunk_frames, 3) for chunk in chunks)
    numpy.testing.assert_array_equal(numpy.concatenate([chunk.features[chunk.mask] for chunk in chunks]), features)
    numpy.testing.assert_array_equal(numpy.concatenate([chunk.roll[chunk.mask] for chunk in chunks]), roll)


def test_invalid_recipe():
    with pytest.raises(InputValidationError):
        SceneRecipe(max_polyphony=0)
