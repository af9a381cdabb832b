#pragma once

// Glue between the synthetic generator, jitter encoding and the toy
// diffusion model, shared by the command-line tool and the test suites.

#include <vector>

#include "quadkit/diffusion.hpp"
#include "quadkit/formats.hpp"
#include "quadkit/synth.hpp"

namespace quadkit::pipeline {

vje::ButterworthSpec filter_spec(const formats::RunConfig& cfg);
diffusion::ToyConfig toy_config(const formats::RunConfig& cfg);
diffusion::DiffusionSchedule schedule(const formats::RunConfig& cfg);
diffusion::TrainConfig train_config(const formats::RunConfig& cfg);

/// Scene `index` of the seeded toy dataset: random jitter frequency within the
/// configured band, random phase, objects at random horizontal positions.
synth::SceneSpec toy_scene(const formats::RunConfig& cfg, std::size_t index);

/// Jitter recovered from the first object track (or the true jitter when the
/// scene has no objects), then encoded to background features.
vje::JitterSignal scene_jitter(const synth::SynthBundle& bundle, const vje::ButterworthSpec& spec);
diffusion::Example make_example(const synth::SynthBundle& bundle, const vje::ButterworthSpec& spec);
/// Same latents and boxes, background features from another jitter series.
diffusion::Conditioning condition_on(const diffusion::Example& ex, const vje::JitterSignal& jitter,
                                     std::size_t image_height, std::size_t image_width);

std::vector<diffusion::Example> toy_dataset(const formats::RunConfig& cfg);

}  // namespace quadkit::pipeline
