#pragma once

#include "seg4d/maps.hpp"

#include <random>
#include <span>
#include <vector>

namespace seg4d {

inline constexpr double kMinTemperature = 1e-2;

/// Samples drawn from one instance mask of one image.
struct InstanceSamples {
  int label = 0;
  std::vector<int> pixels;       // N_s pixel indices (y * W + x), repeats allowed for small masks
  std::vector<double> features;  // N_s x d
  std::vector<double> center;    // mean of `features`
  double temperature = kMinTemperature;
};

struct InstanceBatch {
  int dim = 0;
  int samples_per_instance = 0;
  std::vector<InstanceSamples> instances;  // ascending label order
};

/// Samples N_s pixels per nonzero label (without replacement when the mask is
/// large enough, with replacement otherwise; masks under 2 pixels are skipped),
/// then sets each center to the sample mean and the temperature to
/// sum ||f - center||^2 / (N_s log(N_s + 10)), floored at `min_temperature`.
InstanceBatch build_batch(const FeatureMap& features, const SegmentationMap& seg, int samples_per_instance,
                          std::mt19937_64& rng, double min_temperature = kMinTemperature);

/// Re-gathers sample features at the batch's pixels from a new map; centers
/// and temperatures are kept.
InstanceBatch resample(const InstanceBatch& batch, const FeatureMap& features);

/// Sample mean and temperature from the batch's own samples.
void refresh_statistics(InstanceBatch& batch, double min_temperature = kMinTemperature);

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;  // per instance, N_s x d
};

/// InfoNCE-style clustering loss of every sample against `centers` with the
/// batch temperatures. Centers and temperatures are constants. Fewer than two
/// instances give zero loss and zero gradient.
ContrastiveResult contrastive_objective(const InstanceBatch& batch, std::span<const std::vector<double>> centers);

/// contrastive_objective against the batch's own centers.
ContrastiveResult contrastive_loss(const InstanceBatch& batch);

/// Adds weight * sample gradients into the pixel gradient map.
void scatter_sample_grads(const InstanceBatch& batch, const ContrastiveResult& result, double weight,
                          FeatureMap& pixel_grads);

}  // namespace seg4d
