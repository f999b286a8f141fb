#include "seg4d/contrastive.hpp"

#include "seg4d/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace seg4d {

void refresh_statistics(InstanceBatch& batch, double min_temperature) {
  const auto d = static_cast<std::size_t>(batch.dim);
  const auto ns = static_cast<std::size_t>(batch.samples_per_instance);
  for (auto& inst : batch.instances) {
    inst.center.assign(d, 0.0);
    for (std::size_t j = 0; j < ns; ++j)
      for (std::size_t c = 0; c < d; ++c) inst.center[c] += inst.features[j * d + c];
    for (double& c : inst.center) c /= static_cast<double>(ns);
    double scatter = 0.0;
    for (std::size_t j = 0; j < ns; ++j)
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = inst.features[j * d + c] - inst.center[c];
        scatter += diff * diff;
      }
    const double raw = scatter / (static_cast<double>(ns) * std::log(static_cast<double>(ns) + 10.0));
    inst.temperature = std::max(raw, min_temperature);
  }
}

InstanceBatch build_batch(const FeatureMap& features, const SegmentationMap& seg, int samples_per_instance,
                          std::mt19937_64& rng, double min_temperature) {
  require(features.height == seg.height && features.width == seg.width, ErrorKind::ShapeMismatch,
          "feature map and segmentation map sizes differ");
  require(samples_per_instance >= 2, ErrorKind::InvalidArgument, "need at least 2 samples per instance");

  std::map<int, std::vector<int>> masks;
  for (int p = 0; p < seg.pixels(); ++p) {
    const int label = seg.labels[static_cast<std::size_t>(p)];
    if (label != 0) masks[label].push_back(p);
  }

  InstanceBatch batch;
  batch.dim = features.channels;
  batch.samples_per_instance = samples_per_instance;
  const auto ns = static_cast<std::size_t>(samples_per_instance);
  for (auto& [label, pixels] : masks) {
    if (pixels.size() < 2) continue;
    InstanceSamples inst;
    inst.label = label;
    inst.pixels.reserve(ns);
    if (pixels.size() >= ns) {
      for (std::size_t j = 0; j < ns; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, pixels.size() - 1);
        std::swap(pixels[j], pixels[pick(rng)]);
        inst.pixels.push_back(pixels[j]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
      for (std::size_t j = 0; j < ns; ++j) inst.pixels.push_back(pixels[pick(rng)]);
    }
    batch.instances.push_back(std::move(inst));
  }
  batch = resample(batch, features);
  refresh_statistics(batch, min_temperature);
  return batch;
}

InstanceBatch resample(const InstanceBatch& batch, const FeatureMap& features) {
  require(features.channels == batch.dim || batch.instances.empty(), ErrorKind::ShapeMismatch,
          "feature map channel count differs from the batch");
  InstanceBatch out = batch;
  out.dim = features.channels;
  const auto d = static_cast<std::size_t>(features.channels);
  for (auto& inst : out.instances) {
    inst.features.resize(inst.pixels.size() * d);
    for (std::size_t j = 0; j < inst.pixels.size(); ++j) {
      const auto f = features.pixel(inst.pixels[j]);
      std::copy(f.begin(), f.end(), inst.features.begin() + static_cast<std::ptrdiff_t>(j * d));
    }
  }
  return out;
}

ContrastiveResult contrastive_objective(const InstanceBatch& batch, std::span<const std::vector<double>> centers) {
  const std::size_t n = batch.instances.size();
  const auto d = static_cast<std::size_t>(batch.dim);
  const auto ns = static_cast<std::size_t>(batch.samples_per_instance);
  require(centers.size() == n, ErrorKind::ShapeMismatch, "one center per instance required");

  ContrastiveResult result;
  result.grads.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.grads[i].assign(batch.instances[i].features.size(), 0.0);
  if (n < 2) return result;

  for (const auto& inst : batch.instances)
    for (double f : inst.features)
      if (!std::isfinite(f)) fail(ErrorKind::NonFinite, "non-finite sample feature in contrastive batch");

  // Temperature-scaled centers c_k / phi_k.
  std::vector<double> scaled(n * d);
  for (std::size_t k = 0; k < n; ++k) {
    require(centers[k].size() == d, ErrorKind::ShapeMismatch, "center dimension mismatch");
    for (std::size_t c = 0; c < d; ++c) scaled[k * d + c] = centers[k][c] / batch.instances[k].temperature;
  }

  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(ns));
  std::vector<double> logits(n), mix(d);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = batch.instances[i];
    for (std::size_t j = 0; j < ns; ++j) {
      const double* x = inst.features.data() + j * d;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        double z = 0.0;
        for (std::size_t c = 0; c < d; ++c) z += x[c] * scaled[k * d + c];
        logits[k] = z;
        peak = std::max(peak, z);
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += std::exp(logits[k] - peak);
      const double lse = peak + std::log(sum);
      total += lse - logits[i];

      std::fill(mix.begin(), mix.end(), 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const double prob = std::exp(logits[k] - lse);
        for (std::size_t c = 0; c < d; ++c) mix[c] += prob * scaled[k * d + c];
      }
      double* g = result.grads[i].data() + j * d;
      for (std::size_t c = 0; c < d; ++c) g[c] = norm * (mix[c] - scaled[i * d + c]);
    }
  }
  result.loss = norm * total;
  if (!std::isfinite(result.loss)) fail(ErrorKind::NonFinite, "contrastive loss is not finite");
  return result;
}

ContrastiveResult contrastive_loss(const InstanceBatch& batch) {
  std::vector<std::vector<double>> centers;
  centers.reserve(batch.instances.size());
  for (const auto& inst : batch.instances) centers.push_back(inst.center);
  return contrastive_objective(batch, centers);
}

void scatter_sample_grads(const InstanceBatch& batch, const ContrastiveResult& result, double weight,
                          FeatureMap& pixel_grads) {
  const auto d = static_cast<std::size_t>(batch.dim);
  require(pixel_grads.channels == batch.dim || batch.instances.empty(), ErrorKind::ShapeMismatch,
          "pixel gradient channels differ from the batch");
  for (std::size_t i = 0; i < batch.instances.size(); ++i) {
    const auto& inst = batch.instances[i];
    for (std::size_t j = 0; j < inst.pixels.size(); ++j) {
      auto gp = pixel_grads.pixel(inst.pixels[j]);
      for (std::size_t c = 0; c < d; ++c) gp[c] += weight * result.grads[i][j * d + c];
    }
  }
}

}  // namespace seg4d
