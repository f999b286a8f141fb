#include "doctest.h"
#include "support.hpp"

#include "seg4d/contrastive.hpp"
#include "seg4d/error.hpp"

using namespace seg4d;

namespace {

/// Batch with explicit samples; centers and temperatures from the samples.
InstanceBatch make_batch(std::mt19937_64& rng, int instances, int ns, int dim, double spread = 1.0) {
  InstanceBatch batch;
  batch.dim = dim;
  batch.samples_per_instance = ns;
  for (int i = 0; i < instances; ++i) {
    InstanceSamples inst;
    inst.label = i + 1;
    const auto base = testing::random_vector(rng, dim, 2.0);
    for (int j = 0; j < ns; ++j) {
      inst.pixels.push_back(i * ns + j);
      const auto noise = testing::random_vector(rng, dim, spread);
      for (int c = 0; c < dim; ++c) inst.features.push_back(base[c] + noise[c]);
    }
    batch.instances.push_back(inst);
  }
  refresh_statistics(batch);
  return batch;
}

/// Loss with centers and temperatures frozen, evaluated on perturbed samples.
double frozen_loss(const InstanceBatch& batch) { return contrastive_loss(batch).loss; }

}  // namespace

TEST_SUITE("contrastive") {

TEST_CASE("build_batch temperature formula") {
  FeatureMap feat(1, 2, 3);
  feat.data = {1, 0, 0, -1, 0, 0};
  SegmentationMap seg(1, 2);
  seg.labels = {4, 4};
  std::mt19937_64 rng(1);
  const auto batch = build_batch(feat, seg, 2, rng);
  REQUIRE(batch.instances.size() == 1);
  const auto& inst = batch.instances[0];
  CHECK(inst.label == 4);
  for (double c : inst.center) CHECK(c == doctest::Approx(0.0));
  CHECK(inst.temperature == doctest::Approx(2.0 / (2.0 * std::log(12.0))));
  CHECK(inst.temperature == doctest::Approx(0.4025).epsilon(1e-3));
}

TEST_CASE("identical samples clamp the temperature to the floor") {
  FeatureMap feat(4, 4, 2);
  std::fill(feat.data.begin(), feat.data.end(), 0.3);
  SegmentationMap seg(4, 4);
  std::fill(seg.labels.begin(), seg.labels.end(), 1);
  std::mt19937_64 rng(1);
  const auto batch = build_batch(feat, seg, 8, rng);
  REQUIRE(batch.instances.size() == 1);
  CHECK(batch.instances[0].temperature == kMinTemperature);
}

TEST_CASE("sampling rules per mask size") {
  FeatureMap feat(6, 6, 1);
  for (int p = 0; p < 36; ++p) feat.data[p] = p;
  SegmentationMap seg(6, 6);
  seg.labels[0] = 3;                                   // 1 pixel: skipped
  for (int p = 1; p < 4; ++p) seg.labels[p] = 5;       // 3 pixels: with replacement
  for (int p = 10; p < 30; ++p) seg.labels[p] = 2;     // 20 pixels: without replacement
  std::mt19937_64 rng(9);
  const auto batch = build_batch(feat, seg, 8, rng);
  REQUIRE(batch.instances.size() == 2);
  CHECK(batch.instances[0].label == 2);
  CHECK(batch.instances[1].label == 5);

  auto distinct = batch.instances[0].pixels;
  std::sort(distinct.begin(), distinct.end());
  CHECK(std::adjacent_find(distinct.begin(), distinct.end()) == distinct.end());
  for (int p : batch.instances[0].pixels) CHECK(seg.labels[p] == 2);
  CHECK(batch.instances[1].pixels.size() == 8);
  for (int p : batch.instances[1].pixels) CHECK(seg.labels[p] == 5);

  for (const auto& inst : batch.instances) {
    double mean = 0.0;
    for (int j = 0; j < 8; ++j) {
      CHECK(inst.features[j] == feat.data[inst.pixels[j]]);
      mean += inst.features[j] / 8.0;
    }
    CHECK(inst.center[0] == doctest::Approx(mean));
    CHECK(inst.temperature >= kMinTemperature);
  }
}

TEST_CASE("identical centers and temperatures give log 2 per sample") {
  InstanceBatch batch;
  batch.dim = 2;
  batch.samples_per_instance = 3;
  for (int i = 0; i < 2; ++i) {
    InstanceSamples inst;
    inst.label = i + 1;
    inst.pixels = {0, 1, 2};
    inst.features = {0.5, 1.0, -1.0, 2.0, 0.0, 0.3};
    inst.center = {0.7, -0.2};
    inst.temperature = 0.4;
    batch.instances.push_back(inst);
  }
  CHECK(contrastive_loss(batch).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("one instance gives zero loss and gradient") {
  std::mt19937_64 rng(2);
  const auto batch = make_batch(rng, 1, 4, 3);
  const auto r = contrastive_loss(batch);
  CHECK(r.loss == 0.0);
  for (double g : r.grads[0]) CHECK(g == 0.0);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(7);
  const auto batch = make_batch(rng, 3, 8, 4, 0.5);
  const auto r = contrastive_loss(batch);
  for (std::size_t i = 0; i < batch.instances.size(); ++i)
    for (std::size_t k = 0; k < batch.instances[i].features.size(); ++k) {
      InstanceBatch plus = batch, minus = batch;
      plus.instances[i].features[k] += 1e-5;
      minus.instances[i].features[k] -= 1e-5;
      const double fd = (frozen_loss(plus) - frozen_loss(minus)) / 2e-5;
      // Relative to the gradient scale so near-zero components are not judged on rounding noise.
      CHECK(std::abs(r.grads[i][k] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-2));
    }
}

TEST_CASE("loss is positive and label-permutation invariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto batch = make_batch(rng, 4, 6, 3);
    const double loss = contrastive_loss(batch).loss;
    CHECK(loss > 0.0);
    auto permuted = batch;
    std::vector<int> order = {2, 0, 3, 1};
    for (int i = 0; i < 4; ++i) {
      permuted.instances[i] = batch.instances[order[i]];
      permuted.instances[i].label = 10 + i;
    }
    CHECK(contrastive_loss(permuted).loss == doctest::Approx(loss).epsilon(1e-13));
  }
}

TEST_CASE("per-sample gradient is a softmax mixture minus the own scaled center") {
  std::mt19937_64 rng(23);
  const auto batch = make_batch(rng, 3, 5, 4);
  const auto r = contrastive_loss(batch);
  double bound = 0.0;
  for (const auto& inst : batch.instances) {
    double n2 = 0.0;
    for (double c : inst.center) n2 += c * c;
    bound = std::max(bound, std::sqrt(n2) / inst.temperature);
  }
  const double scale = 3.0 * 5.0;
  for (const auto& g : r.grads)
    for (int j = 0; j < 5; ++j) {
      double n2 = 0.0;
      for (int c = 0; c < 4; ++c) n2 += g[j * 4 + c] * g[j * 4 + c];
      CHECK(std::sqrt(n2) * scale <= 2.0 * bound + 1e-12);
    }
  // Summed over a closed batch the mixtures stay within the hull of the scaled centers.
  for (int c = 0; c < 4; ++c) {
    double sum = 0.0;
    for (const auto& g : r.grads)
      for (int j = 0; j < 5; ++j) sum += g[j * 4 + c];
    CHECK(std::abs(sum) <= bound + 1e-12);
  }
}

TEST_CASE("non-finite samples are rejected") {
  std::mt19937_64 rng(3);
  auto batch = make_batch(rng, 2, 3, 2);
  batch.instances[1].features[2] = std::nan("");
  try {
    contrastive_loss(batch);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
}

TEST_CASE("scatter_sample_grads accumulates at sample pixels") {
  std::mt19937_64 rng(4);
  const auto batch = make_batch(rng, 2, 3, 2);
  const auto r = contrastive_loss(batch);
  FeatureMap grads(1, 6, 2);
  scatter_sample_grads(batch, r, 2.0, grads);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 2; ++c) CHECK(grads.pixel(i * 3 + j)[c] == doctest::Approx(2.0 * r.grads[i][j * 2 + c]));
}

TEST_CASE("resample keeps centers and temperatures") {
  std::mt19937_64 rng(5);
  FeatureMap feat(5, 5, 2);
  for (double& v : feat.data) v = testing::uniform(rng, -1, 1);
  SegmentationMap seg(5, 5);
  for (int p = 0; p < 25; ++p) seg.labels[p] = 1 + p % 2;
  const auto batch = build_batch(feat, seg, 4, rng);
  FeatureMap other = feat;
  for (double& v : other.data) v *= 3.0;
  const auto again = resample(batch, other);
  for (std::size_t i = 0; i < batch.instances.size(); ++i) {
    CHECK(again.instances[i].center == batch.instances[i].center);
    CHECK(again.instances[i].temperature == batch.instances[i].temperature);
    for (std::size_t k = 0; k < batch.instances[i].features.size(); ++k)
      CHECK(again.instances[i].features[k] == doctest::Approx(3.0 * batch.instances[i].features[k]));
  }
}

TEST_CASE("shape mismatch between features and masks is rejected") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(build_batch(FeatureMap(3, 3, 1), SegmentationMap(3, 4), 4, rng), Error);
}

}  // TEST_SUITE
