#include "doctest.h"
#include "support.hpp"

#include "seg4d/error.hpp"
#include "seg4d/synth.hpp"
#include "seg4d/trainer.hpp"

#include <filesystem>

using namespace seg4d;

namespace {

const SyntheticData& two_instance_data() {
  static const SyntheticData data = generate_dataset(SceneSpec::two_instance());
  return data;
}

/// Mean cosine between features of primitive pairs, split by ground-truth tag.
std::pair<double, double> intra_inter_cosine(const Scene& scene) {
  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < scene.size(); i += 7)
    for (std::size_t j = i + 1; j < scene.size(); j += 5) {
      const auto& a = scene.primitives[i];
      const auto& b = scene.primitives[j];
      double dot = 0, na = 0, nb = 0;
      for (std::size_t c = 0; c < a.feature.size(); ++c) {
        dot += a.feature[c] * b.feature[c];
        na += a.feature[c] * a.feature[c];
        nb += b.feature[c] * b.feature[c];
      }
      const double cosine = dot / std::sqrt(na * nb);
      if (a.gt_instance == b.gt_instance) {
        intra += cosine;
        ++n_intra;
      } else {
        inter += cosine;
        ++n_inter;
      }
    }
  return {intra / n_intra, inter / n_inter};
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("streaming stream visits frames in order with every view") {
  std::mt19937_64 rng(1);
  const auto one = build_stream(1, 3, SamplingMode::Streaming, 1, rng);
  CHECK(one == std::vector<StreamKey>{{0, 0}, {0, 1}, {0, 2}});

  const auto s = build_stream(4, 5, SamplingMode::Streaming, 2, rng);
  REQUIRE(s.size() == 40);
  for (int e = 0; e < 2; ++e)
    for (int t = 0; t < 5; ++t) {
      std::vector<int> views;
      for (int k = 0; k < 4; ++k) {
        const auto& key = s[e * 20 + t * 4 + k];
        CHECK(key.frame == t);
        views.push_back(key.view);
      }
      std::sort(views.begin(), views.end());
      CHECK(views == std::vector<int>{0, 1, 2, 3});
    }
  for (std::size_t k = 1; k < 20; ++k) CHECK(s[k].frame >= s[k - 1].frame);
}

TEST_CASE("random stream is a permutation of the streaming multiset") {
  std::mt19937_64 a(3), b(3), c(4);
  auto streaming = build_stream(3, 6, SamplingMode::Streaming, 2, a);
  auto random = build_stream(3, 6, SamplingMode::Random, 2, b);
  CHECK(random != streaming);
  auto key_less = [](const StreamKey& x, const StreamKey& y) {
    return std::tie(x.frame, x.view) < std::tie(y.frame, y.view);
  };
  auto sorted_random = random;
  std::sort(streaming.begin(), streaming.end(), key_less);
  std::sort(sorted_random.begin(), sorted_random.end(), key_less);
  CHECK(sorted_random == streaming);
  std::mt19937_64 b2(3);
  CHECK(build_stream(3, 6, SamplingMode::Random, 2, b2) == random);
  CHECK(build_stream(3, 6, SamplingMode::Random, 2, c) != random);
}

TEST_CASE("adam first step and zero gradient") {
  std::vector<double> params = {1.0, -2.0, 0.5};
  const std::vector<double> grads = {0.3, -4.0, 0.0};
  AdamState state;
  optimizer_step(params, grads, state, 0.1);
  // m_hat = g, v_hat = g^2 after bias correction, so the step is lr g / (|g| + eps).
  for (int i = 0; i < 3; ++i) {
    const double g = grads[i];
    const double expected = std::vector<double>{1.0, -2.0, 0.5}[i] - 0.1 * g / (std::abs(g) + 1e-8);
    CHECK(params[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(state.step == 1);

  const auto before = params;
  const auto m = state.m, v = state.v;
  optimizer_step(params, std::vector<double>(3, 0.0), state, 0.1);
  for (int i = 0; i < 3; ++i) {
    CHECK(state.m[i] == doctest::Approx(0.9 * m[i]));
    CHECK(state.v[i] == doctest::Approx(0.999 * v[i]));
  }
  std::vector<double> fresh = {1.0, 2.0};
  AdamState zero_state;
  optimizer_step(fresh, std::vector<double>{0.0, 0.0}, zero_state, 0.1);
  CHECK(fresh == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(optimizer_step(fresh, std::vector<double>{0.0}, zero_state, 0.1), Error);
}

TEST_CASE("learning rate decays exponentially between the endpoints") {
  TrainConfig cfg;
  CHECK(learning_rate(cfg, 0, 100) == cfg.lr_start);
  CHECK(learning_rate(cfg, 99, 100) == doctest::Approx(cfg.lr_end).epsilon(1e-12));
  const double mid = learning_rate(cfg, 50, 101);
  CHECK(mid == doctest::Approx(std::sqrt(cfg.lr_start * cfg.lr_end)).epsilon(1e-12));
  for (int s = 1; s < 100; ++s) CHECK(learning_rate(cfg, s, 100) < learning_rate(cfg, s - 1, 100));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.lr_end = bad.lr_start;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.lambda_align = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.semantic_cutoff_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(sampling_from_string("random") == SamplingMode::Random);
  CHECK(std::string(to_string(SamplingMode::Streaming)) == "streaming");
  CHECK_THROWS_AS(sampling_from_string("shuffled"), Error);
}

TEST_CASE("zero iterations leave features unchanged") {
  const auto& data = two_instance_data();
  TrainConfig cfg;
  cfg.iterations = 0;
  const auto r = train(data.scene, data.dataset, cfg);
  CHECK(gather_features(r.scene) == gather_features(data.scene));
  CHECK(r.log.empty());
}

TEST_CASE("zero regularizer weights reduce the total loss to the clustering loss") {
  const auto& data = two_instance_data();
  TrainConfig cfg;
  cfg.iterations = 12;
  cfg.lambda_align = 0;
  cfg.lambda_semantic = 0;
  const auto r = train(data.scene, data.dataset, cfg);
  REQUIRE(r.log.size() == 12);
  for (const auto& row : r.log) {
    CHECK(row.loss_total == row.loss_cc);
    CHECK(row.loss_align == 0.0);
    CHECK(row.loss_semantic == 0.0);
  }
}

TEST_CASE("step gradient assembly and end-to-end finite differences") {
  const auto& data = two_instance_data();
  Scene scene = data.scene;
  std::mt19937_64 rng(12);
  for (auto& g : scene.primitives) g.feature = testing::random_vector(rng, scene.feature_dim, 0.3);
  const auto proj = semantic_projection(scene.feature_dim, data.dataset.semantic.front().channels, 7);

  // Artificial pairs so the tracking term is non-trivial on a static scene.
  std::vector<MatchPair> pairs;
  for (int k = 0; k < 40; ++k) pairs.push_back({k, k + 200, 0.0, 1.0 / 3.0, 0.0});
  const StreamKey key{1, 2};
  const auto inputs = prepare_step(scene, data.dataset, key, proj, true, &pairs, 16, rng);
  const double l1 = 100.0, l2 = 10.0;
  const auto g = step_gradients(scene, inputs, l1, l2);
  for (std::size_t i = 0; i < g.total.size(); ++i)
    CHECK(std::abs(g.total[i] - (g.cc[i] + l1 * g.align[i] + l2 * g.semantic[i])) <= 1e-12 * (1 + std::abs(g.total[i])));

  const Camera& cam = data.dataset.cameras[1];
  const double t = data.dataset.times[2];
  CHECK(step_total_loss(scene, cam, t, inputs, l1, l2) == doctest::Approx(g.loss_total).epsilon(1e-12));

  Scene plus = scene, minus = scene;
  const double h = 1e-4;
  double directional = 0.0;
  const auto dir = testing::random_vector(rng, static_cast<int>(g.total.size()));
  auto fp = gather_features(scene), fm = fp;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    fp[i] += h * dir[i];
    fm[i] -= h * dir[i];
    directional += g.total[i] * dir[i];
  }
  scatter_features(plus, fp);
  scatter_features(minus, fm);
  const double fd = (step_total_loss(plus, cam, t, inputs, l1, l2) - step_total_loss(minus, cam, t, inputs, l1, l2)) / (2 * h);
  CHECK(testing::relative_error(directional, fd) <= 1e-4);
}

TEST_CASE("training is deterministic and separates instances") {
  const auto& data = two_instance_data();
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.checkpoint_every = 50;
  std::vector<std::pair<double, double>> curve = {intra_inter_cosine(data.scene)};
  const auto a = train(data.scene, data.dataset, cfg, [&](int, const Scene& s) { curve.push_back(intra_inter_cosine(s)); });
  const auto b = train(data.scene, data.dataset, cfg);
  CHECK(gather_features(a.scene) == gather_features(b.scene));
  CHECK(loss_log_csv(a.log) == loss_log_csv(b.log));

  REQUIRE(curve.size() == 5);
  // Features converge within ~50 steps; after that the semantic cutoff and the
  // per-step sampling move the cosines by less than 1e-3.
  for (std::size_t k = 1; k < curve.size(); ++k) {
    CHECK(curve[k].first > curve[k - 1].first - 1e-3);
    CHECK(curve[k].second < curve[k - 1].second + 1e-3);
  }
  CHECK(curve[1].first > curve[0].first + 0.5);
  CHECK(curve[1].second < curve[0].second - 0.5);
  CHECK(curve.back().first > curve.back().second + 1.0);
  // geometry untouched
  for (std::size_t i = 0; i < a.scene.size(); ++i) {
    CHECK(a.scene.primitives[i].mu_x == data.scene.primitives[i].mu_x);
    CHECK(a.scene.primitives[i].opacity == data.scene.primitives[i].opacity);
  }
}

TEST_CASE("semantic term is active only during the cutoff fraction") {
  const auto& data = two_instance_data();
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.semantic_cutoff_fraction = 0.3;
  const auto r = train(data.scene, data.dataset, cfg);
  for (const auto& row : r.log) {
    if (row.step < 6) CHECK(row.loss_semantic > 0.0);
    else CHECK(row.loss_semantic == 0.0);
  }
  cfg.use_semantic = false;
  for (const auto& row : train(data.scene, data.dataset, cfg).log) CHECK(row.loss_semantic == 0.0);
}

TEST_CASE("checkpoints and optimizer state files") {
  const auto& data = two_instance_data();
  const auto dir = std::filesystem::temp_directory_path() / "seg4d_trainer_ckpt";
  std::filesystem::remove_all(dir);
  TrainConfig cfg;
  cfg.iterations = 6;
  cfg.checkpoint_every = 3;
  cfg.checkpoint_dir = dir.string();
  const auto r = train(data.scene, data.dataset, cfg);
  CHECK(std::filesystem::exists(dir / "step_3.scene"));
  CHECK(std::filesystem::exists(dir / "step_6.adam"));
  const auto state = load_optimizer_state((dir / "step_6.adam").string());
  CHECK(state.step == r.optimizer.step);
  CHECK(state.m == r.optimizer.m);
  CHECK(state.v == r.optimizer.v);
  CHECK(gather_features(load_scene((dir / "step_6.scene").string())) == gather_features(r.scene));
  CHECK_THROWS_AS(load_optimizer_state((dir / "step_3.scene").string()), Error);

  const auto csv = loss_log_csv(r.log);
  CHECK(csv.rfind("step,lr,L_CC,L_align,L_DINO,L_total\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  std::filesystem::remove_all(dir);
}

TEST_CASE("streaming and random arms differ only in sampling") {
  const auto& data = two_instance_data();
  TrainConfig streaming;
  streaming.iterations = 16;
  TrainConfig random = streaming;
  random.sampling = SamplingMode::Random;
  const auto a = train(data.scene, data.dataset, streaming);
  const auto b = train(data.scene, data.dataset, random);
  bool frames_differ = false;
  for (std::size_t k = 0; k < a.log.size(); ++k) frames_differ |= a.log[k].frame != b.log[k].frame;
  CHECK(frames_differ);
  for (std::size_t k = 1; k < a.log.size(); ++k) CHECK(a.log[k].frame >= a.log[k - 1].frame);
}

}  // TEST_SUITE
