#include "seg4d/harness.hpp"

#include "seg4d/error.hpp"
#include "seg4d/seeding.hpp"

#include "json.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace seg4d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_or_fail(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad ") + what + ": " + e.what());
  }
}

struct Fnv64 {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  void add(const std::string& s) { add(s.data(), s.size()); }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  os << text;
  if (!os) fail(ErrorKind::Io, "failed writing " + path);
}

// ---------------------------------------------------------------- config

std::string train_config_json(const TrainConfig& c) {
  const json j = {{"samples_per_instance", c.samples_per_instance},
                  {"iterations", c.iterations ? json(*c.iterations) : json(nullptr)},
                  {"epochs", c.epochs},
                  {"steps_per_frame", c.steps_per_frame},
                  {"lr_start", c.lr_start},
                  {"lr_end", c.lr_end},
                  {"lambda_align", c.lambda_align},
                  {"lambda_semantic", c.lambda_semantic},
                  {"semantic_cutoff_fraction", c.semantic_cutoff_fraction},
                  {"use_tracking", c.use_tracking},
                  {"use_semantic", c.use_semantic},
                  {"visibility_threshold", c.visibility_threshold},
                  {"match_radius", c.match_radius ? json(*c.match_radius) : json(nullptr)},
                  {"sampling", to_string(c.sampling)},
                  {"seed", c.seed},
                  {"projection_seed", c.projection_seed},
                  {"checkpoint_every", c.checkpoint_every},
                  {"checkpoint_dir", c.checkpoint_dir}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse_or_fail(text, "train config");
  TrainConfig c;
  try {
    c.samples_per_instance = j.at("samples_per_instance");
    if (!j.at("iterations").is_null()) c.iterations = j.at("iterations").get<int>();
    c.epochs = j.at("epochs");
    c.steps_per_frame = j.at("steps_per_frame");
    c.lr_start = j.at("lr_start");
    c.lr_end = j.at("lr_end");
    c.lambda_align = j.at("lambda_align");
    c.lambda_semantic = j.at("lambda_semantic");
    c.semantic_cutoff_fraction = j.at("semantic_cutoff_fraction");
    c.use_tracking = j.at("use_tracking");
    c.use_semantic = j.at("use_semantic");
    c.visibility_threshold = j.at("visibility_threshold");
    if (!j.at("match_radius").is_null()) c.match_radius = j.at("match_radius").get<double>();
    c.sampling = sampling_from_string(j.at("sampling").get<std::string>());
    c.seed = j.at("seed");
    c.projection_seed = j.at("projection_seed");
    c.checkpoint_every = j.at("checkpoint_every");
    c.checkpoint_dir = j.at("checkpoint_dir");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string cluster_params_json(const ClusterParams& p) {
  const json j = {{"subset_rate", p.subset_rate},         {"min_samples", p.min_samples},
                  {"min_cluster_size", p.min_cluster_size}, {"selection_epsilon", p.selection_epsilon},
                  {"tau_sim", p.tau_sim},                 {"tau_assign", p.tau_assign},
                  {"normalize", p.normalize},             {"seed", p.seed}};
  return j.dump(2);
}

ClusterParams cluster_params_from_json(const std::string& text) {
  const json j = parse_or_fail(text, "cluster params");
  ClusterParams p;
  try {
    p.subset_rate = j.at("subset_rate");
    p.min_samples = j.at("min_samples");
    p.min_cluster_size = j.at("min_cluster_size");
    p.selection_epsilon = j.at("selection_epsilon");
    p.tau_sim = j.at("tau_sim");
    p.tau_assign = j.at("tau_assign");
    p.normalize = j.at("normalize");
    p.seed = j.at("seed");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad cluster params: ") + e.what());
  }
  p.validate();
  return p;
}

ExperimentConfig ExperimentConfig::defaults(const std::string& spec_name, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.spec = SceneSpec::named(spec_name);
  // The two walkers share a class, so a strong semantic pull merges them; 10 already does.
  cfg.train.lambda_semantic = 3.0;
  cfg.reseed(seed);
  return cfg;
}

void ExperimentConfig::reseed(std::uint64_t global_seed) {
  seed = global_seed;
  spec.seed = global_seed;
  train.seed = derive_seed(global_seed, 0x7a1);
  train.projection_seed = derive_seed(global_seed, 0x7a2);
  cluster.seed = derive_seed(global_seed, 0x7a3);
}

void ExperimentConfig::validate() const {
  if (dataset_dir.empty()) spec.validate();
  train.validate();
  cluster.validate();
  require(tau_fg >= 0.0 && tau_fg <= 1.0, ErrorKind::InvalidArgument, "tau_fg must be in [0, 1]");
}

std::string ExperimentConfig::to_json() const {
  const json j = {{"version", kVersion},
                  {"spec", json::parse(spec_to_json(spec))},
                  {"dataset_dir", dataset_dir},
                  {"train", json::parse(train_config_json(train))},
                  {"cluster", json::parse(cluster_params_json(cluster))},
                  {"tau_fg", tau_fg},
                  {"no_motion", no_motion},
                  {"output_dir", output_dir},
                  {"seed", seed}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = parse_or_fail(text, "experiment config");
  ExperimentConfig cfg;
  try {
    cfg.spec = spec_from_json(j.at("spec").dump());
    cfg.dataset_dir = j.at("dataset_dir");
    cfg.train = train_config_from_json(j.at("train").dump());
    cfg.cluster = cluster_params_from_json(j.at("cluster").dump());
    cfg.tau_fg = j.at("tau_fg");
    cfg.no_motion = j.at("no_motion");
    cfg.output_dir = j.at("output_dir");
    cfg.seed = j.at("seed");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- pipeline

std::vector<SegmentationMap> predict_masks(const Scene& scene, const std::vector<int>& render_labels,
                                           const Dataset& data, double tau_fg) {
  std::vector<SegmentationMap> out;
  out.reserve(static_cast<std::size_t>(data.views()) * data.frames());
  for (int v = 0; v < data.views(); ++v)
    for (int t = 0; t < data.frames(); ++t)
      out.push_back(seg4d::render_labels(scene, render_labels, data.cameras[static_cast<std::size_t>(v)],
                                           data.times[static_cast<std::size_t>(t)], tau_fg));
  return out;
}

double temporal_feature_variance(const Scene& scene, const Dataset& data) {
  require(!data.gt_masks.empty(), ErrorKind::InvalidArgument, "feature variance needs ground-truth masks");
  const auto d = static_cast<std::size_t>(scene.feature_dim);
  const std::size_t k = data.dynamic_ids.size();
  std::vector<std::vector<double>> sum(k, std::vector<double>(d, 0.0)), sq(k, std::vector<double>(d, 0.0));
  std::vector<double> count(k, 0.0);
  for (int v = 0; v < data.views(); ++v)
    for (int t = 0; t < data.frames(); ++t) {
      const auto& gt = data.gt_masks[data.index(v, t)];
      const auto out = render(scene, data.cameras[static_cast<std::size_t>(v)], data.times[static_cast<std::size_t>(t)]);
      for (int p = 0; p < gt.pixels(); ++p) {
        const auto it = std::find(data.dynamic_ids.begin(), data.dynamic_ids.end(), gt.labels[static_cast<std::size_t>(p)]);
        if (it == data.dynamic_ids.end()) continue;
        const auto i = static_cast<std::size_t>(it - data.dynamic_ids.begin());
        const auto f = out.feature_map.pixel(p);
        for (std::size_t c = 0; c < d; ++c) {
          sum[i][c] += f[c];
          sq[i][c] += f[c] * f[c];
        }
        count[i] += 1.0;
      }
    }
  double total = 0.0;
  int present = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (count[i] == 0.0) continue;
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double m = sum[i][c] / count[i];
      var += std::max(0.0, sq[i][c] / count[i] - m * m);
    }
    total += var;
    ++present;
  }
  return present ? total / present : 0.0;
}

MetricReport evaluate_scene(const Scene& trained, const ClusterResult& clusters, const Dataset& data, double tau_fg) {
  require(!data.gt_masks.empty(), ErrorKind::InvalidArgument, "evaluation needs ground-truth masks");
  return evaluate(predict_masks(trained, clusters.render_labels(), data, tau_fg), data.gt_masks, data.dynamic_ids);
}

RunResult run_experiment(const SyntheticData& input, const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult r;
  const Scene start = cfg.no_motion ? strip_motion(input.scene) : input.scene;
  r.trained = train(start, input.dataset, cfg.train);
  r.clusters = segment(r.trained.scene, cfg.cluster);
  r.metrics = evaluate_scene(r.trained.scene, r.clusters, input.dataset, cfg.tau_fg);
  r.sigma2 = temporal_feature_variance(r.trained.scene, input.dataset);
  return r;
}

std::vector<SweepRow> sweep(const Scene& trained, const Dataset& data, const ClusterParams& base,
                            const std::vector<double>& rates, const std::vector<int>& min_samples,
                            const std::vector<double>& epsilons, double tau_fg) {
  std::vector<SweepRow> rows;
  for (double r : rates)
    for (int m : min_samples)
      for (double e : epsilons) {
        ClusterParams p = base;
        p.subset_rate = r;
        p.min_samples = m;
        p.selection_epsilon = e;
        SweepRow row{r, m, e, 0, {}};
        const auto res = segment(trained, p);
        row.clusters = res.cluster_count();
        row.metrics = evaluate_scene(trained, res, data, tau_fg);
        rows.push_back(std::move(row));
      }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "R,M,E,clusters," + MetricReport::csv_header() + "\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%d,%g,%d,", r.subset_rate, r.min_samples, r.selection_epsilon, r.clusters);
    out += buf + r.metrics.csv_row() + "\n";
  }
  return out;
}

std::vector<AblationRow> ablate(const ExperimentConfig& cfg) {
  cfg.validate();
  SyntheticData data;
  if (cfg.dataset_dir.empty()) {
    data = generate_dataset(cfg.spec);
  } else {
    data.dataset = read_dataset(cfg.dataset_dir);
    data.scene = load_scene((fs::path(cfg.dataset_dir) / "scene.s4d").string());
  }
  const std::string checksum = dataset_checksum(data);

  struct Arm {
    const char* name;
    void (*apply)(ExperimentConfig&);
  };
  const Arm arms[] = {
      {"full", [](ExperimentConfig&) {}},
      {"w/o Motion", [](ExperimentConfig& c) { c.no_motion = true; }},
      {"w/o Streaming", [](ExperimentConfig& c) { c.train.sampling = SamplingMode::Random; }},
      {"w/o Tracking", [](ExperimentConfig& c) { c.train.use_tracking = false; }},
      {"w/o DINO", [](ExperimentConfig& c) { c.train.use_semantic = false; }},
  };
  std::vector<AblationRow> rows;
  for (const auto& arm : arms) {
    ExperimentConfig c = cfg;
    arm.apply(c);
    const std::string arm_checksum = dataset_checksum(data);
    if (arm_checksum != checksum) fail(ErrorKind::InvalidArgument, "ablation arms saw different datasets");
    const auto r = run_experiment(data, c);
    rows.push_back({arm.name, r.metrics, r.sigma2, r.clusters.cluster_count(), arm_checksum});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "arm," + MetricReport::csv_header() + ",sigma2,clusters,dataset_checksum\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.9g,%d,", r.sigma2, r.clusters);
    out += r.arm + "," + r.metrics.csv_row() + buf + r.dataset_checksum + "\n";
  }
  return out;
}

std::string dataset_checksum(const SyntheticData& data) {
  Fnv64 h;
  std::ostringstream scene_bytes;
  write_scene(scene_bytes, data.scene);
  h.add(scene_bytes.str());
  h.add(cameras_to_json(data.dataset.cameras));
  h.add(data.dataset.times.data(), data.dataset.times.size() * sizeof(double));
  h.add(data.dataset.dynamic_ids.data(), data.dataset.dynamic_ids.size() * sizeof(int));
  for (const auto* set : {&data.dataset.masks, &data.dataset.gt_masks})
    for (const auto& m : *set) h.add(m.labels.data(), m.labels.size() * sizeof(std::int32_t));
  for (const auto& s : data.dataset.semantic) h.add(s.data.data(), s.data.size() * sizeof(double));
  return h.hex();
}

std::string directory_checksum(const std::string& dir) {
  require(fs::is_directory(dir), ErrorKind::Io, "not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  Fnv64 h;
  for (const auto& f : files) {
    h.add(f);
    h.add(read_text((fs::path(dir) / f).string()));
  }
  return h.hex();
}

// ---------------------------------------------------------------- PCA

Eigen::MatrixXd principal_components(const Eigen::MatrixXd& samples, int count) {
  const Eigen::Index d = samples.cols();
  const Eigen::Index k = std::min<Eigen::Index>(count, d);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, d);
  if (samples.rows() == 0 || k == 0) return out;
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(samples.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - i);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.row(i) = v.transpose();
  }
  return out;
}

double projected_variance(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& basis) {
  if (samples.rows() == 0) return 0.0;
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd proj = (samples.rowwise() - mean) * basis.transpose();
  return proj.squaredNorm() / static_cast<double>(samples.rows());
}

PcaBasis fit_pca(const std::vector<RenderOutput>& renders, double tau_fg) {
  require(!renders.empty(), ErrorKind::InvalidArgument, "pca needs at least one render");
  const int d = renders.front().feature_map.channels;
  std::vector<double> rows;
  for (const auto& r : renders) {
    require(r.feature_map.channels == d, ErrorKind::ShapeMismatch, "renders differ in feature dimension");
    for (int p = 0; p < r.feature_map.pixels(); ++p)
      if (r.alpha_map[static_cast<std::size_t>(p)] >= tau_fg) {
        const auto f = r.feature_map.pixel(p);
        rows.insert(rows.end(), f.begin(), f.end());
      }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size()) / std::max(d, 1);
  const Eigen::MatrixXd samples =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(rows.data(), n, d);

  PcaBasis b;
  b.mean = n > 0 ? Eigen::VectorXd(samples.colwise().mean().transpose()) : Eigen::VectorXd::Zero(d);
  b.components = Eigen::MatrixXd::Zero(3, d);
  const Eigen::MatrixXd pcs = principal_components(samples, 3);
  b.components.topRows(pcs.rows()) = pcs;
  const double var = projected_variance(samples, b.components);
  b.degenerate = n == 0 || var <= 1e-14 * (1.0 + b.mean.squaredNorm());
  if (b.degenerate) {
    b.norm_lo = n ? samples.rowwise().norm().minCoeff() : 0.0;
    b.norm_hi = n ? samples.rowwise().norm().maxCoeff() : 0.0;
    return b;
  }
  const Eigen::MatrixXd proj = (samples.rowwise() - b.mean.transpose()) * b.components.transpose();
  b.lo = proj.colwise().minCoeff().transpose();
  b.hi = proj.colwise().maxCoeff().transpose();
  return b;
}

RgbImage pca_to_rgb(const RenderOutput& render, const PcaBasis& basis, double tau_fg) {
  const auto& fm = render.feature_map;
  RgbImage img{fm.height, fm.width, std::vector<std::uint8_t>(static_cast<std::size_t>(fm.pixels()) * 3, 0)};
  auto to_byte = [](double v, double lo, double hi) {
    const double u = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
    return static_cast<std::uint8_t>(std::lround(255.0 * u));
  };
  for (int p = 0; p < fm.pixels(); ++p) {
    if (render.alpha_map[static_cast<std::size_t>(p)] < tau_fg) continue;
    const auto f = fm.pixel(p);
    const Eigen::Map<const Eigen::VectorXd> x(f.data(), fm.channels);
    auto* px = &img.rgb[static_cast<std::size_t>(p) * 3];
    if (basis.degenerate) {
      px[0] = px[1] = px[2] = to_byte(x.norm(), basis.norm_lo, basis.norm_hi);
      continue;
    }
    const Eigen::Vector3d c = basis.components * (x - basis.mean);
    for (int k = 0; k < 3; ++k) px[k] = to_byte(c(k), basis.lo(k), basis.hi(k));
  }
  return img;
}

// ---------------------------------------------------------------- manifest

void write_manifest(const std::string& dir, const std::string& command, const std::string& config_json,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  json files = json::object();
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
      Fnv64 h;
      h.add(read_text(e.path().string()));
      files[fs::relative(e.path(), dir).generic_string()] = h.hex();
    }
  json j = {{"version", kVersion}, {"command", command}, {"files", files}};
  j["config"] = config_json.empty() ? json(nullptr) : parse_or_fail(config_json, "manifest config");
  for (const auto& [k, v] : extra) j[k] = v;
  write_text((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

}  // namespace seg4d
