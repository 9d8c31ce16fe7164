#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coopv2v/detector.hpp"
#include "coopv2v/metrics.hpp"
#include "coopv2v/transport.hpp"
#include "coopv2v/weighting.hpp"

namespace coopv2v {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything one run needs; parsed from a versioned key = value file.
struct RunConfig {
  std::uint64_t seed = 7;
  int scheme = 1;
  std::string channel = "flat";  // flat | multipath
  FlatChannelConfig flat;
  MultipathChannelConfig multipath;
  SceneConfig scene;
  LossParams loss;
  int train_scenes = 2000;
  int val_scenes = 200;
  int test_scenes = 200;
  int epochs = 20;
  AdamConfig adam;
  SelfSupervisedParams ssl;
  int eval_draws = 5;
  double pathloss_distance = 30.0;  // distance used by the path-loss sweep
  std::string out_dir = "out";

  RunConfig() { flat.snr_db = 15.0; }  // distortion-in-the-loop default

  void validate() const {
    if (scheme < 1 || scheme > 3)
      throw ConfigError("config: scheme must be 1, 2 or 3");
    if (channel != "flat" && channel != "multipath")
      throw ConfigError("config: channel must be flat or multipath");
    if (train_scenes < 1 || val_scenes < 1 || test_scenes < 1)
      throw ConfigError("config: scene counts must be positive");
    if (epochs < 1) throw ConfigError("config: epochs must be positive");
    if (eval_draws < 1) throw ConfigError("config: eval_draws must be positive");
    scene.validate();
    loss.validate();
    ssl.validate();
    flat.validate();
    multipath.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key + ": " + v);
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": " + v);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean value for " + key + ": " + v);
}

/// Shortest round-trip decimal form; byte-stable for identical doubles.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  bool versioned = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value on line " +
                        std::to_string(lineno));
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config: empty key or value on line " +
                        std::to_string(lineno));

    if (key == "config_version") {
      if (detail::parse_int(key, val) != 1)
        throw ConfigError("config: unsupported config_version " + val);
      versioned = true;
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(detail::parse_int(key, val));
    } else if (key == "scheme") {
      cfg.scheme = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "channel") {
      cfg.channel = val;
    } else if (key == "p0") {
      cfg.flat.p0 = detail::parse_double(key, val);
    } else if (key == "distance") {
      cfg.flat.distance = detail::parse_double(key, val);
    } else if (key == "path_loss_exp") {
      cfg.flat.path_loss_exp = detail::parse_double(key, val);
    } else if (key == "rician_k") {
      cfg.flat.rician_k = detail::parse_double(key, val);
      cfg.ssl.rician_k = cfg.flat.rician_k;
    } else if (key == "snr_db") {
      cfg.flat.snr_db = detail::parse_double(key, val);
      cfg.multipath.snr_db = cfg.flat.snr_db;
    } else if (key == "csi_mode") {
      if (val == "perfect")
        cfg.flat.csi_mode = CsiMode::kPerfect;
      else if (val == "perturbed")
        cfg.flat.csi_mode = CsiMode::kPerturbed;
      else
        throw ConfigError("config: csi_mode must be perfect or perturbed");
    } else if (key == "csi_noise_var") {
      cfg.flat.csi_noise_var = detail::parse_double(key, val);
    } else if (key == "snr_at_unit_distance") {
      cfg.flat.snr_at_unit_distance = detail::parse_bool(key, val);
    } else if (key == "num_subcarriers") {
      cfg.multipath.num_subcarriers = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "num_paths") {
      cfg.multipath.num_paths = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "max_delay") {
      cfg.multipath.max_delay = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "cyclic_prefix") {
      cfg.multipath.cyclic_prefix = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "pilot_count") {
      cfg.multipath.pilot_count = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "mp_csi") {
      if (val == "perfect")
        cfg.multipath.csi_mode = MultipathCsiMode::kPerfect;
      else if (val == "ls")
        cfg.multipath.csi_mode = MultipathCsiMode::kLsEstimate;
      else
        throw ConfigError("config: mp_csi must be perfect or ls");
    } else if (key == "carrier_frequency_hz") {
      cfg.multipath.carrier_frequency_hz = detail::parse_double(key, val);
    } else if (key == "world") {
      cfg.scene.world = detail::parse_double(key, val);
    } else if (key == "cavs") {
      cfg.scene.num_cavs = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "min_objects") {
      cfg.scene.min_objects = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "max_objects") {
      cfg.scene.max_objects = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "sensing_radius") {
      cfg.scene.sensing_radius = detail::parse_double(key, val);
    } else if (key == "dropout") {
      cfg.scene.dropout = detail::parse_double(key, val);
    } else if (key == "train_scenes") {
      cfg.train_scenes = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "val_scenes") {
      cfg.val_scenes = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "test_scenes") {
      cfg.test_scenes = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "epochs") {
      cfg.epochs = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "lr") {
      cfg.adam.lr = detail::parse_double(key, val);
    } else if (key == "weight_decay") {
      cfg.adam.weight_decay = detail::parse_double(key, val);
      cfg.ssl.weight_decay = cfg.adam.weight_decay;
    } else if (key == "focal_alpha") {
      cfg.loss.alpha = detail::parse_double(key, val);
    } else if (key == "focal_gamma") {
      cfg.loss.gamma = detail::parse_double(key, val);
    } else if (key == "beta_reg") {
      cfg.loss.beta_reg = detail::parse_double(key, val);
    } else if (key == "beta_cls") {
      cfg.loss.beta_cls = detail::parse_double(key, val);
    } else if (key == "ssl_epochs") {
      cfg.ssl.epochs = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "ssl_lr") {
      cfg.ssl.lr = detail::parse_double(key, val);
    } else if (key == "lambda_pos") {
      cfg.ssl.lambda_pos = detail::parse_double(key, val);
    } else if (key == "lambda_neg") {
      cfg.ssl.lambda_neg = detail::parse_double(key, val);
    } else if (key == "aug_snr_pos_db") {
      cfg.ssl.aug_snr_pos_db = detail::parse_double(key, val);
    } else if (key == "aug_snr_neg_db") {
      cfg.ssl.aug_snr_neg_db = detail::parse_double(key, val);
    } else if (key == "eval_draws") {
      cfg.eval_draws = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "pathloss_distance") {
      cfg.pathloss_distance = detail::parse_double(key, val);
    } else if (key == "out_dir") {
      cfg.out_dir = val;
    } else {
      throw ConfigError("config: unknown key " + key);
    }
  }
  if (!versioned) throw ConfigError("config: missing config_version");
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  return parse_config(f);
}

// ---- metrics records ----

struct MetricsRecord {
  int scheme = 0;
  double snr_db = 0.0;
  double path_loss_n = 0.0;
  int pilot_count = 0;
  std::string fusion_mode;  // ego | unweighted | weighted
  double ap_03 = 0.0;
  double ap_07 = 0.0;
  double feature_mse = 0.0;
  std::optional<double> mean_weight;  // only when weighting is active
};

inline constexpr const char* kMetricsHeader =
    "scheme,snr_db,path_loss_n,pilot_count,fusion_mode,ap_03,ap_07,"
    "feature_mse,mean_weight";

inline std::string metrics_row(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.scheme << ',' << detail::format_double(r.snr_db) << ','
     << detail::format_double(r.path_loss_n) << ',' << r.pilot_count << ','
     << r.fusion_mode << ',' << detail::format_double(r.ap_03) << ','
     << detail::format_double(r.ap_07) << ','
     << detail::format_double(r.feature_mse) << ',';
  if (r.mean_weight) os << detail::format_double(*r.mean_weight);
  return os.str();
}

inline void write_metrics_csv(const std::vector<MetricsRecord>& records,
                              std::ostream& os) {
  os << kMetricsHeader << '\n';
  for (const MetricsRecord& r : records) os << metrics_row(r) << '\n';
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
  std::vector<MetricsRecord> out;
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    throw std::runtime_error("metrics csv: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 9) throw std::runtime_error("metrics csv: bad row");
    MetricsRecord r;
    r.scheme = std::stoi(f[0]);
    r.snr_db = std::stod(f[1]);
    r.path_loss_n = std::stod(f[2]);
    r.pilot_count = std::stoi(f[3]);
    r.fusion_mode = f[4];
    r.ap_03 = std::stod(f[5]);
    r.ap_07 = std::stod(f[6]);
    r.feature_mse = std::stod(f[7]);
    if (!f[8].empty()) r.mean_weight = std::stod(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- datasets ----

enum class Split : std::uint64_t { kTrain = 1, kVal = 2, kTest = 3 };

/// Scenes come from per-scene derived streams, so any scene regenerates
/// independently of the others.
inline std::vector<Scene> make_scenes(const RunConfig& cfg, Split split,
                                      int count) {
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(split),
                        static_cast<std::uint64_t>(i)));
    scenes.push_back(generate_scene(cfg.scene, rng));
  }
  return scenes;
}

// ---- training ----

struct TrainLogRow {
  int epoch = 0;
  double loss = 0.0;
};

inline AdamConfig step_decayed(const AdamConfig& base, int epoch, int epochs) {
  AdamConfig cfg = base;
  if (epochs >= 3) {
    if (epoch >= 2 * epochs / 3)
      cfg.lr = base.lr * 0.25;
    else if (epoch >= epochs / 3)
      cfg.lr = base.lr * 0.5;
  }
  return cfg;
}

namespace detail {

/// Shared supervised loop for schemes 1 and 2; scheme 2 routes every CAV
/// feature through the flat link with a pass-through gradient.
inline PerceptionModel train_supervised(const RunConfig& cfg, bool distort,
                                        std::vector<TrainLogRow>* log) {
  std::vector<Scene> scenes = make_scenes(cfg, Split::kTrain, cfg.train_scenes);
  AnchorGrid grid = make_anchor_grid(cfg.scene.world, PerceptionModel::kFeatCells);
  PerceptionModel model;
  model.init(derive_seed(cfg.seed, 0x696e6974ull));

  Rng order_rng(derive_seed(cfg.seed, 0x6f72646572ull));
  std::vector<int> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    AdamConfig step_cfg = step_decayed(cfg.adam, epoch, cfg.epochs);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(
                                  order_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double loss_sum = 0.0;
    for (int idx : order) {
      const Scene& sc = scenes[static_cast<std::size_t>(idx)];
      Rng chan_rng(derive_seed(cfg.seed, 0xd157027ull,
                               static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(idx)));
      Tape t;
      std::vector<NodeId> feats;
      for (std::size_t a = 0; a < sc.agents.size(); ++a) {
        Tensor raster = make_agent_view(sc, static_cast<int>(a), cfg.scene.grid,
                                        cfg.scene.sensing_radius)
                            .raster;
        NodeId f = model.encode(t, raster, true);
        if (distort && a > 0)
          f = t.passthrough(f, transmit(t.value(f), cfg.flat, chan_rng));
        feats.push_back(f);
      }
      NodeId fused = t.attentive_fuse(feats);
      auto [logits, residuals] = model.head(t, fused);
      DetectionTargets targets = assign_anchors(sc.boxes, grid);
      NodeId loss = t.detection_loss(logits, residuals, targets, cfg.loss);
      t.backward(loss);
      model.params.adam_step(step_cfg);
      loss_sum += t.value(loss)[0];
    }
    if (log)
      log->push_back({epoch, loss_sum / static_cast<double>(scenes.size())});
  }
  return model;
}

}  // namespace detail

/// Scheme 1: supervised end-to-end training over an ideal channel.
inline PerceptionModel run_scheme1(const RunConfig& cfg,
                                   std::vector<TrainLogRow>* log = nullptr) {
  if (cfg.scheme != 1)
    throw ConfigError("run_scheme1: config requests scheme " +
                      std::to_string(cfg.scheme));
  return detail::train_supervised(cfg, /*distort=*/false, log);
}

/// Scheme 2: distortion-in-the-loop — shared features cross the flat
/// Rician link (cfg.flat, 15 dB by default) during training.
inline PerceptionModel run_scheme2(const RunConfig& cfg,
                                   std::vector<TrainLogRow>* log = nullptr) {
  if (cfg.scheme != 2)
    throw ConfigError("run_scheme2: config requests scheme " +
                      std::to_string(cfg.scheme));
  return detail::train_supervised(cfg, /*distort=*/true, log);
}

/// Scheme 3: self-supervised weighting training on top of a frozen
/// scheme-2 backbone.
inline WeightingNet run_scheme3(const RunConfig& cfg, PerceptionModel& backbone,
                                std::vector<WeightingLogRow>* log = nullptr) {
  if (cfg.scheme != 3)
    throw ConfigError("run_scheme3: config requests scheme " +
                      std::to_string(cfg.scheme));
  std::vector<Scene> scenes = make_scenes(cfg, Split::kTrain, cfg.train_scenes);
  return train_weighting(backbone, scenes, cfg.scene, cfg.ssl, cfg.seed, log);
}

// ---- evaluation ----

enum class EvalMode { kEgoOnly, kUnweighted, kWeighted };

inline const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::kEgoOnly: return "ego";
    case EvalMode::kUnweighted: return "unweighted";
    case EvalMode::kWeighted: return "weighted";
  }
  return "?";
}

inline EvalMode parse_eval_mode(const std::string& s) {
  if (s == "ego") return EvalMode::kEgoOnly;
  if (s == "unweighted") return EvalMode::kUnweighted;
  if (s == "weighted") return EvalMode::kWeighted;
  throw ConfigError("unknown fusion mode: " + s);
}

namespace detail {

inline std::vector<Detection> detect_eval(PerceptionModel& model,
                                          const Tensor& f_ego,
                                          const std::vector<Tensor>& shared,
                                          const AnchorGrid& grid) {
  Tape t;
  std::vector<NodeId> feats{t.constant(f_ego)};
  for (const Tensor& f : shared) feats.push_back(t.constant(f));
  NodeId fused = t.attentive_fuse(feats);
  auto [logits, residuals] = model.head(t, fused);
  return decode_head(t.value(logits), t.value(residuals), grid);
}

}  // namespace detail

/// Evaluates one channel operating point for the requested fusion modes
/// over a fixed scene set. Channel draws are shared across modes so the
/// comparison is paired; the ego-only mode never touches the channel.
inline std::vector<MetricsRecord> evaluate(
    PerceptionModel& model, WeightingNet* weighting,
    const std::vector<EvalMode>& modes, const RunConfig& cfg,
    const std::vector<Scene>& scenes, std::uint64_t point_tag,
    ChannelTrace* trace = nullptr) {
  cfg.validate();
  for (EvalMode m : modes)
    if (m == EvalMode::kWeighted && weighting == nullptr)
      throw MissingArtifact("evaluate: weighted mode requested without a "
                            "weighting checkpoint");
  AnchorGrid grid = make_anchor_grid(cfg.scene.world, PerceptionModel::kFeatCells);
  int draws = cfg.eval_draws;

  struct ModePool {
    std::vector<ScoredDetection> dets;
    std::vector<std::vector<Box>> gts;
  };
  std::vector<ModePool> pools(modes.size());
  double mse_sum = 0.0;
  std::int64_t mse_count = 0;
  double w_sum = 0.0;
  std::int64_t w_count = 0;

  bool needs_channel = false;
  for (EvalMode m : modes) needs_channel |= m != EvalMode::kEgoOnly;

  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const Scene& sc = scenes[s];
    Tensor f_ego = model.encode_eval(
        make_agent_view(sc, 0, cfg.scene.grid, cfg.scene.sensing_radius).raster);
    std::vector<Tensor> clean;
    for (std::size_t a = 1; a < sc.agents.size(); ++a)
      clean.push_back(model.encode_eval(
          make_agent_view(sc, static_cast<int>(a), cfg.scene.grid,
                          cfg.scene.sensing_radius)
              .raster));

    // ego-only detections are channel-free; computed once per scene
    std::vector<Detection> ego_dets;
    for (std::size_t mi = 0; mi < modes.size(); ++mi)
      if (modes[mi] == EvalMode::kEgoOnly) {
        if (ego_dets.empty())
          ego_dets = detail::detect_eval(model, f_ego, {}, grid);
        pools[mi].gts.push_back(sc.boxes);
        int frame = static_cast<int>(pools[mi].gts.size()) - 1;
        for (const Detection& d : ego_dets)
          pools[mi].dets.push_back({d.box, d.score, frame, d.cell});
      }

    if (!needs_channel) continue;
    for (int d = 0; d < draws; ++d) {
      Rng chan_rng(derive_seed(cfg.seed, point_tag,
                               static_cast<std::uint64_t>(s),
                               static_cast<std::uint64_t>(d)));
      std::vector<Tensor> received;
      std::vector<double> weights;
      for (const Tensor& f : clean) {
        Tensor f_hat = cfg.channel == "flat"
                           ? transmit(f, cfg.flat, chan_rng)
                           : transmit(f, cfg.multipath, chan_rng, nullptr,
                                      trace);
        double se = 0.0;
        for (std::int64_t i = 0; i < f.size(); ++i) {
          double diff = f_hat[i] - f[i];
          se += diff * diff;
        }
        mse_sum += se / static_cast<double>(f.size());
        ++mse_count;
        if (weighting) {
          double w = weighting->weight_eval(f_ego, f_hat);
          weights.push_back(w);
        }
        received.push_back(std::move(f_hat));
      }
      for (double w : weights) {
        w_sum += w;
        ++w_count;
      }

      for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        if (modes[mi] == EvalMode::kEgoOnly) continue;
        std::vector<Tensor> shared;
        if (modes[mi] == EvalMode::kUnweighted) {
          shared = received;
        } else {
          for (std::size_t k = 0; k < received.size(); ++k)
            shared.push_back(apply_weight(weights[k], received[k]));
        }
        std::vector<Detection> dets =
            detail::detect_eval(model, f_ego, shared, grid);
        pools[mi].gts.push_back(sc.boxes);
        int frame = static_cast<int>(pools[mi].gts.size()) - 1;
        for (const Detection& det : dets)
          pools[mi].dets.push_back({det.box, det.score, frame, det.cell});
      }
    }
  }

  std::vector<MetricsRecord> records;
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    MetricsRecord r;
    r.scheme = cfg.scheme;
    r.snr_db = cfg.channel == "flat" ? cfg.flat.snr_db : cfg.multipath.snr_db;
    r.path_loss_n = cfg.channel == "flat" ? cfg.flat.path_loss_exp : 0.0;
    r.pilot_count = cfg.channel == "multipath" ? cfg.multipath.pilot_count : 0;
    r.fusion_mode = eval_mode_name(modes[mi]);
    r.ap_03 = average_precision(pools[mi].dets, pools[mi].gts, 0.3);
    r.ap_07 = average_precision(pools[mi].dets, pools[mi].gts, 0.7);
    if (modes[mi] != EvalMode::kEgoOnly && mse_count > 0)
      r.feature_mse = mse_sum / static_cast<double>(mse_count);
    if (modes[mi] == EvalMode::kWeighted && w_count > 0)
      r.mean_weight = w_sum / static_cast<double>(w_count);
    records.push_back(std::move(r));
  }
  return records;
}

// ---- sweeps ----

enum class SweepAxis { kSnr, kPathLoss, kPilots };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "snr") return SweepAxis::kSnr;
  if (s == "pathloss") return SweepAxis::kPathLoss;
  if (s == "pilots") return SweepAxis::kPilots;
  throw ConfigError("unknown sweep axis: " + s);
}

/// SNR -10..30 dB step 5, path-loss exponent 1..3 step 0.25 (flat link,
/// noise calibrated at unit distance), or pilots {16, 64} (OFDM link).
inline std::vector<MetricsRecord> sweep(PerceptionModel& model,
                                        WeightingNet* weighting,
                                        SweepAxis axis,
                                        const std::vector<EvalMode>& modes,
                                        const RunConfig& cfg,
                                        const std::vector<Scene>& scenes) {
  std::vector<MetricsRecord> records;
  auto run_point = [&](const RunConfig& point_cfg, std::uint64_t tag) {
    std::vector<MetricsRecord> r =
        evaluate(model, weighting, modes, point_cfg, scenes, tag);
    records.insert(records.end(), r.begin(), r.end());
  };
  switch (axis) {
    case SweepAxis::kSnr: {
      for (int i = 0; i <= 8; ++i) {
        double snr = -10.0 + 5.0 * i;
        RunConfig p = cfg;
        p.flat.snr_db = snr;
        p.multipath.snr_db = snr;
        run_point(p, 0x100u + static_cast<std::uint64_t>(i));
      }
      break;
    }
    case SweepAxis::kPathLoss: {
      for (int i = 0; i <= 8; ++i) {
        double n = 1.0 + 0.25 * i;
        RunConfig p = cfg;
        p.channel = "flat";
        p.flat.path_loss_exp = n;
        p.flat.distance = cfg.pathloss_distance;
        p.flat.snr_at_unit_distance = true;
        run_point(p, 0x200u + static_cast<std::uint64_t>(i));
      }
      break;
    }
    case SweepAxis::kPilots: {
      int i = 0;
      for (int pilots : {16, 64}) {
        RunConfig p = cfg;
        p.channel = "multipath";
        p.multipath.pilot_count = pilots;
        p.multipath.csi_mode = MultipathCsiMode::kLsEstimate;
        run_point(p, 0x300u + static_cast<std::uint64_t>(i++));
      }
      break;
    }
  }
  return records;
}

// ---- artifact I/O ----

inline void save_store(const ParamStore& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  store.save(f);
}

inline void load_store(ParamStore& store, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("missing checkpoint: " + path);
  store.load(f);
}

inline void write_train_log(const std::vector<TrainLogRow>& rows,
                            std::ostream& os) {
  os << "epoch,loss\n";
  for (const TrainLogRow& r : rows)
    os << r.epoch << ',' << detail::format_double(r.loss) << '\n';
}

inline void write_weighting_log(const std::vector<WeightingLogRow>& rows,
                                std::ostream& os) {
  os << "epoch,loss,mean_W_pos,mean_W_neg\n";
  for (const WeightingLogRow& r : rows)
    os << r.epoch << ',' << detail::format_double(r.loss) << ','
       << detail::format_double(r.mean_w_pos) << ','
       << detail::format_double(r.mean_w_neg) << '\n';
}

}  // namespace coopv2v
