// Command-line front end: scene generation, the three training schemes,
// single-point evaluation and axis sweeps. Exit codes: 0 success,
// 2 configuration error, 3 missing artifact.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coopv2v/coopv2v.hpp"

namespace {

using namespace coopv2v;

std::vector<EvalMode> parse_modes(const std::string& csv) {
  std::vector<EvalMode> modes;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= csv.size(); ++i) {
    if (i == csv.size() || csv[i] == ',') {
      std::string tok = csv.substr(start, i - start);
      if (!tok.empty()) modes.push_back(parse_eval_mode(tok));
      start = i + 1;
    }
  }
  if (modes.empty()) throw ConfigError("no fusion modes given");
  return modes;
}

std::vector<Scene> load_or_make_test_scenes(const RunConfig& cfg,
                                            const std::string& scenes_path) {
  if (scenes_path.empty()) return make_scenes(cfg, Split::kTest, cfg.test_scenes);
  std::ifstream f(scenes_path);
  if (!f) throw MissingArtifact("missing scene fixture: " + scenes_path);
  return read_scenes_jsonl(f);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
}

int cmd_gen_scenes(const std::string& config_path, const std::string& out,
                   int count, const std::string& split_name) {
  RunConfig cfg = load_config(config_path);
  Split split = Split::kTest;
  if (split_name == "train")
    split = Split::kTrain;
  else if (split_name == "val")
    split = Split::kVal;
  else if (split_name != "test")
    throw ConfigError("gen-scenes: split must be train, val or test");
  if (count <= 0)
    count = split == Split::kTrain  ? cfg.train_scenes
            : split == Split::kVal ? cfg.val_scenes
                                   : cfg.test_scenes;
  std::vector<Scene> scenes = make_scenes(cfg, split, count);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  write_scenes_jsonl(scenes, f);
  std::cout << "wrote " << scenes.size() << " scenes to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, int scheme,
              const std::string& from_checkpoint) {
  RunConfig cfg = load_config(config_path);
  if (scheme > 0) cfg.scheme = scheme;
  cfg.validate();
  ensure_dir(cfg.out_dir);
  if (cfg.scheme == 3) {
    if (from_checkpoint.empty())
      throw ConfigError("train: scheme 3 needs --from-checkpoint "
                        "(a scheme-2 model)");
    PerceptionModel backbone;
    load_store(backbone.params, from_checkpoint);
    std::vector<WeightingLogRow> log;
    WeightingNet net = run_scheme3(cfg, backbone, &log);
    save_store(net.params, cfg.out_dir + "/weighting.ckpt");
    std::ofstream lf(cfg.out_dir + "/train_log.csv");
    write_weighting_log(log, lf);
    std::cout << "saved " << cfg.out_dir << "/weighting.ckpt\n";
    return 0;
  }
  std::vector<TrainLogRow> log;
  PerceptionModel model =
      cfg.scheme == 1 ? run_scheme1(cfg, &log) : run_scheme2(cfg, &log);
  std::string ckpt =
      cfg.out_dir + "/scheme" + std::to_string(cfg.scheme) + ".ckpt";
  save_store(model.params, ckpt);
  std::ofstream lf(cfg.out_dir + "/train_log.csv");
  write_train_log(log, lf);
  std::cout << "saved " << ckpt << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& weighting_path, const std::string& modes_csv,
                 const std::string& out, const std::string& scenes_path,
                 const std::string& trace_path) {
  RunConfig cfg = load_config(config_path);
  std::vector<EvalMode> modes = parse_modes(modes_csv);
  PerceptionModel model;
  load_store(model.params, checkpoint);
  WeightingNet net;
  WeightingNet* netp = nullptr;
  if (!weighting_path.empty()) {
    load_store(net.params, weighting_path);
    netp = &net;
  }
  std::vector<Scene> scenes = load_or_make_test_scenes(cfg, scenes_path);
  ChannelTrace trace;
  std::vector<MetricsRecord> records =
      evaluate(model, netp, modes, cfg, scenes, /*point_tag=*/1,
               trace_path.empty() ? nullptr : &trace);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  write_metrics_csv(records, f);
  if (!trace_path.empty()) {
    std::ofstream tf(trace_path);
    trace.write_csv(tf);
  }
  std::cout << "wrote " << records.size() << " records to " << out << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& checkpoint,
              const std::string& weighting_path, const std::string& axis_name,
              const std::string& modes_csv, const std::string& out,
              const std::string& scenes_path) {
  RunConfig cfg = load_config(config_path);
  SweepAxis axis = parse_sweep_axis(axis_name);
  std::vector<EvalMode> modes = parse_modes(modes_csv);
  PerceptionModel model;
  load_store(model.params, checkpoint);
  WeightingNet net;
  WeightingNet* netp = nullptr;
  if (!weighting_path.empty()) {
    load_store(net.params, weighting_path);
    netp = &net;
  }
  std::vector<Scene> scenes = load_or_make_test_scenes(cfg, scenes_path);
  std::vector<MetricsRecord> records =
      sweep(model, netp, axis, modes, cfg, scenes);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  write_metrics_csv(records, f);
  std::cout << "wrote " << records.size() << " records to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooperative V2V perception simulation stack"};
  app.require_subcommand(1);

  std::string config_path, out, scenes_path, from_checkpoint, checkpoint;
  std::string weighting_path, modes_csv = "ego,unweighted", axis_name;
  std::string trace_path, split_name = "test";
  int scheme = 0, count = 0;

  auto* gen = app.add_subcommand("gen-scenes", "generate a scene fixture");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out)->required();
  gen->add_option("--count", count);
  gen->add_option("--split", split_name);

  auto* train = app.add_subcommand("train", "run a training scheme");
  train->add_option("--config", config_path)->required();
  train->add_option("--scheme", scheme);
  train->add_option("--from-checkpoint", from_checkpoint);

  auto* eval = app.add_subcommand("evaluate", "evaluate one channel point");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--weighting", weighting_path);
  eval->add_option("--modes", modes_csv);
  eval->add_option("--out", out)->required();
  eval->add_option("--scenes", scenes_path);
  eval->add_option("--channel-trace", trace_path);

  auto* sw = app.add_subcommand("sweep", "sweep an axis and dump metrics");
  sw->add_option("--config", config_path)->required();
  sw->add_option("--checkpoint", checkpoint)->required();
  sw->add_option("--weighting", weighting_path);
  sw->add_option("--axis", axis_name)->required();
  sw->add_option("--modes", modes_csv);
  sw->add_option("--out", out)->required();
  sw->add_option("--scenes", scenes_path);

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen_scenes(config_path, out, count, split_name);
    if (train->parsed()) return cmd_train(config_path, scheme, from_checkpoint);
    if (eval->parsed())
      return cmd_evaluate(config_path, checkpoint, weighting_path, modes_csv,
                          out, scenes_path, trace_path);
    if (sw->parsed())
      return cmd_sweep(config_path, checkpoint, weighting_path, axis_name,
                       modes_csv, out, scenes_path);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const coopv2v::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const coopv2v::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
