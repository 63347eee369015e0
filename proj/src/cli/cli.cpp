#include "ssm/cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssm/errors.hpp"
#include "ssm/harness/stream.hpp"
#include "ssm/harness/train.hpp"
#include "ssm/synthdata/ssmf.hpp"

namespace ssm::cli {

namespace fs = std::filesystem;
using harness::RunConfig;
using nlohmann::json;

namespace {

// Options shared by the subcommands that take a config.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_path, "JSON run config; missing keys keep their defaults")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", common.seed, "seed (overrides SSM_SEED and the config)");
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("SSM_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  std::uint64_t v = 0;
  std::size_t used = 0;
  try {
    v = std::stoull(raw, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || raw[used] != '\0' || raw[0] == '-') throw ArgumentError("SSM_SEED must be an unsigned integer");
  return v;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::bad_header, path.string() + ": " + e.what());
  }
}

// File config, then SSM_SEED, then --seed.
RunConfig resolve_config(const Common& common, RunConfig base) {
  RunConfig config = base;
  if (!common.config_path.empty()) {
    json patch = harness::to_json(base);
    patch.merge_patch(read_json_file(common.config_path));
    config = harness::config_from_json(patch);
  }
  if (const auto s = env_seed()) config.seed = *s;
  if (common.seed) config.seed = *common.seed;
  config.validate();
  return config;
}

void echo_config(std::ostream& err, const RunConfig& config) {
  err << json{{"resolved_config", harness::to_json(config)}, {"seed", config.seed}}.dump() << '\n';
}

json artifact_header(const RunConfig& config) { return {{"config", harness::to_json(config)}, {"seed", config.seed}}; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseErrorKind::io, "cannot write " + path.string());
  out << text;
}

json matrix_json(const num::Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) rows.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  return rows;
}

num::Tensor matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty() || rows.front().empty()) throw ParseError(ParseErrorKind::bad_header, "empty matrix");
  num::Tensor t = num::Tensor::matrix(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t.cols()) throw ParseError(ParseErrorKind::bad_header, "ragged matrix");
    std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  }
  return t;
}

json world_json(const synth::WorldSpec& w) {
  return {{"classes", w.classes},
          {"fps", w.fps},
          {"sigma", w.sigma},
          {"transition", matrix_json(w.transition)},
          {"centroids", matrix_json(w.centroids)}};
}

synth::WorldSpec world_from_json(const json& j) {
  synth::WorldSpec w;
  try {
    const auto& body = j.contains("world") ? j.at("world") : j;
    w.classes = body.at("classes").get<std::size_t>();
    w.fps = body.at("fps").get<double>();
    w.sigma = body.at("sigma").get<double>();
    w.transition = matrix_from_json(body.at("transition"));
    w.centroids = matrix_from_json(body.at("centroids"));
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::bad_header, std::string("world file: ") + e.what());
  }
  try {
    w.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(ParseErrorKind::bad_header, std::string("world file: ") + e.what());
  }
  return w;
}

std::vector<synth::Episode> load_episodes(const std::vector<std::string>& paths) {
  std::vector<synth::Episode> eps;
  for (const auto& p : paths) eps.push_back(synth::load_feature_file(p));
  return eps;
}

std::string episode_name(std::size_t i) {
  std::ostringstream s;
  s << "episode_" << std::setw(3) << std::setfill('0') << i << ".ssmf";
  return s.str();
}

// --- subcommands --------------------------------------------------------

struct GenData {
  Common common;
  std::string out = "data";
  std::size_t episodes = 4;
  std::size_t length = 2000;
  std::size_t horizon = 0;
  std::uint64_t world_seed = 7;
};

int gen_data(const GenData& o, std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(o.common, RunConfig{});
  if (o.horizon > 0) config.horizon = o.horizon;
  echo_config(err, config);
  const auto world = synth::default_world(o.world_seed);
  const std::size_t horizon = o.horizon > 0 ? o.horizon : world.default_horizon();
  fs::create_directories(o.out);
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32)};
  std::vector<std::uint32_t> seeds(o.episodes);
  seq.generate(seeds.begin(), seeds.end());
  json files = json::array();
  for (std::size_t i = 0; i < o.episodes; ++i) {
    const auto ep = synth::generate_episode(world, o.length, seeds[i], horizon);
    const fs::path path = fs::path(o.out) / episode_name(i);
    synth::write_feature_file(path, ep);
    files.push_back({{"path", path.filename().string()}, {"seed", seeds[i]}});
  }
  json meta = artifact_header(config);
  meta["world_seed"] = o.world_seed;
  meta["horizon"] = horizon;
  meta["length"] = o.length;
  meta["episodes"] = files;
  meta["world"] = world_json(world);
  write_text(fs::path(o.out) / "world.json", meta.dump(2) + "\n");
  out << json{{"out", o.out}, {"episodes", o.episodes}, {"sigma", world.sigma}}.dump() << '\n';
  return kOk;
}

struct Train {
  Common common;
  std::string out = "run";
  std::vector<std::string> data;
  std::vector<std::string> eval_data;
  std::size_t episodes = 8;
  std::size_t length = 2000;
  std::size_t horizon = 0;
  std::optional<std::size_t> steps;
};

int train(const Train& o, std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(o.common, RunConfig{});
  if (o.horizon > 0) config.horizon = o.horizon;
  if (o.steps) config.steps = *o.steps;
  config.validate();
  echo_config(err, config);

  std::vector<synth::Episode> train_eps, eval_eps;
  if (!o.data.empty()) {
    train_eps = load_episodes(o.data);
    eval_eps = load_episodes(o.eval_data);
  } else {
    harness::DatasetOptions d;
    d.data_seed = config.seed;
    d.train_episodes = o.episodes;
    d.train_length = o.length;
    d.test_episodes = 1;
    d.horizon = config.horizon;
    auto ds = harness::synthetic_dataset(d);
    train_eps = std::move(ds.train);
    eval_eps = o.eval_data.empty() ? std::move(ds.test) : load_episodes(o.eval_data);
  }

  json log = json::array();
  const auto result = harness::train(config, train_eps, eval_eps.empty() ? nullptr : &eval_eps,
                                     [&](const harness::TrainLogEntry& e) {
                                       const json j = harness::to_json(e);
                                       err << j.dump() << '\n';
                                       log.push_back(j);
                                     });
  fs::create_directories(o.out);
  const fs::path ckpt = fs::path(o.out) / "checkpoint.ssmc";
  harness::save_checkpoint(ckpt, result.checkpoint);
  json artifact = artifact_header(config);
  artifact["log"] = log;
  write_text(fs::path(o.out) / "train_log.json", artifact.dump(2) + "\n");
  out << json{{"checkpoint", ckpt.string()}, {"steps", result.checkpoint.step}}.dump() << '\n';
  return kOk;
}

struct Eval {
  std::string checkpoint;
  std::string scores;
  std::string world;
  std::string out;
  std::vector<std::string> data;
  std::optional<std::uint64_t> seed;
};

// A score file is an SSMF file whose frames hold class scores: C + 1
// columns scored against both label streams, or 2 (C + 1) columns with the
// detection scores first.
int eval(const Eval& o, std::ostream& out, std::ostream& err) {
  if (o.checkpoint.empty() == o.scores.empty()) throw ArgumentError("eval: give exactly one of --checkpoint or --scores");
  json result;
  if (!o.scores.empty()) {
    const auto ep = synth::load_feature_file(o.scores);
    if (!ep.has_labels()) throw ArgumentError("eval: score file carries no labels");
    const std::size_t dim = ep.features.cols();
    const bool split = dim % 2 == 0 && dim >= 4 &&
                       std::all_of(ep.y_d.begin(), ep.y_d.end(), [&](int y) { return y < static_cast<int>(dim / 2); });
    num::Tensor p_d = ep.features, p_a = ep.features;
    if (split) {
      p_d = num::Tensor::matrix(ep.length(), dim / 2);
      p_a = num::Tensor::matrix(ep.length(), dim / 2);
      for (std::size_t t = 0; t < ep.length(); ++t) {
        std::copy(ep.features.row(t).begin(), ep.features.row(t).begin() + static_cast<std::ptrdiff_t>(dim / 2),
                  p_d.row(t).begin());
        std::copy(ep.features.row(t).begin() + static_cast<std::ptrdiff_t>(dim / 2), ep.features.row(t).end(),
                  p_a.row(t).begin());
      }
    }
    result["scores"] = fs::path(o.scores).filename().string();
    result["seed"] = o.seed.value_or(0);
    result["metrics"] = harness::to_json(harness::score_predictions(p_d, p_a, ep.y_d, ep.y_a));
  } else {
    if (o.data.empty()) throw ArgumentError("eval: no SSMF inputs given");
    auto ckpt = harness::load_checkpoint(o.checkpoint);
    if (o.seed) ckpt.config.seed = *o.seed;
    echo_config(err, ckpt.config);
    const auto eps = load_episodes(o.data);
    result = artifact_header(ckpt.config);
    result["checkpoint"] = fs::path(o.checkpoint).filename().string();
    json inputs = json::array();
    for (const auto& p : o.data) inputs.push_back(fs::path(p).filename().string());
    result["inputs"] = inputs;
    result["metrics"] = harness::to_json(harness::evaluate(ckpt.config, ckpt.params, eps));
    if (!o.world.empty()) {
      const auto world = world_from_json(read_json_file(o.world));
      const auto oracle = harness::evaluate_oracle(world, eps);
      result["oracle"] = harness::to_json(oracle);
      const auto& m = result["metrics"];
      result["ratio_to_oracle"] = {
          {"detection_accuracy", m["detection_accuracy"].get<double>() / oracle.detection_accuracy},
          {"anticipation_accuracy", m["anticipation_accuracy"].get<double>() / oracle.anticipation_accuracy}};
    }
  }
  const std::string text = result.dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    write_text(o.out, text);
  }
  return kOk;
}

struct Stream {
  std::string checkpoint;
  std::string input;
  std::string out;
};

std::vector<double> parse_frame_line(const std::string& line, std::size_t line_no) {
  std::vector<double> v;
  std::string token;
  std::istringstream s(line);
  while (s >> token) {
    std::size_t start = 0;
    while (start <= token.size()) {
      const std::size_t comma = token.find(',', start);
      const std::string part = token.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) {
        std::size_t used = 0;
        double x = 0.0;
        try {
          x = std::stod(part, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != part.size()) {
          throw ParseError(ParseErrorKind::bad_header, "stdin line " + std::to_string(line_no) + ": '" + part +
                                                           "' is not a number");
        }
        v.push_back(x);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return v;
}

int stream(const Stream& o, std::ostream& out, std::ostream& err, std::istream& in) {
  const auto ckpt = harness::load_checkpoint(o.checkpoint);
  echo_config(err, ckpt.config);
  std::ofstream file;
  std::ostream* sink = &out;
  if (!o.out.empty()) {
    const fs::path path(o.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    file.open(path, std::ios::trunc);
    if (!file) throw ParseError(ParseErrorKind::io, "cannot write " + o.out);
    sink = &file;
    json meta = artifact_header(ckpt.config);
    meta["checkpoint"] = fs::path(o.checkpoint).filename().string();
    meta["input"] = o.input == "-" ? "stdin" : fs::path(o.input).filename().string();
    write_text(o.out + ".meta.json", meta.dump(2) + "\n");
  }
  harness::Streamer streamer(ckpt);
  std::size_t t = 0;
  auto emit = [&](std::span<const double> frame) {
    const auto pair = streamer.push(frame);
    *sink << json{{"t", t++}, {"seed", ckpt.config.seed}, {"p_d", pair.p_d}, {"p_a", pair.p_a}}.dump() << '\n';
  };
  if (o.input == "-") {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto frame = parse_frame_line(line, line_no);
      if (frame.empty()) continue;
      emit(frame);
    }
  } else {
    const auto ep = synth::load_feature_file(o.input);
    for (std::size_t r = 0; r < ep.length(); ++r) emit(ep.features.row(r));
  }
  sink->flush();
  return kOk;
}

struct Ablate {
  Common common;
  std::string out;
  std::vector<int> cases = {1, 2, 3, 4, 5};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t episodes = 8;
  std::size_t length = 2000;
  std::size_t test_episodes = 4;
  std::size_t horizon = 0;
  std::optional<std::size_t> steps;
};

int ablate(const Ablate& o, std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(o.common, RunConfig{});
  if (o.horizon > 0) config.horizon = o.horizon;
  if (o.steps) config.steps = *o.steps;
  config.validate();
  echo_config(err, config);
  for (int c : o.cases) harness::interaction_case(c);
  harness::DatasetOptions d;
  d.data_seed = config.seed;
  d.train_episodes = o.episodes;
  d.train_length = o.length;
  d.test_episodes = o.test_episodes;
  d.horizon = config.horizon;
  const auto data = harness::synthetic_dataset(d);
  const auto rows = harness::run_ablation(config, o.cases, o.seeds, data, [&](const harness::AblationRow& r) {
    err << "case " << r.case_number << " seed " << r.seed << ": detection " << r.detection_accuracy
        << ", anticipation " << r.anticipation_accuracy << '\n';
  });
  const std::string text = "# " + artifact_header(config).dump() + "\n" + harness::ablation_csv(rows);
  if (o.out.empty()) {
    out << text;
  } else {
    write_text(o.out, text);
  }
  return kOk;
}

struct GradCheck {
  Common common;
  double eps = 1e-4;
  double threshold = 1e-4;
};

int grad_check(const GradCheck& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(o.common, harness::toy_config());
  echo_config(err, config);
  const auto report = harness::grad_check_model(config, o.eps);
  json j = artifact_header(config);
  j["eps"] = o.eps;
  j["max_relative_error"] = report.max_relative_error;
  j["worst_parameter"] = report.worst_parameter;
  j["worst_index"] = report.worst_index;
  j["checked"] = report.checked;
  j["pass"] = report.max_relative_error < o.threshold;
  out << j.dump() << '\n';
  return report.max_relative_error < o.threshold ? kOk : kNumericError;
}

struct DumpAttention {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::optional<std::size_t> frame;
};

int dump_attention(const DumpAttention& o, std::ostream& out, std::ostream& err) {
  const auto ckpt = harness::load_checkpoint(o.checkpoint);
  echo_config(err, ckpt.config);
  const auto ep = synth::load_feature_file(o.input);
  const std::size_t t = o.frame.value_or(ep.length() - 1);
  const auto rows = harness::dump_attention(ckpt.config, ckpt.params, ep.features, t);
  std::ostringstream csv;
  csv.precision(17);
  csv << "# " << artifact_header(ckpt.config).dump() << '\n';
  csv << "# frame " << t << "; frame indices are relative to it\n";
  csv << "anchor_index,frame_index,weight\n";
  for (const auto& r : rows) csv << r.anchor_index << ',' << r.frame_index << ',' << r.weight << '\n';
  if (o.out.empty()) {
    out << csv.str();
  } else {
    write_text(o.out, csv.str());
  }
  return kOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"State-specific model for online action detection and anticipation", "ssm"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic episodes as SSMF files");
  add_config_flags(gen_cmd, gen.common);
  gen_cmd->add_option("--out", gen.out, "output directory");
  gen_cmd->add_option("--episodes", gen.episodes, "number of episodes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--length", gen.length, "frames per episode")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--horizon", gen.horizon, "anticipation horizon in frames (default: one second)");
  gen_cmd->add_option("--world-seed", gen.world_seed, "seed of the world's centroids");

  Train tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint.ssmc and train_log.json");
  add_config_flags(train_cmd, tr.common);
  train_cmd->add_option("--out", tr.out, "output directory");
  train_cmd->add_option("--data", tr.data, "SSMF training files (default: generate from the synthetic world)");
  train_cmd->add_option("--eval-data", tr.eval_data, "SSMF files for the periodic evaluation log");
  train_cmd->add_option("--episodes", tr.episodes, "generated training episodes")->check(CLI::PositiveNumber);
  train_cmd->add_option("--length", tr.length, "frames per generated episode")->check(CLI::PositiveNumber);
  train_cmd->add_option("--horizon", tr.horizon, "anticipation horizon in frames");
  train_cmd->add_option("--steps", tr.steps, "optimizer steps (overrides the config)");

  Eval ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a score file; prints metrics JSON");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "SSMC checkpoint");
  eval_cmd->add_option("--scores", ev.scores, "SSMF file of per-frame class scores with labels");
  eval_cmd->add_option("--world", ev.world, "world.json from gen-data; adds Bayes-oracle metrics");
  eval_cmd->add_option("--out", ev.out, "write the JSON here instead of stdout");
  eval_cmd->add_option("--seed", ev.seed, "seed recorded in the output");
  eval_cmd->add_option("data", ev.data, "labelled SSMF files");

  Stream st;
  auto* stream_cmd = app.add_subcommand("stream", "Online inference; one JSON line per frame");
  stream_cmd->add_option("--checkpoint", st.checkpoint, "SSMC checkpoint")->required();
  stream_cmd->add_option("--input", st.input, "SSMF file, or - for one frame per stdin line")->required();
  stream_cmd->add_option("--out", st.out, "write JSON lines here instead of stdout");

  Ablate ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Interaction ablation grid; prints CSV");
  add_config_flags(ablate_cmd, ab.common);
  ablate_cmd->add_option("--out", ab.out, "write the CSV here instead of stdout");
  ablate_cmd->add_option("--cases", ab.cases, "interaction cases 1-5")->delimiter(',');
  ablate_cmd->add_option("--seeds", ab.seeds, "training seeds")->delimiter(',');
  ablate_cmd->add_option("--episodes", ab.episodes, "generated training episodes")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--length", ab.length, "frames per training episode")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--test-episodes", ab.test_episodes, "held-out episodes")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--horizon", ab.horizon, "anticipation horizon in frames");
  ablate_cmd->add_option("--steps", ab.steps, "optimizer steps per run");

  GradCheck gc;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of the full model's gradients");
  add_config_flags(grad_cmd, gc.common);
  grad_cmd->add_option("--eps", gc.eps, "central difference step")->check(CLI::Range(1e-6, 1e-3));
  grad_cmd->add_option("--threshold", gc.threshold, "largest relative error that passes");

  DumpAttention da;
  auto* dump_cmd = app.add_subcommand("dump-attention", "Temporal attention weights of one window as CSV");
  dump_cmd->add_option("--checkpoint", da.checkpoint, "SSMC checkpoint")->required();
  dump_cmd->add_option("--input", da.input, "SSMF file")->required();
  dump_cmd->add_option("--frame", da.frame, "current frame (default: last)");
  dump_cmd->add_option("--out", da.out, "write the CSV here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "ssm: " << e.what() << '\n';
    for (const auto* sub : app.get_subcommands()) err << sub->help();
    return kUsage;
  }

  try {
    if (*gen_cmd) return gen_data(gen, out, err);
    if (*train_cmd) return train(tr, out, err);
    if (*eval_cmd) return eval(ev, out, err);
    if (*stream_cmd) return stream(st, out, err, in);
    if (*ablate_cmd) return ablate(ab, out, err);
    if (*grad_cmd) return grad_check(gc, out, err);
    if (*dump_cmd) return dump_attention(da, out, err);
  } catch (const ArgumentError& e) {
    err << "ssm: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "ssm: numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const Error& e) {
    err << "ssm: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "ssm: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace ssm::cli
