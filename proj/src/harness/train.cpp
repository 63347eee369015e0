#include "ssm/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ssm/errors.hpp"
#include "ssm/harness/stream.hpp"
#include "ssm/metrics/metrics.hpp"
#include "ssm/numerics/grad_check.hpp"

namespace ssm::harness {

using num::ParamStore;
using num::Tensor;

nlohmann::json to_json(const EvalMetrics& m) {
  return {{"frames", m.frames},
          {"anticipation_frames", m.anticipation_frames},
          {"detection_accuracy", m.detection_accuracy},
          {"anticipation_accuracy", m.anticipation_accuracy},
          {"detection_map", m.detection_map},
          {"detection_mcap", m.detection_mcap},
          {"detection_top5_recall", m.detection_top5},
          {"anticipation_map", m.anticipation_map},
          {"anticipation_mcap", m.anticipation_mcap},
          {"anticipation_top5_recall", m.anticipation_top5}};
}

nlohmann::json to_json(const TrainLogEntry& e) {
  nlohmann::json j = {{"step", e.step},
                      {"loss", e.loss},
                      {"detection_loss", e.detection},
                      {"anticipation_loss", e.anticipation},
                      {"consistency_loss", e.consistency},
                      {"learning_rate", e.learning_rate}};
  if (e.eval) j["eval"] = to_json(*e.eval);
  return j;
}

namespace {

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::matrix(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

EvalMetrics score_predictions(const Tensor& p_d, const Tensor& p_a, const std::vector<int>& y_d,
                              const std::vector<int>& y_a) {
  if (p_d.rows() != y_d.size() || p_a.rows() != y_a.size() || y_d.size() != y_a.size()) {
    throw DimensionError("evaluate: prediction and label counts differ");
  }
  EvalMetrics m;
  m.frames = y_d.size();
  const metrics::ScoredFrames det{p_d, y_d};
  m.detection_accuracy = metrics::accuracy(det);
  m.detection_map = metrics::per_frame_map(det);
  m.detection_mcap = metrics::calibrated_map(det);
  m.detection_top5 = metrics::class_mean_top5_recall(det);

  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t t = 0; t < y_a.size(); ++t) {
    if (y_a[t] < 0) continue;
    rows.push_back(t);
    labels.push_back(y_a[t]);
  }
  m.anticipation_frames = rows.size();
  if (!rows.empty()) {
    const metrics::ScoredFrames ant{take_rows(p_a, rows), labels};
    m.anticipation_accuracy = metrics::accuracy(ant);
    m.anticipation_map = metrics::per_frame_map(ant);
    m.anticipation_mcap = metrics::calibrated_map(ant);
    m.anticipation_top5 = metrics::class_mean_top5_recall(ant);
  }
  return m;
}

namespace {

struct Stacked {
  Tensor p_d, p_a;
  std::vector<int> y_d, y_a;
};

void append_rows(Tensor& dst, std::size_t at, const Tensor& src) {
  std::copy(src.data().begin(), src.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(at * dst.cols()));
}

template <typename Predict>
EvalMetrics evaluate_with(const std::vector<synth::Episode>& episodes, std::size_t classes, Predict predict) {
  if (episodes.empty()) throw ArgumentError("evaluate: no episodes");
  std::size_t total = 0;
  for (const auto& ep : episodes) {
    if (!ep.has_labels()) throw ArgumentError("evaluate: episodes must be labelled");
    total += ep.length();
  }
  Stacked s{Tensor::matrix(total, classes), Tensor::matrix(total, classes), {}, {}};
  std::size_t at = 0;
  for (const auto& ep : episodes) {
    const auto [p_d, p_a] = predict(ep);
    append_rows(s.p_d, at, p_d);
    append_rows(s.p_a, at, p_a);
    s.y_d.insert(s.y_d.end(), ep.y_d.begin(), ep.y_d.end());
    s.y_a.insert(s.y_a.end(), ep.y_a.begin(), ep.y_a.end());
    at += ep.length();
  }
  return score_predictions(s.p_d, s.p_a, s.y_d, s.y_a);
}

}  // namespace

EvalMetrics evaluate(const RunConfig& config, const ParamStore& params, const std::vector<synth::Episode>& episodes) {
  return evaluate_with(episodes, config.classes + 1, [&](const synth::Episode& ep) {
    auto out = stream_infer(config, params, ep.features);
    return std::pair{std::move(out.p_d), std::move(out.p_a)};
  });
}

EvalMetrics evaluate_oracle(const synth::WorldSpec& world, const std::vector<synth::Episode>& episodes) {
  return evaluate_with(episodes, world.states(), [&](const synth::Episode& ep) {
    auto post = synth::bayes_oracle(world, ep.features, ep.horizon);
    return std::pair{std::move(post.detection), std::move(post.anticipation)};
  });
}

namespace {

bool trainable(const RunConfig& config, const std::string& name) {
  if (!config.freeze_non_classifier) return true;
  return name.rfind(cti::kSharedHead, 0) == 0;  // "cls" and "cls_anticipation"
}

std::uint64_t window_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(slot)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return static_cast<std::uint64_t>(out[0]) << 32 | out[1];
}

}  // namespace

TrainResult train(const RunConfig& config, const std::vector<synth::Episode>& episodes,
                  const std::vector<synth::Episode>* eval_episodes, const LogSink& sink) {
  config.validate();
  if (episodes.empty()) throw ArgumentError("train: no episodes");
  std::vector<std::size_t> offsets;
  std::size_t positions = 0;
  for (const auto& ep : episodes) {
    if (!ep.has_labels()) throw ArgumentError("train: episodes must be labelled");
    if (ep.features.cols() != config.feature_dim) throw DimensionError("train: feature width does not match config");
    if (ep.length() <= config.memory_length + config.horizon) {
      throw ArgumentError("train: episode of " + std::to_string(ep.length()) + " frames is too short for L_m + horizon = " +
                          std::to_string(config.memory_length + config.horizon));
    }
    for (int y : ep.y_d) {
      if (y < 0 || y > static_cast<int>(config.classes)) throw ArgumentError("train: label outside [0, C]");
    }
    offsets.push_back(positions);
    positions += ep.length();
  }

  const SsmModel model(config);
  ParamStore params = model.init_params(config.seed);
  auto optim = objective::OptimState::for_params(params);
  const auto adam = config.adam();
  std::mt19937_64 rng(window_seed(config.seed, ~std::uint64_t{0}, 0));
  std::uniform_int_distribution<std::size_t> pick(0, positions - 1);

  TrainResult result;
  double sum_loss = 0.0, sum_d = 0.0, sum_a = 0.0, sum_st = 0.0;
  std::size_t since_log = 0;
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  for (std::size_t step = 0; step < config.steps; ++step) {
    ParamStore grads = params.zeros_like();
    double step_loss = 0.0, step_d = 0.0, step_a = 0.0, step_st = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t flat = pick(rng);
      const std::size_t e = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                                     offsets.begin()) - 1;
      const std::size_t t = flat - offsets[e];
      const auto& ep = episodes[e];
      const auto window = csmc::MemoryWindow::from_sequence(ep.features, t, config.memory_length);
      const int y_a = config.horizon == ep.horizon ? ep.y_a[t]
                                                    : (t + config.horizon < ep.length() ? ep.y_d[t + config.horizon] : -1);
      num::Tape tape;
      try {
        const auto out = model.forward(tape, params, window, nullptr, window_seed(config.seed, step, b));
        const auto parts = model.loss(tape, out, ep.y_d[t], y_a);
        tape.backward(parts.total);
        step_loss += parts.total.value()[0];
        step_d += parts.detection.value()[0];
        if (parts.anticipation) step_a += parts.anticipation->value()[0];
        step_st += parts.consistency.value()[0];
      } catch (const NumericError& err) {
        throw NumericError("train: diverged at step " + std::to_string(step) + " (episode " + std::to_string(e) +
                           ", frame " + std::to_string(t) + "): " + err.what());
      }
      const ParamStore g = tape.gradients(params);
      auto gi = grads.begin();
      for (auto it = g.begin(); it != g.end(); ++it, ++gi) {
        auto& dst = gi->second.data();
        const auto& src = it->second.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += inv_batch * src[i];
      }
    }
    for (auto& [name, g] : grads) {
      if (!trainable(config, name)) std::fill(g.data().begin(), g.data().end(), 0.0);
      if (!g.all_finite()) throw NumericError("train: non-finite gradient for " + name + " at step " + std::to_string(step));
    }
    objective::adam_update(params, grads, optim, adam);

    sum_loss += step_loss * inv_batch;
    sum_d += step_d * inv_batch;
    sum_a += step_a * inv_batch;
    sum_st += step_st * inv_batch;
    ++since_log;
    const bool last = step + 1 == config.steps;
    if (last || (config.eval_every > 0 && (step + 1) % config.eval_every == 0)) {
      TrainLogEntry entry;
      entry.step = step + 1;
      const double k = static_cast<double>(since_log);
      entry.loss = sum_loss / k;
      entry.detection = sum_d / k;
      entry.anticipation = sum_a / k;
      entry.consistency = sum_st / k;
      entry.learning_rate = objective::scheduled_learning_rate(adam, optim.step);
      if (eval_episodes && !eval_episodes->empty()) {
        ParamStore snapshot = params;
        quantize_to_f32(snapshot);
        entry.eval = evaluate(config, snapshot, *eval_episodes);
      }
      if (sink) sink(entry);
      result.log.push_back(std::move(entry));
      sum_loss = sum_d = sum_a = sum_st = 0.0;
      since_log = 0;
    }
  }
  result.checkpoint = make_checkpoint(config, std::move(params), std::move(optim), config.steps);
  return result;
}

num::GradCheckReport grad_check_model(const RunConfig& config, double eps) {
  const SsmModel model(config);
  const ParamStore params = model.init_params(config.seed);
  const auto world = synth::default_world();
  const std::size_t length = config.memory_length + config.horizon + 8;
  const auto ep = synth::generate_episode(world, length, config.seed + 1, config.horizon);
  const std::size_t t = config.memory_length + 2;
  const auto window = csmc::MemoryWindow::from_sequence(ep.features, t, config.memory_length);
  const int y_d = ep.y_d[t], y_a = ep.y_a[t];
  const num::LossFn loss = [&](num::Tape& tape, const ParamStore& p) {
    const auto out = model.forward(tape, p, window);
    return model.loss(tape, out, y_d, y_a).total;
  };
  return num::grad_check(loss, params, eps);
}

Dataset synthetic_dataset(const DatasetOptions& options) {
  Dataset d;
  d.world = synth::default_world(options.world_seed);
  std::seed_seq seq{static_cast<std::uint32_t>(options.data_seed), static_cast<std::uint32_t>(options.data_seed >> 32)};
  std::vector<std::uint32_t> seeds(options.train_episodes + options.test_episodes);
  seq.generate(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i < options.train_episodes; ++i) {
    d.train.push_back(synth::generate_episode(d.world, options.train_length, seeds[i], options.horizon));
  }
  for (std::size_t i = 0; i < options.test_episodes; ++i) {
    d.test.push_back(
        synth::generate_episode(d.world, options.test_length, seeds[options.train_episodes + i], options.horizon));
  }
  return d;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<int>& cases,
                                      const std::vector<std::uint64_t>& seeds, const Dataset& data,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (int c : cases) {
    for (std::uint64_t seed : seeds) {
      RunConfig config = base;
      config.interaction = interaction_case(c);
      config.seed = seed;
      const auto trained = train(config, data.train);
      const auto m = evaluate(config, trained.checkpoint.params, data.test);
      rows.push_back({c, seed, m.detection_accuracy, m.anticipation_accuracy});
      if (on_row) on_row(rows.back());
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "case,seed,detection_accuracy,anticipation_accuracy\n";
  for (const auto& r : rows) {
    out << r.case_number << ',' << r.seed << ',' << r.detection_accuracy << ',' << r.anticipation_accuracy << '\n';
  }
  return out.str();
}

}  // namespace ssm::harness
