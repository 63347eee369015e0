#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssm/harness/checkpoint.hpp"
#include "ssm/numerics/grad_check.hpp"
#include "ssm/synthdata/world.hpp"

namespace ssm::harness {

struct EvalMetrics {
  std::size_t frames = 0;
  std::size_t anticipation_frames = 0;  // frames with a defined future label
  double detection_accuracy = 0.0;
  double anticipation_accuracy = 0.0;
  double detection_map = 0.0;
  double detection_mcap = 0.0;
  double detection_top5 = 0.0;
  double anticipation_map = 0.0;
  double anticipation_mcap = 0.0;
  double anticipation_top5 = 0.0;
};

nlohmann::json to_json(const EvalMetrics& m);

// Scores stacked predictions; anticipation rows with y_a < 0 are skipped.
EvalMetrics score_predictions(const num::Tensor& p_d, const num::Tensor& p_a, const std::vector<int>& y_d,
                              const std::vector<int>& y_a);

// Streams each episode through the model and scores the concatenation.
EvalMetrics evaluate(const RunConfig& config, const num::ParamStore& params,
                     const std::vector<synth::Episode>& episodes);

// Same metrics for the exact Bayes posteriors of the generating world.
EvalMetrics evaluate_oracle(const synth::WorldSpec& world, const std::vector<synth::Episode>& episodes);

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;  // means over the steps since the previous entry
  double detection = 0.0;
  double anticipation = 0.0;
  double consistency = 0.0;
  double learning_rate = 0.0;
  std::optional<EvalMetrics> eval;
};

nlohmann::json to_json(const TrainLogEntry& e);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogEntry> log;
};

using LogSink = std::function<void(const TrainLogEntry&)>;

// Adam on batches of uniformly sampled (episode, frame) windows. Every
// eval_every steps, and after the last step, a log entry is appended; it
// carries metrics when eval episodes are given. Deterministic per seed.
TrainResult train(const RunConfig& config, const std::vector<synth::Episode>& episodes,
                  const std::vector<synth::Episode>* eval_episodes = nullptr, const LogSink& sink = {});

// Toy gradient check of the full model: one window of a short episode from
// the default world, loss as in training.
num::GradCheckReport grad_check_model(const RunConfig& config, double eps = 1e-4);

struct Dataset {
  synth::WorldSpec world;
  std::vector<synth::Episode> train;
  std::vector<synth::Episode> test;
};

struct DatasetOptions {
  std::uint64_t world_seed = 7;
  std::uint64_t data_seed = 1;
  std::size_t train_episodes = 8;
  std::size_t test_episodes = 4;
  std::size_t train_length = 2000;
  std::size_t test_length = 1000;
  std::size_t horizon = 4;
};

Dataset synthetic_dataset(const DatasetOptions& options);

struct AblationRow {
  int case_number = 0;
  std::uint64_t seed = 0;
  double detection_accuracy = 0.0;
  double anticipation_accuracy = 0.0;
};

// Trains and evaluates each interaction case with each seed; the seed sets
// both parameter init and batch sampling, shared across cases.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<int>& cases,
                                      const std::vector<std::uint64_t>& seeds, const Dataset& data,
                                      const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace ssm::harness
