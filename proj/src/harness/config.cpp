#include "ssm/harness/config.hpp"


#include "ssm/errors.hpp"

namespace ssm::harness {

void RunConfig::validate() const {
  if (clusters < 1 || memory_length < clusters) throw ArgumentError("config: need L_m >= K >= 1");
  if (d_model == 0 || d_edge == 0 || feature_dim == 0 || classes == 0) throw ArgumentError("config: zero width");
  if (heads == 0 || d_model % heads != 0) throw ArgumentError("config: d_model must be divisible by heads");
  if (!(delta > 0.0)) throw ArgumentError("config: delta must be positive");
  if (lambda_a < 0.0 || lambda_st < 0.0) throw ArgumentError("config: loss weights must be non-negative");
  if (!(learning_rate > 0.0)) throw ArgumentError("config: learning rate must be positive");
  if (batch_size == 0) throw ArgumentError("config: batch size must be positive");
  if (horizon == 0) throw ArgumentError("config: horizon must be positive");
}

csmc::CsmcConfig RunConfig::csmc() const {
  csmc::CsmcConfig c;
  c.clusters = clusters;
  c.delta = delta;
  c.heads = heads;
  c.em_max_iters = em_max_iters;
  c.em_tol = em_tol;
  c.em_seed = seed;
  return c;
}

apl::AplConfig RunConfig::apl() const { return {d_model, d_edge, heads, gcn_layers}; }

cti::CtiConfig RunConfig::cti() const { return {d_model, heads, clusters, positional_encoding, interaction}; }

objective::LossWeights RunConfig::loss_weights() const { return {lambda_a, lambda_st}; }

objective::AdamConfig RunConfig::adam() const {
  objective::AdamConfig a;
  a.learning_rate = learning_rate;
  a.warmup_steps = warmup_steps;
  a.decay_steps = cosine_decay ? steps : 0;
  return a;
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"feature_dim", c.feature_dim},
      {"classes", c.classes},
      {"horizon", c.horizon},
      {"memory_length", c.memory_length},
      {"clusters", c.clusters},
      {"d_model", c.d_model},
      {"d_edge", c.d_edge},
      {"heads", c.heads},
      {"gcn_layers", c.gcn_layers},
      {"delta", c.delta},
      {"positional_encoding", c.positional_encoding},
      {"interaction", {{"past", c.interaction.past}, {"present", c.interaction.present}, {"future", c.interaction.future}}},
      {"classifier_sharing", c.sharing == ClassifierSharing::shared ? "shared" : "unshared"},
      {"em_max_iters", c.em_max_iters},
      {"em_tol", c.em_tol},
      {"lambda_a", c.lambda_a},
      {"lambda_st", c.lambda_st},
      {"detach_cue", c.detach_cue},
      {"learning_rate", c.learning_rate},
      {"warmup_steps", c.warmup_steps},
      {"cosine_decay", c.cosine_decay},
      {"steps", c.steps},
      {"batch_size", c.batch_size},
      {"eval_every", c.eval_every},
      {"freeze_non_classifier", c.freeze_non_classifier},
      {"seed", c.seed},
  };
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("config: expected a JSON object");
  const nlohmann::json defaults = to_json(RunConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ArgumentError("config: unknown key '" + key + "'");
  }
  nlohmann::json merged = defaults;
  merged.merge_patch(j);
  RunConfig c;
  try {
    c.feature_dim = merged.at("feature_dim").get<std::size_t>();
    c.classes = merged.at("classes").get<std::size_t>();
    c.horizon = merged.at("horizon").get<std::size_t>();
    c.memory_length = merged.at("memory_length").get<std::size_t>();
    c.clusters = merged.at("clusters").get<std::size_t>();
    c.d_model = merged.at("d_model").get<std::size_t>();
    c.d_edge = merged.at("d_edge").get<std::size_t>();
    c.heads = merged.at("heads").get<std::size_t>();
    c.gcn_layers = merged.at("gcn_layers").get<std::size_t>();
    c.delta = merged.at("delta").get<double>();
    c.positional_encoding = merged.at("positional_encoding").get<bool>();
    const auto& inter = merged.at("interaction");
    for (const auto& [key, value] : inter.items()) {
      if (key != "past" && key != "present" && key != "future") {
        throw ArgumentError("config: unknown interaction key '" + key + "'");
      }
    }
    c.interaction = {inter.at("past").get<bool>(), inter.at("present").get<bool>(), inter.at("future").get<bool>()};
    const auto sharing = merged.at("classifier_sharing").get<std::string>();
    if (sharing == "shared") {
      c.sharing = ClassifierSharing::shared;
    } else if (sharing == "unshared") {
      c.sharing = ClassifierSharing::unshared;
    } else {
      throw ArgumentError("config: classifier_sharing must be 'shared' or 'unshared'");
    }
    c.em_max_iters = merged.at("em_max_iters").get<std::size_t>();
    c.em_tol = merged.at("em_tol").get<double>();
    c.lambda_a = merged.at("lambda_a").get<double>();
    c.lambda_st = merged.at("lambda_st").get<double>();
    c.detach_cue = merged.at("detach_cue").get<bool>();
    c.learning_rate = merged.at("learning_rate").get<double>();
    c.warmup_steps = merged.at("warmup_steps").get<std::uint64_t>();
    c.cosine_decay = merged.at("cosine_decay").get<bool>();
    c.steps = merged.at("steps").get<std::size_t>();
    c.batch_size = merged.at("batch_size").get<std::size_t>();
    c.eval_every = merged.at("eval_every").get<std::size_t>();
    c.freeze_non_classifier = merged.at("freeze_non_classifier").get<bool>();
    c.seed = merged.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig toy_config() {
  RunConfig c;
  c.memory_length = 15;
  c.clusters = 2;
  c.d_model = 8;
  c.d_edge = 4;
  c.heads = 2;
  c.feature_dim = 16;
  c.classes = 6;
  c.batch_size = 2;
  return c;
}

cti::InteractionSwitches interaction_case(int case_number) {
  switch (case_number) {
    case 1: return {false, false, false};
    case 2: return {true, true, false};
    case 3: return {true, false, true};
    case 4: return {false, true, true};
    case 5: return {true, true, true};
  }
  throw ArgumentError("interaction case must be 1..5");
}

}  // namespace ssm::harness
