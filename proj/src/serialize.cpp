#include "mpbnn/serialize.hpp"

#include <charconv>

#include "mpbnn/errors.hpp"

namespace mpbnn {

void reject_unknown_keys(const Json& obj, const std::string& section,
                         std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + key + "' in section '" + section +
                        "'");
  }
}

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Json architecture_to_json(const Architecture& arch) {
  Json j;
  j["hidden_sizes"] = arch.hidden_sizes;
  j["slope"] = arch.slope;
  j["head_mode"] = to_string(arch.head_mode);
  j["input_dim"] = arch.input_dim;
  j["output_dim"] = arch.output_dim;
  return j;
}

Architecture architecture_from_json(const Json& j) {
  reject_unknown_keys(j, "architecture",
                      {"hidden_sizes", "slope", "head_mode", "input_dim",
                       "output_dim"});
  Architecture arch;
  arch.hidden_sizes = get_or(j, "hidden_sizes", arch.hidden_sizes);
  arch.slope = get_or(j, "slope", arch.slope);
  if (j.contains("head_mode"))
    arch.head_mode = head_mode_from_string(j.at("head_mode").get<std::string>());
  arch.input_dim = get_or(j, "input_dim", arch.input_dim);
  arch.output_dim = get_or(j, "output_dim", arch.output_dim);
  arch.validate();
  return arch;
}

Json prior_to_json(const SpikeSlabPrior& prior) {
  Json j;
  j["var_slab"] = prior.var_slab;
  j["var_spike"] = prior.var_spike;
  j["mix"] = prior.mix;
  return j;
}

SpikeSlabPrior prior_from_json(const Json& j) {
  reject_unknown_keys(j, "prior", {"var_slab", "var_spike", "mix"});
  SpikeSlabPrior prior;
  prior.var_slab = get_or(j, "var_slab", prior.var_slab);
  prior.var_spike = get_or(j, "var_spike", prior.var_spike);
  prior.mix = get_or(j, "mix", prior.mix);
  prior.validate();
  return prior;
}

Json train_config_to_json(const TrainConfig& config) {
  Json j;
  j["total_epochs"] = config.total_epochs;
  j["batch_size"] = config.batch_size;
  j["learning_rate"] = config.learning_rate;
  j["beta1"] = config.beta1;
  j["beta2"] = config.beta2;
  j["adam_epsilon"] = config.adam_epsilon;
  j["weight_decay"] = config.weight_decay;
  j["kl_samples"] = config.kl_samples;
  j["seed"] = config.seed;
  j["validation_size"] = config.validation_size;
  j["prior"] = prior_to_json(config.prior);
  j["init_mu_std"] = config.init.init_mu_std;
  j["init_rho"] = config.init.init_rho;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown_keys(
      j, "train",
      {"total_epochs", "batch_size", "learning_rate", "beta1", "beta2",
       "adam_epsilon", "weight_decay", "kl_samples", "seed", "validation_size",
       "prior", "init_mu_std", "init_rho"});
  TrainConfig c;
  c.total_epochs = get_or(j, "total_epochs", c.total_epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.beta1 = get_or(j, "beta1", c.beta1);
  c.beta2 = get_or(j, "beta2", c.beta2);
  c.adam_epsilon = get_or(j, "adam_epsilon", c.adam_epsilon);
  c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
  c.kl_samples = get_or(j, "kl_samples", c.kl_samples);
  c.seed = get_or(j, "seed", c.seed);
  c.validation_size = get_or(j, "validation_size", c.validation_size);
  if (j.contains("prior")) c.prior = prior_from_json(j.at("prior"));
  c.init.init_mu_std = get_or(j, "init_mu_std", c.init.init_mu_std);
  c.init.init_rho = get_or(j, "init_rho", c.init.init_rho);
  c.validate();
  return c;
}

Json data_config_to_json(const PolyDataConfig& data) {
  Json j;
  j["x_low"] = data.x_low;
  j["x_high"] = data.x_high;
  j["noise_scale"] = data.noise_scale;
  return j;
}

PolyDataConfig data_config_from_json(const Json& j) {
  reject_unknown_keys(j, "data", {"x_low", "x_high", "noise_scale"});
  PolyDataConfig d;
  d.x_low = get_or(j, "x_low", d.x_low);
  d.x_high = get_or(j, "x_high", d.x_high);
  d.noise_scale = get_or(j, "noise_scale", d.noise_scale);
  d.validate();
  return d;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace mpbnn
