#include "mpbnn/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mpbnn/errors.hpp"
#include "mpbnn/serialize.hpp"

namespace mpbnn {

void TrainConfig::validate() const {
  if (total_epochs < 1 || batch_size < 1 || validation_size < 1 ||
      kl_samples < 1)
    throw ConfigError("TrainConfig: counts must be positive");
  if (!(learning_rate > 0.0) || !(adam_epsilon > 0.0) || weight_decay < 0.0)
    throw ConfigError("TrainConfig: invalid optimizer rates");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("TrainConfig: beta1/beta2 must lie in (0, 1)");
  prior.validate();
}

OptimizerState OptimizerState::zeros(Eigen::Index n) {
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

void adamw_step(OptimizerState& state, ParameterStore& params,
                const Gradient& grad, const TrainConfig& config) {
  const Eigen::Index n = params.learnable_count();
  if (grad.values.size() != n || state.m.size() != n || state.v.size() != n)
    throw ShapeError("adamw_step: state/gradient/parameter misalignment");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

  Eigen::VectorXd theta = params.learnables();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = grad.values[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    theta[i] -= config.learning_rate * m_hat /
                    (std::sqrt(v_hat) + config.adam_epsilon) +
                config.learning_rate * config.weight_decay * theta[i];
  }
  params.set_learnables(theta);
}

namespace {

Json checkpoint_to_json_obj(const Checkpoint& cp) {
  Json j;
  j["format_version"] = cp.format_version;
  j["architecture"] = architecture_to_json(cp.arch);
  j["learnables"] = std::vector<double>(
      cp.learnables.data(), cp.learnables.data() + cp.learnables.size());
  j["train"] = train_config_to_json(cp.config);
  j["epoch"] = cp.epoch;
  j["best_val_nll"] = cp.best_val_nll;
  return j;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& cp) {
  return checkpoint_to_json_obj(cp).dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint parse error: ") + e.what());
  }
  reject_unknown_keys(j, "checkpoint",
                      {"format_version", "architecture", "learnables", "train",
                       "epoch", "best_val_nll"});
  Checkpoint cp;
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw ConfigError("checkpoint: unsupported or missing format_version");
  cp.arch = architecture_from_json(j.at("architecture"));
  const auto values = j.at("learnables").get<std::vector<double>>();
  cp.learnables = Eigen::Map<const Eigen::VectorXd>(
      values.data(), static_cast<Eigen::Index>(values.size()));
  cp.config = train_config_from_json(j.at("train"));
  cp.epoch = j.at("epoch").get<int>();
  cp.best_val_nll = j.at("best_val_nll").get<double>();
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << checkpoint_to_json(cp);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

Network network_from_checkpoint(const Checkpoint& cp) {
  Network net = build_network(cp.arch);
  ParameterStore store = parameter_store(net);
  if (store.learnable_count() != cp.learnables.size())
    throw ConfigError("checkpoint: learnable count does not match architecture");
  store.set_learnables(cp.learnables);
  return net;
}

DataSource poly_data_source(const PolyDataConfig& data, std::uint64_t seed) {
  return [data, seed](int epoch, const std::string& purpose, int n) {
    RngStream stream = RngStream(seed)
                           .child("data")
                           .child(static_cast<std::uint64_t>(epoch))
                           .child(purpose);
    return generate_batch(data, n, stream);
  };
}

FitResult fit(const Architecture& arch, const TrainConfig& config,
              const DataSource& data) {
  arch.validate();
  config.validate();

  RngStream root(config.seed);
  RngStream init_rng = root.child("init");
  Network net = build_network(arch, config.init, init_rng);
  ParameterStore store = parameter_store(net);
  OptimizerState opt = OptimizerState::zeros(store.learnable_count());

  FitResult result;
  result.best.arch = arch;
  result.best.config = config;
  result.best.best_val_nll = std::numeric_limits<double>::infinity();
  result.history.reserve(static_cast<std::size_t>(config.total_epochs));

  for (int epoch = 1; epoch <= config.total_epochs; ++epoch) {
    const auto [x, y] = data(epoch, "train", config.batch_size);

    LossContext ctx;
    ctx.x = x;
    ctx.y = y;
    ctx.alpha = kl_decay_weight(epoch, config.total_epochs);
    ctx.prior = config.prior;
    RngStream kl_rng =
        root.child("kl").child(static_cast<std::uint64_t>(epoch));
    ctx.kl_eps.resize(store.size(), config.kl_samples);
    for (int s = 0; s < config.kl_samples; ++s)
      ctx.kl_eps.col(s) = kl_rng.normal_array(store.size());

    const Tape tape = record_loss(net, ctx);
    if (!std::isfinite(tape.loss.total)) {
      std::ostringstream msg;
      msg << "fit: non-finite loss at epoch " << epoch
          << " (nll=" << tape.loss.nll << ", kl=" << tape.loss.kl
          << ", alpha=" << tape.loss.alpha << ")";
      throw NumericError(msg.str());
    }
    const Gradient grad = backward(net, tape);
    adamw_step(opt, store, grad, config);

    const auto [vx, vy] = data(epoch, "val", config.validation_size);
    const double val_nll =
        reconstruction_nll(predict(net, vx), vy) / config.validation_size;

    EpochMetrics m;
    m.epoch = epoch;
    m.alpha = tape.loss.alpha;
    m.kl = tape.loss.kl;
    m.train_nll = tape.loss.nll / config.batch_size;
    m.val_nll = val_nll;
    m.total = m.alpha * m.kl + m.train_nll;
    result.history.push_back(m);

    if (val_nll < result.best.best_val_nll) {
      result.best.best_val_nll = val_nll;
      result.best.epoch = epoch;
      result.best.learnables = store.learnables();
    }
  }
  return result;
}

}  // namespace mpbnn
