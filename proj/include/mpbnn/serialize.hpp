#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "mpbnn/experiment.hpp"
#include "mpbnn/trainer.hpp"

namespace mpbnn {

using Json = nlohmann::ordered_json;

/// Throws ConfigError if `obj` holds a key outside `allowed` (typo guard:
/// unknown keys are hard errors everywhere).
void reject_unknown_keys(const Json& obj, const std::string& section,
                         std::initializer_list<const char*> allowed);

Json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const Json& j);

Json prior_to_json(const SpikeSlabPrior& prior);
SpikeSlabPrior prior_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j);

Json data_config_to_json(const PolyDataConfig& data);
PolyDataConfig data_config_from_json(const Json& j);

/// Round-trip-exact decimal formatting (shortest form that parses back
/// to the same double).
std::string format_double(double value);

}  // namespace mpbnn
