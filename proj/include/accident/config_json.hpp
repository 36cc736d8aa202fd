#pragma once

#include <json.hpp>

#include "accident/network.hpp"

namespace accident {

struct TrainConfig {
  int epochs = 15;
  int batch_size = 10;
  double lr = 1e-4;
  double scheduler_factor = 0.5;
  int scheduler_patience = 3;
  double l1_coeff = 1e-3;
  double l2_coeff = 1e-4;
  double val_fraction = 0.1;
  std::uint64_t seed = 42;
  std::string checkpoint_dir = "checkpoints";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);

// Unknown keys are rejected so that config typos fail loudly.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace accident
