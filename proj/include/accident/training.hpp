#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "accident/config_json.hpp"
#include "accident/data_model.hpp"
#include "accident/network.hpp"

namespace accident {

struct AdamState {
  std::vector<Tensor> m, v;  // parallel to ModelParams::entries()
  std::int64_t step = 0;
};

struct TrainState {
  ModelConfig model_config;
  TrainConfig train_config;
  ModelParams params;
  AdamState adam;
  int epoch = 0;  // completed epochs
  double lr = 0.0;
  double best_val_loss = 0.0;  // +inf until a validation pass ran
  int bad_epochs = 0;
  std::vector<double> lr_history;
  double last_train_loss = 0.0;
  double last_val_loss = 0.0;
};

// Loss weight of Eq-style time weighting: positive frames before toa get
// 1 + exp(-(toa - t - 1)/fps), everything else plain cross entropy.
double frame_weight(const VideoSample& sample, int frame);

// Mean over frames of the weighted cross entropy; probs is [T,2] row-softmax output.
double frame_loss(const Tensor& probs, const VideoSample& sample);

double regularized_loss(double data_loss, const ModelParams& params, double l1, double l2);

// Tape node holding the weighted cross entropy summed (not averaged) over frames.
Var build_loss_sum(Tape& tape, Var probs, const VideoSample& sample);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

using BundleMap = std::map<std::string, FeatureBundle>;

BundleMap load_bundles(const DatasetManifest& manifest, const std::string& manifest_path,
                       const std::vector<std::string>& ids);

TrainState train(const DatasetManifest& manifest, const BundleMap& bundles, const ModelConfig& mcfg,
                 const TrainConfig& tcfg, const std::string& resume_checkpoint = "",
                 std::vector<EpochLog>* log = nullptr);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);
// Throws when the stored model config differs from the expected one.
TrainState load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace accident
