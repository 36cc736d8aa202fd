#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "accident/data_model.hpp"
#include "accident/tensor.hpp"

namespace accident {

// Desk-scale scenario generator: constant-velocity agents in the pixel plane
// plus depth, labelled by an exhaustive pairwise-distance oracle.
struct ScenarioParams {
  int num_agents = 8;           // [2,19]
  int num_agents_jitter = 4;    // per-scenario count drawn in [num_agents +/- jitter], clamped
  int num_frames = 50;
  int fps = 10;
  int width = 1280;
  int height = 720;
  double depth_min = 5.0;
  double depth_max = 80.0;
  double max_speed = 6.0;        // pixels per frame
  double max_depth_speed = 0.6;  // meters per frame
  double collision_threshold = 0.05;  // normalized 3D units
  int feature_dim = 32;
  double noise_std = 0.01;
  double box_size = 60.0;
  double depth_scale = 100.0;
  std::uint64_t seed = 1;
  std::uint64_t embed_seed = 1;  // embedding map is frozen per dataset

  void validate() const;
};

struct Trajectories {
  std::vector<Tensor> positions;             // T x [A,2], pixel centers
  std::vector<std::vector<double>> depths;   // T x A, meters
  int num_frames() const { return static_cast<int>(positions.size()); }
  int num_agents() const { return positions.empty() ? 0 : positions[0].rows(); }
};

// Scans every frame and agent pair; positive at the earliest frame whose
// minimum pairwise normalized 3D distance falls below threshold.
std::pair<Label, int> oracle_label(const Trajectories& traj, double threshold, double dd, double depth_scale);

double min_pairwise_distance(const Trajectories& traj, double dd, double depth_scale);

Trajectories trajectories_from_bundle(const FeatureBundle& bundle);

// Fixed random linear map of (cx, cy, depth, vx, vy); frozen per embed_seed.
Tensor embedding_map(int feature_dim, std::uint64_t embed_seed);

struct Scenario {
  VideoSample sample;
  FeatureBundle bundle;
};

Scenario gen_scenario(const ScenarioParams& params);

DatasetManifest gen_dataset(int n_pos, int n_neg, const ScenarioParams& params, const std::string& out_dir,
                            double test_fraction = 0.2);

}  // namespace accident
