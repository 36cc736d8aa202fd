#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace accident {

enum class Label { Positive, Negative };

std::string to_string(Label l);
Label label_from_string(const std::string& s);

// Per-video metadata. Negative videos carry toa = -1.
struct VideoSample {
  std::string id;
  Label label = Label::Negative;
  int toa = -1;
  int fps = 1;
  int num_frames = 0;
  std::string bundle_path;
  std::map<std::string, std::string> factors;
};

// Per-video dense feature container. All arrays are stored flat, row-major,
// as 32-bit floats so that disk round-trips are bit-exact.
struct FeatureBundle {
  int num_frames = 0;   // T
  int num_objects = 0;  // N-1 object slots
  int feat_dim = 0;     // F
  int width = 0;
  int height = 0;
  std::vector<float> frame_feat;  // [T, F]
  std::vector<float> obj_feat;    // [T, N-1, F]
  std::vector<float> boxes;       // [T, N-1, 4] (x_min, y_min, x_max, y_max)
  std::vector<float> scores;      // [T, N-1], 0 marks an absent slot
  std::vector<float> obj_depth;   // [T, N-1], meters

  static FeatureBundle empty(int t, int n_obj, int f, int w, int h);

  float& frame_at(int t, int f) { return frame_feat[static_cast<std::size_t>(t) * feat_dim + f]; }
  float frame_at(int t, int f) const { return frame_feat[static_cast<std::size_t>(t) * feat_dim + f]; }
  float& obj_at(int t, int n, int f) {
    return obj_feat[(static_cast<std::size_t>(t) * num_objects + n) * feat_dim + f];
  }
  float obj_at(int t, int n, int f) const {
    return obj_feat[(static_cast<std::size_t>(t) * num_objects + n) * feat_dim + f];
  }
  float& box_at(int t, int n, int k) { return boxes[(static_cast<std::size_t>(t) * num_objects + n) * 4 + k]; }
  float box_at(int t, int n, int k) const { return boxes[(static_cast<std::size_t>(t) * num_objects + n) * 4 + k]; }
  float& score_at(int t, int n) { return scores[static_cast<std::size_t>(t) * num_objects + n]; }
  float score_at(int t, int n) const { return scores[static_cast<std::size_t>(t) * num_objects + n]; }
  float& depth_at(int t, int n) { return obj_depth[static_cast<std::size_t>(t) * num_objects + n]; }
  float depth_at(int t, int n) const { return obj_depth[static_cast<std::size_t>(t) * num_objects + n]; }

  bool all_finite() const;
  FeatureBundle prefix(int t) const;  // first t frames, for causality checks
};

struct DatasetManifest {
  std::string name;
  std::vector<VideoSample> samples;
  std::map<std::string, std::vector<std::string>> splits;

  const VideoSample* find(const std::string& id) const;
  std::vector<std::string> validate() const;
};

// Per factor name, a categorical distribution over categories.
struct FactorDistribution {
  std::map<std::string, std::map<std::string, double>> factors;
  bool empty() const { return factors.empty(); }
};

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  int count = 0;
};

struct StartFrameStats {
  std::map<int, int> histogram;  // toa -> count over positive samples
  Quartiles overall;
  std::map<std::string, Quartiles> per_type;  // keyed by "accident_type" factor
};

void write_bundle(const FeatureBundle& bundle, const std::string& path);
FeatureBundle read_bundle(const std::string& path);

std::vector<std::string> validate_sample(const VideoSample& sample, const FeatureBundle& bundle);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);
// Bundle paths are stored relative to the manifest file.
std::string resolve_bundle_path(const std::string& manifest_path, const std::string& bundle_path);

FactorDistribution factor_distribution(const DatasetManifest& manifest, const std::string& split);

std::vector<std::map<std::string, std::string>> sample_factor_prompts(const FactorDistribution& dist, int n,
                                                                      std::uint64_t seed);

DatasetManifest mix_augment(const DatasetManifest& manifest, const std::vector<VideoSample>& generated,
                            double ratio, std::uint64_t seed, bool replace = false);

StartFrameStats start_frame_stats(const DatasetManifest& manifest);

inline constexpr int kPaperObjectSlots = 19;

}  // namespace accident
