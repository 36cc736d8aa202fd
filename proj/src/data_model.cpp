#include "accident/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace accident {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Label l) { return l == Label::Positive ? "positive" : "negative"; }

Label label_from_string(const std::string& s) {
  if (s == "positive") return Label::Positive;
  if (s == "negative") return Label::Negative;
  throw std::runtime_error("unknown label: " + s);
}

FeatureBundle FeatureBundle::empty(int t, int n_obj, int f, int w, int h) {
  FeatureBundle b;
  b.num_frames = t;
  b.num_objects = n_obj;
  b.feat_dim = f;
  b.width = w;
  b.height = h;
  b.frame_feat.assign(static_cast<std::size_t>(t) * f, 0.0f);
  b.obj_feat.assign(static_cast<std::size_t>(t) * n_obj * f, 0.0f);
  b.boxes.assign(static_cast<std::size_t>(t) * n_obj * 4, 0.0f);
  b.scores.assign(static_cast<std::size_t>(t) * n_obj, 0.0f);
  b.obj_depth.assign(static_cast<std::size_t>(t) * n_obj, 0.0f);
  return b;
}

bool FeatureBundle::all_finite() const {
  auto ok = [](const std::vector<float>& v) {
    for (float x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  return ok(frame_feat) && ok(obj_feat) && ok(boxes) && ok(scores) && ok(obj_depth);
}

FeatureBundle FeatureBundle::prefix(int t) const {
  if (t < 1 || t > num_frames) throw std::invalid_argument("prefix: t out of range");
  FeatureBundle b = empty(t, num_objects, feat_dim, width, height);
  auto copy_head = [t](const std::vector<float>& src, std::vector<float>& dst, std::size_t per_frame) {
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(per_frame * t), dst.begin());
  };
  copy_head(frame_feat, b.frame_feat, static_cast<std::size_t>(feat_dim));
  copy_head(obj_feat, b.obj_feat, static_cast<std::size_t>(num_objects) * feat_dim);
  copy_head(boxes, b.boxes, static_cast<std::size_t>(num_objects) * 4);
  copy_head(scores, b.scores, static_cast<std::size_t>(num_objects));
  copy_head(obj_depth, b.obj_depth, static_cast<std::size_t>(num_objects));
  return b;
}

const VideoSample* DatasetManifest::find(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return &s;
  return nullptr;
}

std::vector<std::string> DatasetManifest::validate() const {
  std::vector<std::string> issues;
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) issues.push_back("duplicate sample id: " + s.id);
  }
  for (const auto& [split, members] : splits) {
    for (const auto& id : members)
      if (!ids.count(id)) issues.push_back("split '" + split + "' references unknown id: " + id);
  }
  auto it_train = splits.find("train");
  auto it_test = splits.find("test");
  if (it_train != splits.end() && it_test != splits.end()) {
    std::set<std::string> train_ids(it_train->second.begin(), it_train->second.end());
    for (const auto& id : it_test->second)
      if (train_ids.count(id)) issues.push_back("id in both train and test: " + id);
  }
  return issues;
}

namespace {

constexpr char kMagic[4] = {'A', 'C', 'C', 'F'};
constexpr std::uint32_t kBundleVersion = 1;

void put_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("bundle: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_array(std::ostream& os, const std::vector<float>& v) {
  // f32 little-endian, no padding; host is little-endian on every supported target
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

void get_f32_array(std::istream& is, std::vector<float>& v, std::size_t count) {
  v.resize(count);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(is.gcount()) != count * 4) throw std::runtime_error("bundle: truncated payload");
}

}  // namespace

void write_bundle(const FeatureBundle& bundle, const std::string& path) {
  if (!bundle.all_finite()) throw std::invalid_argument("write_bundle: non-finite values");
  ordered_json header;
  header["T"] = bundle.num_frames;
  header["N_obj"] = bundle.num_objects;
  header["F"] = bundle.feat_dim;
  header["W"] = bundle.width;
  header["H"] = bundle.height;
  header["dtype"] = "f32le";
  header["arrays"] = {"frame_feat", "obj_feat", "boxes", "scores", "obj_depth"};
  const std::string htext = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_bundle: cannot open " + path);
  os.write(kMagic, 4);
  put_u32le(os, kBundleVersion);
  put_u32le(os, static_cast<std::uint32_t>(htext.size()));
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  put_f32_array(os, bundle.frame_feat);
  put_f32_array(os, bundle.obj_feat);
  put_f32_array(os, bundle.boxes);
  put_f32_array(os, bundle.scores);
  put_f32_array(os, bundle.obj_depth);
  os.flush();
  if (!os) throw std::runtime_error("write_bundle: write failed for " + path);
}

FeatureBundle read_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_bundle: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("read_bundle: bad magic");
  const std::uint32_t version = get_u32le(is);
  if (version != kBundleVersion) throw std::runtime_error("read_bundle: unsupported version " + std::to_string(version));
  const std::uint32_t hlen = get_u32le(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), hlen);
  if (!is) throw std::runtime_error("read_bundle: truncated header");

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("read_bundle: invalid header json: ") + e.what());
  }
  if (header.value("dtype", "") != "f32le") throw std::runtime_error("read_bundle: unsupported dtype");
  const int t = header.at("T").get<int>();
  const int n_obj = header.at("N_obj").get<int>();
  const int f = header.at("F").get<int>();
  if (t < 0 || n_obj < 0 || f < 0) throw std::runtime_error("read_bundle: negative dimension");

  FeatureBundle b;
  b.num_frames = t;
  b.num_objects = n_obj;
  b.feat_dim = f;
  b.width = header.at("W").get<int>();
  b.height = header.at("H").get<int>();
  get_f32_array(is, b.frame_feat, static_cast<std::size_t>(t) * f);
  get_f32_array(is, b.obj_feat, static_cast<std::size_t>(t) * n_obj * f);
  get_f32_array(is, b.boxes, static_cast<std::size_t>(t) * n_obj * 4);
  get_f32_array(is, b.scores, static_cast<std::size_t>(t) * n_obj);
  get_f32_array(is, b.obj_depth, static_cast<std::size_t>(t) * n_obj);
  is.peek();
  if (!is.eof()) throw std::runtime_error("read_bundle: trailing bytes (dimension mismatch)");
  return b;
}

std::vector<std::string> validate_sample(const VideoSample& sample, const FeatureBundle& bundle) {
  std::vector<std::string> v;
  const int t = bundle.num_frames;
  if (sample.fps < 1) v.push_back("fps must be >= 1");
  if (sample.num_frames < 2) v.push_back("num_frames must be >= 2");
  if (sample.num_frames != t) v.push_back("sample num_frames differs from bundle T");
  if (sample.label == Label::Positive) {
    if (!(sample.toa > 0 && sample.toa < sample.num_frames)) v.push_back("toa out of range for positive sample");
  } else if (sample.toa != -1) {
    v.push_back("negative sample must use toa = -1");
  }
  if (bundle.num_objects != kPaperObjectSlots)
    v.push_back("bundle must carry " + std::to_string(kPaperObjectSlots) + " object slots");
  if (!bundle.all_finite()) v.push_back("bundle contains non-finite values");
  bool bad_score = false;
  for (int i = 0; i < t && !bad_score; ++i) {
    for (int n = 0; n < bundle.num_objects && !bad_score; ++n) {
      const float s = bundle.score_at(i, n);
      if (s < 0.0f || s > 1.0f) {
        v.push_back("score outside [0,1] at frame " + std::to_string(i));
        bad_score = true;
      }
    }
  }
  for (int i = 0; i < t; ++i) {
    for (int n = 0; n < bundle.num_objects; ++n) {
      if (bundle.score_at(i, n) <= 0.0f) continue;
      if (bundle.box_at(i, n, 0) > bundle.box_at(i, n, 2) || bundle.box_at(i, n, 1) > bundle.box_at(i, n, 3)) {
        v.push_back("inverted box at frame " + std::to_string(i) + " slot " + std::to_string(n));
      }
      if (bundle.depth_at(i, n) < 0.0f) {
        v.push_back("negative depth at frame " + std::to_string(i) + " slot " + std::to_string(n));
      }
    }
  }
  return v;
}

namespace {

ordered_json sample_to_json(const VideoSample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["label"] = to_string(s.label);
  j["toa"] = s.toa;
  j["fps"] = s.fps;
  j["num_frames"] = s.num_frames;
  j["bundle_path"] = s.bundle_path;
  if (!s.factors.empty()) j["factors"] = s.factors;
  return j;
}

VideoSample sample_from_json(const json& j) {
  VideoSample s;
  s.id = j.at("id").get<std::string>();
  s.label = label_from_string(j.at("label").get<std::string>());
  s.toa = j.at("toa").get<int>();
  s.fps = j.at("fps").get<int>();
  s.num_frames = j.at("num_frames").get<int>();
  s.bundle_path = j.at("bundle_path").get<std::string>();
  if (j.contains("factors")) s.factors = j.at("factors").get<std::map<std::string, std::string>>();
  return s;
}

}  // namespace

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  ordered_json j;
  j["name"] = manifest.name;
  j["samples"] = ordered_json::array();
  for (const auto& s : manifest.samples) j["samples"].push_back(sample_to_json(s));
  j["splits"] = manifest.splits;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("save_manifest: write failed");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("load_manifest: invalid json: ") + e.what());
  }
  DatasetManifest m;
  m.name = j.at("name").get<std::string>();
  for (const auto& sj : j.at("samples")) m.samples.push_back(sample_from_json(sj));
  m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
  auto issues = m.validate();
  if (!issues.empty()) throw std::runtime_error("load_manifest: " + issues.front());
  return m;
}

std::string resolve_bundle_path(const std::string& manifest_path, const std::string& bundle_path) {
  fs::path bp(bundle_path);
  if (bp.is_absolute()) return bundle_path;
  return (fs::path(manifest_path).parent_path() / bp).string();
}

FactorDistribution factor_distribution(const DatasetManifest& manifest, const std::string& split) {
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) throw std::invalid_argument("factor_distribution: unknown split " + split);
  std::map<std::string, std::map<std::string, int>> counts;
  std::map<std::string, int> totals;
  for (const auto& id : it->second) {
    const VideoSample* s = manifest.find(id);
    if (!s) throw std::runtime_error("factor_distribution: dangling id " + id);
    if (s->factors.empty()) throw std::runtime_error("factor_distribution: sample " + id + " has no factor annotations");
    for (const auto& [name, cat] : s->factors) {
      ++counts[name][cat];
      ++totals[name];
    }
  }
  FactorDistribution dist;
  for (const auto& [name, cats] : counts) {
    for (const auto& [cat, c] : cats) dist.factors[name][cat] = static_cast<double>(c) / totals[name];
  }
  return dist;
}

std::vector<std::map<std::string, std::string>> sample_factor_prompts(const FactorDistribution& dist, int n,
                                                                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_factor_prompts: n must be >= 1");
  if (dist.empty()) throw std::invalid_argument("sample_factor_prompts: empty distribution");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<std::map<std::string, std::string>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::map<std::string, std::string> prompt;
    for (const auto& [name, cats] : dist.factors) {
      const double u = uni(rng);
      double acc = 0.0;
      std::string chosen = cats.rbegin()->first;  // guards against rounding at u ~ 1
      for (const auto& [cat, p] : cats) {
        acc += p;
        if (u < acc) {
          chosen = cat;
          break;
        }
      }
      prompt[name] = chosen;
    }
    out.push_back(std::move(prompt));
  }
  return out;
}

DatasetManifest mix_augment(const DatasetManifest& manifest, const std::vector<VideoSample>& generated,
                            double ratio, std::uint64_t seed, bool replace) {
  if (ratio < 0.0) throw std::invalid_argument("mix_augment: ratio must be >= 0");
  for (const auto& g : generated)
    if (g.label != Label::Negative) throw std::invalid_argument("mix_augment: generated samples must be negative");

  auto it = manifest.splits.find("train");
  const std::vector<std::string> train_ids = it == manifest.splits.end() ? std::vector<std::string>{} : it->second;
  int neg_count = 0;
  for (const auto& id : train_ids) {
    const VideoSample* s = manifest.find(id);
    if (s && s->label == Label::Negative) ++neg_count;
  }
  const int k = static_cast<int>(std::floor(ratio * neg_count));
  if (static_cast<int>(generated.size()) < k)
    throw std::invalid_argument("mix_augment: generated pool smaller than requested count");

  std::set<std::string> existing;
  for (const auto& s : manifest.samples) existing.insert(s.id);

  std::mt19937_64 rng(seed);
  DatasetManifest out = manifest;
  if (k == 0) return out;

  std::vector<std::string>& train = out.splits["train"];
  if (replace) {
    // remove k seeded original negatives from the training split, keep total constant
    std::vector<int> neg_pos;
    for (int i = 0; i < static_cast<int>(train.size()); ++i) {
      const VideoSample* s = out.find(train[i]);
      if (s && s->label == Label::Negative) neg_pos.push_back(i);
    }
    std::shuffle(neg_pos.begin(), neg_pos.end(), rng);
    std::set<int> removed_pos(neg_pos.begin(), neg_pos.begin() + k);
    std::set<std::string> removed_ids;
    std::vector<std::string> kept;
    for (int i = 0; i < static_cast<int>(train.size()); ++i) {
      if (removed_pos.count(i)) {
        removed_ids.insert(train[i]);
      } else {
        kept.push_back(train[i]);
      }
    }
    train = std::move(kept);
    std::vector<VideoSample> kept_samples;
    for (auto& s : out.samples)
      if (!removed_ids.count(s.id)) kept_samples.push_back(std::move(s));
    out.samples = std::move(kept_samples);
  }

  // draw k generated samples without replacement
  std::vector<int> idx(generated.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::set<std::string> added;
  for (int i = 0; i < k; ++i) {
    const VideoSample& g = generated[idx[i]];
    if (existing.count(g.id) || !added.insert(g.id).second)
      throw std::invalid_argument("mix_augment: duplicate generated id " + g.id);
    out.samples.push_back(g);
    train.push_back(g.id);
  }
  return out;
}

namespace {

Quartiles quartiles_of(std::vector<int> values) {
  std::sort(values.begin(), values.end());
  auto interp = [&](double p) {
    const double pos = p * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - lo;
    if (lo + 1 >= values.size()) return static_cast<double>(values.back());
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
  };
  Quartiles q;
  q.count = static_cast<int>(values.size());
  q.q1 = interp(0.25);
  q.median = interp(0.5);
  q.q3 = interp(0.75);
  return q;
}

}  // namespace

StartFrameStats start_frame_stats(const DatasetManifest& manifest) {
  std::vector<int> toas;
  std::map<std::string, std::vector<int>> by_type;
  for (const auto& s : manifest.samples) {
    if (s.label != Label::Positive) continue;
    toas.push_back(s.toa);
    auto it = s.factors.find("accident_type");
    if (it != s.factors.end()) by_type[it->second].push_back(s.toa);
  }
  if (toas.empty()) throw std::invalid_argument("start_frame_stats: no positive samples");
  StartFrameStats stats;
  for (int t : toas) ++stats.histogram[t];
  stats.overall = quartiles_of(toas);
  for (auto& [type, vals] : by_type) stats.per_type[type] = quartiles_of(std::move(vals));
  return stats;
}

}  // namespace accident
