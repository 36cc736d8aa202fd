#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "accident/data_model.hpp"

using namespace accident;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("accident_dm_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

FeatureBundle random_bundle(int t, int n, int f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  FeatureBundle b = FeatureBundle::empty(t, n, f, 1280, 720);
  for (auto* arr : {&b.frame_feat, &b.obj_feat})
    for (auto& x : *arr) x = uni(rng) * 2.0f - 1.0f;
  for (int ti = 0; ti < t; ++ti) {
    for (int ni = 0; ni < n; ++ni) {
      const float x0 = uni(rng) * 1200.0f, y0 = uni(rng) * 650.0f;
      b.box_at(ti, ni, 0) = x0;
      b.box_at(ti, ni, 1) = y0;
      b.box_at(ti, ni, 2) = x0 + uni(rng) * 60.0f;
      b.box_at(ti, ni, 3) = y0 + uni(rng) * 60.0f;
      b.score_at(ti, ni) = uni(rng);
      b.depth_at(ti, ni) = uni(rng) * 80.0f;
    }
  }
  return b;
}

VideoSample make_sample(const std::string& id, Label label, int toa, int fps, int frames) {
  VideoSample s;
  s.id = id;
  s.label = label;
  s.toa = toa;
  s.fps = fps;
  s.num_frames = frames;
  s.bundle_path = id + ".accf";
  return s;
}

}  // namespace

TEST_CASE("bundle round-trip is bit-exact") {
  const fs::path dir = temp_dir();
  FeatureBundle b = random_bundle(7, 19, 16, 99);
  const std::string path = (dir / "b.accf").string();
  write_bundle(b, path);
  FeatureBundle r = read_bundle(path);
  CHECK(r.num_frames == b.num_frames);
  CHECK(r.num_objects == b.num_objects);
  CHECK(r.feat_dim == b.feat_dim);
  CHECK(r.width == b.width);
  CHECK(r.height == b.height);
  CHECK(r.frame_feat == b.frame_feat);
  CHECK(r.obj_feat == b.obj_feat);
  CHECK(r.boxes == b.boxes);
  CHECK(r.scores == b.scores);
  CHECK(r.obj_depth == b.obj_depth);

  // a second write of the re-read bundle must produce identical bytes
  const std::string path2 = (dir / "b2.accf").string();
  write_bundle(r, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("bundle rejects foreign dtype and bad magic") {
  const fs::path dir = temp_dir();
  const std::string path = (dir / "bad.accf").string();
  {
    std::ofstream os(path, std::ios::binary);
    const std::string header = R"({"T":1,"N_obj":1,"F":1,"W":8,"H":8,"dtype":"f64le","arrays":[]})";
    os.write("ACCF", 4);
    const std::uint32_t version = 1, hlen = static_cast<std::uint32_t>(header.size());
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&hlen), 4);
    os << header;
  }
  CHECK_THROWS_WITH_AS(read_bundle(path), doctest::Contains("dtype"), std::runtime_error);

  const std::string path2 = (dir / "bad2.accf").string();
  {
    std::ofstream os(path2, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(read_bundle(path2), std::runtime_error);
}

TEST_CASE("bundle file size follows the layout arithmetic") {
  const fs::path dir = temp_dir();
  FeatureBundle b = random_bundle(5, 19, 32, 7);
  const std::string path = (dir / "sz.accf").string();
  write_bundle(b, path);

  std::ifstream is(path, std::ios::binary);
  is.seekg(8);
  std::uint32_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 4);
  const std::uintmax_t expected =
      12 + hlen + 4ull * (5 * 32 + 5 * 19 * 32 + 5 * 19 * 4 + 5 * 19 + 5 * 19);
  CHECK(fs::file_size(path) == expected);
}

TEST_CASE("bundle write rejects non-finite values, read rejects truncation") {
  const fs::path dir = temp_dir();
  FeatureBundle b = random_bundle(3, 19, 4, 3);
  b.frame_feat[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_bundle(b, (dir / "nan.accf").string()), std::invalid_argument);

  FeatureBundle ok = random_bundle(3, 19, 4, 4);
  const std::string path = (dir / "trunc.accf").string();
  write_bundle(ok, path);
  fs::resize_file(path, fs::file_size(path) - 17);
  CHECK_THROWS_WITH_AS(read_bundle(path), doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("validate_sample reports the spec'd violations") {
  FeatureBundle b = random_bundle(10, 19, 8, 21);
  VideoSample s = make_sample("v0", Label::Positive, 6, 20, 10);
  CHECK(validate_sample(s, b).empty());

  VideoSample bad_toa = make_sample("v1", Label::Positive, 13, 20, 10);
  auto v1 = validate_sample(bad_toa, b);
  REQUIRE(!v1.empty());
  CHECK(v1.front().find("toa out of range") != std::string::npos);

  FeatureBundle neg_depth = b;
  int slot = -1;
  for (int n = 0; n < 19; ++n)
    if (neg_depth.score_at(2, n) > 0.0f) {
      slot = n;
      break;
    }
  REQUIRE(slot >= 0);
  neg_depth.depth_at(2, slot) = -1.0f;
  auto v2 = validate_sample(s, neg_depth);
  bool found = false;
  for (const auto& msg : v2) found = found || msg.find("negative depth") != std::string::npos;
  CHECK(found);

  VideoSample neg = make_sample("v2", Label::Negative, 4, 20, 10);
  auto v3 = validate_sample(neg, b);
  bool sentinel = false;
  for (const auto& msg : v3) sentinel = sentinel || msg.find("toa = -1") != std::string::npos;
  CHECK(sentinel);
}

TEST_CASE("manifest json round-trip") {
  const fs::path dir = temp_dir();
  DatasetManifest m;
  m.name = "toy";
  auto s0 = make_sample("a", Label::Positive, 30, 20, 100);
  s0.factors = {{"weather", "sunny"}, {"lighting", "day"}};
  m.samples = {s0, make_sample("b", Label::Negative, -1, 20, 100)};
  m.splits["train"] = {"a"};
  m.splits["test"] = {"b"};
  const std::string path = (dir / "manifest.json").string();
  save_manifest(m, path);
  DatasetManifest r = load_manifest(path);
  CHECK(r.name == m.name);
  REQUIRE(r.samples.size() == 2);
  CHECK(r.samples[0].id == "a");
  CHECK(r.samples[0].factors.at("weather") == "sunny");
  CHECK(r.splits.at("test") == std::vector<std::string>{"b"});
  CHECK(r.find("a")->toa == 30);
}

TEST_CASE("factor_distribution computes empirical proportions") {
  DatasetManifest m;
  m.name = "f";
  for (int i = 0; i < 10; ++i) {
    auto s = make_sample("s" + std::to_string(i), Label::Negative, -1, 10, 50);
    s.factors["weather"] = i < 4 ? "sunny" : "rainy";
    m.samples.push_back(s);
    m.splits["train"].push_back(s.id);
  }
  auto dist = factor_distribution(m, "train");
  CHECK(dist.factors.at("weather").at("sunny") == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(dist.factors.at("weather").at("rainy") == doctest::Approx(0.6).epsilon(1e-12));

  DatasetManifest all_sunny = m;
  for (auto& s : all_sunny.samples) s.factors["weather"] = "sunny";
  auto d2 = factor_distribution(all_sunny, "train");
  CHECK(d2.factors.at("weather").size() == 1);
  CHECK(d2.factors.at("weather").at("sunny") == doctest::Approx(1.0));

  DatasetManifest missing = m;
  missing.samples[3].factors.clear();
  CHECK_THROWS_AS(factor_distribution(missing, "train"), std::runtime_error);
}

TEST_CASE("factor_distribution reproduces a target mixture exactly") {
  // proportions chosen up front; the empirical distribution must match them
  const std::map<std::string, int> weather_counts = {{"sunny", 480}, {"rainy", 360}, {"foggy", 360}};
  const std::map<std::string, int> light_counts = {{"day", 900}, {"night", 300}};
  DatasetManifest m;
  m.name = "aota_like";
  int idx = 0;
  std::vector<std::string> weather_seq, light_seq;
  for (const auto& [cat, c] : weather_counts)
    for (int i = 0; i < c; ++i) weather_seq.push_back(cat);
  for (const auto& [cat, c] : light_counts)
    for (int i = 0; i < c; ++i) light_seq.push_back(cat);
  for (int i = 0; i < 1200; ++i) {
    auto s = make_sample("n" + std::to_string(idx++), Label::Negative, -1, 10, 50);
    s.factors["weather"] = weather_seq[i];
    s.factors["lighting"] = light_seq[i];
    m.samples.push_back(s);
    m.splits["train"].push_back(s.id);
  }
  auto dist = factor_distribution(m, "train");
  CHECK(dist.factors.at("weather").at("sunny") == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(dist.factors.at("weather").at("rainy") == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(dist.factors.at("weather").at("foggy") == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(dist.factors.at("lighting").at("day") == doctest::Approx(0.75).epsilon(1e-12));
  double sum = 0.0;
  for (const auto& [cat, p] : dist.factors.at("weather")) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sample_factor_prompts is seeded and matches the distribution") {
  FactorDistribution dist;
  dist.factors["weather"] = {{"sunny", 1.0}};
  auto prompts = sample_factor_prompts(dist, 5, 7);
  REQUIRE(prompts.size() == 5);
  for (const auto& p : prompts) CHECK(p.at("weather") == "sunny");

  FactorDistribution two;
  two.factors["weather"] = {{"rainy", 0.6}, {"sunny", 0.4}};
  auto a = sample_factor_prompts(two, 100, 1234);
  auto b = sample_factor_prompts(two, 100, 1234);
  CHECK(a == b);

  auto big = sample_factor_prompts(two, 10000, 5);
  int sunny = 0;
  for (const auto& p : big) sunny += p.at("weather") == "sunny";
  CHECK(sunny / 10000.0 == doctest::Approx(0.4).epsilon(0.05));  // +/- 0.02 absolute
  CHECK(std::fabs(sunny / 10000.0 - 0.4) <= 0.02);

  CHECK_THROWS_AS(sample_factor_prompts(FactorDistribution{}, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_factor_prompts(two, 0, 1), std::invalid_argument);
}

namespace {

DatasetManifest dad_like_manifest() {
  DatasetManifest m;
  m.name = "dad_like";
  for (int i = 0; i < 455; ++i) {
    auto s = make_sample("trp" + std::to_string(i), Label::Positive, 90, 20, 100);
    m.samples.push_back(s);
    m.splits["train"].push_back(s.id);
  }
  for (int i = 0; i < 829; ++i) {
    auto s = make_sample("trn" + std::to_string(i), Label::Negative, -1, 20, 100);
    m.samples.push_back(s);
    m.splits["train"].push_back(s.id);
  }
  for (int i = 0; i < 165; ++i) {
    auto s = make_sample("tep" + std::to_string(i), Label::Positive, 90, 20, 100);
    m.samples.push_back(s);
    m.splits["test"].push_back(s.id);
  }
  for (int i = 0; i < 301; ++i) {
    auto s = make_sample("ten" + std::to_string(i), Label::Negative, -1, 20, 100);
    m.samples.push_back(s);
    m.splits["test"].push_back(s.id);
  }
  return m;
}

std::vector<VideoSample> generated_pool(int n) {
  std::vector<VideoSample> out;
  for (int i = 0; i < n; ++i) out.push_back(make_sample("gen" + std::to_string(i), Label::Negative, -1, 20, 100));
  return out;
}

}  // namespace

TEST_CASE("mix_augment add mode follows the floor rule") {
  DatasetManifest m = dad_like_manifest();
  auto pool = generated_pool(400);

  auto out = mix_augment(m, pool, 0.10, 11);
  CHECK(out.splits.at("train").size() == m.splits.at("train").size() + 82);  // floor(0.1*829)
  CHECK(out.splits.at("test") == m.splits.at("test"));

  auto unchanged = mix_augment(m, pool, 0.0, 11);
  CHECK(unchanged.splits.at("train") == m.splits.at("train"));
  CHECK(unchanged.samples.size() == m.samples.size());

  CHECK(mix_augment(m, pool, 0.20, 3).splits.at("train").size() == m.splits.at("train").size() + 165);
  CHECK(mix_augment(m, pool, 0.30, 3).splits.at("train").size() == m.splits.at("train").size() + 248);
  CHECK(mix_augment(m, pool, 0.40, 3).splits.at("train").size() == m.splits.at("train").size() + 331);
}

TEST_CASE("mix_augment replace mode keeps the total constant") {
  DatasetManifest m = dad_like_manifest();
  auto pool = generated_pool(400);
  auto out = mix_augment(m, pool, 0.4, 17, /*replace=*/true);
  CHECK(out.splits.at("train").size() == m.splits.at("train").size());
  CHECK(out.samples.size() == m.samples.size());
  CHECK(out.splits.at("test") == m.splits.at("test"));

  int originals = 0, generated = 0;
  for (const auto& id : out.splits.at("train")) {
    if (id.rfind("gen", 0) == 0)
      ++generated;
    else
      ++originals;
  }
  CHECK(generated == 331);  // floor(0.4*829)
  CHECK(originals == static_cast<int>(m.splits.at("train").size()) - 331);

  std::set<std::string> ids;
  for (const auto& s : out.samples) CHECK(ids.insert(s.id).second);
}

TEST_CASE("mix_augment rejects bad input") {
  DatasetManifest m = dad_like_manifest();
  CHECK_THROWS_AS(mix_augment(m, generated_pool(10), 0.10, 1), std::invalid_argument);  // pool too small
  auto pool = generated_pool(100);
  pool[3].label = Label::Positive;
  CHECK_THROWS_AS(mix_augment(m, pool, 0.05, 1), std::invalid_argument);
}

TEST_CASE("start_frame_stats histogram and quartiles") {
  DatasetManifest single;
  single.name = "s";
  for (int i = 0; i < 8; ++i)
    single.samples.push_back(make_sample("p" + std::to_string(i), Label::Positive, 30, 10, 50));
  auto stats = start_frame_stats(single);
  CHECK(stats.histogram.size() == 1);
  CHECK(stats.histogram.at(30) == 8);

  DatasetManifest uniform;
  uniform.name = "u";
  int idx = 0;
  for (int rep = 0; rep < 4; ++rep)
    for (int toa = 20; toa <= 45; ++toa) {
      auto s = make_sample("q" + std::to_string(idx++), Label::Positive, toa, 10, 50);
      s.factors["accident_type"] = rep % 2 == 0 ? "crossing" : "rear_end";
      uniform.samples.push_back(s);
    }
  auto ustats = start_frame_stats(uniform);
  CHECK(ustats.overall.median >= 30.0);
  CHECK(ustats.overall.median <= 35.0);
  CHECK(ustats.per_type.size() == 2);
  CHECK(ustats.per_type.at("crossing").count == 52);

  DatasetManifest none;
  none.name = "n";
  none.samples.push_back(make_sample("x", Label::Negative, -1, 10, 50));
  CHECK_THROWS_AS(start_frame_stats(none), std::invalid_argument);
}
