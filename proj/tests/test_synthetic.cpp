#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "accident/graph.hpp"
#include "accident/synthetic.hpp"

using namespace accident;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p =
      fs::temp_directory_path() / ("accident_syn_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

struct LinearAgent {
  double px, py, vx, vy, d, vd;
};

Trajectories make_trajectories(const std::vector<LinearAgent>& agents, int frames) {
  Trajectories traj;
  for (int t = 0; t < frames; ++t) {
    Tensor pos(static_cast<int>(agents.size()), 2);
    std::vector<double> dep(agents.size());
    for (std::size_t a = 0; a < agents.size(); ++a) {
      pos(static_cast<int>(a), 0) = agents[a].px + agents[a].vx * t;
      pos(static_cast<int>(a), 1) = agents[a].py + agents[a].vy * t;
      dep[a] = agents[a].d + agents[a].vd * t;
    }
    traj.positions.push_back(std::move(pos));
    traj.depths.push_back(std::move(dep));
  }
  return traj;
}

// earliest integer frame where the normalized squared distance of a linear
// pair drops below threshold^2, from the quadratic's roots
std::optional<int> analytic_crossing(const LinearAgent& a, const LinearAgent& b, int frames, double thr, double dd,
                                     double scale) {
  const double dx0 = (a.px - b.px) / dd, dvx = (a.vx - b.vx) / dd;
  const double dy0 = (a.py - b.py) / dd, dvy = (a.vy - b.vy) / dd;
  const double dz0 = (a.d - b.d) / scale, dvz = (a.vd - b.vd) / scale;
  const double qa = dvx * dvx + dvy * dvy + dvz * dvz;
  const double qb = 2.0 * (dx0 * dvx + dy0 * dvy + dz0 * dvz);
  const double qc = dx0 * dx0 + dy0 * dy0 + dz0 * dz0 - thr * thr;
  if (qa < 1e-18) {
    if (qc < 0.0) return 0;
    return std::nullopt;
  }
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) return std::nullopt;
  const double t_lo = (-qb - std::sqrt(disc)) / (2.0 * qa);
  const double t_hi = (-qb + std::sqrt(disc)) / (2.0 * qa);
  const int first = std::max(0, static_cast<int>(std::ceil(t_lo)));
  if (first > t_hi || first >= frames) return std::nullopt;
  return first;
}

}  // namespace

TEST_CASE("oracle flags a head-on pair at the analytic crossing") {
  const double dd = diag_norm(1280, 720);
  const double thr = 0.05, scale = 100.0;
  LinearAgent a{100, 360, 10, 0, 30, 0};
  LinearAgent b{900, 360, -10, 0, 30, 0};
  const int frames = 60;
  auto traj = make_trajectories({a, b}, frames);
  auto [label, toa] = oracle_label(traj, thr, dd, scale);
  CHECK(label == Label::Positive);
  auto expected = analytic_crossing(a, b, frames, thr, dd, scale);
  REQUIRE(expected.has_value());
  CHECK(std::abs(toa - *expected) <= 1);
}

TEST_CASE("oracle calls receding agents negative and coincident agents positive at 0") {
  const double dd = diag_norm(1280, 720);
  LinearAgent a{600, 300, -5, -2, 30, 0.2};
  LinearAgent b{700, 400, 5, 2, 50, -0.2};
  auto [l1, t1] = oracle_label(make_trajectories({a, b}, 50), 0.05, dd, 100.0);
  CHECK(l1 == Label::Negative);
  CHECK(t1 == -1);

  LinearAgent c{500, 300, 0, 0, 40, 0};
  auto [l2, t2] = oracle_label(make_trajectories({c, c}, 10), 0.05, dd, 100.0);
  CHECK(l2 == Label::Positive);
  CHECK(t2 == 0);

  auto [l3, t3] = oracle_label(make_trajectories({a}, 10), 0.05, dd, 100.0);
  CHECK(l3 == Label::Negative);
  CHECK(t3 == -1);
}

TEST_CASE("oracle matches the quadratic minimization on random 6-agent scenes") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double dd = diag_norm(1280, 720);
  const double thr = 0.06, scale = 100.0;
  const int frames = 50;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LinearAgent> agents;
    for (int i = 0; i < 6; ++i)
      agents.push_back({u(rng) * 1280, u(rng) * 720, (u(rng) - 0.5) * 12, (u(rng) - 0.5) * 12, u(rng) * 80,
                        (u(rng) - 0.5) * 1.0});
    auto [label, toa] = oracle_label(make_trajectories(agents, frames), thr, dd, scale);

    std::optional<int> best;
    for (std::size_t i = 0; i < agents.size(); ++i)
      for (std::size_t j = i + 1; j < agents.size(); ++j) {
        auto c = analytic_crossing(agents[i], agents[j], frames, thr, dd, scale);
        if (c && (!best || *c < *best)) best = c;
      }
    if (best) {
      CHECK(label == Label::Positive);
      CHECK(std::abs(toa - *best) <= 1);
    } else {
      CHECK(label == Label::Negative);
    }
  }
}

TEST_CASE("gen_scenario is deterministic and internally consistent") {
  ScenarioParams params;
  params.seed = 77;
  params.embed_seed = 5;
  params.num_frames = 40;
  params.feature_dim = 16;
  Scenario a = gen_scenario(params);
  Scenario b = gen_scenario(params);
  CHECK(a.bundle.frame_feat == b.bundle.frame_feat);
  CHECK(a.bundle.obj_feat == b.bundle.obj_feat);
  CHECK(a.bundle.boxes == b.bundle.boxes);
  CHECK(a.sample.toa == b.sample.toa);
  CHECK(a.sample.label == b.sample.label);

  // re-running the oracle on the stored geometry reproduces the label
  auto traj = trajectories_from_bundle(a.bundle);
  auto [label, toa] = oracle_label(traj, params.collision_threshold, diag_norm(params.width, params.height),
                                   params.depth_scale);
  CHECK(label == a.sample.label);
  CHECK(toa == a.sample.toa);
}

TEST_CASE("gen_dataset honors counts, split sizes and determinism") {
  const fs::path dir1 = temp_dir(), dir2 = temp_dir();
  ScenarioParams params;
  params.seed = 11;
  params.num_frames = 30;
  params.feature_dim = 8;
  DatasetManifest m = gen_dataset(0, 5, params, dir1.string());
  CHECK(m.samples.size() == 5);
  for (const auto& s : m.samples) CHECK(s.label == Label::Negative);
  CHECK(m.splits.at("train").size() == 4);
  CHECK(m.splits.at("test").size() == 1);
  for (const auto& s : m.samples) CHECK(fs::exists(dir1 / s.bundle_path));

  DatasetManifest m2 = gen_dataset(0, 5, params, dir2.string());
  CHECK(m2.samples.size() == m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    CHECK(m.samples[i].id == m2.samples[i].id);
    CHECK(m.samples[i].toa == m2.samples[i].toa);
  }
  std::ifstream f1(dir1 / m.samples[0].bundle_path, std::ios::binary);
  std::ifstream f2(dir2 / m.samples[0].bundle_path, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  CHECK_THROWS_AS(gen_dataset(0, 0, params, dir1.string()), std::invalid_argument);
}

TEST_CASE("gen_dataset positives spread over many start frames and agree with the oracle") {
  const fs::path dir = temp_dir();
  ScenarioParams params;
  params.seed = 2024;
  DatasetManifest m = gen_dataset(60, 20, params, dir.string());

  std::set<int> toas;
  const double dd = diag_norm(params.width, params.height);
  for (const auto& s : m.samples) {
    FeatureBundle b = read_bundle((dir / s.bundle_path).string());
    auto [label, toa] = oracle_label(trajectories_from_bundle(b), params.collision_threshold, dd, params.depth_scale);
    CHECK(label == s.label);
    CHECK(toa == s.toa);
    CHECK(validate_sample(s, b).empty());
    if (s.label == Label::Positive) toas.insert(s.toa);
  }
  CHECK(toas.size() >= 10);
}

TEST_CASE("embedding keeps pairwise geometry linearly decodable") {
  // least-squares probe: squared embedding differences against squared
  // normalized 3D distance; a degenerate embedding would leave R^2 low
  ScenarioParams params;
  params.seed = 31;
  params.noise_std = 0.0;
  params.num_frames = 30;
  params.feature_dim = 32;

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  const double dd = diag_norm(params.width, params.height);
  for (int sc = 0; sc < 6; ++sc) {
    ScenarioParams p = params;
    p.seed = params.seed + sc;
    p.embed_seed = params.seed;
    Scenario s = gen_scenario(p);
    const auto traj = trajectories_from_bundle(s.bundle);
    std::vector<int> slots;
    for (int n = 0; n < s.bundle.num_objects; ++n)
      if (s.bundle.score_at(0, n) > 0.0f) slots.push_back(n);
    for (int t = 0; t < s.bundle.num_frames; t += 3) {
      const Tensor d = pairwise_distance3d(traj.positions[t], traj.depths[t], dd, params.depth_scale,
                                           std::vector<bool>(slots.size(), true));
      for (std::size_t i = 0; i < slots.size(); ++i)
        for (std::size_t j = i + 1; j < slots.size(); ++j) {
          std::vector<double> feat(params.feature_dim + 1, 1.0);  // bias term at the end
          for (int k = 0; k < params.feature_dim; ++k) {
            const double diff = s.bundle.obj_at(t, slots[i], k) - s.bundle.obj_at(t, slots[j], k);
            feat[k] = diff * diff;
          }
          xs.push_back(std::move(feat));
          ys.push_back(d(static_cast<int>(i), static_cast<int>(j)) * d(static_cast<int>(i), static_cast<int>(j)));
        }
    }
  }

  const int dim = params.feature_dim + 1;
  // normal equations with a small ridge, solved by Gaussian elimination
  std::vector<std::vector<double>> ata(dim, std::vector<double>(dim, 0.0));
  std::vector<double> aty(dim, 0.0);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    for (int i = 0; i < dim; ++i) {
      aty[i] += xs[r][i] * ys[r];
      for (int j = 0; j < dim; ++j) ata[i][j] += xs[r][i] * xs[r][j];
    }
  }
  for (int i = 0; i < dim; ++i) ata[i][i] += 1e-10;
  for (int col = 0; col < dim; ++col) {
    int pivot = col;
    for (int r = col + 1; r < dim; ++r)
      if (std::fabs(ata[r][col]) > std::fabs(ata[pivot][col])) pivot = r;
    std::swap(ata[col], ata[pivot]);
    std::swap(aty[col], aty[pivot]);
    for (int r = 0; r < dim; ++r) {
      if (r == col || ata[r][col] == 0.0) continue;
      const double factor = ata[r][col] / ata[col][col];
      for (int c = col; c < dim; ++c) ata[r][c] -= factor * ata[col][c];
      aty[r] -= factor * aty[col];
    }
  }
  std::vector<double> beta(dim);
  for (int i = 0; i < dim; ++i) beta[i] = aty[i] / ata[i][i];

  double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
  for (double y : ys) mean += y;
  mean /= ys.size();
  for (std::size_t r = 0; r < xs.size(); ++r) {
    double pred = 0.0;
    for (int i = 0; i < dim; ++i) pred += beta[i] * xs[r][i];
    ss_res += (ys[r] - pred) * (ys[r] - pred);
    ss_tot += (ys[r] - mean) * (ys[r] - mean);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  CHECK(r2 > 0.9);
}
