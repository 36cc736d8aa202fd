#include "accident/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>

#include "accident/graph.hpp"

namespace accident {

namespace fs = std::filesystem;

void ScenarioParams::validate() const {
  if (num_agents < 2 || num_agents > kPaperObjectSlots)
    throw std::invalid_argument("scenario: num_agents must be in [2,19]");
  if (num_agents_jitter < 0) throw std::invalid_argument("scenario: negative jitter");
  if (num_frames < 2) throw std::invalid_argument("scenario: num_frames must be >= 2");
  if (fps < 1) throw std::invalid_argument("scenario: fps must be >= 1");
  if (width <= 0 || height <= 0) throw std::invalid_argument("scenario: bad extent");
  if (depth_min <= 0.0 || depth_max <= depth_min) throw std::invalid_argument("scenario: bad depth range");
  if (collision_threshold <= 0.0) throw std::invalid_argument("scenario: collision_threshold must be positive");
  if (feature_dim < 1) throw std::invalid_argument("scenario: feature_dim must be >= 1");
  if (noise_std < 0.0) throw std::invalid_argument("scenario: negative noise_std");
  if (max_speed <= 0.0 || max_depth_speed <= 0.0) throw std::invalid_argument("scenario: bad speed range");
}

std::pair<Label, int> oracle_label(const Trajectories& traj, double threshold, double dd, double depth_scale) {
  const int frames = traj.num_frames();
  const int agents = traj.num_agents();
  const std::vector<bool> present(agents, true);
  for (int t = 0; t < frames; ++t) {
    const Tensor d = pairwise_distance3d(traj.positions[t], traj.depths[t], dd, depth_scale, present);
    for (int i = 0; i < agents; ++i)
      for (int j = i + 1; j < agents; ++j)
        if (d(i, j) < threshold) return {Label::Positive, t};
  }
  return {Label::Negative, -1};
}

double min_pairwise_distance(const Trajectories& traj, double dd, double depth_scale) {
  const int frames = traj.num_frames();
  const int agents = traj.num_agents();
  const std::vector<bool> present(agents, true);
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < frames; ++t) {
    const Tensor d = pairwise_distance3d(traj.positions[t], traj.depths[t], dd, depth_scale, present);
    for (int i = 0; i < agents; ++i)
      for (int j = i + 1; j < agents; ++j) best = std::min(best, d(i, j));
  }
  return best;
}

Trajectories trajectories_from_bundle(const FeatureBundle& bundle) {
  // present slots must be constant over the clip for this reconstruction
  std::vector<int> slots;
  for (int n = 0; n < bundle.num_objects; ++n)
    if (bundle.score_at(0, n) > 0.0f) slots.push_back(n);
  Trajectories traj;
  for (int t = 0; t < bundle.num_frames; ++t) {
    Tensor pos(static_cast<int>(slots.size()), 2);
    std::vector<double> dep(slots.size());
    for (std::size_t a = 0; a < slots.size(); ++a) {
      const int n = slots[a];
      if (bundle.score_at(t, n) <= 0.0f) throw std::invalid_argument("trajectories_from_bundle: slot vanishes mid-clip");
      pos(static_cast<int>(a), 0) = (bundle.box_at(t, n, 0) + bundle.box_at(t, n, 2)) / 2.0;
      pos(static_cast<int>(a), 1) = (bundle.box_at(t, n, 1) + bundle.box_at(t, n, 3)) / 2.0;
      dep[a] = bundle.depth_at(t, n);
    }
    traj.positions.push_back(std::move(pos));
    traj.depths.push_back(std::move(dep));
  }
  return traj;
}

Tensor embedding_map(int feature_dim, std::uint64_t embed_seed) {
  std::mt19937_64 rng(embed_seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor m(feature_dim, 5);
  for (std::int64_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
  return m;
}

namespace {

struct AgentMotion {
  double px, py, vx, vy;  // pixels, pixels/frame
  double d, vd;           // meters, meters/frame
};

struct Layout {
  std::vector<AgentMotion> agents;
};

bool in_bounds(double x, double lo, double hi) { return x >= lo && x <= hi; }

AgentMotion sample_wanderer(const ScenarioParams& p, std::mt19937_64& rng) {
  const double margin = p.box_size;
  std::uniform_real_distribution<double> ux(margin, p.width - margin);
  std::uniform_real_distribution<double> uy(margin, p.height - margin);
  std::uniform_real_distribution<double> ud(p.depth_min, p.depth_max);
  const int last = p.num_frames - 1;
  AgentMotion a{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    a.px = ux(rng);
    a.py = uy(rng);
    const double ex = ux(rng), ey = uy(rng);
    a.vx = (ex - a.px) / last;
    a.vy = (ey - a.py) / last;
    if (std::hypot(a.vx, a.vy) <= p.max_speed) break;
  }
  a.d = ud(rng);
  const double ed = ud(rng);
  a.vd = std::clamp((ed - a.d) / last, -p.max_depth_speed, p.max_depth_speed);
  return a;
}

// Two agents steered to meet at frame t_star; everyone else wanders.
Layout sample_converging(const ScenarioParams& p, int agents, std::mt19937_64& rng, int* t_star_out) {
  const double margin = p.box_size;
  std::uniform_int_distribution<int> ut(p.num_frames / 4, 3 * p.num_frames / 4);
  std::uniform_real_distribution<double> umx(p.width * 0.25, p.width * 0.75);
  std::uniform_real_distribution<double> umy(p.height * 0.25, p.height * 0.75);
  std::uniform_real_distribution<double> ux(margin, p.width - margin);
  std::uniform_real_distribution<double> uy(margin, p.height - margin);
  std::uniform_real_distribution<double> ud(p.depth_min, p.depth_max);
  const int last = p.num_frames - 1;

  Layout layout;
  const int t_star = ut(rng);
  *t_star_out = t_star;
  const double mx = umx(rng), my = umy(rng), md = ud(rng);
  for (int k = 0; k < 2; ++k) {
    AgentMotion a{};
    for (int attempt = 0; attempt < 128; ++attempt) {
      a.px = ux(rng);
      a.py = uy(rng);
      a.vx = (mx - a.px) / t_star;
      a.vy = (my - a.py) / t_star;
      const double fx = a.px + a.vx * last, fy = a.py + a.vy * last;
      if (std::hypot(a.vx, a.vy) <= p.max_speed && in_bounds(fx, 0.0, p.width) && in_bounds(fy, 0.0, p.height)) break;
    }
    a.d = ud(rng);
    a.vd = (md - a.d) / t_star;
    if (std::fabs(a.vd) > p.max_depth_speed) a.vd = std::copysign(p.max_depth_speed, a.vd);
    const double fd = a.d + a.vd * last;
    if (fd < 0.5) a.vd = (0.5 - a.d) / last;
    layout.agents.push_back(a);
  }
  for (int k = 2; k < agents; ++k) layout.agents.push_back(sample_wanderer(p, rng));
  return layout;
}

Layout sample_wandering(const ScenarioParams& p, int agents, std::mt19937_64& rng) {
  Layout layout;
  for (int k = 0; k < agents; ++k) layout.agents.push_back(sample_wanderer(p, rng));
  return layout;
}

}  // namespace

Scenario gen_scenario(const ScenarioParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<int> ujit(-params.num_agents_jitter, params.num_agents_jitter);
  const int agents = std::clamp(params.num_agents + ujit(rng), 2, kPaperObjectSlots);

  std::bernoulli_distribution converge(0.5);
  Layout layout;
  int t_star = -1;
  if (converge(rng)) {
    layout = sample_converging(params, agents, rng, &t_star);
  } else {
    layout = sample_wandering(params, agents, rng);
  }

  // assign agents to a random subset of the 19 slots
  std::vector<int> slots(kPaperObjectSlots);
  for (int i = 0; i < kPaperObjectSlots; ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(agents);

  const Tensor embed = embedding_map(params.feature_dim, params.embed_seed);
  std::normal_distribution<double> noise(0.0, params.noise_std);
  std::uniform_real_distribution<double> uscore(0.6, 1.0);
  std::vector<double> slot_score(agents);
  for (int a = 0; a < agents; ++a) slot_score[a] = uscore(rng);

  const int frames = params.num_frames;
  const int f_dim = params.feature_dim;
  FeatureBundle bundle = FeatureBundle::empty(frames, kPaperObjectSlots, f_dim, params.width, params.height);

  const double half = params.box_size / 2.0;
  std::vector<double> state(5), emb(f_dim), frame_mean(f_dim);
  for (int t = 0; t < frames; ++t) {
    std::fill(frame_mean.begin(), frame_mean.end(), 0.0);
    for (int a = 0; a < agents; ++a) {
      const AgentMotion& m = layout.agents[a];
      const double cx = m.px + m.vx * t;
      const double cy = m.py + m.vy * t;
      const double cd = std::max(0.0, m.d + m.vd * t);
      const int slot = slots[a];
      bundle.box_at(t, slot, 0) = static_cast<float>(cx - half);
      bundle.box_at(t, slot, 1) = static_cast<float>(cy - half);
      bundle.box_at(t, slot, 2) = static_cast<float>(cx + half);
      bundle.box_at(t, slot, 3) = static_cast<float>(cy + half);
      bundle.score_at(t, slot) = static_cast<float>(slot_score[a]);
      bundle.depth_at(t, slot) = static_cast<float>(cd);

      state[0] = cx / params.width;
      state[1] = cy / params.height;
      state[2] = cd / params.depth_max;
      state[3] = m.vx / params.max_speed;
      state[4] = m.vy / params.max_speed;
      for (int j = 0; j < f_dim; ++j) {
        double e = 0.0;
        for (int s = 0; s < 5; ++s) e += embed(j, s) * state[s];
        emb[j] = e;
        frame_mean[j] += e;
      }
      for (int j = 0; j < f_dim; ++j)
        bundle.obj_at(t, slot, j) = static_cast<float>(emb[j] + noise(rng));
    }
    for (int j = 0; j < f_dim; ++j)
      bundle.frame_at(t, j) = static_cast<float>(frame_mean[j] / agents + noise(rng));
  }

  // label from the oracle on the values as stored (f32-rounded), so that
  // re-running it on the written bundle reproduces (label, toa) exactly
  const Trajectories traj = trajectories_from_bundle(bundle);
  const double dd = diag_norm(params.width, params.height);
  auto [label, toa] = oracle_label(traj, params.collision_threshold, dd, params.depth_scale);

  Scenario sc;
  sc.bundle = std::move(bundle);
  sc.sample.label = label;
  sc.sample.toa = toa;
  sc.sample.fps = params.fps;
  sc.sample.num_frames = frames;
  return sc;
}

namespace {

std::string pick_category(std::mt19937_64& rng, const std::vector<std::pair<std::string, double>>& dist) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = uni(rng);
  double acc = 0.0;
  for (const auto& [cat, p] : dist) {
    acc += p;
    if (u < acc) return cat;
  }
  return dist.back().first;
}

}  // namespace

DatasetManifest gen_dataset(int n_pos, int n_neg, const ScenarioParams& params, const std::string& out_dir,
                            double test_fraction) {
  if (n_pos < 0 || n_neg < 0) throw std::invalid_argument("gen_dataset: negative counts");
  if (n_pos + n_neg == 0) throw std::invalid_argument("gen_dataset: nothing to generate");
  if (test_fraction < 0.0 || test_fraction >= 1.0) throw std::invalid_argument("gen_dataset: bad test_fraction");
  params.validate();

  fs::create_directories(fs::path(out_dir) / "bundles");
  const double dd = diag_norm(params.width, params.height);
  // negatives keep a distance margin so the two classes do not overlap at desk scale
  const double neg_margin = 1.3 * params.collision_threshold;

  DatasetManifest manifest;
  manifest.name = "synthetic";
  std::vector<std::string> pos_ids, neg_ids;

  const std::int64_t cap = 200LL * (n_pos + n_neg + 1);
  std::int64_t attempt = 0;
  int accepted = 0;
  while (static_cast<int>(pos_ids.size()) < n_pos || static_cast<int>(neg_ids.size()) < n_neg) {
    if (attempt++ >= cap) throw std::runtime_error("gen_dataset: rejection cap exceeded");
    ScenarioParams sp = params;
    sp.embed_seed = params.seed;
    sp.seed = params.seed + 1 + static_cast<std::uint64_t>(attempt);
    Scenario sc = gen_scenario(sp);

    bool keep = false;
    if (sc.sample.label == Label::Positive) {
      keep = static_cast<int>(pos_ids.size()) < n_pos && sc.sample.toa > 0 && sc.sample.toa < sp.num_frames;
    } else if (static_cast<int>(neg_ids.size()) < n_neg) {
      keep = min_pairwise_distance(trajectories_from_bundle(sc.bundle), dd, params.depth_scale) >= neg_margin;
    }
    if (!keep) continue;

    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "synth_%05d", accepted++);
    sc.sample.id = idbuf;
    sc.sample.bundle_path = std::string("bundles/") + idbuf + ".accf";

    std::mt19937_64 frng(sp.seed ^ 0xFAC70125ULL);
    sc.sample.factors["weather"] = pick_category(frng, {{"sunny", 0.5}, {"rainy", 0.3}, {"foggy", 0.2}});
    sc.sample.factors["lighting"] = pick_category(frng, {{"day", 0.7}, {"night", 0.3}});
    if (sc.sample.label == Label::Positive)
      sc.sample.factors["accident_type"] =
          pick_category(frng, {{"crossing", 0.4}, {"rear_end", 0.35}, {"side_impact", 0.25}});

    write_bundle(sc.bundle, (fs::path(out_dir) / sc.sample.bundle_path).string());
    (sc.sample.label == Label::Positive ? pos_ids : neg_ids).push_back(sc.sample.id);
    manifest.samples.push_back(std::move(sc.sample));
  }

  // stratified train/test split, seeded
  manifest.splits["train"];
  manifest.splits["test"];
  std::mt19937_64 split_rng(params.seed ^ 0x5917A2B3C4D5E6F7ULL);
  auto split_ids = [&](std::vector<std::string>& ids, int test_count) {
    std::shuffle(ids.begin(), ids.end(), split_rng);
    for (int i = 0; i < static_cast<int>(ids.size()); ++i)
      manifest.splits[i < test_count ? "test" : "train"].push_back(ids[i]);
  };
  split_ids(pos_ids, static_cast<int>(std::llround(test_fraction * n_pos)));
  split_ids(neg_ids, static_cast<int>(std::llround(test_fraction * n_neg)));

  save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace accident
