#include "accident/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace accident {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
  if (scheduler_factor <= 0.0 || scheduler_factor > 1.0)
    throw std::invalid_argument("train config: scheduler_factor must be in (0,1]");
  if (scheduler_patience < 1) throw std::invalid_argument("train config: scheduler_patience must be >= 1");
  if (l1_coeff < 0.0 || l2_coeff < 0.0) throw std::invalid_argument("train config: negative regularization");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw std::invalid_argument("train config: bad val_fraction");
}

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& known, const char* what) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument(std::string(what) + ": unknown key '" + key + "'");
  }
}

}  // namespace

ordered_json to_json(const ModelConfig& cfg) {
  ordered_json j;
  j["feature_dim"] = cfg.feature_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  j["num_objects"] = cfg.num_objects;
  j["gcn_layers"] = cfg.gcn_layers;
  j["dilated_layers"] = cfg.dilated_layers;
  j["kernel_size"] = cfg.kernel_size;
  j["dilations"] = cfg.dilations;
  j["temporal_head"] = to_string(cfg.temporal_head);
  j["use_gru_head"] = cfg.use_gru_head;
  j["use_dilated"] = cfg.use_dilated;
  j["use_dgcn"] = cfg.use_dgcn;
  j["use_adaptive_adj"] = cfg.use_adaptive_adj;
  j["vel_mode"] = to_string(cfg.vel_mode);
  j["depth_scale"] = cfg.depth_scale;
  j["paper_compat"] = cfg.paper_compat;
  return j;
}

ordered_json to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["scheduler_factor"] = cfg.scheduler_factor;
  j["scheduler_patience"] = cfg.scheduler_patience;
  j["l1_coeff"] = cfg.l1_coeff;
  j["l2_coeff"] = cfg.l2_coeff;
  j["val_fraction"] = cfg.val_fraction;
  j["seed"] = cfg.seed;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j,
                              {"feature_dim", "hidden_dim", "num_objects", "gcn_layers", "dilated_layers",
                               "kernel_size", "dilations", "temporal_head", "use_gru_head", "use_dilated",
                               "use_dgcn", "use_adaptive_adj", "vel_mode", "depth_scale", "paper_compat"},
                              "model config");
  ModelConfig cfg;
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  cfg.num_objects = j.value("num_objects", cfg.num_objects);
  cfg.gcn_layers = j.value("gcn_layers", cfg.gcn_layers);
  cfg.dilated_layers = j.value("dilated_layers", cfg.dilated_layers);
  cfg.kernel_size = j.value("kernel_size", cfg.kernel_size);
  if (j.contains("dilations")) cfg.dilations = j.at("dilations").get<std::vector<int>>();
  if (j.contains("temporal_head")) cfg.temporal_head = temporal_head_from_string(j.at("temporal_head"));
  cfg.use_gru_head = j.value("use_gru_head", cfg.use_gru_head);
  cfg.use_dilated = j.value("use_dilated", cfg.use_dilated);
  cfg.use_dgcn = j.value("use_dgcn", cfg.use_dgcn);
  cfg.use_adaptive_adj = j.value("use_adaptive_adj", cfg.use_adaptive_adj);
  if (j.contains("vel_mode")) cfg.vel_mode = vel_mode_from_string(j.at("vel_mode"));
  cfg.depth_scale = j.value("depth_scale", cfg.depth_scale);
  cfg.paper_compat = j.value("paper_compat", cfg.paper_compat);
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                              {"epochs", "batch_size", "lr", "scheduler_factor", "scheduler_patience", "l1_coeff",
                               "l2_coeff", "val_fraction", "seed", "checkpoint_dir"},
                              "train config");
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.scheduler_factor = j.value("scheduler_factor", cfg.scheduler_factor);
  cfg.scheduler_patience = j.value("scheduler_patience", cfg.scheduler_patience);
  cfg.l1_coeff = j.value("l1_coeff", cfg.l1_coeff);
  cfg.l2_coeff = j.value("l2_coeff", cfg.l2_coeff);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.checkpoint_dir = j.value("checkpoint_dir", cfg.checkpoint_dir);
  cfg.validate();
  return cfg;
}

double frame_weight(const VideoSample& sample, int frame) {
  if (sample.label == Label::Positive && frame < sample.toa)
    return 1.0 + std::exp(-(static_cast<double>(sample.toa) - frame - 1) / sample.fps);
  return 1.0;
}

double frame_loss(const Tensor& probs, const VideoSample& sample) {
  if (probs.cols() != 2 || probs.rows() < 1) throw std::invalid_argument("frame_loss: probs must be [T,2]");
  const int target = sample.label == Label::Positive ? 1 : 0;
  double total = 0.0;
  for (int t = 0; t < probs.rows(); ++t) {
    const double p = std::max(static_cast<double>(probs(t, target)), 1e-7);
    total += frame_weight(sample, t) * -std::log(p);
  }
  return total / probs.rows();
}

double regularized_loss(double data_loss, const ModelParams& params, double l1, double l2) {
  return data_loss + l1 * params.l1_norm() + l2 * params.l2_norm_sq();
}

Var build_loss_sum(Tape& tape, Var probs, const VideoSample& sample) {
  const Tensor& p = tape.val(probs);
  const int target = sample.label == Label::Positive ? 1 : 0;
  Tensor wmask(p.rows(), 2);
  for (int t = 0; t < p.rows(); ++t) wmask(t, target) = frame_weight(sample, t);
  return tape.neg(tape.sum_all(tape.cmul(tape.log_clamped(probs, 1e-7), std::move(wmask))));
}

BundleMap load_bundles(const DatasetManifest& manifest, const std::string& manifest_path,
                       const std::vector<std::string>& ids) {
  BundleMap out;
  for (const auto& id : ids) {
    const VideoSample* s = manifest.find(id);
    if (!s) throw std::runtime_error("load_bundles: unknown id " + id);
    out.emplace(id, read_bundle(resolve_bundle_path(manifest_path, s->bundle_path)));
  }
  return out;
}

namespace {

void quantize_to_f32(Tensor& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
}

// Training state is held at checkpoint precision at every epoch boundary so a
// resumed run is bit-identical to an uninterrupted one.
void quantize_state(TrainState& state) {
  for (auto& e : state.params.entries()) quantize_to_f32(*e.tensor);
  for (auto& t : state.adam.m) quantize_to_f32(t);
  for (auto& t : state.adam.v) quantize_to_f32(t);
}

double video_loss_sum(const FeatureBundle& bundle, const VideoSample& sample, const ModelParams& params,
                      const ModelConfig& cfg) {
  Tape tape;
  ParamVars pv = register_params(tape, params, false);
  ForwardGraph g = build_forward(tape, pv, bundle, cfg);
  Var loss = build_loss_sum(tape, g.probs, sample);
  return tape.val(loss)[0];
}

}  // namespace

TrainState train(const DatasetManifest& manifest, const BundleMap& bundles, const ModelConfig& mcfg,
                 const TrainConfig& tcfg, const std::string& resume_checkpoint, std::vector<EpochLog>* log) {
  mcfg.validate();
  tcfg.validate();

  auto split_it = manifest.splits.find("train");
  if (split_it == manifest.splits.end() || split_it->second.empty())
    throw std::invalid_argument("train: empty train split");
  std::vector<std::string> all_ids = split_it->second;
  for (const auto& id : all_ids) {
    if (!manifest.find(id)) throw std::invalid_argument("train: id " + id + " missing from manifest");
    if (!bundles.count(id)) throw std::invalid_argument("train: bundle for " + id + " not loaded");
  }

  // seeded hold-out monitored by the plateau scheduler
  std::vector<std::string> shuffled = all_ids;
  std::mt19937_64 split_rng(tcfg.seed ^ 0xC0FFEE1234567890ULL);
  std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
  int n_val = 0;
  if (shuffled.size() >= 2) {
    n_val = std::max(1, static_cast<int>(std::floor(tcfg.val_fraction * shuffled.size())));
    n_val = std::min<int>(n_val, static_cast<int>(shuffled.size()) - 1);
  }
  std::vector<std::string> val_ids(shuffled.begin(), shuffled.begin() + n_val);
  std::vector<std::string> train_ids(shuffled.begin() + n_val, shuffled.end());

  TrainState state;
  bool resumed = false;
  if (!resume_checkpoint.empty()) {
    state = load_checkpoint(resume_checkpoint, mcfg);
    state.train_config = tcfg;
    resumed = true;
  } else {
    state.model_config = mcfg;
    state.train_config = tcfg;
    state.params = ModelParams::init(mcfg, tcfg.seed);
    const auto entries = state.params.entries();
    for (const auto& e : entries) {
      state.adam.m.push_back(Tensor(e.tensor->rows(), e.tensor->cols()));
      state.adam.v.push_back(Tensor(e.tensor->rows(), e.tensor->cols()));
    }
    state.lr = tcfg.lr;
    state.best_val_loss = std::numeric_limits<double>::infinity();
    quantize_state(state);
  }

  fs::create_directories(tcfg.checkpoint_dir);
  const std::string log_path = (fs::path(tcfg.checkpoint_dir) / "train_log.jsonl").string();
  std::ofstream log_file(log_path, resumed ? std::ios::app : std::ios::trunc);

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  while (state.epoch < tcfg.epochs) {
    const int epoch = state.epoch + 1;
    std::vector<std::string> order = train_ids;
    std::mt19937_64 epoch_rng(tcfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), epoch_rng);

    auto entries = state.params.entries();
    std::vector<Tensor> grad_accum;
    for (const auto& e : entries) grad_accum.push_back(Tensor(e.tensor->rows(), e.tensor->cols()));

    double epoch_loss_sum = 0.0;
    std::int64_t epoch_frames = 0;

    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      for (auto& g : grad_accum) g.zero();
      std::int64_t batch_frames = 0;
      double batch_loss_sum = 0.0;

      for (std::size_t k = start; k < stop; ++k) {
        const VideoSample& sample = *manifest.find(order[k]);
        const FeatureBundle& bundle = bundles.at(order[k]);
        Tape tape;
        ParamVars pv = register_params(tape, state.params, true);
        ForwardGraph fg = build_forward(tape, pv, bundle, mcfg);
        Var loss = build_loss_sum(tape, fg.probs, sample);
        tape.backward(loss);
        for (std::size_t i = 0; i < entries.size(); ++i) {
          const Tensor& g = tape.grad(pv.list[i].second);
          Tensor& acc = grad_accum[i];
          for (std::int64_t n = 0; n < acc.size(); ++n) acc[n] += g[n];
        }
        batch_loss_sum += tape.val(loss)[0];
        batch_frames += bundle.num_frames;
      }

      if (!std::isfinite(batch_loss_sum)) throw std::runtime_error("train: loss diverged (non-finite)");
      epoch_loss_sum += batch_loss_sum;
      epoch_frames += batch_frames;

      // batch gradient = masked frame mean + regularizer
      state.adam.step += 1;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.adam.step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.adam.step));
      for (std::size_t i = 0; i < entries.size(); ++i) {
        Tensor& theta = *entries[i].tensor;
        Tensor& m = state.adam.m[i];
        Tensor& v = state.adam.v[i];
        const Tensor& acc = grad_accum[i];
        for (std::int64_t n = 0; n < theta.size(); ++n) {
          double g = acc[n] / static_cast<double>(batch_frames);
          const double th = theta[n];
          g += tcfg.l1_coeff * (th > 0.0 ? 1.0 : (th < 0.0 ? -1.0 : 0.0)) + 2.0 * tcfg.l2_coeff * th;
          m[n] = kBeta1 * m[n] + (1.0 - kBeta1) * g;
          v[n] = kBeta2 * v[n] + (1.0 - kBeta2) * g * g;
          theta[n] = th - state.lr * (m[n] / bc1) / (std::sqrt(v[n] / bc2) + kEps);
        }
      }
    }

    const double train_loss = epoch_loss_sum / static_cast<double>(epoch_frames);

    double val_loss = train_loss;
    if (!val_ids.empty()) {
      double vsum = 0.0;
      std::int64_t vframes = 0;
      for (const auto& id : val_ids) {
        vsum += video_loss_sum(bundles.at(id), *manifest.find(id), state.params, mcfg);
        vframes += bundles.at(id).num_frames;
      }
      val_loss = vsum / static_cast<double>(vframes);
    }
    if (!std::isfinite(val_loss)) throw std::runtime_error("train: validation loss diverged");

    bool improved = val_loss < state.best_val_loss;
    if (improved) {
      state.best_val_loss = val_loss;
      state.bad_epochs = 0;
    } else {
      state.bad_epochs += 1;
      if (state.bad_epochs >= tcfg.scheduler_patience) {
        state.lr *= tcfg.scheduler_factor;
        state.bad_epochs = 0;
      }
    }
    state.lr_history.push_back(state.lr);

    state.epoch = epoch;
    state.last_train_loss = train_loss;
    state.last_val_loss = val_loss;
    quantize_state(state);

    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
    save_checkpoint(state, (fs::path(tcfg.checkpoint_dir) / name).string());
    if (improved) save_checkpoint(state, (fs::path(tcfg.checkpoint_dir) / "best.ckpt").string());

    ordered_json line;
    line["epoch"] = epoch;
    line["train_loss"] = train_loss;
    line["val_loss"] = val_loss;
    line["lr"] = state.lr;
    log_file << line.dump() << "\n";
    log_file.flush();
    if (log) log->push_back({epoch, train_loss, val_loss, state.lr});
  }

  return state;
}

namespace {

constexpr char kCkptMagic[4] = {'A', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, const Tensor& t) {
  std::vector<float> buf(t.size());
  for (std::int64_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

void read_f32(std::istream& is, Tensor& t) {
  std::vector<float> buf(t.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (static_cast<std::int64_t>(is.gcount()) != t.size() * 4) throw std::runtime_error("checkpoint: truncated blob");
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(buf[i]);
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  const auto entries = state.params.entries();
  ordered_json meta;
  meta["format_version"] = kCkptVersion;
  meta["model_config"] = to_json(state.model_config);
  meta["train_config"] = to_json(state.train_config);
  meta["epoch"] = state.epoch;
  meta["lr"] = state.lr;
  meta["best_val_loss"] =
      std::isfinite(state.best_val_loss) ? json(state.best_val_loss) : json();  // null encodes +inf
  meta["bad_epochs"] = state.bad_epochs;
  meta["lr_history"] = state.lr_history;
  meta["adam_step"] = state.adam.step;
  meta["metrics"] = {{"train_loss", state.last_train_loss}, {"val_loss", state.last_val_loss}};
  meta["arrays"] = ordered_json::array();
  auto add_array = [&meta](const std::string& name, const Tensor& t) {
    meta["arrays"].push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  };
  for (const auto& e : entries) add_array(e.name, *e.tensor);
  for (std::size_t i = 0; i < entries.size(); ++i) add_array("adam.m." + entries[i].name, state.adam.m[i]);
  for (std::size_t i = 0; i < entries.size(); ++i) add_array("adam.v." + entries[i].name, state.adam.v[i]);
  const std::string mtext = meta.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kCkptMagic, 4);
  put_u32le(os, kCkptVersion);
  put_u32le(os, static_cast<std::uint32_t>(mtext.size()));
  os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& e : entries) write_f32(os, *e.tensor);
  for (const auto& t : state.adam.m) write_f32(os, t);
  for (const auto& t : state.adam.v) write_f32(os, t);
  os.flush();
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0) throw std::runtime_error("load_checkpoint: bad magic");
  if (get_u32le(is) != kCkptVersion) throw std::runtime_error("load_checkpoint: unsupported version");
  const std::uint32_t mlen = get_u32le(is);
  std::string mtext(mlen, '\0');
  is.read(mtext.data(), mlen);
  if (!is) throw std::runtime_error("load_checkpoint: truncated metadata");

  json meta = json::parse(mtext);
  TrainState state;
  state.model_config = model_config_from_json(meta.at("model_config"));
  state.train_config = train_config_from_json(meta.at("train_config"));
  state.epoch = meta.at("epoch").get<int>();
  state.lr = meta.at("lr").get<double>();
  state.best_val_loss =
      meta.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity() : meta.at("best_val_loss").get<double>();
  state.bad_epochs = meta.at("bad_epochs").get<int>();
  state.lr_history = meta.at("lr_history").get<std::vector<double>>();
  state.adam.step = meta.at("adam_step").get<std::int64_t>();
  state.last_train_loss = meta.at("metrics").value("train_loss", 0.0);
  state.last_val_loss = meta.at("metrics").value("val_loss", 0.0);

  state.params = ModelParams::init(state.model_config, 0);
  auto entries = state.params.entries();
  for (const auto& e : entries) {
    state.adam.m.push_back(Tensor(e.tensor->rows(), e.tensor->cols()));
    state.adam.v.push_back(Tensor(e.tensor->rows(), e.tensor->cols()));
  }

  const auto& arrays = meta.at("arrays");
  const std::size_t expected = entries.size() * 3;
  if (arrays.size() != expected) throw std::runtime_error("load_checkpoint: array index size mismatch");
  std::size_t idx = 0;
  auto read_named = [&](const std::string& name, Tensor& t) {
    const auto& a = arrays.at(idx++);
    if (a.at("name").get<std::string>() != name || a.at("rows").get<int>() != t.rows() ||
        a.at("cols").get<int>() != t.cols())
      throw std::runtime_error("load_checkpoint: array mismatch at " + name);
    read_f32(is, t);
  };
  for (const auto& e : entries) read_named(e.name, *e.tensor);
  for (std::size_t i = 0; i < entries.size(); ++i) read_named("adam.m." + entries[i].name, state.adam.m[i]);
  for (std::size_t i = 0; i < entries.size(); ++i) read_named("adam.v." + entries[i].name, state.adam.v[i]);
  is.peek();
  if (!is.eof()) throw std::runtime_error("load_checkpoint: trailing bytes");
  return state;
}

TrainState load_checkpoint(const std::string& path, const ModelConfig& expected) {
  TrainState state = load_checkpoint(path);
  if (!(state.model_config == expected))
    throw std::runtime_error("load_checkpoint: stored model config does not match expected config");
  return state;
}

}  // namespace accident
