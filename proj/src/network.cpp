#include "accident/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace accident {

std::string to_string(TemporalHead h) {
  switch (h) {
    case TemporalHead::Gru: return "gru";
    case TemporalHead::Lstm: return "lstm";
    case TemporalHead::Transformer: return "transformer";
    case TemporalHead::Tcn: return "tcn";
  }
  return "gru";
}

TemporalHead temporal_head_from_string(const std::string& s) {
  if (s == "gru") return TemporalHead::Gru;
  if (s == "lstm") return TemporalHead::Lstm;
  if (s == "transformer") return TemporalHead::Transformer;
  if (s == "tcn") return TemporalHead::Tcn;
  throw std::invalid_argument("unknown temporal head: " + s);
}

int ModelConfig::receptive_field() const {
  int rf = 1;
  for (int i = 0; i < dilated_layers; ++i) rf += dilations[i] * (kernel_size - 1);
  return rf;
}

void ModelConfig::validate() const {
  if (feature_dim < 1) throw std::invalid_argument("config: feature_dim must be >= 1");
  if (hidden() < 1) throw std::invalid_argument("config: hidden_dim must be >= 1");
  if (num_objects < 1 || num_objects > kPaperObjectSlots)
    throw std::invalid_argument("config: num_objects out of range");
  if (gcn_layers < 1) throw std::invalid_argument("config: gcn_layers must be >= 1");
  if (dilated_layers < 1) throw std::invalid_argument("config: dilated_layers must be >= 1");
  if (kernel_size < 1) throw std::invalid_argument("config: kernel_size must be >= 1");
  if (static_cast<int>(dilations.size()) < dilated_layers)
    throw std::invalid_argument("config: need one dilation rate per dilated layer");
  for (int i = 0; i < dilated_layers; ++i)
    if (dilations[i] < 1) throw std::invalid_argument("config: dilation rates must be >= 1");
  if (depth_scale <= 0.0) throw std::invalid_argument("config: depth_scale must be positive");
}

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

namespace {

constexpr int kTcnLayers = 2;
constexpr int kTcnDilations[kTcnLayers] = {1, 2};

Tensor glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n = cfg.num_objects;
  const int f = cfg.feature_dim;
  const int h = cfg.hidden();
  const int k = cfg.kernel_size;
  std::mt19937_64 rng(seed);

  ModelParams p;
  p.v1 = glorot(n, n, rng);
  p.v2 = glorot(n, n, rng);
  p.a_raw = Tensor::scalar(softplus_inverse(1.0));
  p.gcn_w.push_back(glorot(f, h, rng));
  for (int l = 1; l < cfg.gcn_layers; ++l) p.gcn_w.push_back(glorot(h, h, rng));
  p.lstm_w_ih = glorot(h, 4 * h, rng);
  p.lstm_w_hh = glorot(h, 4 * h, rng);
  p.lstm_b_ih = Tensor(1, 4 * h);
  p.lstm_b_hh = Tensor(1, 4 * h);
  p.fuse_w = glorot(h + f, h, rng);
  p.fuse_b = Tensor(1, h);
  for (int i = 0; i < cfg.dilated_layers; ++i) {
    Conv c;
    c.w = glorot(k * h, h, rng);
    c.b = Tensor(1, h);
    p.conv.push_back(std::move(c));
  }
  p.ln_gain = Tensor::full(1, h, 1.0);
  p.ln_bias = Tensor(1, h);

  if (!cfg.use_gru_head) {
    p.head_lin_w = glorot(h, h, rng);
    p.head_lin_b = Tensor(1, h);
  } else {
    switch (cfg.temporal_head) {
      case TemporalHead::Gru:
        p.head_w_ih = glorot(h, 3 * h, rng);
        p.head_w_hh = glorot(h, 3 * h, rng);
        p.head_b_ih = Tensor(1, 3 * h);
        p.head_b_hh = Tensor(1, 3 * h);
        break;
      case TemporalHead::Lstm:
        p.head_w_ih = glorot(h, 4 * h, rng);
        p.head_w_hh = glorot(h, 4 * h, rng);
        p.head_b_ih = Tensor(1, 4 * h);
        p.head_b_hh = Tensor(1, 4 * h);
        break;
      case TemporalHead::Transformer:
        p.attn_wq = glorot(h, h, rng);
        p.attn_wk = glorot(h, h, rng);
        p.attn_wv = glorot(h, h, rng);
        p.attn_wo = glorot(h, h, rng);
        p.attn_ln1_gain = Tensor::full(1, h, 1.0);
        p.attn_ln1_bias = Tensor(1, h);
        p.ffn_w1 = glorot(h, h, rng);
        p.ffn_b1 = Tensor(1, h);
        p.ffn_w2 = glorot(h, h, rng);
        p.ffn_b2 = Tensor(1, h);
        p.attn_ln2_gain = Tensor::full(1, h, 1.0);
        p.attn_ln2_bias = Tensor(1, h);
        break;
      case TemporalHead::Tcn:
        for (int i = 0; i < kTcnLayers; ++i) {
          Conv c;
          c.w = glorot(k * h, h, rng);
          c.b = Tensor(1, h);
          p.tcn.push_back(std::move(c));
        }
        break;
    }
  }
  p.cls_w = glorot(h, 2, rng);
  p.cls_b = Tensor(1, 2);
  return p;
}

std::vector<NamedTensor> ModelParams::entries() const {
  auto* self = const_cast<ModelParams*>(this);
  std::vector<NamedTensor> out;
  auto push = [&out](const std::string& name, Tensor& t) {
    if (!t.empty()) out.push_back({name, &t});
  };
  push("v1", self->v1);
  push("v2", self->v2);
  push("a_raw", self->a_raw);
  for (std::size_t l = 0; l < self->gcn_w.size(); ++l) push("gcn." + std::to_string(l) + ".w", self->gcn_w[l]);
  push("lstm.w_ih", self->lstm_w_ih);
  push("lstm.w_hh", self->lstm_w_hh);
  push("lstm.b_ih", self->lstm_b_ih);
  push("lstm.b_hh", self->lstm_b_hh);
  push("fuse.w", self->fuse_w);
  push("fuse.b", self->fuse_b);
  for (std::size_t i = 0; i < self->conv.size(); ++i) {
    push("conv." + std::to_string(i) + ".w", self->conv[i].w);
    push("conv." + std::to_string(i) + ".b", self->conv[i].b);
  }
  push("ln.gain", self->ln_gain);
  push("ln.bias", self->ln_bias);
  push("head.rnn.w_ih", self->head_w_ih);
  push("head.rnn.w_hh", self->head_w_hh);
  push("head.rnn.b_ih", self->head_b_ih);
  push("head.rnn.b_hh", self->head_b_hh);
  push("attn.wq", self->attn_wq);
  push("attn.wk", self->attn_wk);
  push("attn.wv", self->attn_wv);
  push("attn.wo", self->attn_wo);
  push("attn.ln1.gain", self->attn_ln1_gain);
  push("attn.ln1.bias", self->attn_ln1_bias);
  push("attn.ffn.w1", self->ffn_w1);
  push("attn.ffn.b1", self->ffn_b1);
  push("attn.ffn.w2", self->ffn_w2);
  push("attn.ffn.b2", self->ffn_b2);
  push("attn.ln2.gain", self->attn_ln2_gain);
  push("attn.ln2.bias", self->attn_ln2_bias);
  for (std::size_t i = 0; i < self->tcn.size(); ++i) {
    push("tcn." + std::to_string(i) + ".w", self->tcn[i].w);
    push("tcn." + std::to_string(i) + ".b", self->tcn[i].b);
  }
  push("head.lin.w", self->head_lin_w);
  push("head.lin.b", self->head_lin_b);
  push("cls.w", self->cls_w);
  push("cls.b", self->cls_b);
  return out;
}

double ModelParams::effective_a() const {
  const double x = a_raw[0];
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double ModelParams::l1_norm() const {
  double s = 0.0;
  for (const auto& e : entries())
    for (std::int64_t i = 0; i < e.tensor->size(); ++i) s += std::fabs((*e.tensor)[i]);
  return s;
}

double ModelParams::l2_norm_sq() const {
  double s = 0.0;
  for (const auto& e : entries())
    for (std::int64_t i = 0; i < e.tensor->size(); ++i) s += (*e.tensor)[i] * (*e.tensor)[i];
  return s;
}

Var ParamVars::get(const std::string& name) const {
  for (const auto& [n, v] : list)
    if (n == name) return v;
  throw std::logic_error("ParamVars: unknown parameter " + name);
}

ParamVars register_params(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamVars pv;
  for (const auto& e : params.entries()) pv.list.emplace_back(e.name, tape.leaf(*e.tensor, requires_grad));
  return pv;
}

std::pair<Var, Var> lstm_cell(Tape& t, Var x, Var h_prev, Var c_prev, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
  const int h = t.val(h_prev).cols();
  Var gates = t.add(t.add(t.matmul(x, w_ih), t.matmul(h_prev, w_hh)), t.add(b_ih, b_hh));
  Var i_g = t.sigmoid(t.slice_cols(gates, 0, h));
  Var f_g = t.sigmoid(t.slice_cols(gates, h, 2 * h));
  Var g_g = t.tanh_(t.slice_cols(gates, 2 * h, 3 * h));
  Var o_g = t.sigmoid(t.slice_cols(gates, 3 * h, 4 * h));
  Var c = t.add(t.mul(f_g, c_prev), t.mul(i_g, g_g));
  Var h_new = t.mul(o_g, t.tanh_(c));
  return {h_new, c};
}

Var gru_cell(Tape& t, Var x, Var h_prev, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
  const int h = t.val(h_prev).cols();
  Var gi = t.add(t.matmul(x, w_ih), b_ih);
  Var gh = t.add(t.matmul(h_prev, w_hh), b_hh);
  Var r = t.sigmoid(t.add(t.slice_cols(gi, 0, h), t.slice_cols(gh, 0, h)));
  Var z = t.sigmoid(t.add(t.slice_cols(gi, h, 2 * h), t.slice_cols(gh, h, 2 * h)));
  Var n = t.tanh_(t.add(t.slice_cols(gi, 2 * h, 3 * h), t.mul(r, t.slice_cols(gh, 2 * h, 3 * h))));
  // h' = (1 - z) * n + z * h_prev
  return t.add(n, t.mul(z, t.sub(h_prev, n)));
}

Tensor positional_encoding(int frames, int dim) {
  Tensor pe(frames, dim);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < dim; ++j) {
      const int pair = j / 2;
      const double rate = std::pow(10000.0, -2.0 * pair / dim);
      pe(t, j) = (j % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return pe;
}

namespace {

struct EdgeCoefs {
  Var c1;  // a / (a+1)
  Var c2;  // 1 / (a+1)
};

EdgeCoefs build_edge_coefs(Tape& t, const ParamVars& pv) {
  Var a_eff = t.softplus(pv.get("a_raw"));
  Var inv = t.reciprocal(t.add_scalar(a_eff, 1.0));
  return {t.mul(a_eff, inv), inv};
}

// Eq-style edge weights for one frame; masked pairs stay exactly zero because
// both constant inputs are pre-masked.
Var build_edge_weights_frame(Tape& t, const EdgeCoefs& ec, const Tensor& dist, const Tensor& vel,
                             const Tensor& pair_mask, VelMode mode) {
  const int n = dist.rows();
  Tensor exp_d(n, n);
  Tensor vel_m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (pair_mask(i, j) <= 0.0) continue;
      exp_d(i, j) = std::exp(-dist(i, j));
      vel_m(i, j) = apply_vel_mode(vel(i, j), mode);
    }
  }
  return t.add(t.smul(ec.c1, t.leaf(std::move(exp_d))), t.smul(ec.c2, t.leaf(std::move(vel_m))));
}

Var build_effective_adjacency(Tape& t, Var adjacency, Var weights, const Tensor& pair_mask) {
  Var masked = t.cmul(t.mul(adjacency, weights), pair_mask);
  return t.rownorm_abs(t.cadd(masked, Tensor::identity(pair_mask.rows())));
}

Var build_spatial_lstm(Tape& t, const ParamVars& pv, const std::vector<Var>& inputs, int h) {
  Var w_ih = pv.get("lstm.w_ih"), w_hh = pv.get("lstm.w_hh");
  Var b_ih = pv.get("lstm.b_ih"), b_hh = pv.get("lstm.b_hh");
  Var hp = t.leaf(Tensor(1, h)), cp = t.leaf(Tensor(1, h));
  std::vector<Var> hidden;
  hidden.reserve(inputs.size());
  for (Var x : inputs) {
    auto [hn, cn] = lstm_cell(t, x, hp, cp, w_ih, w_hh, b_ih, b_hh);
    hp = hn;
    cp = cn;
    hidden.push_back(hn);
  }
  return t.stack_rows(hidden);
}

Var build_dilated_conv_stack(Tape& t, const ParamVars& pv, Var x, const ModelConfig& cfg) {
  const int h = t.val(x).cols();
  Var cur = x;
  for (int i = 0; i < cfg.dilated_layers; ++i) {
    Var w = pv.get("conv." + std::to_string(i) + ".w");
    Var acc;
    for (int k = 0; k < cfg.kernel_size; ++k) {
      Var wk = t.slice_rows(w, k * h, (k + 1) * h);
      Var shifted = k == 0 ? cur : t.shift_rows(cur, cfg.dilations[i] * k);
      Var term = t.matmul(shifted, wk);
      acc = k == 0 ? term : t.add(acc, term);
    }
    cur = t.relu(t.add_rowvec(acc, pv.get("conv." + std::to_string(i) + ".b")));
  }
  return cur;
}

Var build_dilated_block(Tape& t, const ParamVars& pv, Var x, const ModelConfig& cfg) {
  Var stack = build_dilated_conv_stack(t, pv, x, cfg);
  return t.layer_norm_rows(t.add(stack, x), pv.get("ln.gain"), pv.get("ln.bias"));
}

Var build_head(Tape& t, const ParamVars& pv, Var z, const ModelConfig& cfg) {
  const Tensor& zv = t.val(z);
  const int frames = zv.rows();
  const int h = zv.cols();

  if (!cfg.use_gru_head) {
    Var w = pv.get("head.lin.w"), b = pv.get("head.lin.b");
    return t.relu(t.add_rowvec(t.matmul(z, w), b));
  }

  switch (cfg.temporal_head) {
    case TemporalHead::Gru: {
      Var w_ih = pv.get("head.rnn.w_ih"), w_hh = pv.get("head.rnn.w_hh");
      Var b_ih = pv.get("head.rnn.b_ih"), b_hh = pv.get("head.rnn.b_hh");
      Var hp = t.leaf(Tensor(1, h));
      std::vector<Var> rows;
      rows.reserve(frames);
      for (int i = 0; i < frames; ++i) {
        hp = gru_cell(t, t.row(z, i), hp, w_ih, w_hh, b_ih, b_hh);
        rows.push_back(hp);
      }
      return t.stack_rows(rows);
    }
    case TemporalHead::Lstm: {
      Var w_ih = pv.get("head.rnn.w_ih"), w_hh = pv.get("head.rnn.w_hh");
      Var b_ih = pv.get("head.rnn.b_ih"), b_hh = pv.get("head.rnn.b_hh");
      Var hp = t.leaf(Tensor(1, h)), cp = t.leaf(Tensor(1, h));
      std::vector<Var> rows;
      rows.reserve(frames);
      for (int i = 0; i < frames; ++i) {
        auto [hn, cn] = lstm_cell(t, t.row(z, i), hp, cp, w_ih, w_hh, b_ih, b_hh);
        hp = hn;
        cp = cn;
        rows.push_back(hn);
      }
      return t.stack_rows(rows);
    }
    case TemporalHead::Transformer: {
      Var x1 = t.cadd(z, positional_encoding(frames, h));
      Var keys = t.matmul(x1, pv.get("attn.wk"));
      Var vals = t.matmul(x1, pv.get("attn.wv"));
      const double scl = 1.0 / std::sqrt(static_cast<double>(h));
      std::vector<Var> rows;
      rows.reserve(frames);
      for (int i = 0; i < frames; ++i) {
        Var q = t.matmul(t.row(x1, i), pv.get("attn.wq"));
        Var logits = t.scale(t.matmul(q, t.transpose(t.slice_rows(keys, 0, i + 1))), scl);
        Var attw = t.softmax_rows(logits);
        Var ctx = t.matmul(attw, t.slice_rows(vals, 0, i + 1));
        rows.push_back(t.add(t.row(x1, i), t.matmul(ctx, pv.get("attn.wo"))));
      }
      Var ln1 = t.layer_norm_rows(t.stack_rows(rows), pv.get("attn.ln1.gain"), pv.get("attn.ln1.bias"));
      Var f1 = t.relu(t.add_rowvec(t.matmul(ln1, pv.get("attn.ffn.w1")), pv.get("attn.ffn.b1")));
      Var f2 = t.add_rowvec(t.matmul(f1, pv.get("attn.ffn.w2")), pv.get("attn.ffn.b2"));
      return t.layer_norm_rows(t.add(ln1, f2), pv.get("attn.ln2.gain"), pv.get("attn.ln2.bias"));
    }
    case TemporalHead::Tcn: {
      Var cur = z;
      for (int i = 0; i < kTcnLayers; ++i) {
        Var w = pv.get("tcn." + std::to_string(i) + ".w");
        Var acc;
        for (int k = 0; k < cfg.kernel_size; ++k) {
          Var wk = t.slice_rows(w, k * h, (k + 1) * h);
          Var shifted = k == 0 ? cur : t.shift_rows(cur, kTcnDilations[i] * k);
          Var term = t.matmul(shifted, wk);
          acc = k == 0 ? term : t.add(acc, term);
        }
        cur = t.relu(t.add_rowvec(acc, pv.get("tcn." + std::to_string(i) + ".b")));
      }
      return cur;
    }
  }
  throw std::logic_error("build_head: unreachable");
}

}  // namespace

ForwardGraph build_forward(Tape& t, const ParamVars& pv, const FeatureBundle& bundle, const ModelConfig& cfg) {
  cfg.validate();
  if (bundle.feat_dim != cfg.feature_dim)
    throw std::invalid_argument("forward: bundle feature_dim " + std::to_string(bundle.feat_dim) +
                                " does not match config " + std::to_string(cfg.feature_dim));
  if (bundle.num_objects != cfg.num_objects)
    throw std::invalid_argument("forward: bundle num_objects does not match config");
  if (bundle.num_frames < 1) throw std::invalid_argument("forward: empty bundle");

  const int frames = bundle.num_frames;
  const int n = bundle.num_objects;
  const int f = bundle.feat_dim;
  const int h = cfg.hidden();

  const GeometrySequence geo = build_geometry(bundle, cfg.depth_scale, cfg.paper_compat);
  const EdgeCoefs ec = build_edge_coefs(t, pv);

  Var adjacency = cfg.use_adaptive_adj ? t.softmax_rows(t.matmul(pv.get("v1"), pv.get("v2")))
                                       : t.leaf(Tensor::full(n, n, 1.0 / n));

  std::vector<Var> pooled;
  pooled.reserve(frames);
  for (int ti = 0; ti < frames; ++ti) {
    Tensor node_feats(n, f);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < f; ++j) node_feats(i, j) = bundle.obj_at(ti, i, j);
    Var node_h = t.leaf(std::move(node_feats));

    if (cfg.use_dgcn) {
      Var w = build_edge_weights_frame(t, ec, geo.dist3d[ti], geo.relvel[ti], geo.pair_mask[ti], cfg.vel_mode);
      Var eff = build_effective_adjacency(t, adjacency, w, geo.pair_mask[ti]);
      for (int l = 0; l < cfg.gcn_layers; ++l)
        node_h = t.relu(t.matmul(t.matmul(eff, node_h), pv.get("gcn." + std::to_string(l) + ".w")));
    } else {
      node_h = t.relu(t.matmul(node_h, pv.get("gcn.0.w")));
    }
    pooled.push_back(t.masked_mean_rows(node_h, geo.mask[ti]));
  }

  Var spatial = build_spatial_lstm(t, pv, pooled, h);

  std::vector<Var> fused;
  fused.reserve(frames);
  Var fuse_w = pv.get("fuse.w"), fuse_b = pv.get("fuse.b");
  for (int ti = 0; ti < frames; ++ti) {
    Tensor ff(1, f);
    for (int j = 0; j < f; ++j) ff(0, j) = bundle.frame_at(ti, j);
    Var cat = t.concat_cols(t.row(spatial, ti), t.leaf(std::move(ff)));
    fused.push_back(t.relu(t.add(t.matmul(cat, fuse_w), fuse_b)));
  }
  Var x = t.stack_rows(fused);

  Var z = cfg.use_dilated ? build_dilated_block(t, pv, x, cfg) : x;
  Var head_out = build_head(t, pv, z, cfg);

  ForwardGraph g;
  g.logits = t.add_rowvec(t.matmul(head_out, pv.get("cls.w")), pv.get("cls.b"));
  g.probs = t.softmax_rows(g.logits);
  return g;
}

ForwardOutput forward(const FeatureBundle& bundle, const ModelParams& params, const ModelConfig& cfg) {
  Tape tape;
  ParamVars pv = register_params(tape, params, false);
  ForwardGraph g = build_forward(tape, pv, bundle, cfg);
  ForwardOutput out;
  out.logits = tape.val(g.logits);
  const Tensor& probs = tape.val(g.probs);
  out.probs.resize(probs.rows());
  for (int ti = 0; ti < probs.rows(); ++ti) out.probs[ti] = probs(ti, 1);
  return out;
}

Tensor adaptive_adjacency(const Tensor& v1, const Tensor& v2) {
  if (v1.rows() != v1.cols() || v2.rows() != v2.cols() || v1.rows() != v2.rows())
    throw std::invalid_argument("adaptive_adjacency: inputs must be square and same size");
  Tape t;
  return t.val(t.softmax_rows(t.matmul(t.leaf(v1), t.leaf(v2))));
}

Tensor effective_adjacency(const Tensor& adjacency, const Tensor& weights, const Tensor& mask) {
  Tape t;
  return t.val(build_effective_adjacency(t, t.leaf(adjacency), t.leaf(weights), mask));
}

Tensor gcn_layer(const Tensor& node_feats, const Tensor& adjacency_eff, const Tensor& weight) {
  Tape t;
  return t.val(t.relu(t.matmul(t.matmul(t.leaf(adjacency_eff), t.leaf(node_feats)), t.leaf(weight))));
}

Tensor spatial_recurrence(const std::vector<Tensor>& graph_feats, const std::vector<Tensor>& mask,
                          const ModelParams& params) {
  if (graph_feats.empty()) throw std::invalid_argument("spatial_recurrence: empty input");
  Tape t;
  ParamVars pv = register_params(t, params, false);
  std::vector<Var> pooled;
  pooled.reserve(graph_feats.size());
  for (std::size_t i = 0; i < graph_feats.size(); ++i)
    pooled.push_back(t.masked_mean_rows(t.leaf(graph_feats[i]), mask[i]));
  return t.val(build_spatial_lstm(t, pv, pooled, params.lstm_w_ih.rows()));
}

Tensor fuse(const Tensor& graph_hidden, const Tensor& frame_feat, const ModelParams& params) {
  Tape t;
  ParamVars pv = register_params(t, params, false);
  Var cat = t.concat_cols(t.leaf(graph_hidden), t.leaf(frame_feat));
  return t.val(t.relu(t.add_rowvec(t.matmul(cat, pv.get("fuse.w")), pv.get("fuse.b"))));
}

Tensor dilated_block(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  Tape t;
  ParamVars pv = register_params(t, params, false);
  return t.val(build_dilated_block(t, pv, t.leaf(x), cfg));
}

Tensor dilated_conv_stack(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  Tape t;
  ParamVars pv = register_params(t, params, false);
  return t.val(build_dilated_conv_stack(t, pv, t.leaf(x), cfg));
}

Tensor temporal_head(const Tensor& z, TemporalHead kind, const ModelParams& params, const ModelConfig& cfg) {
  ModelConfig c = cfg;
  c.temporal_head = kind;
  Tape t;
  ParamVars pv = register_params(t, params, false);
  Var out = build_head(t, pv, t.leaf(z), c);
  return t.val(t.add_rowvec(t.matmul(out, pv.get("cls.w")), pv.get("cls.b")));
}

Tensor tape_edge_weights(const Tensor& dist3d, const Tensor& relvel, const Tensor& pair_mask,
                         const ModelParams& params, VelMode mode) {
  Tape t;
  ParamVars pv = register_params(t, params, false);
  const EdgeCoefs ec = build_edge_coefs(t, pv);
  return t.val(build_edge_weights_frame(t, ec, dist3d, relvel, pair_mask, mode));
}

}  // namespace accident
