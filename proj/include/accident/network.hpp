#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "accident/autodiff.hpp"
#include "accident/data_model.hpp"
#include "accident/graph.hpp"
#include "accident/tensor.hpp"

namespace accident {

enum class TemporalHead { Gru, Lstm, Transformer, Tcn };

std::string to_string(TemporalHead h);
TemporalHead temporal_head_from_string(const std::string& s);

struct ModelConfig {
  int feature_dim = 512;
  int hidden_dim = 0;  // 0 means feature_dim
  int num_objects = 19;
  int gcn_layers = 2;
  int dilated_layers = 3;
  int kernel_size = 2;
  std::vector<int> dilations = {1, 2, 4};
  TemporalHead temporal_head = TemporalHead::Gru;
  bool use_gru_head = true;
  bool use_dilated = true;
  bool use_dgcn = true;
  bool use_adaptive_adj = true;
  VelMode vel_mode = VelMode::Raw;
  double depth_scale = 100.0;
  bool paper_compat = false;

  int hidden() const { return hidden_dim > 0 ? hidden_dim : feature_dim; }
  int receptive_field() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// Every learnable quantity. a is stored softplus-reparameterized so the
// effective mixing parameter stays positive during training.
struct ModelParams {
  Tensor v1, v2;
  Tensor a_raw;  // [1,1]
  std::vector<Tensor> gcn_w;
  Tensor lstm_w_ih, lstm_w_hh, lstm_b_ih, lstm_b_hh;
  Tensor fuse_w, fuse_b;
  struct Conv {
    Tensor w;  // [K*h, h], kernel tap k occupies rows [k*h, (k+1)*h)
    Tensor b;  // [1,h]
  };
  std::vector<Conv> conv;
  Tensor ln_gain, ln_bias;
  Tensor head_w_ih, head_w_hh, head_b_ih, head_b_hh;  // gru (3h) or lstm (4h) head
  Tensor attn_wq, attn_wk, attn_wv, attn_wo;
  Tensor attn_ln1_gain, attn_ln1_bias, attn_ln2_gain, attn_ln2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  std::vector<Conv> tcn;
  Tensor head_lin_w, head_lin_b;  // linear head used when the recurrent head is ablated
  Tensor cls_w, cls_b;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  std::vector<NamedTensor> entries() const;  // declaration order, allocated tensors only
  double effective_a() const;
  double l1_norm() const;
  double l2_norm_sq() const;
};

struct ParamVars {
  std::vector<std::pair<std::string, Var>> list;
  Var get(const std::string& name) const;
};

ParamVars register_params(Tape& tape, const ModelParams& params, bool requires_grad);

struct ForwardGraph {
  Var logits;  // [T,2]
  Var probs;   // [T,2], row-softmax of logits
};

ForwardGraph build_forward(Tape& tape, const ParamVars& pv, const FeatureBundle& bundle, const ModelConfig& cfg);

struct ForwardOutput {
  std::vector<double> probs;  // accident-class probability per frame
  Tensor logits;              // [T,2]
};

ForwardOutput forward(const FeatureBundle& bundle, const ModelParams& params, const ModelConfig& cfg);

// Single-shot views of the model's building blocks, used by verification code.
Tensor adaptive_adjacency(const Tensor& v1, const Tensor& v2);
Tensor effective_adjacency(const Tensor& adjacency, const Tensor& weights, const Tensor& mask);
Tensor gcn_layer(const Tensor& node_feats, const Tensor& adjacency_eff, const Tensor& weight);
Tensor spatial_recurrence(const std::vector<Tensor>& graph_feats, const std::vector<Tensor>& mask,
                          const ModelParams& params);
Tensor fuse(const Tensor& graph_hidden, const Tensor& frame_feat, const ModelParams& params);
Tensor dilated_block(const Tensor& x, const ModelParams& params, const ModelConfig& cfg);
// Output of the causal dilated convolution layers before the residual and
// layer norm; this is where the receptive field is observable.
Tensor dilated_conv_stack(const Tensor& x, const ModelParams& params, const ModelConfig& cfg);
Tensor temporal_head(const Tensor& z, TemporalHead kind, const ModelParams& params, const ModelConfig& cfg);
// Edge weights computed through the autodiff path, for cross-checking against
// the plain geometry pipeline.
Tensor tape_edge_weights(const Tensor& dist3d, const Tensor& relvel, const Tensor& pair_mask,
                         const ModelParams& params, VelMode mode);

// One recurrent step; exposed so the gate arithmetic can be checked in isolation.
std::pair<Var, Var> lstm_cell(Tape& t, Var x, Var h_prev, Var c_prev, Var w_ih, Var w_hh, Var b_ih, Var b_hh);
Var gru_cell(Tape& t, Var x, Var h_prev, Var w_ih, Var w_hh, Var b_ih, Var b_hh);

Tensor positional_encoding(int frames, int dim);

double softplus_inverse(double y);

}  // namespace accident
