#pragma once

#include <vector>

#include "accident/data_model.hpp"
#include "accident/tensor.hpp"

namespace accident {

enum class VelMode { Raw, Negated, Abs };

std::string to_string(VelMode m);
VelMode vel_mode_from_string(const std::string& s);

// Per-clip geometry: everything the dynamic graph consumes.
// dist3d and relvel are per-frame [N,N] matrices in normalized units;
// entries touching an absent slot are zero and masked.
struct GeometrySequence {
  std::vector<Tensor> centers;   // T x [N,2] pixels
  std::vector<Tensor> dist3d;    // T x [N,N]
  std::vector<Tensor> relvel;    // T x [N,N], frame 0 all zero
  std::vector<Tensor> mask;      // T x [N,1], 1 = slot present
  std::vector<Tensor> pair_mask; // T x [N,N], 1 = both endpoints present
  int num_frames() const { return static_cast<int>(dist3d.size()); }
};

// Midpoints of (x_min,y_min,x_max,y_max) boxes for one frame.
Tensor centers(const Tensor& boxes);

// Diagonal pixel distance used to normalize pixel-plane separations.
// paper_compat pins the 1280x720 case to the published constant 1450.
double diag_norm(double width, double height, bool paper_compat = false);

Tensor pairwise_distance3d(const Tensor& frame_centers, const std::vector<double>& depths, double dd,
                           double depth_scale, const std::vector<bool>& present);

// First difference of dist3d along time; frame 0 and newly (dis)appearing pairs are zero.
std::vector<Tensor> relative_velocity(const std::vector<Tensor>& dist3d, const std::vector<Tensor>& pair_mask);

double apply_vel_mode(double vel, VelMode mode);

// Eq-style adaptive edge weight: a/(a+1) * exp(-D) + 1/(a+1) * Vel, masked pairs zero.
Tensor edge_weights(const Tensor& dist3d, const Tensor& relvel, const Tensor& pair_mask, double a,
                    VelMode mode = VelMode::Raw);

GeometrySequence build_geometry(const FeatureBundle& bundle, double depth_scale, bool paper_compat = false);

}  // namespace accident
