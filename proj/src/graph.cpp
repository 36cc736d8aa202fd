#include "accident/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace accident {

std::string to_string(VelMode m) {
  switch (m) {
    case VelMode::Raw: return "raw";
    case VelMode::Negated: return "negated";
    case VelMode::Abs: return "abs";
  }
  return "raw";
}

VelMode vel_mode_from_string(const std::string& s) {
  if (s == "raw") return VelMode::Raw;
  if (s == "negated") return VelMode::Negated;
  if (s == "abs") return VelMode::Abs;
  throw std::invalid_argument("unknown vel_mode: " + s);
}

Tensor centers(const Tensor& boxes) {
  if (boxes.cols() != 4) throw std::invalid_argument("centers: boxes must be [N,4]");
  Tensor c(boxes.rows(), 2);
  for (int n = 0; n < boxes.rows(); ++n) {
    c(n, 0) = (boxes(n, 0) + boxes(n, 2)) / 2.0;
    c(n, 1) = (boxes(n, 1) + boxes(n, 3)) / 2.0;
  }
  return c;
}

double diag_norm(double width, double height, bool paper_compat) {
  if (width <= 0.0 || height <= 0.0) throw std::invalid_argument("diag_norm: dimensions must be positive");
  if (paper_compat && ((width == 1280.0 && height == 720.0) || (width == 720.0 && height == 1280.0))) return 1450.0;
  return std::sqrt(width * width + height * height);
}

Tensor pairwise_distance3d(const Tensor& frame_centers, const std::vector<double>& depths, double dd,
                           double depth_scale, const std::vector<bool>& present) {
  if (dd <= 0.0) throw std::invalid_argument("pairwise_distance3d: dd must be positive");
  const int n = frame_centers.rows();
  if (static_cast<int>(depths.size()) != n || static_cast<int>(present.size()) != n)
    throw std::invalid_argument("pairwise_distance3d: size mismatch");
  Tensor d(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (!present[i] || !present[j]) continue;
      const double dx = frame_centers(i, 0) - frame_centers(j, 0);
      const double dy = frame_centers(i, 1) - frame_centers(j, 1);
      const double pix = std::sqrt(dx * dx + dy * dy) / dd;
      const double dep = std::fabs(depths[i] - depths[j]) / depth_scale;
      const double dist = std::sqrt(pix * pix + dep * dep);
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

std::vector<Tensor> relative_velocity(const std::vector<Tensor>& dist3d, const std::vector<Tensor>& pair_mask) {
  const int t_count = static_cast<int>(dist3d.size());
  if (t_count == 0) throw std::invalid_argument("relative_velocity: empty sequence");
  std::vector<Tensor> vel;
  vel.reserve(t_count);
  const int n = dist3d[0].rows();
  vel.push_back(Tensor(n, n));  // boundary convention: frame 0 is zero
  for (int t = 1; t < t_count; ++t) {
    Tensor v(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (pair_mask[t](i, j) <= 0.0 || pair_mask[t - 1](i, j) <= 0.0) continue;
        v(i, j) = dist3d[t](i, j) - dist3d[t - 1](i, j);
      }
    }
    vel.push_back(std::move(v));
  }
  return vel;
}

double apply_vel_mode(double vel, VelMode mode) {
  switch (mode) {
    case VelMode::Raw: return vel;
    case VelMode::Negated: return -vel;
    case VelMode::Abs: return std::fabs(vel);
  }
  return vel;
}

Tensor edge_weights(const Tensor& dist3d, const Tensor& relvel, const Tensor& pair_mask, double a, VelMode mode) {
  if (a <= -1.0) throw std::invalid_argument("edge_weights: a must exceed -1");
  const int n = dist3d.rows();
  Tensor w(n, n);
  const double c1 = a / (a + 1.0);
  const double c2 = 1.0 / (a + 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (pair_mask(i, j) <= 0.0) continue;
      w(i, j) = c1 * std::exp(-dist3d(i, j)) + c2 * apply_vel_mode(relvel(i, j), mode);
    }
  }
  return w;
}

GeometrySequence build_geometry(const FeatureBundle& bundle, double depth_scale, bool paper_compat) {
  const int t_count = bundle.num_frames;
  const int n = bundle.num_objects;
  const double dd = diag_norm(bundle.width, bundle.height, paper_compat);
  GeometrySequence g;
  g.centers.reserve(t_count);
  g.dist3d.reserve(t_count);
  g.mask.reserve(t_count);
  g.pair_mask.reserve(t_count);
  for (int t = 0; t < t_count; ++t) {
    Tensor boxes(n, 4);
    std::vector<double> depths(n, 0.0);
    std::vector<bool> present(n, false);
    Tensor m(n, 1);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 4; ++k) boxes(i, k) = bundle.box_at(t, i, k);
      depths[i] = bundle.depth_at(t, i);
      present[i] = bundle.score_at(t, i) > 0.0f;
      m(i, 0) = present[i] ? 1.0 : 0.0;
    }
    Tensor c = centers(boxes);
    g.dist3d.push_back(pairwise_distance3d(c, depths, dd, depth_scale, present));
    g.centers.push_back(std::move(c));
    Tensor pm(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pm(i, j) = (present[i] && present[j]) ? 1.0 : 0.0;
    g.pair_mask.push_back(std::move(pm));
    g.mask.push_back(std::move(m));
  }
  g.relvel = relative_velocity(g.dist3d, g.pair_mask);
  return g;
}

}  // namespace accident
