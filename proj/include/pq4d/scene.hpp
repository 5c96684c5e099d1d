#pragma once

#include <Eigen/Core>
#include <vector>

#include "pq4d/geometry.hpp"

namespace pq {

/// Dynamic scene of N isotropic point-Gaussians. Every Gaussian stores one
/// position per shared keyframe time; positions between keyframes are linear
/// interpolations, clamped at the ends. Opacity, radius, and color are
/// constant over time.
struct DynamicPointScene {
  std::vector<double> keyframe_times;                    // K, strictly increasing
  std::vector<std::vector<Eigen::Vector3d>> keyframes;   // [N][K]
  std::vector<double> opacity;                           // [N], in [0,1]
  std::vector<double> scale;                             // [N], world radius > 0
  std::vector<Eigen::Vector3d> color;                    // [N], in [0,1]^3
  std::vector<double> frame_times;                       // T timestamps in [0,1], strictly increasing

  std::size_t size() const { return keyframes.size(); }
  int frame_count() const { return static_cast<int>(frame_times.size()); }

  /// Axis-aligned bound over every keyframe position; used to normalize
  /// positions before frequency encoding.
  void bounding_box(Eigen::Vector3d& lo, Eigen::Vector3d& hi) const;

  /// Throws std::invalid_argument on any violated structural invariant.
  void validate() const;
};

/// Center of Gaussian `i` at time t (linear interpolation, end-clamped).
Eigen::Vector3d position_at(const DynamicPointScene& scene, std::size_t i, double t);

/// All Gaussian centers at time t. Throws std::invalid_argument when t lies
/// outside the scene's frame-time range (with a small numeric slack).
std::vector<Eigen::Vector3d> positions_at(const DynamicPointScene& scene, double t);

/// One Gaussian's contribution to one pixel. `weight` is alpha times the 2D
/// falloff at the pixel center, in [0,1].
struct SplatFragment {
  int gaussian = 0;
  float weight = 0.0f;
  float depth = 0.0f;
};

/// Per-pixel fragment lists, each sorted by depth ascending (ties broken by
/// Gaussian index ascending).
struct FragmentImage {
  int width = 0;
  int height = 0;
  std::vector<std::vector<SplatFragment>> pixels;  // row-major

  FragmentImage() = default;
  FragmentImage(int w, int h)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {}

  const std::vector<SplatFragment>& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::vector<SplatFragment>& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

/// Projects every Gaussian in front of the camera to its pixel footprint.
/// The footprint covers pixels whose center lies within r = 3*sigma of the
/// projected center, with sigma = scale * fx / z in pixels and falloff
/// g = exp(-d^2 / (2 sigma^2)).
FragmentImage rasterize(const DynamicPointScene& scene, const CameraModel& camera, double t);

/// Front-to-back alpha blend: C = sum_i c_i * w_i * prod_{j<i} (1 - w_j).
/// An empty list composites to black.
Eigen::Vector3d composite_color(const std::vector<SplatFragment>& fragments,
                                const DynamicPointScene& scene);

/// Same blending rule over arbitrary per-Gaussian embedding rows
/// (embeddings: N x E, row i is Gaussian i's embedding).
Eigen::VectorXd composite_feature(const std::vector<SplatFragment>& fragments,
                                  const Eigen::MatrixXd& embeddings);

/// Depth of the first fragment at which the accumulated blended opacity
/// exceeds 0.5; kNoDepth when the pixel never becomes that opaque.
double composite_depth(const std::vector<SplatFragment>& fragments);

/// RGB float image in [0,1], row-major, 3 floats per pixel.
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  ColorImage() = default;
  ColorImage(int w, int h)
      : width(w), height(h), rgb(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0f) {}

  float* at(int x, int y) { return &rgb[3 * (static_cast<std::size_t>(y) * width + x)]; }
  const float* at(int x, int y) const { return &rgb[3 * (static_cast<std::size_t>(y) * width + x)]; }
};

struct RenderResult {
  ColorImage color;
  DepthMap depth;
  FragmentImage fragments;
};

/// Full-frame render at time t: color, splat depth, and the fragment lists
/// the compositing used (reused later for feature splatting).
RenderResult render(const DynamicPointScene& scene, const CameraModel& camera, double t);

}  // namespace pq
