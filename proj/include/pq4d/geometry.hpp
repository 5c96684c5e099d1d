#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace pq {

/// Points closer to the image plane than this (camera z) are treated as
/// behind the camera and never projected.
inline constexpr double kBehindCameraEps = 1e-9;

/// In-memory marker for "no surface" in a depth map.
inline constexpr float kNoDepth = std::numeric_limits<float>::infinity();

/// Pinhole camera. `rotation` maps camera coordinates to world coordinates
/// and `translation` is the camera center in world units, so
///   X_world = rotation * X_camera + translation.
/// Image convention: x right, y down, z forward; pixel (i, j) spans the unit
/// square with center (i + 0.5, j + 0.5).
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws std::invalid_argument if intrinsics are non-positive, the image
  /// size is degenerate, or `rotation` is not a proper rotation (orthonormal
  /// with determinant +1, checked to 1e-9).
  void validate() const;

  Eigen::Vector3d world_to_camera(const Eigen::Vector3d& world) const {
    return rotation.transpose() * (world - translation);
  }
  Eigen::Vector3d camera_to_world(const Eigen::Vector3d& camera) const {
    return rotation * camera + translation;
  }
};

/// Per-pixel metric depth along the camera z-axis, row-major.
/// Background pixels hold kNoDepth (serialized as 0.0 on disk).
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = kNoDepth)
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }

  /// Throws std::invalid_argument on size mismatch or non-positive finite
  /// entries (every stored depth must be > 0 or kNoDepth).
  void validate() const;
};

/// Row-major binary mask; nonzero means foreground.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0) {}

  bool at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { values[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

  /// Number of foreground pixels.
  int count() const;
  bool empty() const { return count() == 0; }
  bool same_size(const BinaryMask& other) const {
    return width == other.width && height == other.height;
  }
};

/// One view's mask track across all frames of a clip.
struct MaskSequence {
  int view = 0;
  std::vector<BinaryMask> frames;
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;
  /// True when the point sits at or behind the image plane (camera z <=
  /// kBehindCameraEps); pixel and depth are unusable in that case.
  bool behind = false;
};

/// Projects a world point through the camera. Does not clip to the image
/// bounds; callers decide what to do with out-of-frame pixels.
Projection project(const CameraModel& camera, const Eigen::Vector3d& world);

/// Lifts a continuous pixel coordinate at the given positive finite depth
/// back to a world point. Exact inverse of project for depth > 0.
/// Throws std::invalid_argument for depth <= 0 or non-finite depth.
Eigen::Vector3d back_project(const CameraModel& camera, const Eigen::Vector2d& pixel, double depth);

struct MaskCloud {
  std::vector<Eigen::Vector3d> points;
  /// Foreground pixels that had no valid depth and produced no point.
  int skipped = 0;
};

/// Lifts every foreground pixel with valid depth to a world point using the
/// pixel center. Throws std::invalid_argument on mask/depth size mismatch.
MaskCloud backproject_mask(const BinaryMask& mask, const DepthMap& depth, const CameraModel& camera);

/// Splats world points into the target view: each point in front of the
/// camera lands on the pixel containing its projection (floor of the
/// continuous coordinate) if that pixel is in bounds and the point is not
/// occluded, i.e. its camera depth z satisfies
///   z <= target_depth(pixel) * (1 + occlusion_tol).
/// Pixels without valid target depth never pass the test.
/// Throws std::invalid_argument for occlusion_tol < 0.
BinaryMask reproject_mask(std::span<const Eigen::Vector3d> points, const CameraModel& camera,
                          const DepthMap& target_depth, double occlusion_tol);

/// Intersection over union. Both masks empty -> 1.0; exactly one empty -> 0.
/// Throws std::invalid_argument on size mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// |projected AND target| / |projected|; 0.0 when projected is empty.
/// Throws std::invalid_argument on size mismatch.
double overlap_fraction(const BinaryMask& projected, const BinaryMask& target);

}  // namespace pq
