#include "pq4d/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pq {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera: focal lengths must be positive");
  }
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw std::invalid_argument("camera: intrinsics must be finite");
  }
  if (width < 1 || height < 1) {
    throw std::invalid_argument("camera: image size must be at least 1x1");
  }
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("camera: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("camera: rotation determinant must be +1");
  }
  if (!translation.allFinite()) {
    throw std::invalid_argument("camera: translation must be finite");
  }
}

void DepthMap::validate() const {
  if (width < 0 || height < 0 ||
      values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("depth map: storage size does not match dimensions");
  }
  for (const float v : values) {
    if (v == kNoDepth) continue;
    if (!(v > 0.0f) || !std::isfinite(v)) {
      throw std::invalid_argument("depth map: entries must be positive or the no-depth sentinel");
    }
  }
}

int BinaryMask::count() const {
  int n = 0;
  for (const std::uint8_t v : values) n += v != 0;
  return n;
}

Projection project(const CameraModel& camera, const Eigen::Vector3d& world) {
  const Eigen::Vector3d pc = camera.world_to_camera(world);
  Projection result;
  result.depth = pc.z();
  if (pc.z() <= kBehindCameraEps) {
    result.behind = true;
    return result;
  }
  result.pixel.x() = camera.fx * pc.x() / pc.z() + camera.cx;
  result.pixel.y() = camera.fy * pc.y() / pc.z() + camera.cy;
  return result;
}

Eigen::Vector3d back_project(const CameraModel& camera, const Eigen::Vector2d& pixel, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw std::invalid_argument("back_project: depth must be positive and finite");
  }
  const Eigen::Vector3d pc((pixel.x() - camera.cx) * depth / camera.fx,
                           (pixel.y() - camera.cy) * depth / camera.fy, depth);
  return camera.camera_to_world(pc);
}

MaskCloud backproject_mask(const BinaryMask& mask, const DepthMap& depth, const CameraModel& camera) {
  if (mask.width != depth.width || mask.height != depth.height) {
    throw std::invalid_argument("backproject_mask: mask and depth sizes differ");
  }
  MaskCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(mask.count()));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      const float d = depth.at(x, y);
      if (d == kNoDepth) {
        ++cloud.skipped;
        continue;
      }
      cloud.points.push_back(
          back_project(camera, Eigen::Vector2d(x + 0.5, y + 0.5), static_cast<double>(d)));
    }
  }
  return cloud;
}

BinaryMask reproject_mask(std::span<const Eigen::Vector3d> points, const CameraModel& camera,
                          const DepthMap& target_depth, double occlusion_tol) {
  if (occlusion_tol < 0.0) {
    throw std::invalid_argument("reproject_mask: occlusion tolerance must be >= 0");
  }
  if (target_depth.width != camera.width || target_depth.height != camera.height) {
    throw std::invalid_argument("reproject_mask: depth size does not match camera");
  }
  BinaryMask out(camera.width, camera.height);
  for (const Eigen::Vector3d& p : points) {
    const Projection proj = project(camera, p);
    if (proj.behind) continue;
    const int x = static_cast<int>(std::floor(proj.pixel.x()));
    const int y = static_cast<int>(std::floor(proj.pixel.y()));
    if (x < 0 || x >= camera.width || y < 0 || y >= camera.height) continue;
    const float surface = target_depth.at(x, y);
    if (surface == kNoDepth) continue;
    if (proj.depth <= static_cast<double>(surface) * (1.0 + occlusion_tol)) {
      out.set(x, y, true);
    }
  }
  return out;
}

namespace {

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* who) {
  if (!a.same_size(b)) {
    throw std::invalid_argument(std::string(who) + ": mask sizes differ");
  }
}

}  // namespace

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_iou");
  long long inter = 0;
  long long uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool av = a.values[i] != 0;
    const bool bv = b.values[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double overlap_fraction(const BinaryMask& projected, const BinaryMask& target) {
  require_same_size(projected, target, "overlap_fraction");
  long long inter = 0;
  long long total = 0;
  for (std::size_t i = 0; i < projected.values.size(); ++i) {
    const bool pv = projected.values[i] != 0;
    inter += pv && target.values[i] != 0;
    total += pv;
  }
  if (total == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace pq
