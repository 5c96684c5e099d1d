#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "pq4d/geometry.hpp"
#include "pq4d/scene.hpp"

namespace pq {

struct ObjectSpec {
  std::string primitive = "sphere";  // "sphere" or "box"
  double radius = 0.5;               // sphere radius
  Eigen::Vector3d half_extents = Eigen::Vector3d(0.5, 0.5, 0.5);  // box half-extents
  Eigen::Vector3d color = Eigen::Vector3d(0.8, 0.8, 0.8);
  std::vector<double> keyframe_times = {0.0};
  std::vector<Eigen::Vector3d> keyframes = {Eigen::Vector3d::Zero()};

  void validate() const;
  Eigen::Vector3d center_at(double t) const;
};

struct RingSpec {
  int count = 8;
  double radius = 120.0;
  double height = 10.0;
  double fov_deg = 1.8;  // horizontal field of view
  Eigen::Vector3d look_at = Eigen::Vector3d::Zero();

  void validate() const;
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  RingSpec ring;
  int frame_count = 30;
  int width = 64;
  int height = 64;
  int target_object = 0;
  double points_per_area = 400.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorruptionSpec {
  std::vector<int> jitter_views;
  double jitter_probability = 0.0;
  int jitter_radius = 1;
  std::vector<int> dropout_views;
  double dropout_probability = 0.0;
  std::vector<int> hallucinate_views;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  DynamicPointScene scene;
  std::vector<int> gaussian_object;                 // object index per gaussian
  std::vector<CameraModel> cameras;                 // one per ring view
  std::vector<std::vector<MaskSequence>> gt_masks;  // [object][view]
  std::vector<std::vector<DepthMap>> depths;        // [view][frame]
};

std::vector<CameraModel> ring_cameras(const RingSpec& ring, int width, int height);

/// Nearest ray-primitive hit distance per pixel; kNoDepth where nothing is hit.
DepthMap analytic_depth(const SceneSpec& spec, const CameraModel& camera, double t);

SynthResult generate_scene(const SceneSpec& spec);

BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);

/// Applies, in order: hallucination swap (whole-sequence), frame dropout,
/// boundary jitter. hallucination_source supplies the wrong-object masks for
/// views listed in cspec.hallucinate_views.
MaskSequence corrupt_masks(const MaskSequence& gt, const CorruptionSpec& cspec,
                           const MaskSequence* hallucination_source = nullptr);

/// Canonical benchmark scene: two spheres on a telephoto camera ring, one
/// static and one moving vertically through the frame span.
SceneSpec two_spheres_scene(int ring_count = 8, std::uint64_t seed = 11);

/// Matching corruption: the last 3 supervision views (half when fewer than 8)
/// hallucinate the wrong sphere; the other supervision views carry one-pixel
/// boundary jitter every frame. Views beyond `supervision_views` stay clean.
CorruptionSpec two_spheres_corruption(int supervision_views, std::uint64_t seed);

}  // namespace pq
