#include "pq4d/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "pq4d/rng.hpp"

namespace pq {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSplatOpacity = 0.95;

bool contains(const std::vector<int>& views, int view) {
  return std::find(views.begin(), views.end(), view) != views.end();
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  }
}

}  // namespace

void ObjectSpec::validate() const {
  if (primitive != "sphere" && primitive != "box") {
    throw std::invalid_argument("unknown primitive: " + primitive);
  }
  if (primitive == "sphere" && !(radius > 0.0)) {
    throw std::invalid_argument("sphere radius must be positive");
  }
  if (primitive == "box" && !(half_extents.minCoeff() > 0.0)) {
    throw std::invalid_argument("box half-extents must be positive");
  }
  if (keyframes.empty() || keyframes.size() != keyframe_times.size()) {
    throw std::invalid_argument("object needs matching keyframe times and positions");
  }
  if (!std::is_sorted(keyframe_times.begin(), keyframe_times.end())) {
    throw std::invalid_argument("object keyframe times must be sorted");
  }
  if (color.minCoeff() < 0.0 || color.maxCoeff() > 1.0) {
    throw std::invalid_argument("object color components must lie in [0, 1]");
  }
}

Eigen::Vector3d ObjectSpec::center_at(double t) const {
  if (keyframes.size() == 1 || t <= keyframe_times.front()) return keyframes.front();
  if (t >= keyframe_times.back()) return keyframes.back();
  const auto it = std::upper_bound(keyframe_times.begin(), keyframe_times.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - keyframe_times.begin());
  const std::size_t lo = hi - 1;
  const double span = keyframe_times[hi] - keyframe_times[lo];
  const double a = span > 0.0 ? (t - keyframe_times[lo]) / span : 0.0;
  return (1.0 - a) * keyframes[lo] + a * keyframes[hi];
}

void RingSpec::validate() const {
  if (count < 1) throw std::invalid_argument("camera ring needs at least one view");
  if (!(radius > 0.0)) throw std::invalid_argument("camera ring radius must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    throw std::invalid_argument("field of view must lie in (0, 180) degrees");
  }
}

void SceneSpec::validate() const {
  if (objects.empty()) throw std::invalid_argument("scene needs at least one object");
  for (const ObjectSpec& obj : objects) obj.validate();
  ring.validate();
  if (frame_count < 1) throw std::invalid_argument("frame count must be at least 1");
  if (width < 1 || height < 1) throw std::invalid_argument("resolution must be positive");
  if (target_object < 0 || target_object >= static_cast<int>(objects.size())) {
    throw std::invalid_argument("target object index out of range");
  }
  if (!(points_per_area > 0.0)) throw std::invalid_argument("sampling density must be positive");
}

void CorruptionSpec::validate() const {
  check_probability(jitter_probability, "jitter probability");
  check_probability(dropout_probability, "dropout probability");
  if (jitter_radius < 0) throw std::invalid_argument("jitter radius must be non-negative");
}

std::vector<CameraModel> ring_cameras(const RingSpec& ring, int width, int height) {
  ring.validate();
  const double fx = (width / 2.0) / std::tan(ring.fov_deg * kPi / 360.0);
  std::vector<CameraModel> cameras;
  cameras.reserve(static_cast<std::size_t>(ring.count));
  for (int v = 0; v < ring.count; ++v) {
    const double theta = 2.0 * kPi * v / ring.count;
    CameraModel cam;
    cam.fx = cam.fy = fx;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.translation = ring.look_at + Eigen::Vector3d(ring.radius * std::cos(theta), ring.height,
                                                     ring.radius * std::sin(theta));
    const Eigen::Vector3d forward = (ring.look_at - cam.translation).normalized();
    // Derive the image axes by projecting one shared world direction onto
    // each view plane instead of crossing with a world-up hint. This keeps
    // the relative roll between any two views near zero, so masks transfer
    // between views without large lattice rotations eating pixel coverage.
    Eigen::Vector3d hint(0.0, 0.0, 1.0);
    if (std::abs(forward.dot(hint)) > 1.0 - 1e-6) hint = Eigen::Vector3d(1.0, 0.0, 0.0);
    const Eigen::Vector3d right = (hint - forward * hint.dot(forward)).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    cam.rotation.col(0) = right;
    cam.rotation.col(1) = down;
    cam.rotation.col(2) = forward;
    cam.validate();
    cameras.push_back(cam);
  }
  return cameras;
}

namespace {

/// Hit parameter along o + tau*d (d not normalized); negative when missed.
double ray_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& c,
                  double r) {
  const Eigen::Vector3d oc = o - c;
  const double a = d.dot(d);
  const double b = 2.0 * d.dot(oc);
  const double q = oc.dot(oc) - r * r;
  const double disc = b * b - 4.0 * a * q;
  if (disc < 0.0) return -1.0;
  const double root = std::sqrt(disc);
  const double near = (-b - root) / (2.0 * a);
  if (near > kBehindCameraEps) return near;
  const double far = (-b + root) / (2.0 * a);
  return far > kBehindCameraEps ? far : -1.0;
}

double ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& c,
               const Eigen::Vector3d& half) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = c[axis] - half[axis];
    const double hi = c[axis] + half[axis];
    if (d[axis] == 0.0) {
      if (o[axis] < lo || o[axis] > hi) return -1.0;
      continue;
    }
    double t0 = (lo - o[axis]) / d[axis];
    double t1 = (hi - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far) return -1.0;
  if (t_near > kBehindCameraEps) return t_near;
  return t_far > kBehindCameraEps ? t_far : -1.0;
}

double object_hit(const ObjectSpec& obj, double t, const Eigen::Vector3d& origin,
                  const Eigen::Vector3d& dir) {
  const Eigen::Vector3d center = obj.center_at(t);
  return obj.primitive == "sphere" ? ray_sphere(origin, dir, center, obj.radius)
                                   : ray_box(origin, dir, center, obj.half_extents);
}

struct PixelHit {
  double depth = -1.0;
  int object = -1;
};

PixelHit nearest_hit(const SceneSpec& spec, const CameraModel& cam, double t, int x, int y) {
  const Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
  const Eigen::Vector3d dir = cam.rotation * dir_cam;
  PixelHit best;
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const double tau = object_hit(spec.objects[k], t, cam.translation, dir);
    if (tau > 0.0 && (best.object < 0 || tau < best.depth)) {
      best.depth = tau;
      best.object = static_cast<int>(k);
    }
  }
  return best;
}

std::vector<Eigen::Vector3d> sample_surface(const ObjectSpec& obj, double points_per_area,
                                            Rng& rng) {
  std::vector<Eigen::Vector3d> offsets;
  if (obj.primitive == "sphere") {
    const double area = 4.0 * kPi * obj.radius * obj.radius;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(points_per_area * area)));
    offsets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * rng.uniform();
      const double phi = 2.0 * kPi * rng.uniform();
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      offsets.emplace_back(obj.radius * rho * std::cos(phi), obj.radius * rho * std::sin(phi),
                           obj.radius * z);
    }
    return offsets;
  }

  const Eigen::Vector3d& h = obj.half_extents;
  const double face_area[3] = {4.0 * h.y() * h.z(), 4.0 * h.x() * h.z(), 4.0 * h.x() * h.y()};
  const double total = 2.0 * (face_area[0] + face_area[1] + face_area[2]);
  const auto n = static_cast<std::size_t>(std::max(1.0, std::round(points_per_area * total)));
  offsets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    int axis = 0;
    for (; axis < 2; ++axis) {
      if (pick < 2.0 * face_area[axis]) break;
      pick -= 2.0 * face_area[axis];
    }
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const int u_axis = (axis + 1) % 3;
    const int v_axis = (axis + 2) % 3;
    Eigen::Vector3d p;
    p[axis] = side * h[axis];
    p[u_axis] = rng.uniform(-h[u_axis], h[u_axis]);
    p[v_axis] = rng.uniform(-h[v_axis], h[v_axis]);
    offsets.push_back(p);
  }
  return offsets;
}

double mean_nearest_neighbor(const std::vector<Eigen::Vector3d>& points) {
  if (points.size() < 2) return 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j == i) continue;
      best = std::min(best, (points[i] - points[j]).squaredNorm());
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(points.size());
}

}  // namespace

DepthMap analytic_depth(const SceneSpec& spec, const CameraModel& camera, double t) {
  spec.validate();
  camera.validate();
  DepthMap depth(camera.width, camera.height, kNoDepth);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const PixelHit hit = nearest_hit(spec, camera, t, x, y);
      if (hit.object >= 0) {
        depth.values[static_cast<std::size_t>(y * camera.width + x)] =
            static_cast<float>(hit.depth);
      }
    }
  }
  return depth;
}

SynthResult generate_scene(const SceneSpec& spec) {
  spec.validate();
  SynthResult out;
  out.cameras = ring_cameras(spec.ring, spec.width, spec.height);

  // A shared keyframe grid refining every object's own keyframes keeps each
  // piecewise-linear path exact under the scene's interpolation.
  std::set<double> time_grid;
  for (const ObjectSpec& obj : spec.objects) {
    for (double kt : obj.keyframe_times) time_grid.insert(kt);
  }
  out.scene.keyframe_times.assign(time_grid.begin(), time_grid.end());

  out.scene.frame_times.resize(static_cast<std::size_t>(spec.frame_count));
  for (int f = 0; f < spec.frame_count; ++f) {
    out.scene.frame_times[static_cast<std::size_t>(f)] =
        spec.frame_count == 1 ? 0.0 : static_cast<double>(f) / (spec.frame_count - 1);
  }

  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const ObjectSpec& obj = spec.objects[k];
    Rng rng(derive_seed(spec.seed, k));
    const std::vector<Eigen::Vector3d> offsets = sample_surface(obj, spec.points_per_area, rng);
    const double splat_radius = 0.5 * mean_nearest_neighbor(offsets);
    for (const Eigen::Vector3d& offset : offsets) {
      std::vector<Eigen::Vector3d> track;
      track.reserve(out.scene.keyframe_times.size());
      for (double kt : out.scene.keyframe_times) track.push_back(obj.center_at(kt) + offset);
      out.scene.keyframes.push_back(std::move(track));
      out.scene.opacity.push_back(kSplatOpacity);
      out.scene.scale.push_back(splat_radius);
      out.scene.color.push_back(obj.color);
      out.gaussian_object.push_back(static_cast<int>(k));
    }
  }
  out.scene.validate();

  const auto num_objects = spec.objects.size();
  out.gt_masks.assign(num_objects, std::vector<MaskSequence>(out.cameras.size()));
  out.depths.resize(out.cameras.size());
  for (std::size_t v = 0; v < out.cameras.size(); ++v) {
    for (std::size_t k = 0; k < num_objects; ++k) {
      out.gt_masks[k][v].view = static_cast<int>(v);
      out.gt_masks[k][v].frames.reserve(static_cast<std::size_t>(spec.frame_count));
    }
    out.depths[v].reserve(static_cast<std::size_t>(spec.frame_count));
    for (int f = 0; f < spec.frame_count; ++f) {
      const double t = out.scene.frame_times[static_cast<std::size_t>(f)];
      DepthMap depth(spec.width, spec.height, kNoDepth);
      std::vector<BinaryMask> masks(num_objects, BinaryMask(spec.width, spec.height));
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          const PixelHit hit = nearest_hit(spec, out.cameras[v], t, x, y);
          if (hit.object >= 0) {
            const auto p = static_cast<std::size_t>(y * spec.width + x);
            depth.values[p] = static_cast<float>(hit.depth);
            masks[static_cast<std::size_t>(hit.object)].values[p] = 1;
          }
        }
      }
      out.depths[v].push_back(std::move(depth));
      for (std::size_t k = 0; k < num_objects; ++k) {
        out.gt_masks[k][v].frames.push_back(std::move(masks[k]));
      }
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilation radius must be non-negative");
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t hit = 0;
      for (int dy = -radius; dy <= radius && !hit; ++dy) {
        for (int dx = -radius; dx <= radius && !hit; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
          hit = mask.values[static_cast<std::size_t>(ny * mask.width + nx)];
        }
      }
      out.values[static_cast<std::size_t>(y * mask.width + x)] = hit;
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("erosion radius must be non-negative");
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t keep = 1;
      for (int dy = -radius; dy <= radius && keep; ++dy) {
        for (int dx = -radius; dx <= radius && keep; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) {
            keep = 0;  // outside the image counts as background
          } else {
            keep = mask.values[static_cast<std::size_t>(ny * mask.width + nx)];
          }
        }
      }
      out.values[static_cast<std::size_t>(y * mask.width + x)] = keep;
    }
  }
  return out;
}

MaskSequence corrupt_masks(const MaskSequence& gt, const CorruptionSpec& cspec,
                           const MaskSequence* hallucination_source) {
  cspec.validate();
  MaskSequence out = gt;
  if (contains(cspec.hallucinate_views, gt.view)) {
    if (hallucination_source == nullptr) {
      throw std::invalid_argument("hallucinated view needs a substitute mask sequence");
    }
    if (hallucination_source->frames.size() != gt.frames.size()) {
      throw std::invalid_argument("hallucination source frame count differs from input");
    }
    out.frames = hallucination_source->frames;
  }

  Rng rng(derive_seed(cspec.seed, static_cast<std::uint64_t>(gt.view)));
  const bool drops = contains(cspec.dropout_views, gt.view);
  const bool jitters = contains(cspec.jitter_views, gt.view);
  for (BinaryMask& frame : out.frames) {
    if (drops && rng.bernoulli(cspec.dropout_probability)) {
      frame = BinaryMask(frame.width, frame.height);
      continue;
    }
    if (jitters && rng.bernoulli(cspec.jitter_probability)) {
      frame = rng.bernoulli(0.5) ? dilate(frame, cspec.jitter_radius)
                                 : erode(frame, cspec.jitter_radius);
    }
  }
  return out;
}

SceneSpec two_spheres_scene(int ring_count, std::uint64_t seed) {
  // Camera dome: a narrow ring mounted high above the scene. Single-pixel
  // mask transfer between views of a sphere loses roughly 2*sin(gamma/2) of
  // the target silhouette to the foreshortening gradient at pair angle gamma
  // (plus (1-cos gamma)/2 to the invisible far side), so the ring is sized to
  // keep every pair of view directions within ~8 degrees.
  SceneSpec spec;
  spec.ring.count = ring_count;
  spec.ring.radius = 10.0;
  spec.ring.height = 220.0;
  spec.ring.fov_deg = 1.13;
  spec.frame_count = 30;
  spec.width = 64;
  spec.height = 64;
  spec.points_per_area = 400.0;
  spec.seed = seed;

  ObjectSpec still;
  still.primitive = "sphere";
  still.radius = 0.5;
  still.color = Eigen::Vector3d(0.85, 0.25, 0.2);
  still.keyframe_times = {0.0};
  still.keyframes = {Eigen::Vector3d(0.6, 0.0, 0.6)};

  ObjectSpec mover;
  mover.primitive = "sphere";
  mover.radius = 0.5;
  mover.color = Eigen::Vector3d(0.2, 0.45, 0.85);
  mover.keyframe_times = {0.0, 1.0};
  mover.keyframes = {Eigen::Vector3d(-0.85, 0.0, -0.6), Eigen::Vector3d(-0.35, 0.0, -0.6)};

  spec.objects = {still, mover};
  spec.target_object = 1;
  return spec;
}

CorruptionSpec two_spheres_corruption(int supervision_views, std::uint64_t seed) {
  if (supervision_views < 2) {
    throw std::invalid_argument("corruption split needs at least two supervision views");
  }
  CorruptionSpec cspec;
  cspec.seed = seed;
  // Half the frames keep the exact mask so jittered views still hold a clear
  // per-pixel majority at the object boundary.
  cspec.jitter_probability = 0.5;
  cspec.jitter_radius = 1;
  const int hallucinated = supervision_views >= 8 ? 3 : supervision_views / 2;
  for (int v = 0; v < supervision_views - hallucinated; ++v) cspec.jitter_views.push_back(v);
  for (int v = supervision_views - hallucinated; v < supervision_views; ++v) {
    cspec.hallucinate_views.push_back(v);
  }
  return cspec;
}

}  // namespace pq
