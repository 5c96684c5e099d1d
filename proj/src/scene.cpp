#include "pq4d/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pq {

namespace {

// Slack for the frame-time range check; keeps exact endpoints usable after
// serialization round trips.
constexpr double kTimeSlack = 1e-12;

}  // namespace

void DynamicPointScene::bounding_box(Eigen::Vector3d& lo, Eigen::Vector3d& hi) const {
  lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
  hi = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
  for (const auto& track : keyframes) {
    for (const Eigen::Vector3d& p : track) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  if (keyframes.empty()) {
    lo.setZero();
    hi.setZero();
  }
}

void DynamicPointScene::validate() const {
  const std::size_t n = keyframes.size();
  if (opacity.size() != n || scale.size() != n || color.size() != n) {
    throw std::invalid_argument("scene: per-gaussian arrays must share one length");
  }
  if (keyframe_times.empty()) {
    throw std::invalid_argument("scene: at least one keyframe time required");
  }
  for (std::size_t i = 1; i < keyframe_times.size(); ++i) {
    if (!(keyframe_times[i] > keyframe_times[i - 1])) {
      throw std::invalid_argument("scene: keyframe times must be strictly increasing");
    }
  }
  for (const auto& track : keyframes) {
    if (track.size() != keyframe_times.size()) {
      throw std::invalid_argument("scene: every gaussian needs one position per keyframe");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(opacity[i] >= 0.0 && opacity[i] <= 1.0)) {
      throw std::invalid_argument("scene: opacity must lie in [0,1]");
    }
    if (!(scale[i] > 0.0)) {
      throw std::invalid_argument("scene: scale must be positive");
    }
  }
  if (frame_times.empty()) {
    throw std::invalid_argument("scene: at least one frame timestamp required");
  }
  for (std::size_t i = 0; i < frame_times.size(); ++i) {
    if (frame_times[i] < 0.0 || frame_times[i] > 1.0) {
      throw std::invalid_argument("scene: frame timestamps must lie in [0,1]");
    }
    if (i > 0 && !(frame_times[i] > frame_times[i - 1])) {
      throw std::invalid_argument("scene: frame timestamps must be strictly increasing");
    }
  }
}

Eigen::Vector3d position_at(const DynamicPointScene& scene, std::size_t i, double t) {
  const std::vector<double>& times = scene.keyframe_times;
  const std::vector<Eigen::Vector3d>& track = scene.keyframes[i];
  if (t <= times.front()) return track.front();
  if (t >= times.back()) return track.back();
  // First keyframe strictly past t; t is inside [times[k-1], times[k]).
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  const double t0 = times[k - 1];
  const double t1 = times[k];
  const double a = (t - t0) / (t1 - t0);
  return (1.0 - a) * track[k - 1] + a * track[k];
}

std::vector<Eigen::Vector3d> positions_at(const DynamicPointScene& scene, double t) {
  if (t < scene.frame_times.front() - kTimeSlack || t > scene.frame_times.back() + kTimeSlack) {
    throw std::invalid_argument("positions_at: time outside the scene's frame range");
  }
  std::vector<Eigen::Vector3d> out(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    out[i] = position_at(scene, i, t);
  }
  return out;
}

FragmentImage rasterize(const DynamicPointScene& scene, const CameraModel& camera, double t) {
  FragmentImage image(camera.width, camera.height);
  const std::vector<Eigen::Vector3d> centers = positions_at(scene, t);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Projection proj = project(camera, centers[i]);
    if (proj.behind) continue;
    const double sigma = scene.scale[i] * camera.fx / proj.depth;  // pixels
    const double radius = 3.0 * sigma;
    const double cu = proj.pixel.x();
    const double cv = proj.pixel.y();
    const int x0 = std::max(0, static_cast<int>(std::floor(cu - radius - 0.5)));
    const int x1 = std::min(camera.width - 1, static_cast<int>(std::floor(cu + radius + 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cv - radius - 0.5)));
    const int y1 = std::min(camera.height - 1, static_cast<int>(std::floor(cv + radius + 0.5)));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (x + 0.5) - cu;
        const double dy = (y + 0.5) - cv;
        const double d2 = dx * dx + dy * dy;
        if (d2 > radius * radius) continue;
        const double g = std::exp(-d2 * inv_two_sigma2);
        SplatFragment frag;
        frag.gaussian = static_cast<int>(i);
        frag.weight = static_cast<float>(scene.opacity[i] * g);
        frag.depth = static_cast<float>(proj.depth);
        image.at(x, y).push_back(frag);
      }
    }
  }
  for (auto& list : image.pixels) {
    std::sort(list.begin(), list.end(), [](const SplatFragment& a, const SplatFragment& b) {
      if (a.depth != b.depth) return a.depth < b.depth;
      return a.gaussian < b.gaussian;
    });
  }
  return image;
}

Eigen::Vector3d composite_color(const std::vector<SplatFragment>& fragments,
                                const DynamicPointScene& scene) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  double transmittance = 1.0;
  for (const SplatFragment& f : fragments) {
    const double w = static_cast<double>(f.weight);
    out += scene.color[static_cast<std::size_t>(f.gaussian)] * (w * transmittance);
    transmittance *= 1.0 - w;
  }
  return out;
}

Eigen::VectorXd composite_feature(const std::vector<SplatFragment>& fragments,
                                  const Eigen::MatrixXd& embeddings) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(embeddings.cols());
  double transmittance = 1.0;
  for (const SplatFragment& f : fragments) {
    const double w = static_cast<double>(f.weight);
    out += embeddings.row(f.gaussian).transpose() * (w * transmittance);
    transmittance *= 1.0 - w;
  }
  return out;
}

double composite_depth(const std::vector<SplatFragment>& fragments) {
  double opacity = 0.0;
  double transmittance = 1.0;
  for (const SplatFragment& f : fragments) {
    const double w = static_cast<double>(f.weight);
    opacity += w * transmittance;
    transmittance *= 1.0 - w;
    if (opacity > 0.5) return static_cast<double>(f.depth);
  }
  return static_cast<double>(kNoDepth);
}

RenderResult render(const DynamicPointScene& scene, const CameraModel& camera, double t) {
  RenderResult out;
  out.fragments = rasterize(scene, camera, t);
  out.color = ColorImage(camera.width, camera.height);
  out.depth = DepthMap(camera.width, camera.height);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const auto& frags = out.fragments.at(x, y);
      const Eigen::Vector3d c = composite_color(frags, scene);
      float* px = out.color.at(x, y);
      px[0] = static_cast<float>(c.x());
      px[1] = static_cast<float>(c.y());
      px[2] = static_cast<float>(c.z());
      out.depth.at(x, y) = static_cast<float>(composite_depth(frags));
    }
  }
  return out;
}

}  // namespace pq
