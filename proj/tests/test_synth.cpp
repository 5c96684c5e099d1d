#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pq4d/synth.hpp"

using namespace pq;

namespace {

SceneSpec single_sphere_spec() {
  SceneSpec spec;
  ObjectSpec ball;
  ball.primitive = "sphere";
  ball.radius = 1.0;
  ball.keyframes = {Eigen::Vector3d::Zero()};
  ball.keyframe_times = {0.0};
  spec.objects = {ball};
  spec.ring.count = 4;
  spec.ring.radius = 10.0;
  spec.ring.height = 0.0;
  spec.ring.fov_deg = 35.5;
  spec.frame_count = 3;
  spec.width = 64;
  spec.height = 64;
  spec.seed = 5;
  return spec;
}

CameraModel axis_camera(double fx = 100.0, int size = 64) {
  CameraModel cam;
  cam.fx = cam.fy = fx;
  cam.cx = cam.cy = size / 2.0 + 0.5;  // pixel (size/2, size/2) sits on the axis
  cam.width = cam.height = size;
  return cam;
}

BinaryMask square_mask(int x0, int y0, int side, int size = 16) {
  BinaryMask m(size, size);
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) {
      m.values[static_cast<std::size_t>(y * size + x)] = 1;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("ring cameras look at the target from the requested distance") {
  RingSpec ring;
  ring.count = 6;
  ring.radius = 50.0;
  ring.height = 8.0;
  ring.look_at = Eigen::Vector3d(1.0, -2.0, 3.0);
  const auto cameras = ring_cameras(ring, 64, 48);
  REQUIRE(cameras.size() == 6);
  for (const CameraModel& cam : cameras) {
    CHECK_NOTHROW(cam.validate());
    CHECK((cam.translation - ring.look_at).norm() ==
          doctest::Approx(std::sqrt(50.0 * 50.0 + 8.0 * 8.0)).epsilon(1e-12));
    const Projection center = project(cam, ring.look_at);
    REQUIRE(!center.behind);
    CHECK(center.pixel.x() == doctest::Approx(32.0).epsilon(1e-9));
    CHECK(center.pixel.y() == doctest::Approx(24.0).epsilon(1e-9));
  }
}

TEST_CASE("static sphere: GT masks are identical across frames in every view") {
  const SceneSpec spec = single_sphere_spec();
  const SynthResult result = generate_scene(spec);
  REQUIRE(result.gt_masks.size() == 1);
  REQUIRE(result.gt_masks[0].size() == 4);
  for (const MaskSequence& seq : result.gt_masks[0]) {
    REQUIRE(seq.frames.size() == 3);
    CHECK(!seq.frames[0].empty());
    CHECK(seq.frames[1].values == seq.frames[0].values);
    CHECK(seq.frames[2].values == seq.frames[0].values);
  }
}

TEST_CASE("on-axis sphere projects to a centered disc of the analytic area") {
  SceneSpec spec = single_sphere_spec();
  spec.ring.count = 1;
  spec.width = spec.height = 256;
  spec.frame_count = 1;
  const SynthResult result = generate_scene(spec);
  const double fx = result.cameras[0].fx;
  const double z_center = 10.0;
  const double expected = 3.14159265358979323846 * (fx / z_center) * (fx / z_center);
  const auto area = static_cast<double>(result.gt_masks[0][0].frames[0].count());
  CHECK(std::abs(area - expected) <= 0.05 * expected);
}

TEST_CASE("generation is a pure function of the scene description") {
  const SceneSpec spec = two_spheres_scene(3, 11);
  const SynthResult a = generate_scene(spec);
  const SynthResult b = generate_scene(spec);
  REQUIRE(a.scene.size() == b.scene.size());
  for (std::size_t i = 0; i < a.scene.size(); ++i) {
    CHECK(a.scene.keyframes[i] == b.scene.keyframes[i]);
    CHECK(a.scene.scale[i] == b.scene.scale[i]);
  }
  CHECK(a.gaussian_object == b.gaussian_object);
  for (std::size_t v = 0; v < a.depths.size(); ++v) {
    for (std::size_t f = 0; f < a.depths[v].size(); ++f) {
      CHECK(a.depths[v][f].values == b.depths[v][f].values);
      CHECK(a.gt_masks[0][v].frames[f].values == b.gt_masks[0][v].frames[f].values);
      CHECK(a.gt_masks[1][v].frames[f].values == b.gt_masks[1][v].frames[f].values);
    }
  }

  SceneSpec reseeded = spec;
  reseeded.seed = 12;
  const SynthResult c = generate_scene(reseeded);
  CHECK(c.scene.keyframes[0] != a.scene.keyframes[0]);
}

TEST_CASE("splat sizing tracks sampling density") {
  const SceneSpec spec = two_spheres_scene(3, 11);
  const SynthResult result = generate_scene(spec);
  // 400 points per unit area on a radius-0.5 sphere: ~1257 samples whose mean
  // nearest-neighbor spacing is about 0.5/sqrt(400); half of that is ~0.0125.
  const std::size_t per_object = static_cast<std::size_t>(
      std::round(400.0 * 4.0 * 3.14159265358979323846 * 0.25));
  CHECK(result.scene.size() == 2 * per_object);
  for (std::size_t i = 0; i < result.scene.size(); ++i) {
    CHECK(result.scene.scale[i] > 0.008);
    CHECK(result.scene.scale[i] < 0.02);
  }
  CHECK(result.scene.scale[0] == result.scene.scale[per_object - 1]);
}

TEST_CASE("moving sphere actually moves in the rendered ground truth") {
  const SynthResult result = generate_scene(two_spheres_scene(3, 11));
  const auto centroid = [](const BinaryMask& m) {
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    int count = 0;
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (m.values[static_cast<std::size_t>(y * m.width + x)]) {
          sum += Eigen::Vector2d(x, y);
          ++count;
        }
      }
    }
    return Eigen::Vector2d(sum / count);
  };
  const MaskSequence& moving = result.gt_masks[1][0];
  const MaskSequence& still = result.gt_masks[0][0];
  CHECK((centroid(moving.frames[0]) - centroid(moving.frames[29])).norm() > 2.0);
  CHECK((centroid(still.frames[0]) - centroid(still.frames[29])).norm() < 0.5);
}

TEST_CASE("analytic_depth: head-on sphere hit is distance minus radius") {
  SceneSpec spec;
  ObjectSpec ball;
  ball.radius = 2.0;
  ball.keyframes = {Eigen::Vector3d(0.0, 0.0, 10.0)};
  ball.keyframe_times = {0.0};
  spec.objects = {ball};
  const CameraModel cam = axis_camera();
  const DepthMap depth = analytic_depth(spec, cam, 0.0);
  CHECK(depth.at(32, 32) == doctest::Approx(8.0).epsilon(1e-6));
  // A ray well away from the sphere never hits anything.
  CHECK(depth.at(0, 0) == kNoDepth);
}

TEST_CASE("analytic_depth: off-axis hit matches the quadratic formula") {
  SceneSpec spec;
  ObjectSpec ball;
  ball.radius = 2.0;
  ball.keyframes = {Eigen::Vector3d(0.0, 0.0, 10.0)};
  ball.keyframe_times = {0.0};
  spec.objects = {ball};
  const CameraModel cam = axis_camera();
  const DepthMap depth = analytic_depth(spec, cam, 0.0);

  // Pixel (40, 32): ray direction ((40.5 - 32.5)/100, 0, 1).
  const double dx = 0.08;
  const double a = dx * dx + 1.0;
  const double b = 2.0 * (-10.0);  // 2 * (origin - center) . dir, z term only
  const double c = 100.0 - 4.0;
  const double tau = (-b - std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
  CHECK(depth.at(40, 32) == doctest::Approx(tau).epsilon(1e-6));
}

TEST_CASE("analytic_depth: axis-aligned box faces") {
  SceneSpec spec;
  ObjectSpec box;
  box.primitive = "box";
  box.half_extents = Eigen::Vector3d(1.0, 1.0, 1.5);
  box.keyframes = {Eigen::Vector3d(0.0, 0.0, 10.0)};
  box.keyframe_times = {0.0};
  spec.objects = {box};
  const CameraModel cam = axis_camera();
  const DepthMap depth = analytic_depth(spec, cam, 0.0);
  CHECK(depth.at(32, 32) == doctest::Approx(8.5).epsilon(1e-6));
  CHECK(depth.at(0, 0) == kNoDepth);
  // The front face is the plane z = 8.5, and stored depth is camera-space z,
  // so every pixel hitting that face reads the same value.
  CHECK(depth.at(37, 32) == doctest::Approx(8.5).epsilon(1e-6));
}

TEST_CASE("ground-truth masks and analytic depths are mutually consistent") {
  const SynthResult result = generate_scene(two_spheres_scene(4, 11));
  const double tol = 0.01;
  for (std::size_t obj = 0; obj < 2; ++obj) {
    for (std::size_t i = 0; i < result.cameras.size(); ++i) {
      for (std::size_t j = 0; j < result.cameras.size(); ++j) {
        if (i == j) continue;
        for (std::size_t f : {std::size_t{0}, std::size_t{14}, std::size_t{29}}) {
          const MaskCloud cloud = backproject_mask(result.gt_masks[obj][i].frames[f],
                                                   result.depths[i][f], result.cameras[i]);
          const BinaryMask transferred =
              reproject_mask(cloud.points, result.cameras[j], result.depths[j][f], tol);
          CHECK(overlap_fraction(transferred, result.gt_masks[obj][j].frames[f]) >= 0.95);
        }
      }
    }
  }
}

TEST_CASE("dilate: radius 1 grows a 3x3 square to 5x5, clipped at borders") {
  const BinaryMask grown = dilate(square_mask(6, 6, 3), 1);
  CHECK(grown.count() == 25);
  CHECK(grown.values == square_mask(5, 5, 5).values);

  // A square touching the corner cannot grow past the image edge.
  const BinaryMask corner = dilate(square_mask(0, 0, 3), 1);
  CHECK(corner.count() == 16);  // 4x4 clipped
}

TEST_CASE("erode: inverse direction, background outside the image") {
  const BinaryMask shrunk = erode(square_mask(5, 5, 5), 1);
  CHECK(shrunk.values == square_mask(6, 6, 3).values);
  // Eroding a mask that touches the border shrinks away from the border too:
  // of a 3x3 corner square only the single fully-interior pixel survives.
  const BinaryMask corner = erode(square_mask(0, 0, 3), 1);
  CHECK(corner.count() == 1);
  // Radius 0 is the identity for both operations.
  CHECK(dilate(square_mask(5, 5, 5), 0).values == square_mask(5, 5, 5).values);
  CHECK(erode(square_mask(5, 5, 5), 0).values == square_mask(5, 5, 5).values);
}

TEST_CASE("corrupt_masks: zero-probability spec is the identity") {
  MaskSequence gt;
  gt.view = 0;
  gt.frames = {square_mask(4, 4, 5), square_mask(5, 5, 5)};
  CorruptionSpec cspec;
  cspec.jitter_views = {0};
  cspec.jitter_probability = 0.0;
  cspec.dropout_views = {0};
  cspec.dropout_probability = 0.0;
  const MaskSequence out = corrupt_masks(gt, cspec);
  REQUIRE(out.frames.size() == 2);
  CHECK(out.frames[0].values == gt.frames[0].values);
  CHECK(out.frames[1].values == gt.frames[1].values);
  CHECK(out.view == 0);
}

TEST_CASE("corrupt_masks: dropout probability 1 empties every frame") {
  MaskSequence gt;
  gt.view = 2;
  gt.frames = {square_mask(4, 4, 5), square_mask(5, 5, 5), square_mask(6, 6, 3)};
  CorruptionSpec cspec;
  cspec.dropout_views = {2};
  cspec.dropout_probability = 1.0;
  const MaskSequence out = corrupt_masks(gt, cspec);
  for (const BinaryMask& frame : out.frames) CHECK(frame.empty());
}

TEST_CASE("corrupt_masks: jitter at probability 1 dilates or erodes each frame") {
  MaskSequence gt;
  gt.view = 1;
  gt.frames.assign(40, square_mask(5, 5, 5));
  CorruptionSpec cspec;
  cspec.jitter_views = {1};
  cspec.jitter_probability = 1.0;
  cspec.jitter_radius = 1;
  cspec.seed = 9;
  const MaskSequence out = corrupt_masks(gt, cspec);
  int dilated = 0, eroded = 0;
  for (const BinaryMask& frame : out.frames) {
    if (frame.count() == 49) ++dilated;
    if (frame.count() == 9) ++eroded;
  }
  CHECK(dilated + eroded == 40);
  CHECK(dilated > 0);
  CHECK(eroded > 0);

  // Deterministic in the seed; a different seed reshuffles the choices.
  const MaskSequence again = corrupt_masks(gt, cspec);
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    CHECK(again.frames[f].values == out.frames[f].values);
  }
  CorruptionSpec other = cspec;
  other.seed = 10;
  const MaskSequence shifted = corrupt_masks(gt, other);
  bool any_diff = false;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    if (shifted.frames[f].values != out.frames[f].values) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("corrupt_masks: hallucination swaps in the wrong object's masks") {
  MaskSequence gt;
  gt.view = 3;
  gt.frames = {square_mask(2, 2, 3), square_mask(2, 2, 3)};
  MaskSequence wrong;
  wrong.view = 3;
  wrong.frames = {square_mask(9, 9, 4), square_mask(9, 9, 4)};
  CorruptionSpec cspec;
  cspec.hallucinate_views = {3};
  const MaskSequence out = corrupt_masks(gt, cspec, &wrong);
  CHECK(out.view == 3);
  CHECK(out.frames[0].values == wrong.frames[0].values);
  CHECK(out.frames[1].values == wrong.frames[1].values);
  // A hallucinated view with no substitute sequence is a caller error.
  CHECK_THROWS_AS(corrupt_masks(gt, cspec), std::invalid_argument);
  // Views not in the affected set ignore the source entirely.
  cspec.hallucinate_views = {7};
  CHECK(corrupt_masks(gt, cspec, &wrong).frames[0].values == gt.frames[0].values);
}

TEST_CASE("two_spheres corruption split matches the benchmark layout") {
  const CorruptionSpec v8 = two_spheres_corruption(8, 1);
  CHECK(v8.jitter_views == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(v8.hallucinate_views == std::vector<int>{5, 6, 7});
  CHECK(v8.jitter_probability == 0.5);
  CHECK(v8.jitter_radius == 1);
  const CorruptionSpec v4 = two_spheres_corruption(4, 1);
  CHECK(v4.jitter_views == std::vector<int>{0, 1});
  CHECK(v4.hallucinate_views == std::vector<int>{2, 3});
}

TEST_CASE("spec validation rejects degenerate inputs") {
  SceneSpec spec = two_spheres_scene(4, 1);
  CHECK_NOTHROW(spec.validate());
  spec.target_object = 5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = two_spheres_scene(4, 1);
  spec.objects[0].primitive = "cone";
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = two_spheres_scene(4, 1);
  spec.objects[0].radius = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = two_spheres_scene(4, 1);
  spec.ring.count = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = two_spheres_scene(4, 1);
  spec.frame_count = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);

  CorruptionSpec cspec;
  cspec.jitter_probability = 1.5;
  CHECK_THROWS_AS(cspec.validate(), std::invalid_argument);
}
