#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cstdlib>

#include "pq4d/consensus.hpp"
#include "pq4d/rng.hpp"

using namespace pq;

namespace {

// All tests that need exact IoU/overlap values use one shared camera and a
// unit depth plane: backproject + reproject is then the identity on masks,
// so the voting math can be pinned by hand-built masks alone.
CameraModel flat_camera(int size = 16) {
  CameraModel cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  return cam;
}

DepthMap unit_depth(int size = 16) { return DepthMap(size, size, 1.0f); }

/// Mask with the first n pixels (row-major) set.
BinaryMask block_mask(int n, int size = 16) {
  BinaryMask m(size, size);
  for (int i = 0; i < n; ++i) m.values[static_cast<std::size_t>(i)] = 1;
  return m;
}

struct FlatRig {
  std::vector<MaskSequence> sequences;
  std::vector<std::vector<DepthMap>> depths;
  std::vector<CameraModel> cameras;
};

FlatRig flat_rig(const std::vector<std::vector<BinaryMask>>& frames_per_view, int size = 16) {
  FlatRig rig;
  for (std::size_t v = 0; v < frames_per_view.size(); ++v) {
    MaskSequence seq;
    seq.view = static_cast<int>(v);
    seq.frames = frames_per_view[v];
    rig.sequences.push_back(std::move(seq));
    rig.depths.emplace_back(frames_per_view[v].size(), unit_depth(size));
    rig.cameras.push_back(flat_camera(size));
  }
  return rig;
}

}  // namespace

TEST_CASE("consensus config validation") {
  ConsensusConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.delta = 1.2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.delta = 0.3;
  cfg.tau = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("visibility_test: identical masks are trivially visible") {
  const auto m = block_mask(40);
  const auto rig = flat_rig({{m, m}, {m, m}});
  const ConsensusConfig cfg;
  CHECK(visibility_test(rig.sequences[0], rig.sequences[1], rig.depths[0], rig.depths[1],
                        rig.cameras[0], rig.cameras[1], cfg));
}

TEST_CASE("visibility_test: no overlap in the judging view fails") {
  // The judging view never contains the object (e.g. outside its frustum).
  const auto rig = flat_rig({{block_mask(40)}, {BinaryMask(16, 16)}});
  const ConsensusConfig cfg;
  CHECK(!visibility_test(rig.sequences[0], rig.sequences[1], rig.depths[0], rig.depths[1],
                         rig.cameras[0], rig.cameras[1], cfg));
}

TEST_CASE("visibility_test: threshold boundary at 0.6 is strict") {
  const ConsensusConfig cfg;  // visibility_min = 0.6
  // 100 projected pixels, 61 inside the target: mean overlap 0.61 > 0.6.
  {
    BinaryMask target = block_mask(61);
    const auto rig = flat_rig({{block_mask(100)}, {target}});
    CHECK(visibility_test(rig.sequences[0], rig.sequences[1], rig.depths[0], rig.depths[1],
                          rig.cameras[0], rig.cameras[1], cfg));
  }
  // Exactly 0.60 must fail the strict comparison.
  {
    BinaryMask target = block_mask(60);
    const auto rig = flat_rig({{block_mask(100)}, {target}});
    CHECK(!visibility_test(rig.sequences[0], rig.sequences[1], rig.depths[0], rig.depths[1],
                           rig.cameras[0], rig.cameras[1], cfg));
  }
}

TEST_CASE("visibility_test: all-empty candidate is invisible; empty frames are skipped") {
  const ConsensusConfig cfg;
  const auto empty = BinaryMask(16, 16);
  const auto m = block_mask(40);
  {
    const auto rig = flat_rig({{empty, empty}, {m, m}});
    CHECK(!visibility_test(rig.sequences[0], rig.sequences[1], rig.depths[0], rig.depths[1],
                           rig.cameras[0], rig.cameras[1], cfg));
  }
  {
    // One empty + one perfect frame: the empty frame is excluded from the
    // mean, so visibility holds.
    const auto rig = flat_rig({{empty, m}, {empty, m}});
    CHECK(visibility_test(rig.sequences[0], rig.sequences[1], rig.depths[0], rig.depths[1],
                          rig.cameras[0], rig.cameras[1], cfg));
  }
}

TEST_CASE("visibility_test: frame-count mismatch throws") {
  const auto m = block_mask(10);
  MaskSequence a{0, {m, m}};
  MaskSequence b{1, {m}};
  std::vector<DepthMap> da(2, unit_depth()), db(1, unit_depth());
  const ConsensusConfig cfg;
  CHECK_THROWS_AS(
      visibility_test(a, b, da, db, flat_camera(), flat_camera(), cfg),
      std::invalid_argument);
}

TEST_CASE("frame_consensus: strict delta boundary") {
  const ConsensusConfig cfg;  // delta = 0.3
  const auto cam = flat_camera();
  const auto depth = unit_depth();

  // 31 projected pixels inside a 100-pixel target: IoU 31/100 = 0.31 > 0.3.
  CHECK(frame_consensus(block_mask(31), block_mask(100), depth, cam, cam, depth, cfg));
  // IoU exactly 0.30 fails the strict comparison.
  CHECK(!frame_consensus(block_mask(30), block_mask(100), depth, cam, cam, depth, cfg));
  // Identical masks: IoU 1 passes any delta < 1.
  CHECK(frame_consensus(block_mask(50), block_mask(50), depth, cam, cam, depth, cfg));
}

TEST_CASE("view_pair_vote: fraction over all frames, strict epsilon") {
  const ConsensusConfig cfg;  // epsilon = 0.5
  const auto agree = block_mask(50);
  const auto clash = block_mask(4);  // IoU 4/50 = 0.08 < delta

  auto build = [&](int agreeing, int total) {
    std::vector<BinaryMask> mine, theirs;
    for (int t = 0; t < total; ++t) {
      mine.push_back(agree);
      theirs.push_back(t < agreeing ? agree : clash);
    }
    return flat_rig({mine, theirs});
  };

  {
    const auto rig = build(16, 30);
    const PairVote pv = view_pair_vote(rig.sequences[0], rig.sequences[1], rig.depths[0],
                                       rig.depths[1], rig.cameras[0], rig.cameras[1], cfg);
    CHECK(pv.fraction == doctest::Approx(16.0 / 30.0).epsilon(1e-12));
    CHECK(pv.vote);
  }
  {
    const auto rig = build(15, 30);
    const PairVote pv = view_pair_vote(rig.sequences[0], rig.sequences[1], rig.depths[0],
                                       rig.depths[1], rig.cameras[0], rig.cameras[1], cfg);
    CHECK(pv.fraction == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(!pv.vote);
  }
  {
    const auto rig = build(30, 30);
    const PairVote pv = view_pair_vote(rig.sequences[0], rig.sequences[1], rig.depths[0],
                                       rig.depths[1], rig.cameras[0], rig.cameras[1], cfg);
    CHECK(pv.fraction == 1.0);
    CHECK(pv.vote);
  }
}

TEST_CASE("run_consensus: 3 of 7 voting peers give score 3/7") {
  // Candidate view 0 holds a 10-pixel mask. Judges 1-3 hold 12-pixel
  // supersets (IoU 10/12 > delta: they vote); judges 4-7 hold 40-pixel
  // supersets (IoU 0.25 < delta: visible but no vote).
  std::vector<std::vector<BinaryMask>> frames;
  frames.push_back({block_mask(10)});
  for (int j = 0; j < 3; ++j) frames.push_back({block_mask(12)});
  for (int j = 0; j < 4; ++j) frames.push_back({block_mask(40)});
  const auto rig = flat_rig(frames);
  const ConsensusConfig cfg;

  const ConsensusReport report = run_consensus(rig.sequences, rig.depths, rig.cameras, cfg);
  CHECK(report.visible_peers[0] == 7);
  int votes_for_0 = 0;
  for (int j = 0; j < 8; ++j) votes_for_0 += report.votes[0][j];
  CHECK(votes_for_0 == 3);
  CHECK(report.reliability_score[0] == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
  CHECK(report.reliable[0]);
}

TEST_CASE("run_consensus: zero votes means unreliable") {
  // Two views with disjoint masks: nobody is visible to anybody.
  const auto rig = flat_rig({{block_mask(10)}, {[] {
                               BinaryMask m(16, 16);
                               for (int i = 100; i < 120; ++i) m.values[i] = 1;
                               return m;
                             }()}});
  const ConsensusReport report = run_consensus(rig.sequences, rig.depths, rig.cameras, {});
  CHECK(report.reliability_score[0] == 0.0);
  CHECK(report.visible_peers[0] == 0);
  CHECK(!report.reliable[0]);
  CHECK(!report.reliable[1]);
}

TEST_CASE("run_consensus: identical masks across 8 views are all reliable with score 1") {
  const auto m = block_mask(60);
  std::vector<std::vector<BinaryMask>> frames(8, std::vector<BinaryMask>{m, m, m});
  const auto rig = flat_rig(frames);
  const ConsensusReport report = run_consensus(rig.sequences, rig.depths, rig.cameras, {});
  for (int i = 0; i < 8; ++i) {
    CHECK(report.reliable[i]);
    CHECK(report.reliability_score[i] == 1.0);
    CHECK(report.visible_peers[i] == 7);
  }
}

TEST_CASE("run_consensus: input validation") {
  const auto rig = flat_rig({{block_mask(10)}});
  CHECK_THROWS_AS(run_consensus(rig.sequences, rig.depths, rig.cameras, {}), std::invalid_argument);

  auto two = flat_rig({{block_mask(10)}, {block_mask(10), block_mask(10)}});
  CHECK_THROWS_AS(run_consensus(two.sequences, two.depths, two.cameras, {}), std::invalid_argument);
}

TEST_CASE("reliable_supervision selects reliable rows in order") {
  std::vector<MaskSequence> seqs(3);
  seqs[0].view = 10;
  seqs[1].view = 11;
  seqs[2].view = 12;
  ConsensusReport report;
  report.reliable = {1, 0, 1};

  const auto picked = reliable_supervision(report, seqs);
  REQUIRE(picked.size() == 2);
  CHECK(picked[0].view == 10);
  CHECK(picked[1].view == 12);

  report.reliable = {1, 1, 1};
  CHECK(reliable_supervision(report, seqs).size() == 3);
  report.reliable = {0, 0, 0};
  CHECK(reliable_supervision(report, seqs).empty());
  report.reliable = {0, 0};
  CHECK_THROWS_AS(reliable_supervision(report, seqs), std::invalid_argument);
}

TEST_CASE("monotonicity in delta: consensus frames nest") {
  Rng rng(21);
  const auto cam = flat_camera();
  const auto depth = unit_depth();
  for (int trial = 0; trial < 50; ++trial) {
    BinaryMask a(16, 16), b(16, 16);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      a.values[i] = rng.bernoulli(0.3);
      b.values[i] = rng.bernoulli(0.3);
    }
    ConsensusConfig lo, hi;
    lo.delta = rng.uniform(0.0, 0.5);
    hi.delta = lo.delta + rng.uniform(0.0, 0.5);
    // Consensus at the higher threshold implies consensus at the lower one.
    if (frame_consensus(a, b, depth, cam, cam, depth, hi)) {
      CHECK(frame_consensus(a, b, depth, cam, cam, depth, lo));
    }
  }
}

TEST_CASE("monotonicity in tau: reliable sets nest") {
  Rng rng(33);
  std::vector<std::vector<BinaryMask>> frames;
  for (int v = 0; v < 4; ++v) {
    std::vector<BinaryMask> track;
    for (int t = 0; t < 3; ++t) {
      BinaryMask m(16, 16);
      for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = rng.bernoulli(0.25);
      track.push_back(m);
    }
    frames.push_back(track);
  }
  const auto rig = flat_rig(frames);

  ConsensusConfig c1, c2;
  c1.tau = 0.2;
  c2.tau = 0.7;
  const auto r1 = run_consensus(rig.sequences, rig.depths, rig.cameras, c1);
  const auto r2 = run_consensus(rig.sequences, rig.depths, rig.cameras, c2);
  for (int i = 0; i < 4; ++i) {
    if (r2.reliable[i]) CHECK(r1.reliable[i]);
  }
}

namespace {

/// Straight-line reference: same math, no shared pair helper, no parallelism.
ConsensusReport naive_consensus(const std::vector<MaskSequence>& seqs,
                                const std::vector<std::vector<DepthMap>>& depths,
                                const std::vector<CameraModel>& cams, const ConsensusConfig& cfg) {
  const int v = static_cast<int>(seqs.size());
  const int t_count = static_cast<int>(seqs.front().frames.size());
  ConsensusReport rep;
  rep.num_views = v;
  rep.config = cfg;
  rep.visibility.assign(v, std::vector<std::uint8_t>(v, 0));
  rep.consensus_fraction.assign(v, std::vector<double>(v, 0.0));
  rep.votes.assign(v, std::vector<std::uint8_t>(v, 0));
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      if (i == j) continue;
      double overlap_sum = 0.0;
      int nonempty = 0;
      int agreed = 0;
      for (int t = 0; t < t_count; ++t) {
        const MaskCloud cloud =
            backproject_mask(seqs[i].frames[t], depths[i][t], cams[i]);
        const BinaryMask proj =
            reproject_mask(cloud.points, cams[j], depths[j][t], cfg.occlusion_tol);
        if (!seqs[i].frames[t].empty()) {
          overlap_sum += overlap_fraction(proj, seqs[j].frames[t]);
          ++nonempty;
        }
        agreed += mask_iou(proj, seqs[j].frames[t]) > cfg.delta;
      }
      rep.visibility[i][j] = nonempty > 0 && overlap_sum / nonempty > cfg.visibility_min;
      rep.consensus_fraction[i][j] = static_cast<double>(agreed) / t_count;
      rep.votes[i][j] = rep.visibility[i][j] && rep.consensus_fraction[i][j] > cfg.epsilon;
    }
  }
  rep.visible_peers.resize(v);
  rep.reliability_score.resize(v);
  rep.reliable.resize(v);
  for (int i = 0; i < v; ++i) {
    int peers = 0, votes = 0;
    for (int j = 0; j < v; ++j) {
      peers += rep.visibility[i][j];
      votes += rep.votes[i][j];
    }
    rep.visible_peers[i] = peers;
    rep.reliability_score[i] = static_cast<double>(votes) / (v - 1);
    rep.reliable[i] = peers >= 1 && rep.reliability_score[i] >= cfg.tau;
  }
  return rep;
}

}  // namespace

TEST_CASE("run_consensus equals the naive reference exactly on random rigs") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_below(3));  // 2..4 views
    const int t = 1 + static_cast<int>(rng.next_below(5));  // 1..5 frames
    std::vector<MaskSequence> seqs(v);
    std::vector<std::vector<DepthMap>> depths(v);
    std::vector<CameraModel> cams(v);
    for (int i = 0; i < v; ++i) {
      cams[i] = flat_camera(8);
      cams[i].translation = Eigen::Vector3d(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0);
      seqs[i].view = i;
      for (int f = 0; f < t; ++f) {
        BinaryMask m(8, 8);
        DepthMap d(8, 8);
        for (std::size_t p = 0; p < m.values.size(); ++p) {
          m.values[p] = rng.bernoulli(0.35);
          if (rng.bernoulli(0.9)) d.values[p] = static_cast<float>(rng.uniform(0.8, 1.2));
        }
        seqs[i].frames.push_back(m);
        depths[i].push_back(d);
      }
    }
    ConsensusConfig cfg;
    cfg.delta = rng.uniform(0.1, 0.5);
    cfg.epsilon = rng.uniform(0.2, 0.8);
    cfg.tau = rng.uniform(0.1, 0.9);

    const ConsensusReport fast = run_consensus(seqs, depths, cams, cfg);
    const ConsensusReport slow = naive_consensus(seqs, depths, cams, cfg);
    CHECK(fast.visibility == slow.visibility);
    CHECK(fast.consensus_fraction == slow.consensus_fraction);
    CHECK(fast.votes == slow.votes);
    CHECK(fast.visible_peers == slow.visible_peers);
    CHECK(fast.reliability_score == slow.reliability_score);
    CHECK(fast.reliable == slow.reliable);
  }
}

TEST_CASE("run_consensus is deterministic and thread-count independent") {
  std::vector<std::vector<BinaryMask>> frames;
  Rng rng(77);
  for (int v = 0; v < 4; ++v) {
    std::vector<BinaryMask> track;
    for (int t = 0; t < 4; ++t) {
      BinaryMask m(16, 16);
      for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = rng.bernoulli(0.3);
      track.push_back(m);
    }
    frames.push_back(track);
  }
  const auto rig = flat_rig(frames);

  setenv("PQ_THREADS", "1", 1);
  const auto serial = run_consensus(rig.sequences, rig.depths, rig.cameras, {});
  setenv("PQ_THREADS", "3", 1);
  const auto threaded = run_consensus(rig.sequences, rig.depths, rig.cameras, {});
  unsetenv("PQ_THREADS");

  CHECK(serial.visibility == threaded.visibility);
  CHECK(serial.consensus_fraction == threaded.consensus_fraction);
  CHECK(serial.votes == threaded.votes);
  CHECK(serial.reliability_score == threaded.reliability_score);
  CHECK(serial.reliable == threaded.reliable);
}
