#include "pq4d/consensus.hpp"

#include <stdexcept>

#include "pq4d/parallel.hpp"

namespace pq {

void ConsensusConfig::validate() const {
  const double fields[] = {delta, epsilon, tau, visibility_min, occlusion_tol};
  for (const double v : fields) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("consensus config: thresholds must lie in [0,1]");
    }
  }
}

namespace {

BinaryMask transfer_mask(const BinaryMask& mask_i, const DepthMap& depth_i,
                         const CameraModel& cam_i, const CameraModel& cam_j,
                         const DepthMap& depth_j, double occlusion_tol) {
  const MaskCloud cloud = backproject_mask(mask_i, depth_i, cam_i);
  return reproject_mask(cloud.points, cam_j, depth_j, occlusion_tol);
}

void require_aligned(const MaskSequence& seq_i, const MaskSequence& seq_j,
                     const std::vector<DepthMap>& depths_i, const std::vector<DepthMap>& depths_j) {
  if (seq_i.frames.size() != seq_j.frames.size() || seq_i.frames.size() != depths_i.size() ||
      seq_i.frames.size() != depths_j.size()) {
    throw std::invalid_argument("consensus: sequences and depth tracks must share one frame count");
  }
}

}  // namespace

bool visibility_test(const MaskSequence& seq_i, const MaskSequence& seq_j,
                     const std::vector<DepthMap>& depths_i, const std::vector<DepthMap>& depths_j,
                     const CameraModel& cam_i, const CameraModel& cam_j,
                     const ConsensusConfig& cfg) {
  require_aligned(seq_i, seq_j, depths_i, depths_j);
  double sum = 0.0;
  int counted = 0;
  for (std::size_t t = 0; t < seq_i.frames.size(); ++t) {
    if (seq_i.frames[t].empty()) continue;
    const BinaryMask projected =
        transfer_mask(seq_i.frames[t], depths_i[t], cam_i, cam_j, depths_j[t], cfg.occlusion_tol);
    sum += overlap_fraction(projected, seq_j.frames[t]);
    ++counted;
  }
  if (counted == 0) return false;
  return sum / counted > cfg.visibility_min;
}

bool frame_consensus(const BinaryMask& mask_i, const BinaryMask& mask_j, const DepthMap& depth_i,
                     const CameraModel& cam_i, const CameraModel& cam_j, const DepthMap& depth_j,
                     const ConsensusConfig& cfg) {
  const BinaryMask projected = transfer_mask(mask_i, depth_i, cam_i, cam_j, depth_j, cfg.occlusion_tol);
  return mask_iou(projected, mask_j) > cfg.delta;
}

PairVote view_pair_vote(const MaskSequence& seq_i, const MaskSequence& seq_j,
                        const std::vector<DepthMap>& depths_i, const std::vector<DepthMap>& depths_j,
                        const CameraModel& cam_i, const CameraModel& cam_j,
                        const ConsensusConfig& cfg) {
  require_aligned(seq_i, seq_j, depths_i, depths_j);
  int agreed = 0;
  for (std::size_t t = 0; t < seq_i.frames.size(); ++t) {
    agreed += frame_consensus(seq_i.frames[t], seq_j.frames[t], depths_i[t], cam_i, cam_j,
                              depths_j[t], cfg);
  }
  PairVote out;
  out.fraction = static_cast<double>(agreed) / static_cast<double>(seq_i.frames.size());
  out.vote = out.fraction > cfg.epsilon;
  return out;
}

ConsensusReport run_consensus(const std::vector<MaskSequence>& sequences,
                              const std::vector<std::vector<DepthMap>>& depths,
                              const std::vector<CameraModel>& cameras, const ConsensusConfig& cfg) {
  cfg.validate();
  const int v = static_cast<int>(sequences.size());
  if (v < 2) {
    throw std::invalid_argument("run_consensus: at least two views required");
  }
  if (depths.size() != sequences.size() || cameras.size() != sequences.size()) {
    throw std::invalid_argument("run_consensus: sequences, depths, and cameras must align");
  }
  const std::size_t frames = sequences.front().frames.size();
  if (frames == 0) {
    throw std::invalid_argument("run_consensus: sequences must contain at least one frame");
  }
  for (int i = 0; i < v; ++i) {
    if (sequences[i].frames.size() != frames || depths[i].size() != frames) {
      throw std::invalid_argument("run_consensus: misaligned frame counts across views");
    }
  }

  ConsensusReport report;
  report.num_views = v;
  report.config = cfg;
  report.view_ids.resize(sequences.size());
  for (int i = 0; i < v; ++i) report.view_ids[i] = sequences[i].view;
  report.visibility.assign(v, std::vector<std::uint8_t>(v, 0));
  report.consensus_fraction.assign(v, std::vector<double>(v, 0.0));
  report.votes.assign(v, std::vector<std::uint8_t>(v, 0));

  // Every ordered pair is independent; each pair index owns its own report
  // slots, so the parallel loop is deterministic for any worker count.
  parallel_for(0, v * v, [&](int pair) {
    const int i = pair / v;
    const int j = pair % v;
    if (i == j) return;
    const bool visible = visibility_test(sequences[i], sequences[j], depths[i], depths[j],
                                         cameras[i], cameras[j], cfg);
    const PairVote pv = view_pair_vote(sequences[i], sequences[j], depths[i], depths[j],
                                       cameras[i], cameras[j], cfg);
    report.visibility[i][j] = visible;
    report.consensus_fraction[i][j] = pv.fraction;
    report.votes[i][j] = visible && pv.vote;
  });

  report.visible_peers.resize(v);
  report.reliability_score.resize(v);
  report.reliable.resize(v);
  for (int i = 0; i < v; ++i) {
    int peers = 0;
    int votes = 0;
    for (int j = 0; j < v; ++j) {
      if (i == j) continue;
      peers += report.visibility[i][j];
      votes += report.votes[i][j];
    }
    report.visible_peers[i] = peers;
    // Vote counts are normalized by the number of other views. Normalizing by
    // the visible-peer count instead would let a small clique of views that
    // agree only with each other (e.g. a shared hallucination) certify itself
    // with score 1 regardless of how the rest of the rig votes.
    report.reliability_score[i] = static_cast<double>(votes) / static_cast<double>(v - 1);
    report.reliable[i] = peers >= 1 && report.reliability_score[i] >= cfg.tau;
  }
  return report;
}

std::vector<MaskSequence> reliable_supervision(const ConsensusReport& report,
                                               const std::vector<MaskSequence>& sequences) {
  if (report.reliable.size() != sequences.size()) {
    throw std::invalid_argument("reliable_supervision: report does not match the sequence list");
  }
  std::vector<MaskSequence> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (report.reliable[i]) out.push_back(sequences[i]);
  }
  return out;
}

}  // namespace pq
