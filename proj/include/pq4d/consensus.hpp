#pragma once

#include <vector>

#include "pq4d/geometry.hpp"

namespace pq {

/// Thresholds for the multi-view mask voting stage. Defaults follow the
/// benchmark settings used across the CLI.
struct ConsensusConfig {
  double delta = 0.3;           // per-frame IoU for consensus (strict >)
  double epsilon = 0.5;         // consensus-frame fraction for a vote (strict >)
  double tau = 0.3;             // reliability threshold (non-strict >=)
  double visibility_min = 0.6;  // mean overlap fraction for visibility (strict >)
  double occlusion_tol = 0.01;  // relative depth slack during reprojection

  /// Throws std::invalid_argument when any threshold leaves [0,1].
  void validate() const;
};

/// Full audit trail of one consensus run over V aligned mask sequences.
/// Matrices are indexed [i][j]: row i is the candidate sequence, column j the
/// judging view. Diagonals are false/zero and carry no meaning.
struct ConsensusReport {
  int num_views = 0;
  ConsensusConfig config;
  /// Ids of the views that participated, in row order (MaskSequence::view).
  std::vector<int> view_ids;
  std::vector<std::vector<std::uint8_t>> visibility;
  std::vector<std::vector<double>> consensus_fraction;
  std::vector<std::vector<std::uint8_t>> votes;
  std::vector<int> visible_peers;
  std::vector<double> reliability_score;
  std::vector<std::uint8_t> reliable;
};

/// True when view j sees enough of sequence i's object: the mean, over frames
/// where m_{i,t} is non-empty, of the overlap fraction between the
/// reprojected mask and m_{j,t} exceeds cfg.visibility_min. A sequence that
/// is empty in every frame is invisible everywhere.
bool visibility_test(const MaskSequence& seq_i, const MaskSequence& seq_j,
                     const std::vector<DepthMap>& depths_i, const std::vector<DepthMap>& depths_j,
                     const CameraModel& cam_i, const CameraModel& cam_j,
                     const ConsensusConfig& cfg);

/// Frame-level agreement: IoU between the reprojected mask and the target
/// view's mask is strictly above cfg.delta.
bool frame_consensus(const BinaryMask& mask_i, const BinaryMask& mask_j, const DepthMap& depth_i,
                     const CameraModel& cam_i, const CameraModel& cam_j, const DepthMap& depth_j,
                     const ConsensusConfig& cfg);

struct PairVote {
  bool vote = false;
  double fraction = 0.0;  // consensus frames / total frames
};

/// View j's endorsement of sequence i: the fraction of consensus frames over
/// all T frames, voting when strictly above cfg.epsilon. Callers are expected
/// to have confirmed visibility first.
PairVote view_pair_vote(const MaskSequence& seq_i, const MaskSequence& seq_j,
                        const std::vector<DepthMap>& depths_i, const std::vector<DepthMap>& depths_j,
                        const CameraModel& cam_i, const CameraModel& cam_j,
                        const ConsensusConfig& cfg);

/// Runs the full voting procedure over every ordered view pair. A sequence is
/// reliable when its vote count, normalized by the number of other views
/// (V-1), reaches cfg.tau and at least one peer passed the visibility test.
/// Pairs are evaluated in parallel; the report is identical for any worker
/// count. Throws std::invalid_argument for V < 2 or misaligned inputs.
ConsensusReport run_consensus(const std::vector<MaskSequence>& sequences,
                              const std::vector<std::vector<DepthMap>>& depths,
                              const std::vector<CameraModel>& cameras, const ConsensusConfig& cfg);

/// The subset of sequences marked reliable, in input order.
std::vector<MaskSequence> reliable_supervision(const ConsensusReport& report,
                                               const std::vector<MaskSequence>& sequences);

}  // namespace pq
